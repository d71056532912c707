#include "spf/text_io.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <fstream>
#include <set>
#include <sstream>

namespace spf {
namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw DataError(fmt::format("'{}': expected a number, got '{}'", key, v));
    }
}

long to_long(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const long d = std::stol(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw DataError(fmt::format("'{}': expected an integer, got '{}'", key, v));
    }
}

std::size_t to_count(const std::string& key, const std::string& v) {
    const long n = to_long(key, v);
    if (n < 0) throw DataError(fmt::format("'{}': must be non-negative, got {}", key, n));
    return static_cast<std::size_t>(n);
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "no") return false;
    throw DataError(fmt::format("'{}': expected a boolean, got '{}'", key, v));
}

std::vector<std::string> split_commas(const std::string& text) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) parts.push_back(trim(item));
    return parts;
}

}  // namespace

Vec3 parse_triple(const std::string& text) {
    const auto parts = split_commas(text);
    if (parts.size() != 3) throw DataError(fmt::format("expected three comma-separated values, got '{}'", text));
    return {to_double(text, parts[0]), to_double(text, parts[1]), to_double(text, parts[2])};
}

std::array<long, 3> parse_long_triple(const std::string& text) {
    const auto parts = split_commas(text);
    if (parts.size() != 3)
        throw DataError(fmt::format("expected three comma-separated integers, got '{}'", text));
    return {to_long(text, parts[0]), to_long(text, parts[1]), to_long(text, parts[2])};
}

KeyValues parse_key_values(const std::string& text, const std::string& source) {
    KeyValues kv;
    kv.source = source;
    std::istringstream is(text);
    std::string line;
    for (std::size_t lineno = 1; std::getline(is, line); ++lineno) {
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw DataError(fmt::format("{}:{}: expected 'key = value'", source, lineno));
        const auto key = trim(line.substr(0, eq));
        if (key.empty()) throw DataError(fmt::format("{}:{}: empty key", source, lineno));
        kv.entries[key] = trim(line.substr(eq + 1));
    }
    return kv;
}

KeyValues read_key_values(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError(fmt::format("cannot open config '{}'", path.string()));
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_key_values(ss.str(), path.string());
}

void apply_track_config(const KeyValues& kv, TrackConfig& cfg) {
    for (const auto& [key, v] : kv.entries) {
        if (key == "particles") cfg.particles = to_count(key, v);
        else if (key == "alpha") cfg.alpha = to_double(key, v);
        else if (key == "sigma_step") cfg.sigma_step = parse_triple(v);
        else if (key == "sigma_root") cfg.sigma_root = parse_triple(v);
        else if (key == "lambda_rej") cfg.lambda_rej = to_double(key, v);
        else if (key == "window") cfg.window = parse_long_triple(v);
        else if (key == "sigma2") cfg.sigma2 = to_double(key, v);
        else if (key == "max_reject") cfg.max_reject = static_cast<int>(to_long(key, v));
        else if (key == "seed") cfg.seed = to_count(key, v);
        else if (key == "ref_frame") cfg.ref_frame = to_count(key, v);
        else if (key == "threads") cfg.threads = static_cast<int>(to_long(key, v));
        else throw DataError(fmt::format("{}: unknown track config key '{}'", kv.source, key));
    }
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw DataError(fmt::format("{}: {}", kv.source, e.what()));
    }
}

void apply_sim_config(const KeyValues& kv, SimConfig& cfg) {
    for (const auto& [key, v] : kv.entries) {
        if (key == "dims") {
            const auto parts = split_commas(v);
            if (parts.size() != 4) throw DataError(fmt::format("'dims': expected T,Z,Y,X, got '{}'", v));
            cfg.frames = to_count(key, parts[0]);
            cfg.z = to_count(key, parts[1]);
            cfg.y = to_count(key, parts[2]);
            cfg.x = to_count(key, parts[3]);
        } else if (key == "frames") cfg.frames = to_count(key, v);
        else if (key == "z_scale") cfg.z_scale = to_double(key, v);
        else if (key == "dtype") {
            if (v == "u8") cfg.dtype = DType::U8;
            else if (v == "u16") cfg.dtype = DType::U16;
            else throw DataError(fmt::format("'dtype': expected u8 or u16, got '{}'", v));
        } else if (key == "alpha") cfg.alpha = to_double(key, v);
        else if (key == "sigma_step") cfg.sigma_step = parse_triple(v);
        else if (key == "shape") cfg.shape = parse_triple(v);
        else if (key == "intensity") cfg.intensity = to_double(key, v);
        else if (key == "p_drop") cfg.p_drop = to_double(key, v);
        else if (key == "root_fixed") cfg.root_fixed = to_bool(key, v);
        else if (key == "seed") cfg.seed = to_count(key, v);
        else if (key == "min_distance") cfg.min_distance = to_double(key, v);
        else if (key == "margin") cfg.margin = to_double(key, v);
        else if (key == "z_margin") cfg.z_margin = to_double(key, v);
        else throw DataError(fmt::format("{}: unknown simulate config key '{}'", kv.source, key));
    }
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw DataError(fmt::format("{}: {}", kv.source, e.what()));
    }
}

std::string describe(const TrackConfig& c) {
    auto triple = [](const Vec3& v) { return fmt::format("{},{},{}", v.x(), v.y(), v.z()); };
    std::string s = fmt::format(
        "particles={} alpha={} sigma_step={} sigma_root={} lambda_rej={} window={},{},{} max_reject={} seed={} "
        "ref_frame={}",
        c.particles, c.alpha, triple(c.sigma_step), triple(c.sigma_root), c.lambda_rej, c.window[0], c.window[1],
        c.window[2], c.max_reject, c.seed, c.ref_frame);
    if (c.sigma2) s += fmt::format(" sigma2={}", *c.sigma2);
    return s;
}

void write_centroids(const std::filesystem::path& path, const Positions& centroids) {
    std::ofstream os(path);
    if (!os) throw DataError(fmt::format("cannot write centroids '{}'", path.string()));
    for (std::size_t k = 0; k < centroids.size(); ++k)
        fmt::print(os, "{} {:.6f} {:.6f} {:.6f}\n", k, centroids[k].x(), centroids[k].y(), centroids[k].z());
}

Positions read_centroids(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw DataError(fmt::format("cannot open centroids '{}'", path.string()));
    Positions out;
    std::string line;
    for (std::size_t lineno = 1; std::getline(is, line); ++lineno) {
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::size_t k = 0;
        double x = 0, y = 0, z = 0;
        if (!(ls >> k >> x >> y >> z))
            throw DataError(fmt::format("{}:{}: expected 'k x y z'", path.string(), lineno));
        if (k != out.size())
            throw DataError(fmt::format("{}:{}: cell ids must be consecutive from 0 (got {})", path.string(),
                                        lineno, k));
        out.emplace_back(x, y, z);
    }
    return out;
}

void write_result(const std::filesystem::path& path, const TrackResult& r) {
    std::ofstream os(path);
    if (!os) throw DataError(fmt::format("cannot write result '{}'", path.string()));
    fmt::print(os, "# method {}\n", r.method);
    fmt::print(os, "# z_scale {}\n", r.z_scale);
    fmt::print(os, "# config {}\n", describe(r.config));
    if (r.tree) fmt::print(os, "# root {}\n", r.tree->root);
    for (std::size_t t = 0; t < r.frames; ++t)
        for (std::size_t k = 0; k < r.cells; ++k) {
            const Vec3 p = physical_to_index(r.at(t, k), r.z_scale);
            fmt::print(os, "{} {} {:.6f} {:.6f} {:.6f} {}\n", t, k, p.x(), p.y(), p.z(),
                       status_name(r.status_at(t, k)));
        }
}

namespace {

struct Row {
    std::size_t t, k;
    Vec3 p;
    std::string flag;
};

// Shared reader for the "t k x y z flag" tables.
std::vector<Row> read_rows(const std::filesystem::path& path, std::map<std::string, std::string>& header,
                           std::size_t& frames, std::size_t& cells) {
    std::ifstream is(path);
    if (!is) throw DataError(fmt::format("cannot open '{}'", path.string()));
    std::vector<Row> rows;
    std::string line;
    frames = cells = 0;
    for (std::size_t lineno = 1; std::getline(is, line); ++lineno) {
        line = trim(line);
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream hs(line.substr(1));
            std::string key;
            if (hs >> key) {
                std::string rest;
                std::getline(hs, rest);
                header[key] = trim(rest);
            }
            continue;
        }
        std::istringstream ls(line);
        Row r;
        double x = 0, y = 0, z = 0;
        if (!(ls >> r.t >> r.k >> x >> y >> z >> r.flag))
            throw DataError(fmt::format("{}:{}: expected 't k x y z flag'", path.string(), lineno));
        r.p = Vec3(x, y, z);
        frames = std::max(frames, r.t + 1);
        cells = std::max(cells, r.k + 1);
        rows.push_back(std::move(r));
    }
    if (rows.size() != frames * cells)
        throw DataError(fmt::format("{}: {} rows do not form a complete {}x{} table", path.string(), rows.size(),
                                    frames, cells));
    return rows;
}

double header_z_scale(const std::map<std::string, std::string>& header, const std::filesystem::path& path) {
    const auto it = header.find("z_scale");
    if (it == header.end()) return 3.0;
    const double s = to_double("z_scale", it->second);
    if (!(s > 0.0)) throw DataError(fmt::format("{}: z_scale must be positive", path.string()));
    return s;
}

}  // namespace

TrackResult read_result(const std::filesystem::path& path) {
    std::map<std::string, std::string> header;
    TrackResult r;
    const auto rows = read_rows(path, header, r.frames, r.cells);
    r.z_scale = header_z_scale(header, path);
    if (auto it = header.find("method"); it != header.end()) r.method = it->second;
    if (auto it = header.find("config"); it != header.end()) {
        KeyValues kv;
        kv.source = path.string();
        std::istringstream cs(it->second);
        std::string tok;
        while (cs >> tok)
            if (const auto eq = tok.find('='); eq != std::string::npos)
                kv.entries[tok.substr(0, eq)] = tok.substr(eq + 1);
        apply_track_config(kv, r.config);
    }
    r.estimates.assign(r.frames * r.cells, Vec3::Zero());
    r.status.assign(r.frames * r.cells, TrackStatus::Tracked);
    std::vector<char> seen(r.frames * r.cells, 0);
    for (const auto& row : rows) {
        const auto i = row.t * r.cells + row.k;
        if (seen[i]++) throw DataError(fmt::format("{}: duplicate row t={} k={}", path.string(), row.t, row.k));
        r.estimates[i] = index_to_physical(row.p, r.z_scale);
        if (row.flag == "tracked") r.status[i] = TrackStatus::Tracked;
        else if (row.flag == "out_of_view") r.status[i] = TrackStatus::OutOfView;
        else throw DataError(fmt::format("{}: unknown status '{}'", path.string(), row.flag));
    }
    return r;
}

void write_truth(const std::filesystem::path& path, const GroundTruth& gt) {
    std::ofstream os(path);
    if (!os) throw DataError(fmt::format("cannot write truth '{}'", path.string()));
    fmt::print(os, "# z_scale {}\n", gt.z_scale);
    fmt::print(os, "# root {}\n", gt.tree.root);
    for (std::size_t t = 0; t < gt.frames; ++t)
        for (std::size_t k = 0; k < gt.cells; ++k) {
            const Vec3 p = physical_to_index(gt.at(t, k), gt.z_scale);
            fmt::print(os, "{} {} {:.6f} {:.6f} {:.6f} {}\n", t, k, p.x(), p.y(), p.z(),
                       gt.is_visible(t, k) ? 1 : 0);
        }
}

GroundTruth read_truth(const std::filesystem::path& path) {
    std::map<std::string, std::string> header;
    GroundTruth gt;
    const auto rows = read_rows(path, header, gt.frames, gt.cells);
    gt.z_scale = header_z_scale(header, path);
    gt.params.z_scale = gt.z_scale;
    gt.positions.assign(gt.frames * gt.cells, Vec3::Zero());
    gt.visible.assign(gt.frames * gt.cells, 1);
    std::vector<char> seen(gt.frames * gt.cells, 0);
    for (const auto& row : rows) {
        const auto i = row.t * gt.cells + row.k;
        if (seen[i]++) throw DataError(fmt::format("{}: duplicate row t={} k={}", path.string(), row.t, row.k));
        gt.positions[i] = index_to_physical(row.p, gt.z_scale);
        if (row.flag != "0" && row.flag != "1")
            throw DataError(fmt::format("{}: visibility must be 0 or 1, got '{}'", path.string(), row.flag));
        gt.visible[i] = row.flag == "1" ? 1 : 0;
    }
    const Positions init(gt.positions.begin(), gt.positions.begin() + static_cast<long>(gt.cells));
    gt.tree = build_cell_tree(init);
    return gt;
}

}  // namespace spf
