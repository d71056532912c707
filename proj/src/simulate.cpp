#include "spf/simulate.hpp"

#include <fmt/format.h>

#include <cmath>
#include <random>

namespace spf {

void SimConfig::validate() const {
    if (z == 0 || y == 0 || x == 0 || frames == 0) throw std::invalid_argument("simulation dims must be positive");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0,1)");
    for (int i = 0; i < 3; ++i) {
        if (!(shape[i] > 0.0)) throw std::invalid_argument("PSF shape must be positive definite");
        if (sigma_step[i] < 0.0) throw std::invalid_argument("noise std devs must be >= 0");
    }
    if (!(p_drop >= 0.0 && p_drop <= 1.0)) throw std::invalid_argument("p_drop must lie in [0,1]");
    if (!(z_scale > 0.0)) throw std::invalid_argument("z_scale must be positive");
}

Positions scatter_points(std::size_t k, const SimConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed ^ 0x5ca77e5ca77e5ca7ULL);
    const double x_hi = static_cast<double>(cfg.x - 1) - cfg.margin;
    const double y_hi = static_cast<double>(cfg.y - 1) - cfg.margin;
    const double z_hi = static_cast<double>(cfg.z - 1) * cfg.z_scale - cfg.z_margin;
    if (x_hi < cfg.margin || y_hi < cfg.margin || z_hi < cfg.z_margin)
        throw std::invalid_argument("scatter margins leave no room inside the volume");
    std::uniform_real_distribution<double> ux(cfg.margin, x_hi), uy(cfg.margin, y_hi),
        uz(cfg.z_margin, z_hi);
    const double min_d2 = cfg.min_distance * cfg.min_distance;
    Positions pts;
    pts.reserve(k);
    std::size_t tries = 0;
    const std::size_t max_tries = 10000 * (k + 1);
    while (pts.size() < k) {
        if (++tries > max_tries)
            throw std::runtime_error(fmt::format(
                "could not place {} points {} apart (placed {})", k, cfg.min_distance, pts.size()));
        const Vec3 p(ux(rng), uy(rng), uz(rng));
        bool ok = true;
        for (const auto& q : pts)
            if ((p - q).squaredNorm() < min_d2) {
                ok = false;
                break;
            }
        if (ok) pts.push_back(p);
    }
    return pts;
}

namespace {

// One step of the relative-position recursion for every non-root cell.
// `prev` holds frame t-1, `next` receives frame t; the root entry of `next`
// must already be set.
template <class Noise>
void advance(const Positions& ref, const Positions& prev, Positions& next, const CellTree& tree, double alpha,
             Noise&& noise) {
    for (auto k : tree.order) {
        if (!tree.parent[k]) continue;
        const auto u = *tree.parent[k];
        next[k] = next[u] + alpha * (prev[k] - prev[u]) + (1.0 - alpha) * (ref[k] - ref[u]) + noise();
    }
}

}  // namespace

Positions simulate_positions(const Positions& init, const CellTree& tree, const SimConfig& cfg) {
    cfg.validate();
    if (init.size() != tree.size()) throw std::invalid_argument("init and tree sizes differ");
    const auto K = init.size();
    Positions out(cfg.frames * K);
    std::copy(init.begin(), init.end(), out.begin());
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto noise = [&]() {
        const double gx = normal(rng), gy = normal(rng), gz = normal(rng);
        return Vec3(cfg.sigma_step.x() * gx, cfg.sigma_step.y() * gy, cfg.sigma_step.z() * gz);
    };
    Positions prev(init), next(K);
    for (std::size_t t = 1; t < cfg.frames; ++t) {
        next[tree.root] = cfg.root_fixed ? prev[tree.root] : prev[tree.root] + noise();
        advance(init, prev, next, tree, cfg.alpha, noise);
        std::copy(next.begin(), next.end(), out.begin() + static_cast<long>(t * K));
        std::swap(prev, next);
    }
    return out;
}

Positions propagate_relative(const Positions& reference, const Positions& start, const CellTree& tree,
                             double alpha, std::size_t steps) {
    const auto K = start.size();
    Positions out((steps + 1) * K);
    std::copy(start.begin(), start.end(), out.begin());
    Positions prev(start), next(K);
    for (std::size_t s = 1; s <= steps; ++s) {
        next[tree.root] = prev[tree.root];
        advance(reference, prev, next, tree, alpha, [] { return Vec3::Zero().eval(); });
        std::copy(next.begin(), next.end(), out.begin() + static_cast<long>(s * K));
        std::swap(prev, next);
    }
    return out;
}

double psf_value(const Vec3& offset_index, const Vec3& shape, double c) {
    const double d2 = offset_index.x() * offset_index.x() / shape.x() +
                      offset_index.y() * offset_index.y() / shape.y() +
                      offset_index.z() * offset_index.z() / shape.z();
    return d2 < 1.0 ? c * std::exp(-0.5 * d2) : 0.0;
}

Image3D render_frame(const Positions& positions, const std::vector<char>& visible, const SimConfig& cfg) {
    Image3D img(cfg.z, cfg.y, cfg.x, cfg.dtype);
    const double vmax = dtype_max(cfg.dtype);
    const Vec3 reach(std::sqrt(cfg.shape.x()), std::sqrt(cfg.shape.y()), std::sqrt(cfg.shape.z()));
    for (std::size_t k = 0; k < positions.size(); ++k) {
        if (!visible.empty() && !visible[k]) continue;
        const Vec3 mu = physical_to_index(positions[k], cfg.z_scale);
        const long x0 = std::max(0L, static_cast<long>(std::ceil(mu.x() - reach.x())));
        const long x1 = std::min(static_cast<long>(cfg.x) - 1, static_cast<long>(std::floor(mu.x() + reach.x())));
        const long y0 = std::max(0L, static_cast<long>(std::ceil(mu.y() - reach.y())));
        const long y1 = std::min(static_cast<long>(cfg.y) - 1, static_cast<long>(std::floor(mu.y() + reach.y())));
        const long z0 = std::max(0L, static_cast<long>(std::ceil(mu.z() - reach.z())));
        const long z1 = std::min(static_cast<long>(cfg.z) - 1, static_cast<long>(std::floor(mu.z() + reach.z())));
        for (long z = z0; z <= z1; ++z)
            for (long y = y0; y <= y1; ++y)
                for (long x = x0; x <= x1; ++x) {
                    const double v = psf_value(Vec3(x, y, z) - mu, cfg.shape, cfg.intensity);
                    if (v <= 0.0) continue;
                    const auto q = static_cast<std::uint16_t>(std::min(vmax, std::round(v)));
                    auto& px = img.at(z, y, x);
                    px = std::max(px, q);
                }
    }
    return img;
}

std::pair<Volume4D, GroundTruth> generate_dataset(const SimConfig& cfg, const Positions& init) {
    cfg.validate();
    if (init.empty()) throw std::invalid_argument("generate_dataset: no initial positions");
    GroundTruth gt;
    gt.frames = cfg.frames;
    gt.cells = init.size();
    gt.z_scale = cfg.z_scale;
    gt.params = cfg;
    gt.tree = build_cell_tree(init);
    gt.positions = simulate_positions(init, gt.tree, cfg);

    gt.visible.assign(gt.frames * gt.cells, 1);
    std::mt19937_64 drop_rng(cfg.seed ^ 0xd15a99ea4a9ce5ULL);
    std::bernoulli_distribution hidden(cfg.p_drop);
    for (std::size_t i = gt.cells; i < gt.visible.size(); ++i) gt.visible[i] = hidden(drop_rng) ? 0 : 1;

    Volume4D vol(cfg.dims(), cfg.dtype, cfg.z_scale);
    const auto frames = static_cast<long>(cfg.frames);
#pragma omp parallel for schedule(dynamic)
    for (long t = 0; t < frames; ++t) {
        const auto off = static_cast<std::size_t>(t) * gt.cells;
        const Positions pos(gt.positions.begin() + static_cast<long>(off),
                            gt.positions.begin() + static_cast<long>(off + gt.cells));
        const std::vector<char> vis(gt.visible.begin() + static_cast<long>(off),
                                    gt.visible.begin() + static_cast<long>(off + gt.cells));
        vol.set_frame(static_cast<std::size_t>(t), render_frame(pos, vis, cfg));
    }
    return {std::move(vol), std::move(gt)};
}

}  // namespace spf
