#include "spf/tracker.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace spf {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

int thread_count(const TrackConfig& cfg) {
#ifdef _OPENMP
    return cfg.threads > 0 ? cfg.threads : omp_get_max_threads();
#else
    (void)cfg;
    return 1;
#endif
}

// Sum of squared differences between the template and the window centered at
// `c`, plus the count of positions where template + current is non-zero.
template <class T>
void window_difference(std::span<const T> data, const Dims4& d, std::size_t t, const Voxel& c,
                       const SubImage& templ, double& ssd, std::size_t& nonzero) {
    const auto& w = templ.half_widths;
    const std::uint16_t* tp = templ.values.data();
    const long nz = static_cast<long>(d.z), ny = static_cast<long>(d.y), nx = static_cast<long>(d.x);
    const std::size_t frame_off = t * d.frame_voxels();
    std::int64_t acc = 0;
    std::size_t count = 0;
    const bool inside = c.x - w[0] >= 0 && c.y - w[1] >= 0 && c.z - w[2] >= 0 && c.x + w[0] < nx &&
                        c.y + w[1] < ny && c.z + w[2] < nz;
    for (long dz = -w[2]; dz <= w[2]; ++dz) {
        const long z = c.z + dz;
        for (long dy = -w[1]; dy <= w[1]; ++dy) {
            const long y = c.y + dy;
            if (inside) {
                const T* row = data.data() + frame_off + (static_cast<std::size_t>(z) * d.y + y) * d.x +
                               (c.x - w[0]);
                for (long i = 0; i <= 2 * w[0]; ++i, ++tp) {
                    const std::int64_t cur = row[i];
                    const std::int64_t ref = *tp;
                    const std::int64_t diff = cur - ref;
                    acc += diff * diff;
                    count += (cur + ref) != 0;
                }
            } else {
                for (long dx = -w[0]; dx <= w[0]; ++dx, ++tp) {
                    const long x = c.x + dx;
                    std::int64_t cur = 0;
                    if (z >= 0 && y >= 0 && x >= 0 && z < nz && y < ny && x < nx)
                        cur = data[frame_off + (static_cast<std::size_t>(z) * d.y + y) * d.x + x];
                    const std::int64_t ref = *tp;
                    const std::int64_t diff = cur - ref;
                    acc += diff * diff;
                    count += (cur + ref) != 0;
                }
            }
        }
    }
    ssd = static_cast<double>(acc);
    nonzero = count;
}

}  // namespace

Rng make_stream(std::uint64_t seed, std::uint64_t k, std::uint64_t t) {
    const auto h = splitmix64(splitmix64(splitmix64(seed) ^ (k + 0x632be59bd9b4e019ULL)) ^
                              (t + 0x8cb92ba72f3d8dd7ULL));
    std::seed_seq seq{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32),
                      static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(t)};
    return Rng(seq);
}

void TrackConfig::validate() const {
    if (particles < 1) throw std::invalid_argument("particles must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument(fmt::format("alpha must lie in (0,1), got {}", alpha));
    for (int i = 0; i < 3; ++i)
        if (sigma_step[i] < 0.0 || sigma_root[i] < 0.0)
            throw std::invalid_argument("noise standard deviations must be >= 0");
    if (!(lambda_rej > 0.0)) throw std::invalid_argument("lambda_rej must be positive");
    for (auto w : window)
        if (w < 0) throw std::invalid_argument("window half-widths must be >= 0");
    if (sigma2 && !(*sigma2 > 0.0)) throw std::invalid_argument("sigma2 must be positive");
    if (max_reject < 1) throw std::invalid_argument("max_reject must be >= 1");
}

const char* status_name(TrackStatus s) { return s == TrackStatus::Tracked ? "tracked" : "out_of_view"; }
const char* method_name(Method m) { return m == Method::SPF ? "spf" : "pf"; }

std::vector<CellFilter> init_trackers(const Positions& centroids, const Volume4D& volume,
                                      const TrackConfig& cfg) {
    if (centroids.empty()) throw std::invalid_argument("init_trackers: no centroids");
    cfg.validate();
    std::vector<CellFilter> state(centroids.size());
    const double uniform = 1.0 / static_cast<double>(cfg.particles);
    for (std::size_t k = 0; k < centroids.size(); ++k) {
        auto& f = state[k];
        f.particles.assign(cfg.particles, centroids[k]);
        f.weights.assign(cfg.particles, uniform);
        f.out_of_view.assign(cfg.particles, 0);
        f.templ = extract_subimage(volume, 0, nearest_voxel(centroids[k], volume.z_scale()), cfg.window);
        f.mean_prev = f.mean_ref = centroids[k];
    }
    return state;
}

Positions propose_root(const CellFilter& tracker, const Vec3& sigma, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Positions out(tracker.particles.size());
    for (std::size_t n = 0; n < out.size(); ++n) {
        const double gx = normal(rng), gy = normal(rng), gz = normal(rng);
        out[n] = tracker.particles[n] + Vec3(sigma.x() * gx, sigma.y() * gy, sigma.z() * gz);
    }
    return out;
}

bool accept_offset(const Vec3& offset, double lambda, Rng& rng) {
    const double reject_p = std::exp(-offset.squaredNorm() / (lambda * lambda));
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng) >= reject_p;
}

Positions propose_spf(const CellFilter& child, const CellFilter& parent, const TrackConfig& cfg, Rng& rng,
                      ProposalStats* stats) {
    if (parent.particles.size() != child.particles.size())
        throw std::invalid_argument("propose_spf: parent and child ensembles differ in size");
    const Vec3 eta_prev = child.mean_prev - parent.mean_prev;
    const Vec3 eta_ref = child.mean_ref - parent.mean_ref;
    const Vec3 drift = cfg.alpha * eta_prev + (1.0 - cfg.alpha) * eta_ref;
    const Vec3& s = cfg.sigma_step;
    std::normal_distribution<double> normal(0.0, 1.0);

    ProposalStats local;
    Positions out(child.particles.size());
    for (std::size_t n = 0; n < out.size(); ++n) {
        const Vec3& anchor = parent.particles[n];
        for (int attempt = 1;; ++attempt) {
            const double gx = normal(rng), gy = normal(rng), gz = normal(rng);
            const Vec3 offset = drift + Vec3(s.x() * gx, s.y() * gy, s.z() * gz);
            ++local.attempts;
            if (attempt >= cfg.max_reject) {
                if (!accept_offset(offset, cfg.lambda_rej, rng)) ++local.forced;
                out[n] = anchor + offset;
                break;
            }
            if (accept_offset(offset, cfg.lambda_rej, rng)) {
                out[n] = anchor + offset;
                break;
            }
            ++local.rejections;
        }
    }
    if (stats) {
        stats->attempts += local.attempts;
        stats->rejections += local.rejections;
        stats->forced += local.forced;
    }
    return out;
}

double log_likelihood(const Volume4D& volume, std::size_t t, const Vec3& particle, const SubImage& templ,
                      double sigma2) {
    const Voxel c = nearest_voxel(particle, volume.z_scale());
    double ssd = 0.0;
    std::size_t nonzero = 0;
    volume.visit([&](auto data) { window_difference(data, volume.dims(), t, c, templ, ssd, nonzero); });
    if (nonzero == 0) return 0.0;
    return -ssd / (2.0 * sigma2 * static_cast<double>(nonzero));
}

double likelihood(const Volume4D& volume, std::size_t t, const Vec3& particle, const SubImage& templ,
                  double sigma2) {
    return std::exp(log_likelihood(volume, t, particle, templ, sigma2));
}

bool is_out_of_view(const Volume4D& volume, const Vec3& p) {
    return !volume.contains(nearest_voxel(p, volume.z_scale()));
}

ResampleOutcome weigh_and_resample(const Positions& proposed, const std::vector<double>& weights,
                                   const std::vector<char>& out_of_view, Rng& rng) {
    const std::size_t n = proposed.size();
    if (weights.size() != n || out_of_view.size() != n)
        throw std::invalid_argument("weigh_and_resample: size mismatch");
    ResampleOutcome r;
    r.particles = proposed;
    r.out_of_view = out_of_view;
    r.weights.assign(n, 0.0);

    std::vector<std::size_t> in_view;
    in_view.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        if (!out_of_view[i]) in_view.push_back(i);
    const std::size_t oov = n - in_view.size();

    if (!in_view.empty()) {
        double total = 0.0;
        for (auto i : in_view) total += weights[i];
        std::vector<double> cdf(in_view.size());
        if (!(total > 0.0) || !std::isfinite(total)) {
            r.uniform_fallback = true;
            for (std::size_t j = 0; j < in_view.size(); ++j)
                cdf[j] = static_cast<double>(j + 1) / static_cast<double>(in_view.size());
        } else {
            double run = 0.0;
            for (std::size_t j = 0; j < in_view.size(); ++j) {
                run += weights[in_view[j]] / total;
                cdf[j] = run;
            }
        }
        cdf.back() = 1.0;

        // systematic resampling into the in-view slots
        const std::size_t m = in_view.size();
        const double step = 1.0 / static_cast<double>(m);
        const double u0 = std::uniform_real_distribution<double>(0.0, step)(rng);
        std::size_t src = 0;
        for (std::size_t j = 0; j < m; ++j) {
            const double u = u0 + static_cast<double>(j) * step;
            while (src + 1 < m && cdf[src] < u) ++src;
            r.particles[in_view[j]] = proposed[in_view[src]];
            r.weights[in_view[j]] = step;
        }
    }

    Vec3 sum = Vec3::Zero();
    for (const auto& p : r.particles) sum += p;
    r.estimate = sum / static_cast<double>(n);
    r.status = 2 * oov > n ? TrackStatus::OutOfView : TrackStatus::Tracked;
    return r;
}

namespace {

Vec3 filter_cell(CellFilter& f, Positions proposed, const Volume4D& volume, std::size_t t, double sigma2,
                 Rng& rng) {
    const std::size_t n = proposed.size();
    std::vector<char> oov(n, 0);
    std::vector<double> logw(n, 0.0);
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        oov[i] = is_out_of_view(volume, proposed[i]) ? 1 : 0;
        if (oov[i]) continue;
        logw[i] = log_likelihood(volume, t, proposed[i], f.templ, sigma2);
        best = std::max(best, logw[i]);
    }
    std::vector<double> w(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        if (!oov[i]) w[i] = std::exp(logw[i] - best);
    auto r = weigh_and_resample(proposed, w, oov, rng);
    f.particles = std::move(r.particles);
    f.weights = std::move(r.weights);
    f.out_of_view = std::move(r.out_of_view);
    f.status = r.status;
    if (r.uniform_fallback) ++f.uniform_fallbacks;
    return r.estimate;
}

}  // namespace

std::vector<Vec3> step_frame(std::vector<CellFilter>& state, const Volume4D& volume, std::size_t t,
                             const CellTree* tree, const TrackConfig& cfg, Method method) {
    if (t == 0 || t >= volume.dims().t)
        throw std::out_of_range(fmt::format("step_frame: frame {} outside [1,{})", t, volume.dims().t));
    const double sigma2 = cfg.likelihood_variance(volume.dtype());
    const auto cells = static_cast<long>(state.size());
    std::vector<Vec3> estimates(state.size());
    const int threads = thread_count(cfg);

    auto run_root_dynamics = [&](std::size_t k) {
        auto rng = make_stream(cfg.seed, k, t);
        estimates[k] = filter_cell(state[k], propose_root(state[k], cfg.sigma_root, rng), volume, t, sigma2, rng);
    };

    if (method == Method::PF) {
#pragma omp parallel for schedule(dynamic) num_threads(threads)
        for (long k = 0; k < cells; ++k) run_root_dynamics(static_cast<std::size_t>(k));
    } else {
        if (!tree || tree->size() != state.size())
            throw std::invalid_argument("step_frame: SPF needs a tree covering every cell");
        const auto depth = node_depths(*tree);
        std::vector<std::vector<std::size_t>> levels;
        for (auto k : tree->order) {
            if (depth[k] >= levels.size()) levels.resize(depth[k] + 1);
            levels[depth[k]].push_back(k);
        }
        run_root_dynamics(tree->root);
        for (std::size_t lvl = 1; lvl < levels.size(); ++lvl) {
            const auto& nodes = levels[lvl];
            const auto count = static_cast<long>(nodes.size());
#pragma omp parallel for schedule(dynamic) num_threads(threads)
            for (long i = 0; i < count; ++i) {
                const auto k = nodes[static_cast<std::size_t>(i)];
                auto rng = make_stream(cfg.seed, k, t);
                auto proposed = propose_spf(state[k], state[*tree->parent[k]], cfg, rng);
                estimates[k] = filter_cell(state[k], std::move(proposed), volume, t, sigma2, rng);
            }
        }
    }

    for (std::size_t k = 0; k < state.size(); ++k) {
        state[k].mean_prev = estimates[k];
        if (cfg.ref_frame > 0 && t == cfg.ref_frame) state[k].mean_ref = estimates[k];
    }
    return estimates;
}

namespace {

TrackResult run_tracking(const Volume4D& volume, const Positions& centroids, const CellTree* tree,
                         const TrackConfig& cfg, Method method) {
    if (cfg.ref_frame >= volume.dims().t)
        throw DataError(fmt::format("ref_frame {} is past the last frame ({})", cfg.ref_frame, volume.dims().t - 1));
    auto state = init_trackers(centroids, volume, cfg);
    TrackResult result;
    result.frames = volume.dims().t;
    result.cells = centroids.size();
    result.estimates.assign(result.frames * result.cells, Vec3::Zero());
    result.status.assign(result.frames * result.cells, TrackStatus::Tracked);
    result.method = method_name(method);
    result.config = cfg;
    result.z_scale = volume.z_scale();
    if (tree) result.tree = *tree;
    for (std::size_t k = 0; k < result.cells; ++k) {
        result.at(0, k) = centroids[k];
        if (is_out_of_view(volume, centroids[k])) result.status_at(0, k) = TrackStatus::OutOfView;
    }
    for (std::size_t t = 1; t < result.frames; ++t) {
        const auto est = step_frame(state, volume, t, tree, cfg, method);
        for (std::size_t k = 0; k < result.cells; ++k) {
            result.at(t, k) = est[k];
            result.status_at(t, k) = state[k].status;
        }
    }
    for (const auto& f : state) result.uniform_fallbacks += f.uniform_fallbacks;
    return result;
}

}  // namespace

TrackResult track_all(const Volume4D& volume, const CellTree& tree, const TrackConfig& cfg) {
    return run_tracking(volume, tree.nodes, &tree, cfg, Method::SPF);
}

TrackResult track_all_pf(const Volume4D& volume, const Positions& centroids, const TrackConfig& cfg) {
    return run_tracking(volume, centroids, nullptr, cfg, Method::PF);
}

}  // namespace spf
