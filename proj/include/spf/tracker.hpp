#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "spf/detect.hpp"
#include "spf/geometry.hpp"
#include "spf/mrf_tree.hpp"
#include "spf/volume.hpp"

namespace spf {

using Rng = std::mt19937_64;

/// Independent stream for cell `k` at frame `t`. Every tracker draws only from
/// its own stream, so results do not depend on scheduling.
Rng make_stream(std::uint64_t seed, std::uint64_t k, std::uint64_t t);

struct TrackConfig {
    std::size_t particles = 1000;
    double alpha = 0.6;
    Vec3 sigma_step{0.6, 0.6, 0.03};  // std devs of the spatial proposal noise, physical units
    Vec3 sigma_root{3.0, 3.0, 0.3};   // random-walk std devs for the root and the PF baseline
    double lambda_rej = 4.5;          // collision radius for the rejection step
    std::array<long, 3> window{4, 3, 2};
    std::optional<double> sigma2;  // likelihood variance; default 0.1 * (dtype max)^2
    int max_reject = 10;           // attempts per particle; the last one is always accepted
    std::uint64_t seed = 1;
    std::size_t ref_frame = 0;  // frame whose estimated layout anchors the relative positions
    int threads = 0;            // 0: OpenMP default

    double likelihood_variance(DType d) const {
        const double m = dtype_max(d);
        return sigma2.value_or(0.1 * m * m);
    }
    void validate() const;
};

enum class TrackStatus : std::uint8_t { Tracked = 0, OutOfView = 1 };
const char* status_name(TrackStatus s);

/// Per-cell particle filter state.
struct CellFilter {
    Positions particles;          // filter ensemble
    std::vector<double> weights;  // in-view members share the mass, out-of-view members carry 0
    std::vector<char> out_of_view;
    SubImage templ;  // frame-0 window around the detected centroid
    Vec3 mean_prev = Vec3::Zero();
    Vec3 mean_ref = Vec3::Zero();  // anchor for the relative-position constraint
    TrackStatus status = TrackStatus::Tracked;
    std::size_t uniform_fallbacks = 0;  // frames where every in-view weight vanished

    std::size_t size() const { return particles.size(); }
};

struct TrackResult {
    std::size_t frames = 0, cells = 0;
    Positions estimates;  // [t * cells + k], physical coordinates
    std::vector<TrackStatus> status;
    std::string method;
    TrackConfig config;
    double z_scale = 3.0;
    std::optional<CellTree> tree;
    std::size_t uniform_fallbacks = 0;

    Vec3& at(std::size_t t, std::size_t k) { return estimates[t * cells + k]; }
    const Vec3& at(std::size_t t, std::size_t k) const { return estimates[t * cells + k]; }
    TrackStatus& status_at(std::size_t t, std::size_t k) { return status[t * cells + k]; }
    TrackStatus status_at(std::size_t t, std::size_t k) const { return status[t * cells + k]; }
};

std::vector<CellFilter> init_trackers(const Positions& centroids, const Volume4D& volume,
                                      const TrackConfig& cfg);

/// Gaussian random walk with per-axis std `sigma` applied to every ensemble member.
Positions propose_root(const CellFilter& tracker, const Vec3& sigma, Rng& rng);

struct ProposalStats {
    std::size_t attempts = 0;
    std::size_t rejections = 0;
    std::size_t forced = 0;  // candidates taken because the attempt cap was reached
};

/// True with probability 1 - exp(-|offset|^2 / lambda^2).
bool accept_offset(const Vec3& offset, double lambda, Rng& rng);

/// Spatial proposal: child particle n is placed relative to parent ensemble
/// member n, blending the previous-frame and reference relative positions with
/// weight alpha, then passed through the collision rejection step.
Positions propose_spf(const CellFilter& child, const CellFilter& parent, const TrackConfig& cfg, Rng& rng,
                      ProposalStats* stats = nullptr);

/// Window-similarity weight exp(-|cur - templ|^2 / (2 sigma2 W)); W counts
/// positions where templ + cur is non-zero, and W = 0 gives 1.
double likelihood(const Volume4D& volume, std::size_t t, const Vec3& particle, const SubImage& templ,
                  double sigma2);
double log_likelihood(const Volume4D& volume, std::size_t t, const Vec3& particle, const SubImage& templ,
                      double sigma2);

bool is_out_of_view(const Volume4D& volume, const Vec3& p);

struct ResampleOutcome {
    Positions particles;
    std::vector<double> weights;
    std::vector<char> out_of_view;
    Vec3 estimate = Vec3::Zero();
    TrackStatus status = TrackStatus::Tracked;
    bool uniform_fallback = false;
};

/// Out-of-view members keep their slots unweighted; the other slots are filled
/// by systematic resampling of the in-view members. `weights` entries for
/// out-of-view members are ignored.
ResampleOutcome weigh_and_resample(const Positions& proposed, const std::vector<double>& weights,
                                   const std::vector<char>& out_of_view, Rng& rng);

enum class Method { SPF, PF };
const char* method_name(Method m);

/// One filtering step for frame t >= 1 (0-based). The root (SPF) or every cell
/// (PF) follows the random walk; other SPF cells are proposed from their parent
/// in sweep order. Returns per-cell estimates.
std::vector<Vec3> step_frame(std::vector<CellFilter>& state, const Volume4D& volume, std::size_t t,
                             const CellTree* tree, const TrackConfig& cfg, Method method);

TrackResult track_all(const Volume4D& volume, const CellTree& tree, const TrackConfig& cfg);
TrackResult track_all_pf(const Volume4D& volume, const Positions& centroids, const TrackConfig& cfg);

}  // namespace spf
