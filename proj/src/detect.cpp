#include "spf/detect.hpp"

#include <limits>
#include <tuple>

namespace spf {

PeakSet collect_peaks(const Image3D& frame, const std::array<long, 3>& peak_window,
                      double min_intensity, double z_scale) {
    const long hx = peak_window[0] / 2, hy = peak_window[1] / 2, hz = peak_window[2] / 2;
    const long nz = static_cast<long>(frame.z), ny = static_cast<long>(frame.y),
               nx = static_cast<long>(frame.x);

    // Per-slice results keep the lexicographic (z, y, x) output order under OpenMP.
    std::vector<PeakSet> per_slice(frame.z);
#pragma omp parallel for schedule(dynamic)
    for (long z = 0; z < nz; ++z) {
        auto& out = per_slice[static_cast<std::size_t>(z)];
        for (long y = 0; y < ny; ++y) {
            for (long x = 0; x < nx; ++x) {
                const auto v = frame.at(z, y, x);
                if (v == 0 || v < min_intensity) continue;
                bool peak = true;
                for (long zz = std::max(0L, z - hz); peak && zz <= std::min(nz - 1, z + hz); ++zz)
                    for (long yy = std::max(0L, y - hy); peak && yy <= std::min(ny - 1, y + hy); ++yy)
                        for (long xx = std::max(0L, x - hx); xx <= std::min(nx - 1, x + hx); ++xx) {
                            const auto n = frame.at(zz, yy, xx);
                            if (n < v) continue;
                            if (n > v) { peak = false; break; }
                            // tie: the earlier voxel in scan order wins
                            if (std::tie(zz, yy, xx) < std::tie(z, y, x)) { peak = false; break; }
                        }
                if (!peak) continue;
                out.points.emplace_back(static_cast<double>(x), static_cast<double>(y),
                                        static_cast<double>(z) * z_scale);
                out.intensities.push_back(v);
            }
        }
    }
    PeakSet peaks;
    for (auto& s : per_slice) {
        peaks.points.insert(peaks.points.end(), s.points.begin(), s.points.end());
        peaks.intensities.insert(peaks.intensities.end(), s.intensities.begin(), s.intensities.end());
    }
    return peaks;
}

double dp_means_objective(const Positions& points, const CentroidSet& c, double lambda) {
    double obj = lambda * lambda * static_cast<double>(c.k());
    for (std::size_t i = 0; i < points.size(); ++i)
        obj += (points[i] - c.centroids[c.assignment[i]]).squaredNorm();
    return obj;
}

namespace {

// Recomputes centroids as assigned-point means and drops empty clusters.
void update_means(const Positions& points, CentroidSet& c) {
    std::vector<Vec3> sums(c.k(), Vec3::Zero());
    std::vector<std::size_t> counts(c.k(), 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
        sums[c.assignment[i]] += points[i];
        ++counts[c.assignment[i]];
    }
    std::vector<std::size_t> remap(c.k(), 0);
    Positions kept;
    for (std::size_t j = 0; j < c.k(); ++j) {
        if (counts[j] == 0) continue;
        remap[j] = kept.size();
        kept.push_back(sums[j] / static_cast<double>(counts[j]));
    }
    for (auto& a : c.assignment) a = remap[a];
    c.centroids = std::move(kept);
}

}  // namespace

CentroidSet dp_means(const Positions& points, double lambda, std::vector<double>* objective_trace,
                     std::size_t max_iter) {
    if (!(lambda > 0.0)) throw std::invalid_argument("dp_means: lambda must be positive");
    CentroidSet c;
    if (points.empty()) return c;

    Vec3 mean = Vec3::Zero();
    for (const auto& p : points) mean += p;
    c.centroids.push_back(mean / static_cast<double>(points.size()));
    c.assignment.assign(points.size(), 0);
    if (objective_trace) objective_trace->push_back(dp_means_objective(points, c, lambda));

    const double lambda2 = lambda * lambda;
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        const auto previous = c.assignment;
        const auto previous_k = c.k();
        for (std::size_t i = 0; i < points.size(); ++i) {
            double best = std::numeric_limits<double>::infinity();
            std::size_t arg = 0;
            for (std::size_t j = 0; j < c.k(); ++j) {
                const double d2 = (points[i] - c.centroids[j]).squaredNorm();
                if (d2 < best) {
                    best = d2;
                    arg = j;
                }
            }
            if (best > lambda2) {
                c.centroids.push_back(points[i]);
                c.assignment[i] = c.k() - 1;
            } else {
                c.assignment[i] = arg;
            }
        }
        update_means(points, c);
        if (objective_trace) objective_trace->push_back(dp_means_objective(points, c, lambda));
        if (c.k() == previous_k && c.assignment == previous) break;
    }
    return c;
}

CentroidSet detect_cells(const Image3D& frame, double z_scale, const DetectConfig& cfg) {
    const double min_intensity = cfg.min_intensity.value_or(0.1 * dtype_max(frame.dtype));
    const auto peaks = collect_peaks(frame, cfg.peak_window, min_intensity, z_scale);
    auto clusters = dp_means(peaks.points, cfg.lambda);

    std::vector<std::size_t> counts(clusters.k(), 0);
    for (auto a : clusters.assignment) ++counts[a];
    CentroidSet out;
    std::vector<std::size_t> remap(clusters.k(), std::numeric_limits<std::size_t>::max());
    for (std::size_t j = 0; j < clusters.k(); ++j) {
        if (counts[j] < cfg.min_cluster_size) continue;
        remap[j] = out.centroids.size();
        out.centroids.push_back(clusters.centroids[j]);
    }
    // points of dropped clusters are marked with max(); assignment stays parallel to the peaks
    out.assignment.reserve(clusters.assignment.size());
    for (auto a : clusters.assignment) out.assignment.push_back(remap[a]);
    return out;
}

}  // namespace spf
