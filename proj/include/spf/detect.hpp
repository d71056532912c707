#pragma once

#include <array>
#include <optional>
#include <vector>

#include "spf/geometry.hpp"

namespace spf {

/// Local intensity maxima of one frame, in physical coordinates.
struct PeakSet {
    Positions points;
    std::vector<std::uint16_t> intensities;

    std::size_t size() const { return points.size(); }
};

struct CentroidSet {
    Positions centroids;
    std::vector<std::size_t> assignment;  // point index -> cluster index
    std::size_t k() const { return centroids.size(); }
};

/// Voxels that dominate their peak_window (full widths, odd) with intensity
/// >= min_intensity. A plateau keeps only its lexicographically smallest voxel
/// (z, then y, then x).
PeakSet collect_peaks(const Image3D& frame, const std::array<long, 3>& peak_window,
                      double min_intensity, double z_scale);

/// DP-means hard clustering with cluster radius `lambda`. Points are scanned in
/// input order. When `objective_trace` is given, the objective
/// sum(dist^2) + lambda^2 * k is appended after every pass.
CentroidSet dp_means(const Positions& points, double lambda,
                     std::vector<double>* objective_trace = nullptr, std::size_t max_iter = 100);

double dp_means_objective(const Positions& points, const CentroidSet& c, double lambda);

struct DetectConfig {
    double lambda = 8.0;
    std::array<long, 3> peak_window{3, 3, 1};
    std::optional<double> min_intensity;  // default: 10% of dtype max
    std::size_t min_cluster_size = 3;
};

/// collect_peaks followed by dp_means; clusters with fewer than
/// min_cluster_size points are dropped.
CentroidSet detect_cells(const Image3D& frame, double z_scale, const DetectConfig& cfg = {});

}  // namespace spf
