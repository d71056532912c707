#pragma once

#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include "spf/geometry.hpp"
#include "spf/simulate.hpp"
#include "spf/tracker.hpp"

namespace spf {

// Scoring works on index-space coordinates ([t * cells + k]); the z difference
// is multiplied by z_scale before taking Euclidean norms.

struct DetectionMetrics {
    std::size_t tp = 0, fp = 0, fn = 0;
    double tpr = 0.0, fdr = 0.0;
};

struct EvalReport {
    std::vector<double> rmse_series;  // NaN for frames with no visible cell
    std::vector<std::size_t> failures_per_cell;
    double failure_mean = 0.0;
    std::optional<DetectionMetrics> detection;
};

double scaled_distance(const Vec3& a, const Vec3& b, double z_scale);

/// Per-frame root-mean-square error over cells visible in the truth.
std::vector<double> rmse(const Positions& estimates, const Positions& truth, const std::vector<char>& visible,
                         std::size_t cells, double z_scale = 3.0);

/// Rising-edge failure count for one cell's distance series. Hidden frames
/// hold the previous state.
std::size_t count_failures_series(const std::vector<double>& distances, const std::vector<char>& visible,
                                  double threshold = 4.5);

std::vector<std::size_t> count_failures(const Positions& estimates, const Positions& truth,
                                        const std::vector<char>& visible, std::size_t cells,
                                        double threshold = 4.5, double z_scale = 3.0);

/// One-to-one matching that maximizes the number of pairs within
/// match_radius (ties broken by minimal total distance). Distances are plain
/// index-space Euclidean.
DetectionMetrics detection_metrics(const Positions& detected, const Positions& annotated,
                                   double match_radius = 5.0);
/// The matched (detected, annotated) index pairs behind detection_metrics.
std::vector<std::pair<std::size_t, std::size_t>> match_detections(const Positions& detected,
                                                                  const Positions& annotated,
                                                                  double match_radius = 5.0);

/// Index-space views of physical tracker output and ground truth.
Positions to_index_space(const Positions& physical, double z_scale);

EvalReport evaluate(const TrackResult& result, const GroundTruth& truth, double threshold = 4.5);
EvalReport evaluate(const Positions& estimates, const Positions& truth, const std::vector<char>& visible,
                    std::size_t cells, double threshold, double z_scale);

void write_report(const EvalReport& r, const std::filesystem::path& text_path,
                  const std::filesystem::path& tsv_path);

}  // namespace spf
