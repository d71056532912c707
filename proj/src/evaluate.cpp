#include "spf/evaluate.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace spf {

double scaled_distance(const Vec3& a, const Vec3& b, double z_scale) {
    const Vec3 d = a - b;
    return std::sqrt(d.x() * d.x() + d.y() * d.y() + z_scale * z_scale * d.z() * d.z());
}

namespace {

void check_shapes(const Positions& est, const Positions& truth, const std::vector<char>& visible,
                  std::size_t cells) {
    if (cells == 0) throw DataError("evaluation needs at least one cell");
    if (est.size() != truth.size() || visible.size() != truth.size() || truth.size() % cells != 0)
        throw DataError(fmt::format("shape mismatch: {} estimates, {} truth positions, {} visibility flags, "
                                    "{} cells",
                                    est.size(), truth.size(), visible.size(), cells));
}

}  // namespace

std::vector<double> rmse(const Positions& estimates, const Positions& truth, const std::vector<char>& visible,
                         std::size_t cells, double z_scale) {
    check_shapes(estimates, truth, visible, cells);
    const auto frames = truth.size() / cells;
    std::vector<double> out(frames, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t t = 0; t < frames; ++t) {
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t k = 0; k < cells; ++k) {
            const auto i = t * cells + k;
            if (!visible[i]) continue;
            const double e = scaled_distance(estimates[i], truth[i], z_scale);
            sum += e * e;
            ++n;
        }
        if (n > 0) out[t] = std::sqrt(sum / static_cast<double>(n));
    }
    return out;
}

std::size_t count_failures_series(const std::vector<double>& distances, const std::vector<char>& visible,
                                  double threshold) {
    std::size_t count = 0;
    bool failing = false;
    for (std::size_t t = 0; t < distances.size(); ++t) {
        if (!visible.empty() && !visible[t]) continue;
        const bool now = distances[t] > threshold;
        if (now && !failing) ++count;
        failing = now;
    }
    return count;
}

std::vector<std::size_t> count_failures(const Positions& estimates, const Positions& truth,
                                        const std::vector<char>& visible, std::size_t cells, double threshold,
                                        double z_scale) {
    check_shapes(estimates, truth, visible, cells);
    const auto frames = truth.size() / cells;
    std::vector<std::size_t> out(cells, 0);
    std::vector<double> dist(frames);
    std::vector<char> vis(frames);
    for (std::size_t k = 0; k < cells; ++k) {
        for (std::size_t t = 0; t < frames; ++t) {
            const auto i = t * cells + k;
            dist[t] = scaled_distance(estimates[i], truth[i], z_scale);
            vis[t] = visible[i];
        }
        out[k] = count_failures_series(dist, vis, threshold);
    }
    return out;
}

namespace {

// Rectangular min-cost assignment (rows <= cols), Hungarian method with potentials.
// Returns col index per row.
std::vector<std::size_t> hungarian(const std::vector<std::vector<double>>& cost) {
    const std::size_t n = cost.size(), m = cost.empty() ? 0 : cost[0].size();
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(m + 1, inf);
        std::vector<char> used(m + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> row_to_col(n, 0);
    for (std::size_t j = 1; j <= m; ++j)
        if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
    return row_to_col;
}

}  // namespace

std::vector<std::pair<std::size_t, std::size_t>> match_detections(const Positions& detected,
                                                                  const Positions& annotated,
                                                                  double match_radius) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    if (detected.empty() || annotated.empty()) return pairs;
    const bool transpose = detected.size() > annotated.size();
    const Positions& rows = transpose ? annotated : detected;
    const Positions& cols = transpose ? detected : annotated;
    // Every admissible pair earns a bonus larger than any total distance, so
    // the assignment first maximizes the pair count, then minimizes distance.
    const double bonus = match_radius * static_cast<double>(rows.size() + 1) + 1.0;
    std::vector<std::vector<double>> cost(rows.size(), std::vector<double>(cols.size(), 0.0));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j) {
            const double d = (rows[i] - cols[j]).norm();
            if (d <= match_radius) cost[i][j] = d - bonus;
        }
    const auto assign = hungarian(cost);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto j = assign[i];
        if ((rows[i] - cols[j]).norm() > match_radius) continue;
        pairs.emplace_back(transpose ? j : i, transpose ? i : j);
    }
    std::sort(pairs.begin(), pairs.end());
    return pairs;
}

DetectionMetrics detection_metrics(const Positions& detected, const Positions& annotated, double match_radius) {
    DetectionMetrics m;
    m.tp = match_detections(detected, annotated, match_radius).size();
    m.fp = detected.size() - m.tp;
    m.fn = annotated.size() - m.tp;
    m.tpr = m.tp + m.fn > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn) : 0.0;
    m.fdr = m.fp + m.tp > 0 ? static_cast<double>(m.fp) / static_cast<double>(m.fp + m.tp) : 0.0;
    return m;
}

Positions to_index_space(const Positions& physical, double z_scale) {
    Positions out;
    out.reserve(physical.size());
    for (const auto& p : physical) out.push_back(physical_to_index(p, z_scale));
    return out;
}

EvalReport evaluate(const Positions& estimates, const Positions& truth, const std::vector<char>& visible,
                    std::size_t cells, double threshold, double z_scale) {
    EvalReport r;
    r.rmse_series = rmse(estimates, truth, visible, cells, z_scale);
    r.failures_per_cell = count_failures(estimates, truth, visible, cells, threshold, z_scale);
    r.failure_mean = static_cast<double>(std::accumulate(r.failures_per_cell.begin(),
                                                         r.failures_per_cell.end(), std::size_t{0})) /
                     static_cast<double>(cells);
    return r;
}

EvalReport evaluate(const TrackResult& result, const GroundTruth& truth, double threshold) {
    if (result.frames != truth.frames || result.cells != truth.cells)
        throw DataError(fmt::format("result is {}x{} but truth is {}x{}", result.frames, result.cells,
                                    truth.frames, truth.cells));
    return evaluate(to_index_space(result.estimates, result.z_scale), to_index_space(truth.positions, truth.z_scale),
                    truth.visible, truth.cells, threshold, truth.z_scale);
}

void write_report(const EvalReport& r, const std::filesystem::path& text_path,
                  const std::filesystem::path& tsv_path) {
    double sum = 0.0, peak = 0.0;
    std::size_t n = 0;
    for (double e : r.rmse_series)
        if (!std::isnan(e)) {
            sum += e;
            peak = std::max(peak, e);
            ++n;
        }
    const double mean_rmse = n ? sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
    {
        std::ofstream os(text_path);
        if (!os) throw DataError(fmt::format("cannot write report '{}'", text_path.string()));
        fmt::print(os, "frames            {}\n", r.rmse_series.size());
        fmt::print(os, "cells             {}\n", r.failures_per_cell.size());
        fmt::print(os, "mean RMSE         {:.4f}\n", mean_rmse);
        fmt::print(os, "max RMSE          {:.4f}\n", peak);
        fmt::print(os, "failures / cell   {:.4f}\n", r.failure_mean);
        if (r.detection) {
            const auto& d = *r.detection;
            fmt::print(os, "detection         TP {} FP {} FN {} TPR {:.4f} FDR {:.4f}\n", d.tp, d.fp, d.fn, d.tpr,
                       d.fdr);
        }
        fmt::print(os, "\nper-frame RMSE\n");
        for (std::size_t t = 0; t < r.rmse_series.size(); ++t) fmt::print(os, "{} {:.4f}\n", t, r.rmse_series[t]);
        fmt::print(os, "\nper-cell failures\n");
        for (std::size_t k = 0; k < r.failures_per_cell.size(); ++k)
            fmt::print(os, "{} {}\n", k, r.failures_per_cell[k]);
    }
    std::ofstream os(tsv_path);
    if (!os) throw DataError(fmt::format("cannot write report '{}'", tsv_path.string()));
    fmt::print(os, "metric\tvalue\n");
    fmt::print(os, "mean_rmse\t{:.6f}\n", mean_rmse);
    fmt::print(os, "max_rmse\t{:.6f}\n", peak);
    fmt::print(os, "failure_mean\t{:.6f}\n", r.failure_mean);
    if (r.detection) {
        const auto& d = *r.detection;
        fmt::print(os, "tp\t{}\nfp\t{}\nfn\t{}\ntpr\t{:.6f}\nfdr\t{:.6f}\n", d.tp, d.fp, d.fn, d.tpr, d.fdr);
    }
    for (std::size_t t = 0; t < r.rmse_series.size(); ++t) fmt::print(os, "rmse_{}\t{:.6f}\n", t, r.rmse_series[t]);
    for (std::size_t k = 0; k < r.failures_per_cell.size(); ++k)
        fmt::print(os, "failures_{}\t{}\n", k, r.failures_per_cell[k]);
}

}  // namespace spf
