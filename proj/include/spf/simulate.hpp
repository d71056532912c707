#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "spf/geometry.hpp"
#include "spf/mrf_tree.hpp"
#include "spf/volume.hpp"

namespace spf {

struct SimConfig {
    std::size_t z = 20, y = 256, x = 512;  // frame shape, index space
    std::size_t frames = 500;
    double z_scale = 3.0;
    DType dtype = DType::U8;
    double alpha = 0.6;
    Vec3 sigma_step{0.6, 0.6, 0.03};  // noise std devs, physical units
    Vec3 shape{9.0, 6.0, 3.0};        // diagonal of the PSF covariance, index space
    double intensity = 200.0;         // PSF peak c
    double p_drop = 0.03;             // per-nucleus, per-frame deletion probability
    bool root_fixed = true;
    std::uint64_t seed = 1;
    // built-in scatter generator
    double min_distance = 12.0;  // physical
    double margin = 12.0;        // physical distance kept from the xy borders
    double z_margin = 6.0;       // physical distance kept from the z borders

    Dims4 dims() const { return {frames, z, y, x}; }
    void validate() const;
};

/// True trajectories (physical coordinates) and per-frame visibility.
struct GroundTruth {
    std::size_t frames = 0, cells = 0;
    Positions positions;        // [t * cells + k]
    std::vector<char> visible;  // [t * cells + k]
    double z_scale = 3.0;
    CellTree tree;
    SimConfig params;

    Vec3& at(std::size_t t, std::size_t k) { return positions[t * cells + k]; }
    const Vec3& at(std::size_t t, std::size_t k) const { return positions[t * cells + k]; }
    bool is_visible(std::size_t t, std::size_t k) const { return visible[t * cells + k] != 0; }
};

/// K points with a minimum pairwise distance, uniform inside the margins.
Positions scatter_points(std::size_t k, const SimConfig& cfg);

/// Tree-correlated motion: the root stays put (root_fixed), every other cell
/// follows its parent in sweep order with an AR(1) pull toward its initial
/// relative position. Returns [t * K + k].
Positions simulate_positions(const Positions& init, const CellTree& tree, const SimConfig& cfg);

/// Noise-free continuation of the relative-position recursion starting from
/// arbitrary frame-0 and frame-1 layouts.
Positions propagate_relative(const Positions& reference, const Positions& start, const CellTree& tree,
                             double alpha, std::size_t steps);

/// Truncated anisotropic Gaussian c*exp(-d^2/2) for d < 1, 0 otherwise, where
/// d is the Mahalanobis distance with covariance diag(shape).
double psf_value(const Vec3& offset_index, const Vec3& shape, double c);

Image3D render_frame(const Positions& positions, const std::vector<char>& visible, const SimConfig& cfg);

std::pair<Volume4D, GroundTruth> generate_dataset(const SimConfig& cfg, const Positions& init);

}  // namespace spf
