#pragma once

#include <Eigen/Core>

#include <cmath>
#include <vector>

#include "spf/volume.hpp"

namespace spf {

/// Positions are physical unless stated otherwise: x and y in voxel units,
/// z multiplied by the volume's z_scale so that distances are isotropic.
using Vec3 = Eigen::Vector3d;
using Positions = std::vector<Vec3>;

inline Vec3 index_to_physical(const Vec3& p, double z_scale) { return {p.x(), p.y(), p.z() * z_scale}; }
inline Vec3 physical_to_index(const Vec3& p, double z_scale) { return {p.x(), p.y(), p.z() / z_scale}; }

/// Voxel whose cell contains a physical position.
inline Voxel nearest_voxel(const Vec3& p, double z_scale) {
    return {std::lround(p.x()), std::lround(p.y()), std::lround(p.z() / z_scale)};
}

}  // namespace spf
