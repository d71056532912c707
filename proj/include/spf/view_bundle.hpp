#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>

#include "spf/tracker.hpp"
#include "spf/volume.hpp"

namespace spf {

struct ViewExportOptions {
    std::optional<std::uint16_t> floor;  // keep voxels strictly above; default 10% of dtype max
    std::array<long, 3> stride{2, 2, 1}; // x, y, z subsampling
};

/// Writes a viewer bundle into `out_dir`: meta.json, frame_%04d.txt
/// ("x y z v" per voxel), tracks.txt ("t k x y z status", index space) and
/// tree.txt. Throws DataError when the result does not fit the volume.
void export_view(const Volume4D& volume, const TrackResult& result, const std::filesystem::path& out_dir,
                 const ViewExportOptions& opts = {});

}  // namespace spf
