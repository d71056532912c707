#include "spf/view_bundle.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <json.hpp>

#include <fstream>

#include "spf/text_io.hpp"

namespace spf {

void export_view(const Volume4D& volume, const TrackResult& result, const std::filesystem::path& out_dir,
                 const ViewExportOptions& opts) {
    const auto& d = volume.dims();
    if (result.frames != d.t)
        throw DataError(fmt::format("result has {} frames but the volume has {}", result.frames, d.t));
    if (result.cells == 0) throw DataError("result has no cells");
    for (auto s : opts.stride)
        if (s < 1) throw DataError("export stride entries must be >= 1");
    std::filesystem::create_directories(out_dir);
    const std::uint16_t floor = opts.floor.value_or(static_cast<std::uint16_t>(volume.max_value() / 10));

    nlohmann::json meta;
    meta["dims"] = {{"t", d.t}, {"z", d.z}, {"y", d.y}, {"x", d.x}};
    meta["z_scale"] = volume.z_scale();
    meta["dtype"] = dtype_name(volume.dtype());
    meta["floor"] = floor;
    meta["stride"] = opts.stride;
    meta["cells"] = result.cells;
    meta["method"] = result.method;
    meta["frame_pattern"] = "frame_%04d.txt";
    std::ofstream(out_dir / "meta.json") << meta.dump(2) << '\n';

    const auto frames = static_cast<long>(d.t);
#pragma omp parallel for schedule(dynamic)
    for (long t = 0; t < frames; ++t) {
        std::ofstream os(out_dir / fmt::format("frame_{:04d}.txt", t));
        std::string buf;
        for (std::size_t z = 0; z < d.z; z += static_cast<std::size_t>(opts.stride[2]))
            for (std::size_t y = 0; y < d.y; y += static_cast<std::size_t>(opts.stride[1]))
                for (std::size_t x = 0; x < d.x; x += static_cast<std::size_t>(opts.stride[0])) {
                    const auto v = volume.at(static_cast<std::size_t>(t), z, y, x);
                    if (v > floor) fmt::format_to(std::back_inserter(buf), "{} {} {} {}\n", x, y, z, v);
                }
        os << buf;
    }

    write_result(out_dir / "tracks.txt", result);
    if (result.tree) {
        write_tree(out_dir / "tree.txt", *result.tree);
    } else {
        const Positions first(result.estimates.begin(), result.estimates.begin() + static_cast<long>(result.cells));
        write_tree(out_dir / "tree.txt", build_cell_tree(first));
    }
}

}  // namespace spf
