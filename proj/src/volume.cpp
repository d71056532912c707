#include "spf/volume.hpp"

#include <fmt/format.h>

namespace spf {

const char* dtype_name(DType d) { return d == DType::U8 ? "u8" : "u16"; }

Volume4D::Volume4D(Dims4 dims, DType dtype, double z_scale) : dims_(dims), dtype_(dtype) {
    if (dims.t == 0 || dims.z == 0 || dims.y == 0 || dims.x == 0)
        throw DataError(fmt::format("volume dimensions must be positive, got ({},{},{},{})", dims.t,
                                    dims.z, dims.y, dims.x));
    set_z_scale(z_scale);
    if (dtype == DType::U8)
        storage_ = std::vector<std::uint8_t>(dims.total(), 0);
    else
        storage_ = std::vector<std::uint16_t>(dims.total(), 0);
}

void Volume4D::set_z_scale(double s) {
    if (!(s > 0.0)) throw DataError(fmt::format("z_scale must be positive, got {}", s));
    z_scale_ = s;
}

std::uint16_t Volume4D::at(std::size_t t, std::size_t z, std::size_t y, std::size_t x) const {
    const auto i = index(t, z, y, x);
    return visit([i](auto data) { return static_cast<std::uint16_t>(data[i]); });
}

void Volume4D::set(std::size_t t, std::size_t z, std::size_t y, std::size_t x, std::uint16_t v) {
    const auto i = index(t, z, y, x);
    visit_mut([&](auto data) {
        using T = typename decltype(data)::value_type;
        data[i] = static_cast<T>(std::min<std::uint16_t>(v, dtype_max(dtype_)));
    });
}

void Volume4D::check_frame(std::size_t t) const {
    if (t >= dims_.t)
        throw std::out_of_range(fmt::format("frame {} out of range (T={})", t, dims_.t));
}

Image3D Volume4D::frame(std::size_t t) const {
    check_frame(t);
    Image3D img(dims_.z, dims_.y, dims_.x, dtype_);
    const auto offset = t * dims_.frame_voxels();
    visit([&](auto data) {
        for (std::size_t i = 0; i < img.values.size(); ++i) img.values[i] = data[offset + i];
    });
    return img;
}

void Volume4D::set_frame(std::size_t t, const Image3D& img) {
    check_frame(t);
    if (img.z != dims_.z || img.y != dims_.y || img.x != dims_.x)
        throw DataError(fmt::format("frame shape ({},{},{}) does not match volume ({},{},{})", img.z,
                                    img.y, img.x, dims_.z, dims_.y, dims_.x));
    const auto offset = t * dims_.frame_voxels();
    const auto vmax = max_value();
    visit_mut([&](auto data) {
        using T = typename decltype(data)::value_type;
        for (std::size_t i = 0; i < img.values.size(); ++i)
            data[offset + i] = static_cast<T>(std::min(img.values[i], vmax));
    });
}

SubImage extract_subimage(const Volume4D& v, std::size_t t, const Voxel& center,
                          const std::array<long, 3>& w) {
    if (t >= v.dims().t)
        throw std::out_of_range(fmt::format("frame {} out of range (T={})", t, v.dims().t));
    SubImage sub;
    sub.center = center;
    sub.half_widths = w;
    sub.values.assign(window_volume(w), 0);
    const auto& d = v.dims();
    v.visit([&](auto data) {
        std::size_t out = 0;
        for (long dz = -w[2]; dz <= w[2]; ++dz) {
            const long z = center.z + dz;
            for (long dy = -w[1]; dy <= w[1]; ++dy) {
                const long y = center.y + dy;
                for (long dx = -w[0]; dx <= w[0]; ++dx, ++out) {
                    const long x = center.x + dx;
                    if (z < 0 || y < 0 || x < 0 || static_cast<std::size_t>(z) >= d.z ||
                        static_cast<std::size_t>(y) >= d.y || static_cast<std::size_t>(x) >= d.x)
                        continue;
                    sub.values[out] = data[v.index(t, z, y, x)];
                }
            }
        }
    });
    return sub;
}

}  // namespace spf
