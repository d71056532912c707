#include "spf/volume.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace spf {

Volume4D subtract_background(const Volume4D& v) {
    Volume4D out = v;
    const auto& d = v.dims();
    const auto plane = d.y * d.x;
    const auto slices = static_cast<long>(d.t * d.z);
    out.visit_mut([&](auto data) {
        using T = typename decltype(data)::value_type;
#pragma omp parallel for schedule(static)
        for (long s = 0; s < slices; ++s) {
            auto slice = data.subspan(static_cast<std::size_t>(s) * plane, plane);
            double sum = 0.0;
            for (auto px : slice) sum += px;
            const double mean = sum / static_cast<double>(plane);
            for (auto& px : slice) {
                const double r = std::round(static_cast<double>(px) - mean);
                px = static_cast<T>(r > 0.0 ? r : 0.0);
            }
        }
    });
    return out;
}

Image3D median_filter(const Image3D& img, const std::array<long, 3>& window) {
    for (auto w : window)
        if (w < 1 || w % 2 == 0)
            throw std::invalid_argument(
                fmt::format("median window entries must be odd and >= 1, got ({},{},{})", window[0],
                            window[1], window[2]));
    const long hx = window[0] / 2, hy = window[1] / 2, hz = window[2] / 2;
    Image3D out(img.z, img.y, img.x, img.dtype);
    const long nz = static_cast<long>(img.z), ny = static_cast<long>(img.y),
               nx = static_cast<long>(img.x);
    std::vector<std::uint16_t> buf;
    buf.reserve(static_cast<std::size_t>(window[0] * window[1] * window[2]));
    for (long z = 0; z < nz; ++z) {
        for (long y = 0; y < ny; ++y) {
            for (long x = 0; x < nx; ++x) {
                buf.clear();
                for (long zz = std::max(0L, z - hz); zz <= std::min(nz - 1, z + hz); ++zz)
                    for (long yy = std::max(0L, y - hy); yy <= std::min(ny - 1, y + hy); ++yy)
                        for (long xx = std::max(0L, x - hx); xx <= std::min(nx - 1, x + hx); ++xx)
                            buf.push_back(img.at(zz, yy, xx));
                // lower median when a truncated border window has an even count
                auto mid = buf.begin() + static_cast<long>((buf.size() - 1) / 2);
                std::nth_element(buf.begin(), mid, buf.end());
                out.at(z, y, x) = *mid;
            }
        }
    }
    return out;
}

Volume4D median_filter(const Volume4D& v, const std::array<long, 3>& window) {
    Volume4D out(v.dims(), v.dtype(), v.z_scale());
    const auto frames = static_cast<long>(v.dims().t);
    // validate before entering the parallel region
    median_filter(Image3D(1, 1, 1, v.dtype()), window);
#pragma omp parallel for schedule(dynamic)
    for (long t = 0; t < frames; ++t)
        out.set_frame(static_cast<std::size_t>(t), median_filter(v.frame(static_cast<std::size_t>(t)), window));
    return out;
}

}  // namespace spf
