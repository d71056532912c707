#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace spf {

/// Raised for malformed or inconsistent input data (files, dimensions, formats).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class DType : std::uint32_t { U8 = 1, U16 = 2 };

inline std::uint16_t dtype_max(DType d) { return d == DType::U8 ? 255 : 65535; }
const char* dtype_name(DType d);

struct Dims4 {
    std::size_t t = 0, z = 0, y = 0, x = 0;

    std::size_t frame_voxels() const { return z * y * x; }
    std::size_t total() const { return t * frame_voxels(); }
    bool operator==(const Dims4&) const = default;
};

/// Integer voxel coordinate, index space.
struct Voxel {
    long x = 0, y = 0, z = 0;
    bool operator==(const Voxel&) const = default;
};

/// A single 3D frame. Intensities are widened to 16 bit regardless of the
/// source dtype; `dtype` records the range the values came from.
struct Image3D {
    std::size_t z = 0, y = 0, x = 0;
    DType dtype = DType::U8;
    std::vector<std::uint16_t> values;

    Image3D() = default;
    Image3D(std::size_t nz, std::size_t ny, std::size_t nx, DType d)
        : z(nz), y(ny), x(nx), dtype(d), values(nz * ny * nx, 0) {}

    std::size_t index(std::size_t iz, std::size_t iy, std::size_t ix) const {
        return (iz * y + iy) * x + ix;
    }
    std::uint16_t at(std::size_t iz, std::size_t iy, std::size_t ix) const {
        return values[index(iz, iy, ix)];
    }
    std::uint16_t& at(std::size_t iz, std::size_t iy, std::size_t ix) {
        return values[index(iz, iy, ix)];
    }
    bool contains(const Voxel& v) const {
        return v.x >= 0 && v.y >= 0 && v.z >= 0 && static_cast<std::size_t>(v.x) < x &&
               static_cast<std::size_t>(v.y) < y && static_cast<std::size_t>(v.z) < z;
    }
};

/// Dense T x Z x Y x X intensity grid. Storage keeps the native dtype so a
/// full 500-frame u8 dataset stays at one byte per voxel.
class Volume4D {
public:
    using Storage = std::variant<std::vector<std::uint8_t>, std::vector<std::uint16_t>>;

    Volume4D() = default;
    Volume4D(Dims4 dims, DType dtype, double z_scale = 3.0);

    const Dims4& dims() const { return dims_; }
    DType dtype() const { return dtype_; }
    std::uint16_t max_value() const { return dtype_max(dtype_); }
    double z_scale() const { return z_scale_; }
    void set_z_scale(double s);

    std::size_t index(std::size_t t, std::size_t z, std::size_t y, std::size_t x) const {
        return ((t * dims_.z + z) * dims_.y + y) * dims_.x + x;
    }
    std::uint16_t at(std::size_t t, std::size_t z, std::size_t y, std::size_t x) const;
    void set(std::size_t t, std::size_t z, std::size_t y, std::size_t x, std::uint16_t v);

    bool contains(const Voxel& v) const {
        return v.x >= 0 && v.y >= 0 && v.z >= 0 && static_cast<std::size_t>(v.x) < dims_.x &&
               static_cast<std::size_t>(v.y) < dims_.y && static_cast<std::size_t>(v.z) < dims_.z;
    }

    Image3D frame(std::size_t t) const;
    void set_frame(std::size_t t, const Image3D& img);

    /// Calls `f(std::span<const T>)` with the raw voxel buffer.
    template <class F>
    decltype(auto) visit(F&& f) const {
        return std::visit([&](const auto& v) { return f(std::span(v)); }, storage_);
    }
    template <class F>
    decltype(auto) visit_mut(F&& f) {
        return std::visit([&](auto& v) { return f(std::span(v)); }, storage_);
    }

    bool operator==(const Volume4D& o) const {
        return dims_ == o.dims_ && dtype_ == o.dtype_ && storage_ == o.storage_;
    }

private:
    void check_frame(std::size_t t) const;

    Dims4 dims_{};
    DType dtype_ = DType::U8;
    double z_scale_ = 3.0;
    Storage storage_;
};

/// Cuboid window of edge lengths 2w+1 around a voxel, zero-padded outside the volume.
struct SubImage {
    Voxel center;
    std::array<long, 3> half_widths{};  // (w1, w2, w3) along x, y, z
    std::vector<std::uint16_t> values;  // z-major, then y, then x

    std::size_t size() const { return values.size(); }
};

inline std::size_t window_volume(const std::array<long, 3>& w) {
    return static_cast<std::size_t>((2 * w[0] + 1) * (2 * w[1] + 1) * (2 * w[2] + 1));
}

SubImage extract_subimage(const Volume4D& v, std::size_t t, const Voxel& center,
                          const std::array<long, 3>& w);

// Binary container: "SPFV", u32 version, u32 T, Z, Y, X, u32 dtype code, voxels.
inline constexpr std::uint32_t kVolumeFormatVersion = 1;

void write_volume(const Volume4D& v, const std::filesystem::path& path);
Volume4D read_volume(const std::filesystem::path& path);

/// Reads one 2D grayscale image (binary/ASCII PGM or PNG, up to 16 bit).
Image3D read_slice_image(const std::filesystem::path& path);

/// Assembles a volume from T*Z 2D images. `pattern` is an fmt format string
/// with named fields `t` and `z`, e.g. "img_t{t:03d}_z{z:02d}.pgm".
Volume4D load_slices(const std::filesystem::path& dir, const std::string& pattern, const Dims4& dims);

/// Per-(t,z) slice: subtract the slice mean from every voxel, clamping at 0.
Volume4D subtract_background(const Volume4D& v);

/// Median over a wx*wy*wz window within each frame; borders use the in-bounds part of the window.
Volume4D median_filter(const Volume4D& v, const std::array<long, 3>& window);
Image3D median_filter(const Image3D& img, const std::array<long, 3>& window);

}  // namespace spf
