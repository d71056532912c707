#include "spf/volume.hpp"

#include <fmt/args.h>
#include <fmt/format.h>
#include <png.h>

#include <array>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <memory>

namespace spf {
namespace {

constexpr std::array<char, 4> kMagic{'S', 'P', 'F', 'V'};
constexpr std::size_t kHeaderBytes = 4 + 6 * 4;

void put_u32(std::ostream& os, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                       static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    os.write(b, 4);
}

std::uint32_t get_u32(const unsigned char* b) {
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_volume(const Volume4D& v, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError(fmt::format("cannot open '{}' for writing", path.string()));
    os.write(kMagic.data(), 4);
    put_u32(os, kVolumeFormatVersion);
    const auto& d = v.dims();
    for (auto n : {d.t, d.z, d.y, d.x}) put_u32(os, static_cast<std::uint32_t>(n));
    put_u32(os, static_cast<std::uint32_t>(v.dtype()));

    v.visit([&](auto data) {
        using T = typename decltype(data)::value_type;
        if constexpr (sizeof(T) == 1) {
            os.write(reinterpret_cast<const char*>(data.data()),
                     static_cast<std::streamsize>(data.size()));
        } else {
            std::vector<char> buf;
            constexpr std::size_t chunk = 1 << 20;
            for (std::size_t i = 0; i < data.size(); i += chunk) {
                const auto n = std::min(chunk, data.size() - i);
                buf.resize(2 * n);
                for (std::size_t j = 0; j < n; ++j) {
                    buf[2 * j] = static_cast<char>(data[i + j] & 0xff);
                    buf[2 * j + 1] = static_cast<char>(data[i + j] >> 8);
                }
                os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
            }
        }
    });
    if (!os) throw DataError(fmt::format("write to '{}' failed", path.string()));
}

Volume4D read_volume(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError(fmt::format("cannot open volume '{}'", path.string()));
    std::array<unsigned char, kHeaderBytes> hdr{};
    is.read(reinterpret_cast<char*>(hdr.data()), hdr.size());
    if (is.gcount() != static_cast<std::streamsize>(hdr.size()))
        throw DataError(fmt::format("'{}': truncated header ({} of {} bytes)", path.string(),
                                    is.gcount(), hdr.size()));
    if (!std::equal(kMagic.begin(), kMagic.end(), hdr.begin()))
        throw DataError(fmt::format("'{}': bad magic (expected SPFV)", path.string()));
    const auto version = get_u32(&hdr[4]);
    if (version != kVolumeFormatVersion)
        throw DataError(fmt::format("'{}': unsupported format version {} (expected {})",
                                    path.string(), version, kVolumeFormatVersion));
    Dims4 d{get_u32(&hdr[8]), get_u32(&hdr[12]), get_u32(&hdr[16]), get_u32(&hdr[20])};
    const auto code = get_u32(&hdr[24]);
    if (code != 1 && code != 2)
        throw DataError(fmt::format("'{}': unknown dtype code {}", path.string(), code));
    const auto dtype = static_cast<DType>(code);

    const std::uintmax_t bytes_per = dtype == DType::U8 ? 1 : 2;
    const std::uintmax_t expected = d.total() * bytes_per;
    const auto file_size = std::filesystem::file_size(path);
    const std::uintmax_t actual = file_size > kHeaderBytes ? file_size - kHeaderBytes : 0;
    if (actual < expected)
        throw DataError(fmt::format("'{}': truncated payload: expected {} bytes, found {}",
                                    path.string(), expected, actual));

    Volume4D v(d, dtype);
    v.visit_mut([&](auto data) {
        using T = typename decltype(data)::value_type;
        if constexpr (sizeof(T) == 1) {
            is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
        } else {
            std::vector<unsigned char> buf;
            constexpr std::size_t chunk = 1 << 20;
            for (std::size_t i = 0; i < data.size(); i += chunk) {
                const auto n = std::min(chunk, data.size() - i);
                buf.resize(2 * n);
                is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
                for (std::size_t j = 0; j < n; ++j)
                    data[i + j] = static_cast<T>(buf[2 * j] | (buf[2 * j + 1] << 8));
            }
        }
    });
    if (!is) throw DataError(fmt::format("'{}': read failed", path.string()));
    return v;
}

namespace {

// Netpbm grayscale (P2 ascii, P5 binary). 16-bit P5 samples are big-endian.
Image3D read_pgm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError(fmt::format("cannot open image '{}'", path.string()));
    auto next_token = [&]() {
        std::string tok;
        int c;
        while ((c = is.get()) != EOF) {
            if (c == '#') {
                while ((c = is.get()) != EOF && c != '\n') {
                }
                continue;
            }
            if (std::isspace(c)) {
                if (!tok.empty()) break;
                continue;
            }
            tok.push_back(static_cast<char>(c));
        }
        return tok;
    };
    const auto magic = next_token();
    if (magic != "P5" && magic != "P2")
        throw DataError(fmt::format("'{}': not a grayscale PGM", path.string()));
    long w = 0, h = 0, maxval = 0;
    try {
        w = std::stol(next_token());
        h = std::stol(next_token());
        maxval = std::stol(next_token());
    } catch (const std::exception&) {
        throw DataError(fmt::format("'{}': malformed PGM header", path.string()));
    }
    if (w <= 0 || h <= 0) throw DataError(fmt::format("'{}': bad PGM size", path.string()));
    if (maxval <= 0 || maxval > 65535)
        throw DataError(fmt::format("'{}': unsupported bit depth (maxval {})", path.string(), maxval));
    Image3D img(1, static_cast<std::size_t>(h), static_cast<std::size_t>(w),
                maxval > 255 ? DType::U16 : DType::U8);
    if (magic == "P2") {
        for (auto& v : img.values) {
            long s = 0;
            if (!(is >> s)) throw DataError(fmt::format("'{}': truncated PGM data", path.string()));
            v = static_cast<std::uint16_t>(s);
        }
    } else {
        const std::size_t bps = maxval > 255 ? 2 : 1;
        std::vector<unsigned char> raw(img.values.size() * bps);
        is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
        if (is.gcount() != static_cast<std::streamsize>(raw.size()))
            throw DataError(fmt::format("'{}': truncated PGM data", path.string()));
        for (std::size_t i = 0; i < img.values.size(); ++i)
            img.values[i] = bps == 1 ? raw[i] : static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
    }
    return img;
}

Image3D read_png(const std::filesystem::path& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw DataError(fmt::format("'{}': {}", path.string(), image.message));
    std::unique_ptr<png_image, decltype(&png_image_free)> guard(&image, png_image_free);
    // libpng's simplified API reports 16-bit sources through PNG_FORMAT_FLAG_LINEAR.
    const bool wide = (image.format & PNG_FORMAT_FLAG_LINEAR) != 0;
    image.format = wide ? PNG_FORMAT_LINEAR_Y : PNG_FORMAT_GRAY;
    Image3D img(1, image.height, image.width, wide ? DType::U16 : DType::U8);
    if (wide) {
        if (!png_image_finish_read(&image, nullptr, img.values.data(), 0, nullptr))
            throw DataError(fmt::format("'{}': {}", path.string(), image.message));
    } else {
        std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
        if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr))
            throw DataError(fmt::format("'{}': {}", path.string(), image.message));
        std::copy(buf.begin(), buf.end(), img.values.begin());
    }
    guard.release();
    return img;
}

}  // namespace

Image3D read_slice_image(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path))
        throw DataError(fmt::format("missing slice file '{}'", path.string()));
    auto ext = path.extension().string();
    for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (ext == ".png") return read_png(path);
    if (ext == ".pgm" || ext == ".pnm") return read_pgm(path);
    throw DataError(fmt::format("'{}': unsupported image type '{}'", path.string(), ext));
}

Volume4D load_slices(const std::filesystem::path& dir, const std::string& pattern, const Dims4& dims) {
    std::vector<Image3D> slices;
    slices.reserve(dims.t * dims.z);
    DType dtype = DType::U8;
    for (std::size_t t = 0; t < dims.t; ++t) {
        for (std::size_t z = 0; z < dims.z; ++z) {
            fmt::dynamic_format_arg_store<fmt::format_context> args;
            args.push_back(fmt::arg("t", t));
            args.push_back(fmt::arg("z", z));
            std::string name;
            try {
                name = fmt::vformat(pattern, args);
            } catch (const fmt::format_error& e) {
                throw DataError(fmt::format("bad slice pattern '{}': {}", pattern, e.what()));
            }
            auto img = read_slice_image(dir / name);
            if (img.y != dims.y || img.x != dims.x)
                throw DataError(fmt::format("'{}': image is {}x{}, expected {}x{}",
                                            (dir / name).string(), img.x, img.y, dims.x, dims.y));
            if (img.dtype == DType::U16) dtype = DType::U16;
            slices.push_back(std::move(img));
        }
    }
    Volume4D v(dims, dtype);
    const auto plane = dims.y * dims.x;
    v.visit_mut([&](auto data) {
        using T = typename decltype(data)::value_type;
        for (std::size_t s = 0; s < slices.size(); ++s)
            for (std::size_t i = 0; i < plane; ++i)
                data[s * plane + i] = static_cast<T>(slices[s].values[i]);
    });
    return v;
}

}  // namespace spf
