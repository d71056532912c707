#include <doctest.h>
#include <fmt/format.h>
#include <png.h>

#include <algorithm>
#include <fstream>

#include "oracles.hpp"
#include "spf/volume.hpp"
#include "test_util.hpp"

using namespace spf;
using spf::testing::Gen;
using spf::testing::TempDir;

namespace {

void write_pgm(const std::filesystem::path& p, std::size_t w, std::size_t h, long maxval,
               const std::vector<std::uint16_t>& px) {
    std::ofstream os(p, std::ios::binary);
    os << "P5\n# test\n" << w << " " << h << "\n" << maxval << "\n";
    for (auto v : px) {
        if (maxval > 255) os.put(static_cast<char>(v >> 8));
        os.put(static_cast<char>(v & 0xff));
    }
}

Volume4D random_volume(Gen& g, DType d) {
    Dims4 dims{static_cast<std::size_t>(g.integer(1, 3)), static_cast<std::size_t>(g.integer(1, 4)),
               static_cast<std::size_t>(g.integer(1, 6)), static_cast<std::size_t>(g.integer(1, 7))};
    Volume4D v(dims, d);
    const long hi = dtype_max(d);
    v.visit_mut([&](auto data) {
        for (auto& x : data) x = static_cast<std::remove_reference_t<decltype(x)>>(g.integer(0, hi));
    });
    return v;
}

Image3D random_image(Gen& g, std::size_t z, std::size_t y, std::size_t x, long hi) {
    Image3D img(z, y, x, DType::U8);
    for (auto& v : img.values) v = static_cast<std::uint16_t>(g.integer(0, hi));
    return img;
}

}  // namespace

TEST_CASE("load_slices assembles frames and slices") {
    TempDir dir;
    for (int t = 0; t < 2; ++t)
        for (int z = 0; z < 2; ++z) {
            std::vector<std::uint16_t> px(16);
            for (int i = 0; i < 16; ++i) px[i] = static_cast<std::uint16_t>(t * 100 + z * 20 + i);
            write_pgm(dir / fmt::format("s_{}_{}.pgm", t, z), 4, 4, 255, px);
        }
    auto v = load_slices(dir.path(), "s_{t}_{z}.pgm", {2, 2, 4, 4});
    CHECK(v.dims() == Dims4{2, 2, 4, 4});
    CHECK(v.dtype() == DType::U8);
    CHECK(v.at(1, 0, 2, 3) == 100 + 0 + 11);
    CHECK(v.at(0, 1, 0, 0) == 20);
}

TEST_CASE("load_slices reports the missing path") {
    TempDir dir;
    std::vector<std::uint16_t> px(16, 1);
    write_pgm(dir / "s_0_0.pgm", 4, 4, 255, px);
    write_pgm(dir / "s_0_1.pgm", 4, 4, 255, px);
    write_pgm(dir / "s_1_1.pgm", 4, 4, 255, px);
    try {
        load_slices(dir.path(), "s_{t}_{z}.pgm", {2, 2, 4, 4});
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("s_1_0.pgm") != std::string::npos);
    }
}

TEST_CASE("load_slices rejects size mismatch and deep images") {
    TempDir dir;
    write_pgm(dir / "a_0_0.pgm", 4, 3, 255, std::vector<std::uint16_t>(12, 0));
    CHECK_THROWS_AS(load_slices(dir.path(), "a_{t}_{z}.pgm", {1, 1, 4, 4}), DataError);

    spf::testing::spit(dir / "b_0_0.pgm", "P2\n2 2\n70000\n1 2 3 4\n");
    try {
        load_slices(dir.path(), "b_{t}_{z}.pgm", {1, 1, 2, 2});
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("bit depth") != std::string::npos);
    }
}

TEST_CASE("16-bit PGM and PNG slices") {
    TempDir dir;
    std::vector<std::uint16_t> px{0, 1000, 65535, 300};
    write_pgm(dir / "w.pgm", 2, 2, 65535, px);
    auto img = read_slice_image(dir / "w.pgm");
    CHECK(img.dtype == DType::U16);
    CHECK(img.values == px);

    png_image out{};
    out.version = PNG_IMAGE_VERSION;
    out.width = 2;
    out.height = 2;
    out.format = PNG_FORMAT_GRAY;
    std::vector<std::uint8_t> bytes{0, 17, 255, 128};
    REQUIRE(png_image_write_to_file(&out, (dir / "g.png").c_str(), 0, bytes.data(), 0, nullptr));
    auto g = read_slice_image(dir / "g.png");
    CHECK(g.dtype == DType::U8);
    CHECK(g.values == std::vector<std::uint16_t>{0, 17, 255, 128});

    auto v = load_slices(dir.path(), "w.pgm", {1, 1, 2, 2});
    CHECK(v.dtype() == DType::U16);
    CHECK(v.at(0, 0, 1, 0) == 65535);
}

TEST_CASE("volume round trip, both dtypes") {
    Gen g(42);
    TempDir dir;
    for (int i = 0; i < 40; ++i) {
        const auto d = i % 2 ? DType::U16 : DType::U8;
        auto v = random_volume(g, d);
        write_volume(v, dir / "v.spfv");
        auto r = read_volume(dir / "v.spfv");
        CHECK(r == v);
    }
}

TEST_CASE("volume header is little-endian and byte exact") {
    TempDir dir;
    Volume4D v({1, 1, 1, 2}, DType::U16);
    v.set(0, 0, 0, 1, 0x0102);
    write_volume(v, dir / "v.spfv");
    const auto s = spf::testing::slurp(dir / "v.spfv");
    REQUIRE(s.size() == 28 + 4);
    CHECK(s.substr(0, 4) == "SPFV");
    CHECK(s[4] == 1);
    CHECK(s[24] == 2);
    CHECK(static_cast<unsigned char>(s[30]) == 0x02);
    CHECK(static_cast<unsigned char>(s[31]) == 0x01);
}

TEST_CASE("read_volume errors") {
    TempDir dir;
    Volume4D v({1, 1, 10, 10}, DType::U8);
    write_volume(v, dir / "ok.spfv");
    auto bytes = spf::testing::slurp(dir / "ok.spfv");

    auto bad = bytes;
    bad.replace(0, 4, "XXXX");
    spf::testing::spit(dir / "magic.spfv", bad);
    CHECK_THROWS_WITH_AS(read_volume(dir / "magic.spfv"), doctest::Contains("bad magic"), DataError);

    auto ver = bytes;
    ver[4] = 9;
    spf::testing::spit(dir / "ver.spfv", ver);
    CHECK_THROWS_WITH_AS(read_volume(dir / "ver.spfv"), doctest::Contains("version"), DataError);

    // header declares 100 voxels, payload carries 50
    spf::testing::spit(dir / "short.spfv", bytes.substr(0, 28 + 50));
    CHECK_THROWS_WITH_AS(read_volume(dir / "short.spfv"),
                         doctest::Contains("expected 100 bytes, found 50"), DataError);
}

TEST_CASE("subtract_background") {
    Volume4D v({1, 3, 1, 4}, DType::U8);
    for (int x = 0; x < 4; ++x) v.set(0, 0, 0, x, 7);
    v.set(0, 1, 0, 3, 8);
    auto r = subtract_background(v);
    for (int x = 0; x < 4; ++x) {
        CHECK(r.at(0, 0, 0, x) == 0);
        CHECK(r.at(0, 2, 0, x) == 0);
    }
    CHECK(r.at(0, 1, 0, 0) == 0);
    CHECK(r.at(0, 1, 0, 3) == 6);
}

TEST_CASE("subtract_background property: clamped and never brighter") {
    Gen g(7);
    for (int i = 0; i < 30; ++i) {
        auto v = random_volume(g, i % 2 ? DType::U16 : DType::U8);
        auto r = subtract_background(v);
        const auto& d = v.dims();
        for (std::size_t t = 0; t < d.t; ++t)
            for (std::size_t z = 0; z < d.z; ++z) {
                std::uint16_t lo = 65535;
                for (std::size_t y = 0; y < d.y; ++y)
                    for (std::size_t x = 0; x < d.x; ++x) {
                        CHECK(r.at(t, z, y, x) <= v.at(t, z, y, x));
                        lo = std::min(lo, r.at(t, z, y, x));
                    }
                CHECK(lo == 0);
            }
    }
}

TEST_CASE("median_filter examples") {
    Image3D impulse(1, 5, 5, DType::U8);
    impulse.at(0, 2, 2) = 200;
    auto r = median_filter(impulse, {3, 3, 1});
    CHECK(std::all_of(r.values.begin(), r.values.end(), [](auto v) { return v == 0; }));

    Image3D flat(2, 4, 4, DType::U8);
    std::fill(flat.values.begin(), flat.values.end(), 9);
    CHECK(median_filter(flat, {3, 3, 3}).values == flat.values);

    CHECK_THROWS_AS(median_filter(flat, {2, 3, 1}), std::invalid_argument);
    Volume4D v({1, 1, 3, 3}, DType::U8);
    CHECK_THROWS_AS(median_filter(v, {3, 3, 0}), std::invalid_argument);
}

TEST_CASE("median_filter matches the sorting oracle") {
    Gen g(11);
    for (int i = 0; i < 50; ++i) {
        auto img = random_image(g, static_cast<std::size_t>(g.integer(1, 3)), 5, 5, 255);
        const std::array<long, 3> w{2 * g.integer(0, 2) + 1, 2 * g.integer(0, 2) + 1, 2 * g.integer(0, 1) + 1};
        auto got = median_filter(img, w);
        CHECK(got.values == oracle::median(img, w[0], w[1], w[2]).values);
        // range preserving: every output value occurs in the input
        for (auto v : got.values) CHECK(std::find(img.values.begin(), img.values.end(), v) != img.values.end());
    }
}

TEST_CASE("median_filter on a volume filters frames independently") {
    Gen g(5);
    Volume4D v({3, 2, 5, 5}, DType::U8);
    for (std::size_t t = 0; t < 3; ++t) v.set_frame(t, random_image(g, 2, 5, 5, 255));
    auto r = median_filter(v, {3, 3, 1});
    for (std::size_t t = 0; t < 3; ++t) CHECK(r.frame(t).values == oracle::median(v.frame(t), 3, 3, 1).values);
}

TEST_CASE("extract_subimage") {
    Volume4D v({2, 4, 5, 6}, DType::U16);
    for (std::size_t t = 0; t < 2; ++t)
        for (std::size_t z = 0; z < 4; ++z)
            for (std::size_t y = 0; y < 5; ++y)
                for (std::size_t x = 0; x < 6; ++x)
                    v.set(t, z, y, x, static_cast<std::uint16_t>(1 + 1000 * t + 100 * z + 10 * y + x));

    auto one = extract_subimage(v, 1, {2, 3, 1}, {0, 0, 0});
    REQUIRE(one.size() == 1);
    CHECK(one.values[0] == 1 + 1000 + 100 + 30 + 2);

    auto corner = extract_subimage(v, 0, {0, 0, 0}, {1, 1, 1});
    REQUIRE(corner.size() == 27);
    CHECK(std::count(corner.values.begin(), corner.values.end(), 0) == 19);

    // interior gather against direct indexing
    const std::array<long, 3> w{2, 1, 1};
    auto sub = extract_subimage(v, 1, {3, 2, 2}, w);
    std::size_t i = 0;
    for (long dz = -1; dz <= 1; ++dz)
        for (long dy = -1; dy <= 1; ++dy)
            for (long dx = -2; dx <= 2; ++dx, ++i)
                CHECK(sub.values[i] == v.at(1, 2 + dz, 2 + dy, 3 + dx));

    CHECK_THROWS_AS(extract_subimage(v, 2, {0, 0, 0}, {1, 1, 1}), std::out_of_range);
}

TEST_CASE("extract_subimage is translation invariant on a periodic volume") {
    Volume4D v({1, 3, 12, 12}, DType::U8);
    for (std::size_t z = 0; z < 3; ++z)
        for (std::size_t y = 0; y < 12; ++y)
            for (std::size_t x = 0; x < 12; ++x) v.set(0, z, y, x, static_cast<std::uint16_t>(10 * z + (x + 2 * y) % 4));
    // shifting by 4 in x or 2 in y leaves the pattern unchanged
    auto a = extract_subimage(v, 0, {4, 4, 1}, {2, 2, 1});
    auto b = extract_subimage(v, 0, {8, 6, 1}, {2, 2, 1});
    CHECK(a.values == b.values);
}
