#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "bca/error.hpp"
#include "bca/volume.hpp"
#include "helpers.hpp"

using namespace bca;

namespace {

LabelVolume tiny_volume() {
    LabelVolume v;
    v.dims = {2, 2, 2};
    v.spacing_mm = {1, 1, 1};
    v.legend = {{0, "background"}, {1, "SAT"}};
    v.voxels = {0, 1, 0, 1, 1, 0, 0, 1};
    return v;
}

}  // namespace

TEST_CASE("lvol save and load round-trips voxels bitwise") {
    auto dir = testutil::fresh_dir("volgrid");
    const LabelVolume v = tiny_volume();
    save_label_volume(v, (dir / "t.lvol").string());
    const LabelVolume r = load_label_volume((dir / "t.lvol").string());
    CHECK(r.dims == v.dims);
    CHECK(r.voxels == v.voxels);
    CHECK(r.legend == v.legend);
    CHECK(r.spacing_mm == v.spacing_mm);
}

TEST_CASE("payload size mismatch is a format error") {
    auto dir = testutil::fresh_dir("volgrid_bad");
    const LabelVolume v = tiny_volume();
    save_label_volume(v, (dir / "t.lvol").string());
    // Truncate the payload to 7 bytes.
    std::filesystem::resize_file(dir / "t.lvol.raw", 7);
    CHECK_THROWS_WITH_AS(load_label_volume((dir / "t.lvol").string()),
                         doctest::Contains("expected 8"), Error);
}

TEST_CASE("voxel class missing from legend is a format error") {
    auto dir = testutil::fresh_dir("volgrid_legend");
    LabelVolume v = tiny_volume();
    save_label_volume(v, (dir / "t.lvol").string());
    std::ofstream raw(dir / "t.lvol.raw", std::ios::binary | std::ios::trunc);
    const char bytes[8] = {0, 1, 0, 1, 1, 0, 0, 9};
    raw.write(bytes, 8);
    raw.close();
    CHECK_THROWS_WITH_AS(load_label_volume((dir / "t.lvol").string()),
                         doctest::Contains("class 9"), Error);
}

TEST_CASE("body mask marks exactly the nonzero voxels") {
    LabelVolume v = tiny_volume();
    v.voxels = {0, 0, 0, 0, 0, 0, 0, 0};
    auto m = body_mask(v);
    for (auto b : m.bits) CHECK(b == 0);

    v.legend[3] = "MUSCLE";
    v.voxels[5] = 3;
    m = body_mask(v);
    for (std::size_t i = 0; i < m.bits.size(); ++i) CHECK(m.bits[i] == (i == 5 ? 1 : 0));
}

TEST_CASE("body mask popcount equals nonzero voxel count") {
    const LabelVolume v = testutil::random_label_volume(99, 12, 10, 8);
    const BinaryMask m = body_mask(v);
    std::size_t pop = 0, nonzero = 0;
    for (auto b : m.bits) pop += b;
    for (auto c : v.voxels) nonzero += c > 0 ? 1 : 0;
    CHECK(pop == nonzero);
}

TEST_CASE("cavity fill closes an enclosed ring") {
    BinaryMask m;
    m.dims = {5, 5, 1};
    m.spacing_mm = {1, 1, 1};
    m.height_axis = 2;
    m.bits.assign(25, 0);
    for (int y = 1; y <= 3; ++y)
        for (int x = 1; x <= 3; ++x) m.bits[m.index(x, y, 0)] = 1;
    m.bits[m.index(2, 2, 0)] = 0;  // enclosed cavity
    const BinaryMask f = fill_cavities(m);
    CHECK(f.bits[f.index(2, 2, 0)] == 1);
    // Border background stays open.
    CHECK(f.bits[f.index(0, 0, 0)] == 0);
}

TEST_CASE("cavity fill is identity on masks without enclosed background") {
    const BinaryMask m = testutil::sphere_mask(6.0, 1.0);
    const BinaryMask f = fill_cavities(m);
    CHECK(f.bits == m.bits);
}

TEST_CASE("cavity fill matches the flood oracle, is monotone and idempotent") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull}) {
        const BinaryMask m = testutil::random_mask(seed, 14, 11, 5, 0.45);
        const BinaryMask f = fill_cavities(m);
        const BinaryMask oracle = testutil::fill_oracle(m);
        CHECK(f.bits == oracle.bits);
        for (std::size_t i = 0; i < m.bits.size(); ++i)
            if (m.bits[i]) CHECK(f.bits[i] == 1);
        const BinaryMask ff = fill_cavities(f);
        CHECK(ff.bits == f.bits);
    }
}

TEST_CASE("cavity fill respects the header height axis") {
    // A tube along x: enclosed in y-z slices only if the height axis is x.
    BinaryMask m;
    m.dims = {3, 5, 5};
    m.spacing_mm = {1, 1, 1};
    m.height_axis = 0;
    m.bits.assign(m.voxel_count(), 0);
    for (int x = 0; x < 3; ++x) {
        for (int y = 1; y <= 3; ++y)
            for (int z = 1; z <= 3; ++z) m.bits[m.index(x, y, z)] = 1;
        m.bits[m.index(x, 2, 2)] = 0;
    }
    const BinaryMask f = fill_cavities(m);
    for (int x = 0; x < 3; ++x) CHECK(f.bits[f.index(x, 2, 2)] == 1);
}

TEST_CASE("tissue volumes from constructed volumes") {
    LabelVolume v;
    v.dims = {10, 10, 10};
    v.spacing_mm = {1, 1, 1};
    v.legend = {{0, "background"}, {1, "SAT"}};
    v.voxels.assign(1000, 0);
    for (int i = 0; i < 250; ++i) v.voxels[i * 3] = 1;
    auto vols = tissue_volumes(v);
    CHECK(vols.at("SAT") == doctest::Approx(0.00025).epsilon(1e-12));

    LabelVolume one;
    one.dims = {1, 1, 1};
    one.spacing_mm = {2, 2, 2};
    one.legend = {{0, "background"}, {5, "LEAN"}};
    one.voxels = {5};
    CHECK(tissue_volumes(one).at("LEAN") == doctest::Approx(8e-6).epsilon(1e-12));
}

TEST_CASE("tissue volumes equal the histogram oracle exactly") {
    const LabelVolume v = testutil::random_label_volume(123, 17, 9, 11);
    const auto got = tissue_volumes(v);
    std::array<std::uint64_t, 256> counts{};
    for (auto c : v.voxels) ++counts[c];
    const double lpv = v.spacing_mm.x * v.spacing_mm.y * v.spacing_mm.z * 1e-6;
    for (const auto& [id, name] : v.legend) {
        if (id == 0) continue;
        CHECK(got.at(name) == static_cast<double>(counts[id]) * lpv);  // bitwise
    }
    // Class partition: labeled plus background counts cover every voxel.
    std::uint64_t labeled = 0;
    for (int c = 1; c < 256; ++c) labeled += counts[c];
    CHECK(labeled + counts[0] == v.voxel_count());
}

TEST_CASE("signed field maps bits to 0/1") {
    BinaryMask m;
    m.dims = {2, 2, 1};
    m.spacing_mm = {1, 1, 1};
    m.bits = {1, 0, 0, 1};
    const ScalarGrid g = sample_signed_field(m);
    CHECK(g.values == std::vector<float>{1.0f, 0.0f, 0.0f, 1.0f});
}
