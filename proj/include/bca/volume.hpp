#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "bca/vec3.hpp"

namespace bca {

// Voxel grid of tissue-class labels. Payload ordering is x-fastest, then y,
// then z; class id 0 is always "background".
struct LabelVolume {
    std::array<int, 3> dims{0, 0, 0};
    Vec3 spacing_mm{1.0, 1.0, 1.0};
    Vec3 origin_mm{0.0, 0.0, 0.0};
    int height_axis = 2;
    std::vector<std::uint8_t> voxels;
    std::map<std::uint8_t, std::string> legend;  // includes 0 -> "background"

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    }
    std::size_t index(int x, int y, int z) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(dims[0]) *
                   (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims[1]) * z);
    }
    double voxel_volume_mm3() const { return spacing_mm.x * spacing_mm.y * spacing_mm.z; }
};

struct BinaryMask {
    std::array<int, 3> dims{0, 0, 0};
    Vec3 spacing_mm{1.0, 1.0, 1.0};
    Vec3 origin_mm{0.0, 0.0, 0.0};
    int height_axis = 2;
    std::vector<std::uint8_t> bits;  // 0 or 1 per voxel, x-fastest

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    }
    std::size_t index(int x, int y, int z) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(dims[0]) *
                   (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims[1]) * z);
    }
};

// Scalar field on the same lattice; adapter between masks and isosurfacing.
struct ScalarGrid {
    std::array<int, 3> dims{0, 0, 0};
    Vec3 spacing_mm{1.0, 1.0, 1.0};
    Vec3 origin_mm{0.0, 0.0, 0.0};
    std::vector<float> values;

    std::size_t index(int x, int y, int z) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(dims[0]) *
                   (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims[1]) * z);
    }
};

// Intensity volume from one scanner panel; float payload, `panel` field in
// the header. Depth runs along axis 1 (the AP direction).
struct IntensityVolume {
    std::array<int, 3> dims{0, 0, 0};
    Vec3 spacing_mm{1.9, 5.5, 1.9};
    Vec3 origin_mm{0.0, 0.0, 0.0};
    int height_axis = 2;
    std::string panel = "front";  // "front" or "back"
    std::vector<float> intensities;

    std::size_t index(int x, int y, int z) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(dims[0]) *
                   (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims[1]) * z);
    }
};

// Throws Error("format") on inconsistent header/payload.
void validate(const LabelVolume& v);

// .lvol two-file pair: JSON header + raw little-endian payload. `path` may be
// the base ("body.lvol"), the header, or the raw file; the pair is derived.
LabelVolume load_label_volume(const std::string& path);
void save_label_volume(const LabelVolume& v, const std::string& path);

IntensityVolume load_intensity_volume(const std::string& path);
void save_intensity_volume(const IntensityVolume& v, const std::string& path);

// Bit set exactly where the label is nonzero.
BinaryMask body_mask(const LabelVolume& v);

// Per constant-height slice, background regions not 4-connected to the slice
// border become body. Monotone and idempotent.
BinaryMask fill_cavities(const BinaryMask& m);

// Liters per nonzero class; background excluded.
std::map<std::string, double> tissue_volumes(const LabelVolume& v);

// true -> 1.0, false -> 0.0 on the same lattice.
ScalarGrid sample_signed_field(const BinaryMask& m);

namespace ref {
// Serial references for the parallel kernels above; kept for testing and for
// the benchmark target.
BinaryMask body_mask(const LabelVolume& v);
BinaryMask fill_cavities(const BinaryMask& m);
std::map<std::string, double> tissue_volumes(const LabelVolume& v);
}  // namespace ref

}  // namespace bca
