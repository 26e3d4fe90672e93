#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "bca/anthro.hpp"
#include "bca/mesh.hpp"
#include "bca/vec3.hpp"
#include "bca/volume.hpp"

namespace bca {

// One superellipsoid body segment with an elliptical cross-section and an
// exponent-shaped vertical profile: ((x/a)^2 + (y/b)^2)^(p/2) + |z/c|^p <= 1
// in the part frame. `tilt_y_deg` rotates the part about the AP (y) axis,
// which is how arm abduction is posed. Shelled parts carry SAT and muscle
// layers; unshelled parts (the head) fill with lean tissue.
struct BodyPart {
    std::string name;
    Vec3 center_mm;
    Vec3 semi_axes_mm;
    double exponent = 2.0;
    double tilt_y_deg = 0.0;
    bool shelled = true;
};

// Visceral fat ellipsoid, kept strictly inside the torso muscle core.
struct VatBlob {
    Vec3 center_mm{0, 0, 0};
    Vec3 semi_axes_mm{0, 0, 0};  // all-zero means absent
};

struct BodySpec {
    std::uint64_t seed = 0;
    double height_mm = 1700.0;
    double sat_mm = 10.0;     // SAT shell thickness
    double muscle_mm = 25.0;  // muscle shell thickness
    double arm_abduction_deg = 18.0;
    std::vector<BodyPart> parts;
    VatBlob vat;
};

struct GroundTruth {
    double height_cm = 0.0;
    double chest_cm = 0.0, waist_cm = 0.0, hip_cm = 0.0;
    double sat_l = 0.0, imvat_l = 0.0, vat_l = 0.0, body_l = 0.0, lt_l = 0.0, mv_l = 0.0;
    std::array<bool, 10> present{};  // canonical target order

    std::array<double, 10> values() const {
        return {height_cm, chest_cm, waist_cm, hip_cm, sat_l, imvat_l, vat_l, body_l, lt_l, mv_l};
    }
};

// Sampling ranges for the body generator; loadable from procgen.json.
struct ProcgenRanges {
    std::array<double, 2> height_mm{1550.0, 1950.0};
    std::array<double, 2> arm_abduction_deg{12.0, 28.0};
    std::array<double, 2> torso_exponent{2.2, 3.2};
    std::array<double, 2> sat_base_mm{5.0, 21.0};     // scaled by adiposity
    std::array<double, 2> muscle_base_mm{14.0, 32.0};  // scaled by muscularity
    std::array<double, 2> vat_scale{0.30, 0.64};       // blob size vs torso core
    int max_retries = 100;
};

ProcgenRanges load_procgen_ranges(const std::string& path);

// Canonical tissue class ids used by the rasterizer.
inline constexpr std::uint8_t kClassSat = 1;
inline constexpr std::uint8_t kClassVat = 2;
inline constexpr std::uint8_t kClassMuscle = 3;
inline constexpr std::uint8_t kClassLean = 4;

// Deterministic in `seed`; resamples until the spec invariants hold, throws
// once the retry budget is exhausted.
BodySpec sample_body(std::uint64_t seed, const ProcgenRanges& ranges);

// Throws Error("invalid_argument") when spec invariants are violated.
void validate(const BodySpec& spec);

// Voxel labels by innermost containing region: VAT blob, then muscle (core +
// muscle shell), then SAT shell, then remaining body as lean.
LabelVolume rasterize(const BodySpec& spec, double spacing_mm);

// Volume, mesh and targets produced by one rasterization pass; the mesh is
// the smoothed 0.5-isosurface of the filled body mask.
struct BodyArtifacts {
    LabelVolume volume;
    TriMesh mesh;
    GroundTruth truth;
};

BodyArtifacts synthesize(const BodySpec& spec, double spacing_mm);

GroundTruth ground_truth(const BodySpec& spec, double spacing_mm);

namespace ref {
LabelVolume rasterize(const BodySpec& spec, double spacing_mm);
}

inline constexpr std::array<const char*, 10> kTargetNames{
    "height_cm", "chest_cm", "waist_cm", "hip_cm", "sat_l",
    "imvat_l",   "vat_l",    "body_l",   "lt_l",   "mv_l"};

}  // namespace bca
