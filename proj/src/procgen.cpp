#include "bca/procgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "bca/error.hpp"
#include "bca/rng.hpp"

namespace bca {

namespace {

constexpr double kDeg = 3.14159265358979323846 / 180.0;

// Shrinking a part keeps at least 20% of each semi-axis so shells stay
// nested even on thin limbs.
Vec3 shrunk_semi(const Vec3& semi, double t) {
    return {std::max(semi.x - t, 0.2 * semi.x), std::max(semi.y - t, 0.2 * semi.y),
            std::max(semi.z - t, 0.2 * semi.z)};
}

struct PartRegion {
    Vec3 center;
    Vec3 semi;
    double exponent;
    double cos_t, sin_t;  // tilt about y
    Vec3 bb_lo, bb_hi;

    PartRegion(const BodyPart& p, double t_shrink) {
        center = p.center_mm;
        semi = shrunk_semi(p.semi_axes_mm, t_shrink);
        exponent = p.exponent;
        const double a = p.tilt_y_deg * kDeg;
        cos_t = std::cos(a);
        sin_t = std::sin(a);
        // Conservative bbox of the tilted part: |R| applied to the half extents.
        const double hx = std::abs(cos_t) * semi.x + std::abs(sin_t) * semi.z;
        const double hz = std::abs(sin_t) * semi.x + std::abs(cos_t) * semi.z;
        bb_lo = center - Vec3{hx, semi.y, hz};
        bb_hi = center + Vec3{hx, semi.y, hz};
    }

    // Elliptical cross-section, exponent-shaped vertical profile:
    // ((x/a)^2 + (y/b)^2)^(p/2) + |z/c|^p <= 1.
    bool contains(const Vec3& p) const {
        Vec3 d = p - center;
        // Inverse tilt about y.
        const double qx = cos_t * d.x - sin_t * d.z;
        const double qz = sin_t * d.x + cos_t * d.z;
        const double ux = qx / semi.x, uy = d.y / semi.y, uz = qz / semi.z;
        const double u2 = ux * ux + uy * uy;
        const double w2 = uz * uz;
        if (u2 > 1.0 || w2 > 1.0) return false;
        if (u2 + w2 <= 1.0) return true;  // inscribed ellipsoid, any exponent >= 2
        if (exponent == 2.0) return false;
        const double hp = 0.5 * exponent;
        return std::pow(u2, hp) + std::pow(w2, hp) <= 1.0;
    }
};

void paint_region(const PartRegion& r, std::uint8_t inner_label, std::uint8_t outer_label,
                  const PartRegion* inner, LabelVolume& vol, int z0, int z1) {
    const Vec3 org = vol.origin_mm, sp = vol.spacing_mm;
    auto clamp_lo = [&](double w, double o, double s, int n) {
        int i = static_cast<int>(std::floor((w - o) / s));
        return std::clamp(i, 0, n - 1);
    };
    auto clamp_hi = [&](double w, double o, double s, int n) {
        int i = static_cast<int>(std::ceil((w - o) / s));
        return std::clamp(i, 0, n - 1);
    };
    const int x0 = clamp_lo(r.bb_lo.x, org.x, sp.x, vol.dims[0]);
    const int x1 = clamp_hi(r.bb_hi.x, org.x, sp.x, vol.dims[0]);
    const int y0 = clamp_lo(r.bb_lo.y, org.y, sp.y, vol.dims[1]);
    const int y1 = clamp_hi(r.bb_hi.y, org.y, sp.y, vol.dims[1]);
    const int zlo = std::max(z0, clamp_lo(r.bb_lo.z, org.z, sp.z, vol.dims[2]));
    const int zhi = std::min(z1 - 1, clamp_hi(r.bb_hi.z, org.z, sp.z, vol.dims[2]));

    // Priority encoding: VAT > MUSCLE > SAT > LEAN > background.
    static constexpr std::uint8_t prio[5] = {0, 2, 4, 3, 1};  // by class id
    for (int z = zlo; z <= zhi; ++z) {
        const double wz = org.z + z * sp.z;
        for (int y = y0; y <= y1; ++y) {
            const double wy = org.y + y * sp.y;
            for (int x = x0; x <= x1; ++x) {
                const Vec3 w{org.x + x * sp.x, wy, wz};
                if (!r.contains(w)) continue;
                std::uint8_t label = outer_label;
                if (inner && inner->contains(w)) label = inner_label;
                auto& cell = vol.voxels[vol.index(x, y, z)];
                if (prio[label] > prio[cell]) cell = label;
            }
        }
    }
}

LabelVolume rasterize_impl(const BodySpec& spec, double spacing_mm, bool parallel) {
    if (!(spacing_mm > 0.0)) throw Error::invalid("spacing must be positive");
    validate(spec);

    std::vector<PartRegion> outer;
    std::vector<PartRegion> muscle;  // aligned with shelled parts
    std::vector<int> muscle_of(spec.parts.size(), -1);
    for (std::size_t i = 0; i < spec.parts.size(); ++i) {
        outer.emplace_back(spec.parts[i], 0.0);
        if (spec.parts[i].shelled) {
            muscle_of[i] = static_cast<int>(muscle.size());
            muscle.emplace_back(spec.parts[i], spec.sat_mm);
        }
    }

    Vec3 lo{1e30, 1e30, 1e30}, hi{-1e30, -1e30, -1e30};
    for (const auto& r : outer) {
        for (int k = 0; k < 3; ++k) {
            lo[k] = std::min(lo[k], r.bb_lo[k]);
            hi[k] = std::max(hi[k], r.bb_hi[k]);
        }
    }

    LabelVolume vol;
    vol.spacing_mm = {spacing_mm, spacing_mm, spacing_mm};
    const int margin = 2;
    for (int k = 0; k < 3; ++k) {
        vol.origin_mm[k] = lo[k] - margin * spacing_mm;
        vol.dims[k] = static_cast<int>(std::ceil((hi[k] - lo[k]) / spacing_mm)) + 2 * margin + 1;
    }
    vol.height_axis = 2;
    vol.voxels.assign(vol.voxel_count(), 0);
    vol.legend = {{0, "background"},
                  {kClassSat, "SAT"},
                  {kClassVat, "VAT"},
                  {kClassMuscle, "MUSCLE"},
                  {kClassLean, "LEAN"}};

    const bool has_vat = norm(spec.vat.semi_axes_mm) > 0.0;
    BodyPart vat_part{"vat", spec.vat.center_mm, spec.vat.semi_axes_mm, 2.0, 0.0, false};
    PartRegion vat_region(vat_part, 0.0);

    const int nz = vol.dims[2];
    const int slab = 8;
    const int nslabs = (nz + slab - 1) / slab;
#pragma omp parallel for schedule(dynamic) if (parallel)
    for (int s = 0; s < nslabs; ++s) {
        const int z0 = s * slab, z1 = std::min(z0 + slab, nz);
        for (std::size_t i = 0; i < spec.parts.size(); ++i) {
            const auto& part = spec.parts[i];
            if (part.shelled) {
                paint_region(outer[i], kClassMuscle, kClassSat, &muscle[muscle_of[i]], vol, z0, z1);
            } else {
                paint_region(outer[i], 0, kClassLean, nullptr, vol, z0, z1);
            }
        }
        if (has_vat) paint_region(vat_region, 0, kClassVat, nullptr, vol, z0, z1);
    }
    return vol;
}

}  // namespace

void validate(const BodySpec& spec) {
    if (spec.parts.empty()) throw Error::invalid("body spec has no parts");
    if (!(spec.height_mm > 0.0)) throw Error::invalid("height must be positive");
    if (spec.sat_mm < 0.0 || spec.muscle_mm < 0.0)
        throw Error::invalid("shell thicknesses must be non-negative");
    for (const auto& p : spec.parts) {
        if (!(p.semi_axes_mm.x > 0.0 && p.semi_axes_mm.y > 0.0 && p.semi_axes_mm.z > 0.0))
            throw Error::invalid("part " + p.name + " has non-positive semi-axes");
        if (p.exponent < 2.0) throw Error::invalid("part " + p.name + " exponent must be >= 2");
    }
    if (norm(spec.vat.semi_axes_mm) > 0.0) {
        // Sufficient containment condition against the torso muscle core.
        const BodyPart* torso = nullptr;
        for (const auto& p : spec.parts)
            if (p.name == "torso") torso = &p;
        if (!torso) throw Error::invalid("VAT blob requires a torso part");
        const Vec3 core = shrunk_semi(torso->semi_axes_mm, spec.sat_mm + spec.muscle_mm);
        const Vec3 off = spec.vat.center_mm - torso->center_mm;
        double q = 0.0;
        for (int k = 0; k < 3; ++k) {
            const double t = (std::abs(off[k]) + spec.vat.semi_axes_mm[k]) / core[k];
            q += t * t;
        }
        if (q >= 1.0) throw Error::invalid("VAT blob is not strictly inside the torso core");
    }
}

BodySpec sample_body(std::uint64_t seed, const ProcgenRanges& ranges) {
    if (!(ranges.height_mm[1] >= ranges.height_mm[0]) || !(ranges.height_mm[0] > 0.0))
        throw Error::invalid("degenerate height range");

    for (int attempt = 0; attempt < std::max(1, ranges.max_retries); ++attempt) {
        Rng rng = substream(seed, {0xB0D7, static_cast<std::uint64_t>(attempt)});
        BodySpec s;
        s.seed = seed;
        const double H = rng.uniform(ranges.height_mm[0], ranges.height_mm[1]);
        s.height_mm = H;
        const double adiposity = rng.uniform01();
        const double muscularity = rng.uniform01();
        s.arm_abduction_deg = rng.uniform(ranges.arm_abduction_deg[0], ranges.arm_abduction_deg[1]);
        s.sat_mm = std::max(2.0, ranges.sat_base_mm[0] +
                                     adiposity * (ranges.sat_base_mm[1] - ranges.sat_base_mm[0]) +
                                     rng.uniform(-1.5, 1.5));
        s.muscle_mm =
            std::max(6.0, ranges.muscle_base_mm[0] +
                              muscularity * (ranges.muscle_base_mm[1] - ranges.muscle_base_mm[0]) +
                              rng.uniform(-2.0, 2.0));

        // Head (lean filler), top exactly at H.
        const double rh = rng.uniform(0.060, 0.072) * H;
        s.parts.push_back({"head", {0, 0, H - rh}, {0.80 * rh, 0.90 * rh, rh}, 2.0, 0.0, false});

        // Torso.
        const double torso_a = (0.100 + 0.030 * adiposity + rng.uniform(-0.008, 0.008)) * H;
        const double torso_b = torso_a * (0.55 + 0.18 * adiposity + rng.uniform(-0.04, 0.04));
        const double torso_c = 0.135 * H;
        const double torso_z = 0.685 * H;
        const double torso_p = rng.uniform(ranges.torso_exponent[0], ranges.torso_exponent[1]);
        s.parts.push_back({"torso", {0, 0, torso_z}, {torso_a, torso_b, torso_c}, torso_p, 0.0, true});

        // Pelvis.
        const double pel_a = (0.092 + 0.026 * adiposity + rng.uniform(-0.006, 0.006)) * H;
        const double pel_b = pel_a * (0.62 + 0.10 * adiposity + rng.uniform(-0.03, 0.03));
        s.parts.push_back(
            {"pelvis", {0, 0, 0.53 * H}, {pel_a, pel_b, 0.07 * H}, rng.uniform(2.0, 3.0), 0.0, true});

        // Legs.
        const double leg_r = (0.040 + 0.013 * adiposity + rng.uniform(-0.003, 0.003)) * H;
        const double leg_c = 0.25 * H;
        const double leg_p = rng.uniform(2.2, 3.0);
        const double leg_x = 0.052 * H;
        s.parts.push_back({"leg_l", {leg_x, 0, leg_c}, {leg_r, leg_r, leg_c}, leg_p, 0.0, true});
        s.parts.push_back({"leg_r", {-leg_x, 0, leg_c}, {leg_r, leg_r, leg_c}, leg_p, 0.0, true});

        // Arms, abducted outward about the AP axis from shoulder pivots.
        const double arm_r = (0.019 + 0.006 * adiposity + rng.uniform(-0.002, 0.002)) * H;
        const double arm_c = 0.155 * H;
        const double tilt = s.arm_abduction_deg;
        for (int side = 0; side < 2; ++side) {
            const double sgn = side == 0 ? 1.0 : -1.0;
            const Vec3 pivot{sgn * (torso_a * 0.96 + arm_r * 0.6), 0.0, 0.78 * H};
            const double tilt_deg = -sgn * tilt;  // rotate lower tip outward
            const Vec3 offset = rotate_y(Vec3{0, 0, -(arm_c + 0.01 * H)}, tilt_deg * kDeg);
            s.parts.push_back({side == 0 ? "arm_l" : "arm_r", pivot + offset,
                               {arm_r, arm_r, arm_c}, rng.uniform(2.0, 2.8), tilt_deg, true});
        }

        // VAT blob inside the torso muscle core, scaled with adiposity. With
        // the default scale range the containment margin stays below 0.9.
        const Vec3 core = shrunk_semi({torso_a, torso_b, torso_c}, s.sat_mm + s.muscle_mm);
        const double vs = ranges.vat_scale[0] +
                          adiposity * (ranges.vat_scale[1] - ranges.vat_scale[0]) +
                          rng.uniform(-0.05, 0.05);
        s.vat.semi_axes_mm = {core.x * vs * 0.70, core.y * vs * 0.75, core.z * vs * 0.50};
        s.vat.center_mm = {0.0, rng.uniform(-0.03, 0.03) * core.y,
                           torso_z + rng.uniform(-0.25, -0.05) * core.z};

        try {
            validate(s);
            return s;
        } catch (const Error&) {
            continue;  // resample
        }
    }
    throw Error::invalid("sample_body retry budget exhausted");
}

LabelVolume rasterize(const BodySpec& spec, double spacing_mm) {
    return rasterize_impl(spec, spacing_mm, true);
}

namespace ref {
LabelVolume rasterize(const BodySpec& spec, double spacing_mm) {
    return rasterize_impl(spec, spacing_mm, false);
}
}  // namespace ref

BodyArtifacts synthesize(const BodySpec& spec, double spacing_mm) {
    BodyArtifacts out;
    out.volume = rasterize(spec, spacing_mm);

    auto vols = tissue_volumes(out.volume);
    auto get = [&](const char* k) {
        auto it = vols.find(k);
        return it == vols.end() ? 0.0 : it->second;
    };
    GroundTruth& gt = out.truth;
    gt.sat_l = get("SAT");
    gt.vat_l = get("VAT");
    gt.imvat_l = gt.vat_l;  // no separate intramuscular component
    gt.mv_l = get("MUSCLE");
    gt.lt_l = get("LEAN");
    gt.body_l = gt.sat_l + gt.vat_l + gt.mv_l + gt.lt_l;
    gt.height_cm = spec.height_mm / 10.0;

    BinaryMask mask = fill_cavities(body_mask(out.volume));
    out.mesh = laplacian_smooth(marching_cubes(mask, 0.5), 0.5, 10);
    const Circumferences c = measure_circumferences(out.mesh, kDefaultKeypoints);
    gt.chest_cm = c.chest_cm;
    gt.waist_cm = c.waist_cm;
    gt.hip_cm = c.hip_cm;
    gt.present.fill(true);
    return out;
}

GroundTruth ground_truth(const BodySpec& spec, double spacing_mm) {
    return synthesize(spec, spacing_mm).truth;
}

ProcgenRanges load_procgen_ranges(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error::io("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw Error::format(path + ": " + e.what());
    }
    ProcgenRanges r;
    auto pair = [&](const char* key, std::array<double, 2>& out) {
        if (!j.contains(key)) return;
        out[0] = j.at(key).at(0).get<double>();
        out[1] = j.at(key).at(1).get<double>();
        if (!(out[1] >= out[0])) throw Error::format(path + ": range " + key + " is inverted");
    };
    try {
        pair("height_mm", r.height_mm);
        pair("arm_abduction_deg", r.arm_abduction_deg);
        pair("torso_exponent", r.torso_exponent);
        pair("sat_base_mm", r.sat_base_mm);
        pair("muscle_base_mm", r.muscle_base_mm);
        pair("vat_scale", r.vat_scale);
        if (j.contains("max_retries")) r.max_retries = j.at("max_retries").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw Error::format(path + ": " + e.what());
    }
    return r;
}

}  // namespace bca
