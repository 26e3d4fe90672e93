#include "bca/scan_sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "bca/error.hpp"
#include "bca/rng.hpp"

namespace bca {

namespace {
constexpr double kDeg = 3.14159265358979323846 / 180.0;

// Stream tags for the per-scan substreams.
enum : std::uint64_t { kStreamRot = 1, kStreamJitter = 2, kStreamThresh = 3, kStreamDown = 4 };
}  // namespace

void validate(const ScanConfig& cfg) {
    if (std::abs(norm(cfg.panel_axis) - 1.0) > 1e-9)
        throw Error::invalid("panel_axis must be a unit vector");
    if (cfg.rot_sigma_deg < 0.0 || cfg.rot_clip_deg < 0.0)
        throw Error::invalid("rotation sigma/clip must be non-negative");
    if (cfg.jitter_max_mm < 0.0) throw Error::invalid("jitter_max_mm must be non-negative");
    if (!(cfg.thresh_clip[0] > 0.0 && cfg.thresh_clip[0] <= cfg.thresh_mean &&
          cfg.thresh_mean <= cfg.thresh_clip[1] && cfg.thresh_clip[1] < 1.0))
        throw Error::invalid("threshold clip must satisfy 0 < lo <= mean <= hi < 1");
    if (cfg.thresh_sigma < 0.0) throw Error::invalid("thresh_sigma must be non-negative");
    if (cfg.target_points < 1) throw Error::invalid("target_points must be >= 1");
}

ScanConfig load_scan_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error::io("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw Error::format(path + ": " + e.what());
    }
    ScanConfig cfg;
    try {
        if (j.contains("panel_axis"))
            cfg.panel_axis = {j["panel_axis"].at(0).get<double>(), j["panel_axis"].at(1).get<double>(),
                              j["panel_axis"].at(2).get<double>()};
        if (j.contains("rot_sigma_deg")) cfg.rot_sigma_deg = j["rot_sigma_deg"].get<double>();
        if (j.contains("rot_clip_deg")) cfg.rot_clip_deg = j["rot_clip_deg"].get<double>();
        if (j.contains("jitter_max_mm")) cfg.jitter_max_mm = j["jitter_max_mm"].get<double>();
        if (j.contains("thresh_mean")) cfg.thresh_mean = j["thresh_mean"].get<double>();
        if (j.contains("thresh_sigma")) cfg.thresh_sigma = j["thresh_sigma"].get<double>();
        if (j.contains("thresh_clip"))
            cfg.thresh_clip = {j["thresh_clip"].at(0).get<double>(),
                               j["thresh_clip"].at(1).get<double>()};
        if (j.contains("target_points")) cfg.target_points = j["target_points"].get<std::size_t>();
        if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw Error::format(path + ": " + e.what());
    }
    validate(cfg);
    return cfg;
}

void save_scan_config(const ScanConfig& cfg, const std::string& path) {
    nlohmann::ordered_json j;
    j["panel_axis"] = {cfg.panel_axis.x, cfg.panel_axis.y, cfg.panel_axis.z};
    j["rot_sigma_deg"] = cfg.rot_sigma_deg;
    j["rot_clip_deg"] = cfg.rot_clip_deg;
    j["jitter_max_mm"] = cfg.jitter_max_mm;
    j["thresh_mean"] = cfg.thresh_mean;
    j["thresh_sigma"] = cfg.thresh_sigma;
    j["thresh_clip"] = {cfg.thresh_clip[0], cfg.thresh_clip[1]};
    j["target_points"] = cfg.target_points;
    j["seed"] = cfg.seed;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error::io("cannot open " + path + " for writing");
    out << j.dump(2) << '\n';
}

OrientedPointCloud register_cloud(const OrientedPointCloud& pc) {
    if (pc.empty()) throw Error::invalid("cannot register an empty cloud");
    Vec3 centroid{0, 0, 0};
    double min_z = std::numeric_limits<double>::infinity();
    for (const auto& p : pc.points) {
        centroid += p;
        min_z = std::min(min_z, p.z);
    }
    centroid = centroid / static_cast<double>(pc.size());
    const Vec3 shift{centroid.x, centroid.y, min_z};
    OrientedPointCloud out = pc;
    const std::int64_t n = static_cast<std::int64_t>(pc.size());
#pragma omp parallel for schedule(static) if (n > 65536)
    for (std::int64_t i = 0; i < n; ++i) out.points[i] = pc.points[i] - shift;
    return out;
}

namespace {

OrientedPointCloud augment_impl(const OrientedPointCloud& pc, const ScanConfig& cfg,
                                std::uint64_t seed, bool parallel) {
    validate(cfg);
    Rng rot_rng = substream(seed, {kStreamRot});
    double theta = cfg.rot_sigma_deg > 0.0 ? rot_rng.normal(0.0, cfg.rot_sigma_deg) : 0.0;
    theta = std::clamp(theta, -cfg.rot_clip_deg, cfg.rot_clip_deg);
    const double rad = theta * kDeg;

    OrientedPointCloud out = pc;
    const std::int64_t n = static_cast<std::int64_t>(pc.size());
    const double jmax = cfg.jitter_max_mm;
#pragma omp parallel for schedule(static) if (parallel && n > 8192)
    for (std::int64_t i = 0; i < n; ++i) {
        Vec3 p = rotate_z(pc.points[i], rad);
        if (jmax > 0.0) {
            Rng jr = substream(seed, {kStreamJitter, static_cast<std::uint64_t>(i)});
            p += Vec3{jr.uniform(-jmax, jmax), jr.uniform(-jmax, jmax), jr.uniform(-jmax, jmax)};
        }
        out.points[i] = p;
        out.normals[i] = rotate_z(pc.normals[i], rad);
    }
    return out;
}

OrientedPointCloud filter_impl(const OrientedPointCloud& pc, const Vec3& panel_axis, double tau,
                               bool parallel) {
    if (!(tau > 0.0 && tau < 1.0)) throw Error::invalid("tau must be in (0, 1)");
    const std::int64_t n = static_cast<std::int64_t>(pc.size());
    std::vector<std::uint8_t> keep(pc.size());
#pragma omp parallel for schedule(static) if (parallel && n > 8192)
    for (std::int64_t i = 0; i < n; ++i) {
        const double d = dot(pc.normals[i], panel_axis);
        keep[i] = d * d >= tau ? 1 : 0;
    }
    OrientedPointCloud out;
    const std::size_t kept = std::accumulate(keep.begin(), keep.end(), std::size_t{0});
    out.points.reserve(kept);
    out.normals.reserve(kept);
    const bool tagged = !pc.tags.empty();
    if (tagged) out.tags.reserve(kept);
    for (std::size_t i = 0; i < pc.size(); ++i) {
        if (!keep[i]) continue;
        out.points.push_back(pc.points[i]);
        out.normals.push_back(pc.normals[i]);
        if (tagged) out.tags.push_back(pc.tags[i]);
    }
    return out;
}

}  // namespace

OrientedPointCloud augment(const OrientedPointCloud& pc, const ScanConfig& cfg, std::uint64_t seed) {
    return augment_impl(pc, cfg, seed, true);
}

OrientedPointCloud illumination_filter(const OrientedPointCloud& pc, const Vec3& panel_axis,
                                       double tau) {
    return filter_impl(pc, panel_axis, tau, true);
}

double sample_threshold(const ScanConfig& cfg, std::uint64_t seed) {
    validate(cfg);
    Rng rng = substream(seed, {kStreamThresh});
    const double t = cfg.thresh_sigma > 0.0 ? rng.normal(cfg.thresh_mean, cfg.thresh_sigma)
                                            : cfg.thresh_mean;
    return std::clamp(t, cfg.thresh_clip[0], cfg.thresh_clip[1]);
}

OrientedPointCloud downsample(const OrientedPointCloud& pc, std::size_t n, std::uint64_t seed) {
    if (n < 1) throw Error::invalid("downsample target must be >= 1");
    if (pc.size() <= n) return pc;
    std::vector<std::uint32_t> idx(pc.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng = substream(seed, {kStreamDown});
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(idx.size() - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(n);
    std::sort(idx.begin(), idx.end());  // keep input order in the output
    OrientedPointCloud out;
    out.points.reserve(n);
    out.normals.reserve(n);
    const bool tagged = !pc.tags.empty();
    if (tagged) out.tags.reserve(n);
    for (std::uint32_t i : idx) {
        out.points.push_back(pc.points[i]);
        out.normals.push_back(pc.normals[i]);
        if (tagged) out.tags.push_back(pc.tags[i]);
    }
    return out;
}

OrientedPointCloud simulate_scan(const OrientedPointCloud& pc, const ScanConfig& cfg,
                                 std::uint64_t seed) {
    validate(cfg);
    OrientedPointCloud cur = register_cloud(pc);
    cur = augment(cur, cfg, seed);
    const double tau = sample_threshold(cfg, seed);
    cur = illumination_filter(cur, cfg.panel_axis, tau);
    return downsample(cur, cfg.target_points, seed);
}

OrientedPointCloud extract_from_intensity(const IntensityVolume& vol, double min_intensity) {
    OrientedPointCloud out;
    const int nx = vol.dims[0], nd = vol.dims[1], nz = vol.dims[2];
    const Vec3 axis = vol.panel == "front" ? Vec3{0, -1, 0} : Vec3{0, 1, 0};
    for (int z = 0; z < nz; ++z)
        for (int x = 0; x < nx; ++x) {
            float best = -std::numeric_limits<float>::infinity();
            int best_d = -1;
            for (int d = 0; d < nd; ++d) {
                const float v = vol.intensities[vol.index(x, d, z)];
                if (v > best) {  // strict: ties keep the smallest depth index
                    best = v;
                    best_d = d;
                }
            }
            if (best_d < 0 || best < min_intensity) continue;
            out.points.push_back(vol.origin_mm + Vec3{x * vol.spacing_mm.x, best_d * vol.spacing_mm.y,
                                                      z * vol.spacing_mm.z});
            out.normals.push_back(axis);
        }
    return out;
}

namespace ref {
OrientedPointCloud illumination_filter(const OrientedPointCloud& pc, const Vec3& panel_axis,
                                       double tau) {
    return filter_impl(pc, panel_axis, tau, false);
}
OrientedPointCloud augment(const OrientedPointCloud& pc, const ScanConfig& cfg, std::uint64_t seed) {
    return augment_impl(pc, cfg, seed, false);
}
}  // namespace ref

}  // namespace bca
