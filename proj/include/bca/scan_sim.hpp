#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "bca/mesh.hpp"
#include "bca/vec3.hpp"
#include "bca/volume.hpp"

namespace bca {

// Scanner simulation parameters; serialized as scan.json.
struct ScanConfig {
    Vec3 panel_axis{0.0, 1.0, 0.0};  // AP direction, unit
    double rot_sigma_deg = 5.0;
    double rot_clip_deg = 10.0;
    double jitter_max_mm = 2.0;
    double thresh_mean = 0.7;
    double thresh_sigma = 0.05;
    std::array<double, 2> thresh_clip{0.5, 0.9};
    std::size_t target_points = 100000;
    std::uint64_t seed = 0;
};

ScanConfig load_scan_config(const std::string& path);
void save_scan_config(const ScanConfig& cfg, const std::string& path);
void validate(const ScanConfig& cfg);

// Rigid translation into scanner coordinates: lateral and AP centroid at 0,
// lowest point on the floor. Normals unchanged.
OrientedPointCloud register_cloud(const OrientedPointCloud& pc);

// Rotation about the vertical axis (normal-clipped angle) plus per-point
// uniform jitter. Streams derive from (seed), independent of thread count.
OrientedPointCloud augment(const OrientedPointCloud& pc, const ScanConfig& cfg, std::uint64_t seed);

// Keep point i iff (n_i . panel_axis)^2 >= tau; covers both panels.
OrientedPointCloud illumination_filter(const OrientedPointCloud& pc, const Vec3& panel_axis,
                                       double tau);

// Normal(thresh_mean, thresh_sigma) clipped to thresh_clip.
double sample_threshold(const ScanConfig& cfg, std::uint64_t seed);

// Uniform sample without replacement preserving input order; identity when
// n >= |pc|.
OrientedPointCloud downsample(const OrientedPointCloud& pc, std::size_t n, std::uint64_t seed);

// register -> augment -> illumination filter (sampled threshold) -> downsample.
OrientedPointCloud simulate_scan(const OrientedPointCloud& pc, const ScanConfig& cfg,
                                 std::uint64_t seed);

// Depthwise argmax per lateral column; point emitted when the peak reaches
// min_intensity, normal facing the panel. Ties break toward the panel
// (smallest depth index).
OrientedPointCloud extract_from_intensity(const IntensityVolume& vol, double min_intensity);

namespace ref {
OrientedPointCloud illumination_filter(const OrientedPointCloud& pc, const Vec3& panel_axis,
                                       double tau);
OrientedPointCloud augment(const OrientedPointCloud& pc, const ScanConfig& cfg, std::uint64_t seed);
}  // namespace ref

}  // namespace bca
