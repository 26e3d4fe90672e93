#pragma once

// Shared oracles and fixture builders for the test suites. Everything here
// is independent of the library's kernel implementations: flood fill via
// fixpoint dilation, volumes via analytic formulas, hulls via brute force.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "bca/mesh.hpp"
#include "bca/procgen.hpp"
#include "bca/rng.hpp"
#include "bca/volume.hpp"

namespace testutil {

inline bca::BinaryMask sphere_mask(double radius_mm, double spacing_mm, int margin = 3) {
    bca::BinaryMask m;
    const int half = static_cast<int>(std::ceil(radius_mm / spacing_mm)) + margin;
    const int n = 2 * half + 1;
    m.dims = {n, n, n};
    m.spacing_mm = {spacing_mm, spacing_mm, spacing_mm};
    m.origin_mm = {-half * spacing_mm, -half * spacing_mm, -half * spacing_mm};
    m.bits.resize(m.voxel_count());
    for (int z = 0; z < n; ++z)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) {
                const double px = (x - half) * spacing_mm;
                const double py = (y - half) * spacing_mm;
                const double pz = (z - half) * spacing_mm;
                m.bits[m.index(x, y, z)] =
                    px * px + py * py + pz * pz <= radius_mm * radius_mm ? 1 : 0;
            }
    return m;
}

// Axis-aligned elliptic cylinder along z, vertical extent [0, height].
inline bca::BinaryMask cylinder_mask(double a_mm, double b_mm, double height_mm, double spacing_mm,
                                     int margin = 3) {
    bca::BinaryMask m;
    const int hx = static_cast<int>(std::ceil(a_mm / spacing_mm)) + margin;
    const int hy = static_cast<int>(std::ceil(b_mm / spacing_mm)) + margin;
    const int nz = static_cast<int>(std::ceil(height_mm / spacing_mm)) + 2 * margin;
    m.dims = {2 * hx + 1, 2 * hy + 1, nz};
    m.spacing_mm = {spacing_mm, spacing_mm, spacing_mm};
    m.origin_mm = {-hx * spacing_mm, -hy * spacing_mm, -margin * spacing_mm};
    m.bits.resize(m.voxel_count());
    for (int z = 0; z < m.dims[2]; ++z)
        for (int y = 0; y < m.dims[1]; ++y)
            for (int x = 0; x < m.dims[0]; ++x) {
                const double px = (x - hx) * spacing_mm;
                const double py = (y - hy) * spacing_mm;
                const double pz = m.origin_mm.z + z * spacing_mm;
                const double f = (px / a_mm) * (px / a_mm) + (py / b_mm) * (py / b_mm);
                m.bits[m.index(x, y, z)] = (f <= 1.0 && pz >= 0.0 && pz <= height_mm) ? 1 : 0;
            }
    return m;
}

// UV-sphere triangulation; analytic alternative to MC output.
inline bca::TriMesh uv_sphere(double radius_mm, int n_theta, int n_phi, bca::Vec3 center = {}) {
    bca::TriMesh m;
    // Poles plus interior rings.
    m.vertices.push_back(center + bca::Vec3{0, 0, radius_mm});
    for (int i = 1; i < n_theta; ++i) {
        const double th = 3.14159265358979323846 * i / n_theta;
        for (int j = 0; j < n_phi; ++j) {
            const double ph = 2.0 * 3.14159265358979323846 * j / n_phi;
            m.vertices.push_back(center + bca::Vec3{radius_mm * std::sin(th) * std::cos(ph),
                                                    radius_mm * std::sin(th) * std::sin(ph),
                                                    radius_mm * std::cos(th)});
        }
    }
    m.vertices.push_back(center + bca::Vec3{0, 0, -radius_mm});
    const int south = static_cast<int>(m.vertices.size()) - 1;
    auto ring = [&](int i, int j) { return 1 + (i - 1) * n_phi + (j % n_phi); };
    for (int j = 0; j < n_phi; ++j) m.triangles.push_back({0, ring(1, j), ring(1, j + 1)});
    for (int i = 1; i + 1 < n_theta; ++i)
        for (int j = 0; j < n_phi; ++j) {
            m.triangles.push_back({ring(i, j), ring(i + 1, j), ring(i + 1, j + 1)});
            m.triangles.push_back({ring(i, j), ring(i + 1, j + 1), ring(i, j + 1)});
        }
    for (int j = 0; j < n_phi; ++j)
        m.triangles.push_back({south, ring(n_theta - 1, j + 1), ring(n_theta - 1, j)});
    bca::recompute_normals(m);
    return m;
}

// Closed elliptic cylinder (triangulated caps), z in [0, height].
inline bca::TriMesh cylinder_mesh(double a_mm, double b_mm, double height_mm, int n_seg,
                                  int n_rings = 8) {
    bca::TriMesh m;
    for (int r = 0; r <= n_rings; ++r) {
        const double z = height_mm * r / n_rings;
        for (int j = 0; j < n_seg; ++j) {
            const double ph = 2.0 * 3.14159265358979323846 * j / n_seg;
            m.vertices.push_back({a_mm * std::cos(ph), b_mm * std::sin(ph), z});
        }
    }
    auto at = [&](int r, int j) { return r * n_seg + (j % n_seg); };
    for (int r = 0; r < n_rings; ++r)
        for (int j = 0; j < n_seg; ++j) {
            m.triangles.push_back({at(r, j), at(r, j + 1), at(r + 1, j + 1)});
            m.triangles.push_back({at(r, j), at(r + 1, j + 1), at(r + 1, j)});
        }
    const int bot = static_cast<int>(m.vertices.size());
    m.vertices.push_back({0, 0, 0});
    const int top = bot + 1;
    m.vertices.push_back({0, 0, height_mm});
    for (int j = 0; j < n_seg; ++j) {
        m.triangles.push_back({bot, at(0, j + 1), at(0, j)});
        m.triangles.push_back({top, at(n_rings, j), at(n_rings, j + 1)});
    }
    bca::recompute_normals(m);
    return m;
}

// Independent cavity-fill oracle: fixpoint dilation of border-reachable
// background, one constant-height slice at a time.
inline bca::BinaryMask fill_oracle(const bca::BinaryMask& in) {
    bca::BinaryMask out = in;
    const int ha = in.height_axis;
    const int ua = ha == 0 ? 1 : 0;
    const int va = ha == 2 ? 1 : 2;
    const int nu = in.dims[ua], nv = in.dims[va];
    for (int s = 0; s < in.dims[ha]; ++s) {
        int coord[3];
        coord[ha] = s;
        auto vox = [&](int u, int v) {
            coord[ua] = u;
            coord[va] = v;
            return in.index(coord[0], coord[1], coord[2]);
        };
        std::vector<std::uint8_t> reach(static_cast<std::size_t>(nu) * nv, 0);
        auto rat = [&](int u, int v) -> std::uint8_t& { return reach[u + static_cast<std::size_t>(nu) * v]; };
        bool changed = true;
        for (int v = 0; v < nv; ++v)
            for (int u = 0; u < nu; ++u)
                if ((u == 0 || v == 0 || u == nu - 1 || v == nv - 1) && !in.bits[vox(u, v)])
                    rat(u, v) = 1;
        while (changed) {
            changed = false;
            for (int v = 0; v < nv; ++v)
                for (int u = 0; u < nu; ++u) {
                    if (rat(u, v) || in.bits[vox(u, v)]) continue;
                    const bool near =
                        (u > 0 && rat(u - 1, v)) || (v > 0 && rat(u, v - 1)) ||
                        (u + 1 < nu && rat(u + 1, v)) || (v + 1 < nv && rat(u, v + 1));
                    if (near) {
                        rat(u, v) = 1;
                        changed = true;
                    }
                }
        }
        for (int v = 0; v < nv; ++v)
            for (int u = 0; u < nu; ++u)
                if (!in.bits[vox(u, v)] && !rat(u, v)) out.bits[vox(u, v)] = 1;
    }
    return out;
}

// Undirected edge census; watertight closed meshes have every edge shared by
// exactly two triangles with opposite direction.
struct EdgeCensus {
    std::size_t edges = 0;
    bool closed = true;
    bool oriented = true;
};

inline EdgeCensus edge_census(const bca::TriMesh& m) {
    std::map<std::pair<int, int>, int> dir;
    for (const auto& t : m.triangles)
        for (int k = 0; k < 3; ++k) {
            int a = t[k], b = t[(k + 1) % 3];
            ++dir[{a, b}];
        }
    EdgeCensus c;
    std::set<std::pair<int, int>> seen;
    for (const auto& [e, n] : dir) {
        if (n != 1) c.oriented = false;  // duplicated directed edge
        auto rev = std::make_pair(e.second, e.first);
        if (!dir.count(rev)) c.closed = false;
        if (!seen.count(rev)) {
            seen.insert(e);
            ++c.edges;
        }
    }
    return c;
}

inline bca::LabelVolume random_label_volume(std::uint64_t seed, int nx = 9, int ny = 7, int nz = 6) {
    bca::Rng rng(seed);
    bca::LabelVolume v;
    v.dims = {nx, ny, nz};
    v.spacing_mm = {1.5, 2.0, 1.0};
    v.legend = {{0, "background"}, {1, "SAT"}, {2, "VAT"}, {3, "MUSCLE"}, {4, "LEAN"}};
    v.voxels.resize(v.voxel_count());
    for (auto& c : v.voxels) c = static_cast<std::uint8_t>(rng.below(5));
    return v;
}

inline bca::BinaryMask random_mask(std::uint64_t seed, int nx, int ny, int nz, double p_true = 0.4) {
    bca::Rng rng(seed);
    bca::BinaryMask m;
    m.dims = {nx, ny, nz};
    m.spacing_mm = {1.0, 1.0, 1.0};
    m.bits.resize(m.voxel_count());
    for (auto& b : m.bits) b = rng.uniform01() < p_true ? 1 : 0;
    return m;
}

// Miniature body ranges so rasterization stays unit-test sized.
inline bca::ProcgenRanges mini_ranges() {
    bca::ProcgenRanges r;
    r.height_mm = {280.0, 330.0};
    r.sat_base_mm = {1.5, 4.5};
    r.muscle_base_mm = {2.5, 6.0};
    return r;
}

inline std::filesystem::path fresh_dir(const std::string& name) {
    auto p = std::filesystem::path("test_scratch") / name;
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace testutil

#include "bca/dataset.hpp"
#include "bca/mesh_io.hpp"
#include "bca/scan_sim.hpp"

namespace testutil {

// Small end-to-end dataset: miniature bodies, simulated scans, targets and
// an 8/1/1 split. Sized for unit tests, not realism.
inline bca::Dataset make_mini_dataset(const std::filesystem::path& dir, int count,
                                      std::uint64_t seed, double spacing_mm = 2.0,
                                      std::size_t scan_points = 1024) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "scans");
    bca::ScanConfig scan_cfg;
    scan_cfg.target_points = scan_points;
    const bca::ProcgenRanges ranges = mini_ranges();
    std::vector<bca::SampleRecord> rows;
    std::vector<std::string> ids;
    for (int i = 0; i < count; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "body_%04d", i);
        const std::string id = buf;
        const bca::BodySpec spec = bca::sample_body(bca::combine(seed, i), ranges);
        const bca::BodyArtifacts art = bca::synthesize(spec, spacing_mm);
        const bca::OrientedPointCloud dense =
            bca::sample_surface(art.mesh, 20000, bca::combine(seed, 1000 + i));
        const bca::OrientedPointCloud scan =
            bca::simulate_scan(dense, scan_cfg, bca::combine(seed, 2000 + i));
        bca::save_ply(scan, (dir / "scans" / (id + ".ply")).string());
        bca::SampleRecord rec;
        rec.id = id;
        const auto vals = art.truth.values();
        for (int j = 0; j < 10; ++j) {
            rec.targets.y[j] = vals[j];
            rec.targets.mask[j] = 1;
        }
        rows.push_back(rec);
        ids.push_back(id);
    }
    bca::save_targets_csv(rows, (dir / "targets.csv").string());
    bca::save_split(bca::make_split(ids, seed), (dir / "split.json").string());
    return bca::load_dataset(dir.string());
}

}  // namespace testutil
