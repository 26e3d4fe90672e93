#include "bca/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <unordered_map>

#include "bca/error.hpp"
#include "bca/rng.hpp"
#include "mc_tables.hpp"

namespace bca {

namespace {

struct GridField {
    const ScalarGrid& g;
    const std::array<int, 3>& dims() const { return g.dims; }
    Vec3 spacing() const { return g.spacing_mm; }
    Vec3 origin() const { return g.origin_mm; }
    double at(int x, int y, int z) const { return g.values[g.index(x, y, z)]; }
};

struct MaskField {
    const BinaryMask& m;
    const std::array<int, 3>& dims() const { return m.dims; }
    Vec3 spacing() const { return m.spacing_mm; }
    Vec3 origin() const { return m.origin_mm; }
    double at(int x, int y, int z) const { return m.bits[m.index(x, y, z)] ? 1.0 : 0.0; }
};

// Lattice edge id: 3 * linear index of the low grid point + axis.
inline std::uint64_t edge_id(std::uint64_t nx, std::uint64_t ny, int x, int y, int z, int axis) {
    std::uint64_t p = static_cast<std::uint64_t>(x) + nx * (static_cast<std::uint64_t>(y) + ny * z);
    return 3 * p + static_cast<std::uint64_t>(axis);
}

// (base corner dx, dy, dz, axis) per marching-cubes edge 0..11.
constexpr int kEdgeBase[12][4] = {
    {0, 0, 0, 0}, {1, 0, 0, 1}, {0, 1, 0, 0}, {0, 0, 0, 1},
    {0, 0, 1, 0}, {1, 0, 1, 1}, {0, 1, 1, 0}, {0, 0, 1, 1},
    {0, 0, 0, 2}, {1, 0, 0, 2}, {1, 1, 0, 2}, {0, 1, 0, 2},
};

constexpr int kCorner[8][3] = {
    {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
    {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1},
};

template <typename Field>
TriMesh mc_impl(const Field& f, double iso, bool parallel) {
    const int nx = f.dims()[0], ny = f.dims()[1], nz = f.dims()[2];
    if (nx < 2 || ny < 2 || nz < 2)
        throw Error::invalid("marching cubes requires at least 2 grid points per axis");

    const std::uint64_t unx = static_cast<std::uint64_t>(nx);
    const std::uint64_t uny = static_cast<std::uint64_t>(ny);

    // Fixed slab decomposition in z so triangle order, and therefore vertex
    // indexing, is independent of thread count.
    const int cell_nz = nz - 1;
    const int slab_layers = 4;
    const int nslabs = (cell_nz + slab_layers - 1) / slab_layers;
    std::vector<std::vector<std::array<std::uint64_t, 3>>> slab_tris(nslabs);

#pragma omp parallel for schedule(dynamic) if (parallel)
    for (int slab = 0; slab < nslabs; ++slab) {
        auto& tris = slab_tris[slab];
        const int z0 = slab * slab_layers;
        const int z1 = std::min(z0 + slab_layers, cell_nz);
        double val[8];
        for (int cz = z0; cz < z1; ++cz)
            for (int cy = 0; cy + 1 < ny; ++cy)
                for (int cx = 0; cx + 1 < nx; ++cx) {
                    int cubeindex = 0;
                    for (int c = 0; c < 8; ++c) {
                        val[c] = f.at(cx + kCorner[c][0], cy + kCorner[c][1], cz + kCorner[c][2]);
                        if (val[c] < iso) cubeindex |= 1 << c;
                    }
                    if (detail::kEdgeTable[cubeindex] == 0) continue;
                    const std::int8_t* row = detail::kTriTable[cubeindex];
                    for (int i = 0; row[i] >= 0; i += 3) {
                        std::array<std::uint64_t, 3> t;
                        for (int k = 0; k < 3; ++k) {
                            const int* eb = kEdgeBase[row[i + k]];
                            t[k] = edge_id(unx, uny, cx + eb[0], cy + eb[1], cz + eb[2], eb[3]);
                        }
                        if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) continue;
                        tris.push_back(t);
                    }
                }
    }

    // Deterministic weld: vertices indexed in first-appearance order over the
    // slab-ordered triangle stream.
    TriMesh mesh;
    std::size_t total = 0;
    for (const auto& s : slab_tris) total += s.size();
    mesh.triangles.reserve(total);
    std::unordered_map<std::uint64_t, int> weld;
    weld.reserve(total * 2);

    auto vertex_for = [&](std::uint64_t id) {
        auto it = weld.find(id);
        if (it != weld.end()) return it->second;
        const int axis = static_cast<int>(id % 3);
        std::uint64_t p = id / 3;
        const int x = static_cast<int>(p % unx);
        p /= unx;
        const int y = static_cast<int>(p % uny);
        const int z = static_cast<int>(p / uny);
        int x1 = x + (axis == 0), y1 = y + (axis == 1), z1 = z + (axis == 2);
        const double v0 = f.at(x, y, z), v1 = f.at(x1, y1, z1);
        const double t = (iso - v0) / (v1 - v0);
        Vec3 idx{static_cast<double>(x), static_cast<double>(y), static_cast<double>(z)};
        idx[axis] += t;
        Vec3 pos = f.origin() + Vec3{idx.x * f.spacing().x, idx.y * f.spacing().y, idx.z * f.spacing().z};
        int vi = static_cast<int>(mesh.vertices.size());
        mesh.vertices.push_back(pos);
        weld.emplace(id, vi);
        return vi;
    };

    for (const auto& s : slab_tris)
        for (const auto& t : s)
            mesh.triangles.push_back({vertex_for(t[0]), vertex_for(t[1]), vertex_for(t[2])});

    recompute_normals(mesh);
    return mesh;
}

TriMesh smooth_impl(const TriMesh& m, double lambda, int iters, bool parallel) {
    if (!(lambda > 0.0 && lambda <= 1.0)) throw Error::invalid("smoothing lambda must be in (0, 1]");
    if (iters < 0) throw Error::invalid("smoothing iteration count must be >= 0");
    if (iters == 0) return m;

    const int nv = static_cast<int>(m.vertices.size());

    // Undirected 1-ring adjacency in CSR form.
    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(m.triangles.size() * 6);
    for (const auto& t : m.triangles)
        for (int k = 0; k < 3; ++k) {
            int a = t[k], b = t[(k + 1) % 3];
            pairs.emplace_back(a, b);
            pairs.emplace_back(b, a);
        }
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    std::vector<int> offsets(nv + 1, 0), neigh(pairs.size());
    for (const auto& p : pairs) ++offsets[p.first + 1];
    for (int i = 0; i < nv; ++i) offsets[i + 1] += offsets[i];
    for (std::size_t i = 0; i < pairs.size(); ++i) neigh[i] = pairs[i].second;

    TriMesh out = m;
    std::vector<Vec3> cur = m.vertices, next(nv);
    for (int it = 0; it < iters; ++it) {
#pragma omp parallel for schedule(static) if (parallel && nv > 4096)
        for (int v = 0; v < nv; ++v) {
            const int b = offsets[v], e = offsets[v + 1];
            if (b == e) {
                next[v] = cur[v];
                continue;
            }
            Vec3 mean{0, 0, 0};
            for (int j = b; j < e; ++j) mean += cur[neigh[j]];
            mean = mean / static_cast<double>(e - b);
            next[v] = cur[v] + (mean - cur[v]) * lambda;
        }
        std::swap(cur, next);
    }
    out.vertices = std::move(cur);
    recompute_normals(out);
    return out;
}

OrientedPointCloud sample_impl(const TriMesh& m, std::size_t n, std::uint64_t seed, bool parallel) {
    if (m.empty()) throw Error::invalid("cannot sample an empty mesh");
    if (n < 1) throw Error::invalid("sample count must be >= 1");

    const std::size_t nt = m.triangles.size();
    std::vector<double> cdf(nt);
    double total = 0.0;
    for (std::size_t t = 0; t < nt; ++t) {
        const auto& tri = m.triangles[t];
        Vec3 a = m.vertices[tri[0]], b = m.vertices[tri[1]], c = m.vertices[tri[2]];
        total += 0.5 * norm(cross(b - a, c - a));
        cdf[t] = total;
    }
    if (!(total > 0.0)) throw Error::invalid("mesh has zero surface area");

    OrientedPointCloud pc;
    pc.points.resize(n);
    pc.normals.resize(n);
    const std::int64_t count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static) if (parallel && count > 1024)
    for (std::int64_t i = 0; i < count; ++i) {
        Rng rng = substream(seed, {0x5A, static_cast<std::uint64_t>(i)});
        const double u = rng.uniform01() * total;
        std::size_t t = std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin();
        if (t >= nt) t = nt - 1;
        const auto& tri = m.triangles[t];
        const double r1 = rng.uniform01(), r2 = rng.uniform01();
        const double s = std::sqrt(r1);
        const double wa = 1.0 - s, wb = s * (1.0 - r2), wc = s * r2;
        pc.points[i] = m.vertices[tri[0]] * wa + m.vertices[tri[1]] * wb + m.vertices[tri[2]] * wc;
        Vec3 nrm = m.normals[tri[0]] * wa + m.normals[tri[1]] * wb + m.normals[tri[2]] * wc;
        if (norm(nrm) < 1e-12) {
            nrm = cross(m.vertices[tri[1]] - m.vertices[tri[0]],
                        m.vertices[tri[2]] - m.vertices[tri[0]]);
        }
        pc.normals[i] = normalized(nrm);
    }
    return pc;
}

}  // namespace

TriMesh marching_cubes(const ScalarGrid& grid, double iso) {
    return mc_impl(GridField{grid}, iso, true);
}
TriMesh marching_cubes(const BinaryMask& mask, double iso) {
    return mc_impl(MaskField{mask}, iso, true);
}
TriMesh laplacian_smooth(const TriMesh& m, double lambda, int iters) {
    return smooth_impl(m, lambda, iters, true);
}
OrientedPointCloud sample_surface(const TriMesh& m, std::size_t n, std::uint64_t seed) {
    return sample_impl(m, n, seed, true);
}

double mesh_volume_liters(const TriMesh& m) {
    double six_vol = 0.0;
    for (const auto& t : m.triangles) {
        const Vec3& a = m.vertices[t[0]];
        const Vec3& b = m.vertices[t[1]];
        const Vec3& c = m.vertices[t[2]];
        six_vol += dot(a, cross(b, c));
    }
    return std::abs(six_vol) / 6.0 * 1e-6;
}

void recompute_normals(TriMesh& m) {
    m.normals.assign(m.vertices.size(), Vec3{0, 0, 0});
    for (const auto& t : m.triangles) {
        Vec3 fn = cross(m.vertices[t[1]] - m.vertices[t[0]], m.vertices[t[2]] - m.vertices[t[0]]);
        m.normals[t[0]] += fn;
        m.normals[t[1]] += fn;
        m.normals[t[2]] += fn;
    }
    const std::int64_t nv = static_cast<std::int64_t>(m.vertices.size());
#pragma omp parallel for schedule(static) if (nv > 16384)
    for (std::int64_t i = 0; i < nv; ++i) {
        double len = norm(m.normals[i]);
        m.normals[i] = len > 0.0 ? m.normals[i] / len : Vec3{0.0, 0.0, 1.0};
    }
}

namespace ref {

TriMesh marching_cubes(const ScalarGrid& grid, double iso) {
    return mc_impl(GridField{grid}, iso, false);
}
TriMesh marching_cubes(const BinaryMask& mask, double iso) {
    return mc_impl(MaskField{mask}, iso, false);
}
TriMesh laplacian_smooth(const TriMesh& m, double lambda, int iters) {
    return smooth_impl(m, lambda, iters, false);
}
OrientedPointCloud sample_surface(const TriMesh& m, std::size_t n, std::uint64_t seed) {
    return sample_impl(m, n, seed, false);
}

}  // namespace ref

}  // namespace bca
