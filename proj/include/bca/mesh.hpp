#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "bca/vec3.hpp"
#include "bca/volume.hpp"

namespace bca {

// Triangle surface mesh in mm with outward unit vertex normals.
struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> triangles;
    std::vector<Vec3> normals;  // per vertex, unit length

    bool empty() const { return triangles.empty(); }
};

// Points plus unit normals in scanner coordinates (mm).
struct OrientedPointCloud {
    std::vector<Vec3> points;
    std::vector<Vec3> normals;
    std::vector<std::int32_t> tags;  // optional per-point source tag; empty if unused

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
};

// Isosurface of `grid` at `iso` with vertices in physical mm. Vertices are
// welded on shared lattice edges, so closed level sets give watertight
// meshes. Normals face away from the high-valued region. Empty result when
// the level set does not cross the grid.
TriMesh marching_cubes(const ScalarGrid& grid, double iso);
TriMesh marching_cubes(const BinaryMask& mask, double iso);

// Jacobi-style uniform Laplacian: each iteration moves every vertex toward
// its 1-ring mean by `lambda`. Connectivity untouched; normals recomputed as
// area-weighted triangle-normal averages.
TriMesh laplacian_smooth(const TriMesh& m, double lambda, int iters);

// Area-weighted surface sampling, uniform within each triangle. Per-point
// RNG streams derived from (seed, point index), so results do not depend on
// thread count. Throws on an empty mesh.
OrientedPointCloud sample_surface(const TriMesh& m, std::size_t n, std::uint64_t seed);

// Signed volume via the divergence theorem, |sum det(v0,v1,v2)/6|, in liters.
double mesh_volume_liters(const TriMesh& m);

// Area-weighted vertex normals; vertices without incident area get +z.
void recompute_normals(TriMesh& m);

namespace ref {
TriMesh marching_cubes(const ScalarGrid& grid, double iso);
TriMesh marching_cubes(const BinaryMask& mask, double iso);
TriMesh laplacian_smooth(const TriMesh& m, double lambda, int iters);
OrientedPointCloud sample_surface(const TriMesh& m, std::size_t n, std::uint64_t seed);
}  // namespace ref

}  // namespace bca
