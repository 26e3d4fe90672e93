#pragma once

#include <string>

#include "bca/mesh.hpp"

namespace bca {

// ASCII OBJ subset: `v x y z` and triangular `f i j k` lines, mm units.
// Normals are recomputed on load. Coordinates are written with shortest
// round-trip formatting, so save -> load -> save is byte-identical.
void save_obj(const TriMesh& m, const std::string& path);
TriMesh load_obj(const std::string& path);

// Binary little-endian PLY with float32 x,y,z,nx,ny,nz, mm units.
void save_ply(const OrientedPointCloud& pc, const std::string& path);
OrientedPointCloud load_ply(const std::string& path);

}  // namespace bca
