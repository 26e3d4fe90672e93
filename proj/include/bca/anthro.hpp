#pragma once

#include <array>
#include <vector>

#include "bca/mesh.hpp"

namespace bca {

// Planar (constant-height) mesh slice, projected to the horizontal plane.
struct CrossSection {
    double height_mm = 0.0;
    std::vector<std::array<double, 2>> points;  // mm
};

// Vertical mesh extent in cm. The vertical axis is z.
double measure_height_cm(const TriMesh& m);

// Every triangle-plane intersection segment endpoint at height h.
CrossSection cross_section(const TriMesh& m, double h_mm);

// Convex hull (monotone chain) edge-length sum in cm. Throws on degenerate
// sections (< 3 points or all collinear).
double hull_perimeter_cm(const CrossSection& s);

struct Circumferences {
    double chest_cm = 0.0;
    double waist_cm = 0.0;
    double hip_cm = 0.0;
};

// Hull perimeters at keypoint height fractions of the mesh extent, measured
// from the lowest vertex. Fractions are (chest, waist, hip).
Circumferences measure_circumferences(const TriMesh& m, const std::array<double, 3>& fractions);

inline constexpr std::array<double, 3> kDefaultKeypoints{0.72, 0.62, 0.53};

}  // namespace bca
