#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bca/anthro.hpp"
#include "bca/error.hpp"
#include "bca/rng.hpp"
#include "helpers.hpp"

using namespace bca;

namespace {

// Adaptive-depth Simpson quadrature of the ellipse arc length; the
// independent perimeter oracle.
double ellipse_arc(double a, double b, double t) {
    const double s = a * std::sin(t), c = b * std::cos(t);
    return std::sqrt(s * s + c * c);
}

double simpson(double a, double b, double lo, double hi, int depth) {
    const double mid = 0.5 * (lo + hi);
    if (depth <= 0) {
        const double h = hi - lo;
        return h / 6.0 *
               (ellipse_arc(a, b, lo) + 4.0 * ellipse_arc(a, b, mid) + ellipse_arc(a, b, hi));
    }
    return simpson(a, b, lo, mid, depth - 1) + simpson(a, b, mid, hi, depth - 1);
}

double ellipse_perimeter(double a, double b) {
    return simpson(a, b, 0.0, 2.0 * 3.14159265358979323846, 12);
}

}  // namespace

TEST_CASE("height is the vertical extent in cm") {
    TriMesh m = testutil::cylinder_mesh(50.0, 50.0, 1700.0, 64);
    CHECK(measure_height_cm(m) == doctest::Approx(170.0).epsilon(1e-12));

    for (auto& v : m.vertices) v.z += 321.0;
    CHECK(measure_height_cm(m) == doctest::Approx(170.0).epsilon(1e-12));

    TriMesh scaled = m;
    for (auto& v : scaled.vertices) v *= 1.1;
    CHECK(measure_height_cm(scaled) == doctest::Approx(187.0).epsilon(1e-9));
}

TEST_CASE("cross section of the unit cube mid-height") {
    TriMesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                  {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
    m.triangles = {{0, 2, 1}, {0, 3, 2}, {4, 5, 6}, {4, 6, 7}, {0, 1, 5}, {0, 5, 4},
                   {2, 3, 7}, {2, 7, 6}, {1, 2, 6}, {1, 6, 5}, {3, 0, 4}, {3, 4, 7}};
    recompute_normals(m);
    const CrossSection s = cross_section(m, 0.5);
    REQUIRE(s.points.size() >= 4);
    for (const auto& p : s.points) {
        const bool on_boundary = std::abs(p[0]) < 1e-12 || std::abs(p[0] - 1.0) < 1e-12 ||
                                 std::abs(p[1]) < 1e-12 || std::abs(p[1] - 1.0) < 1e-12;
        CHECK(on_boundary);
    }
    CHECK(hull_perimeter_cm(s) == doctest::Approx(0.4).epsilon(1e-9));

    CHECK(cross_section(m, 5.0).points.empty());
}

TEST_CASE("cylinder sections lie at the analytic radius") {
    const TriMesh m = testutil::cylinder_mesh(80.0, 80.0, 200.0, 720);
    const CrossSection s = cross_section(m, 100.0);
    REQUIRE(s.points.size() >= 3);
    for (const auto& p : s.points)
        CHECK(std::hypot(p[0], p[1]) == doctest::Approx(80.0).epsilon(1e-4));
}

TEST_CASE("hull perimeter of four unit-square corners") {
    CrossSection s;
    s.points = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
    CHECK(hull_perimeter_cm(s) == doctest::Approx(0.4).epsilon(1e-12));
}

TEST_CASE("hull perimeter of a 360-gon approximates the circle") {
    CrossSection s;
    for (int i = 0; i < 360; ++i) {
        const double t = 2.0 * 3.14159265358979323846 * i / 360.0;
        s.points.push_back({100.0 * std::cos(t), 100.0 * std::sin(t)});
    }
    CHECK(hull_perimeter_cm(s) == doctest::Approx(62.832).epsilon(0.001));
}

TEST_CASE("star polygon hull equals the brute-force hull of its vertices") {
    CrossSection s;
    for (int i = 0; i < 10; ++i) {
        const double t = 2.0 * 3.14159265358979323846 * i / 10.0;
        const double r = i % 2 == 0 ? 50.0 : 20.0;
        s.points.push_back({r * std::cos(t), r * std::sin(t)});
    }
    // Brute force: (i,j) is a hull edge iff every other point is strictly to
    // its left; sum those edge lengths.
    const auto& P = s.points;
    double brute = 0.0;
    for (std::size_t i = 0; i < P.size(); ++i)
        for (std::size_t j = 0; j < P.size(); ++j) {
            if (i == j) continue;
            bool all_left = true;
            for (std::size_t k = 0; k < P.size(); ++k) {
                if (k == i || k == j) continue;
                const double c = (P[j][0] - P[i][0]) * (P[k][1] - P[i][1]) -
                                 (P[j][1] - P[i][1]) * (P[k][0] - P[i][0]);
                if (c <= 0.0) {
                    all_left = false;
                    break;
                }
            }
            if (all_left) brute += std::hypot(P[j][0] - P[i][0], P[j][1] - P[i][1]);
        }
    const double hull = hull_perimeter_cm(s);
    CHECK(hull == doctest::Approx(brute / 10.0).epsilon(1e-12));

    double polygon = 0.0;
    for (std::size_t i = 0; i < P.size(); ++i) {
        const auto& a = P[i];
        const auto& b = P[(i + 1) % P.size()];
        polygon += std::hypot(b[0] - a[0], b[1] - a[1]);
    }
    CHECK(hull < polygon / 10.0);
}

TEST_CASE("hull perimeter is rigid-motion invariant and ignores interior points") {
    Rng rng(17);
    CrossSection s;
    for (int i = 0; i < 40; ++i) s.points.push_back({rng.uniform(-30, 30), rng.uniform(-20, 20)});
    const double base = hull_perimeter_cm(s);

    const double th = 0.73;
    CrossSection moved;
    for (const auto& p : s.points)
        moved.points.push_back({std::cos(th) * p[0] - std::sin(th) * p[1] + 1234.5,
                                std::sin(th) * p[0] + std::cos(th) * p[1] - 987.25});
    CHECK(hull_perimeter_cm(moved) == doctest::Approx(base).epsilon(1e-9));

    CrossSection with_interior = s;
    for (int i = 0; i < 25; ++i)
        with_interior.points.push_back({rng.uniform(-5, 5), rng.uniform(-5, 5)});
    CHECK(hull_perimeter_cm(with_interior) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("degenerate sections are rejected") {
    CrossSection two;
    two.points = {{0, 0}, {1, 0}};
    CHECK_THROWS_AS(hull_perimeter_cm(two), Error);

    CrossSection collinear;
    collinear.points = {{0, 0}, {1, 0}, {2, 0}, {3, 0}};
    CHECK_THROWS_AS(hull_perimeter_cm(collinear), Error);
}

TEST_CASE("circumferences of a circular cylinder") {
    const TriMesh m = testutil::cylinder_mesh(90.0, 90.0, 1000.0, 720);
    const Circumferences c = measure_circumferences(m, {0.72, 0.62, 0.53});
    const double expect = 2.0 * 3.14159265358979323846 * 90.0 / 10.0;
    CHECK(c.chest_cm == doctest::Approx(expect).epsilon(0.005));
    CHECK(c.waist_cm == doctest::Approx(expect).epsilon(0.005));
    CHECK(c.hip_cm == doctest::Approx(expect).epsilon(0.005));
}

TEST_CASE("elliptical cylinder matches the quadrature oracle within 0.5%") {
    const TriMesh m = testutil::cylinder_mesh(90.0, 60.0, 500.0, 1440);
    const Circumferences c = measure_circumferences(m, {0.72, 0.62, 0.53});
    const double oracle_cm = ellipse_perimeter(90.0, 60.0) / 10.0;
    CHECK(c.waist_cm == doctest::Approx(oracle_cm).epsilon(0.005));
}

TEST_CASE("measurements scale linearly with the mesh") {
    const TriMesh m = testutil::cylinder_mesh(70.0, 50.0, 800.0, 256);
    TriMesh big = m;
    for (auto& v : big.vertices) v *= 1.25;
    recompute_normals(big);
    const auto a = measure_circumferences(m, kDefaultKeypoints);
    const auto b = measure_circumferences(big, kDefaultKeypoints);
    CHECK(b.chest_cm == doctest::Approx(1.25 * a.chest_cm).epsilon(1e-9));
    CHECK(b.waist_cm == doctest::Approx(1.25 * a.waist_cm).epsilon(1e-9));
    CHECK(b.hip_cm == doctest::Approx(1.25 * a.hip_cm).epsilon(1e-9));
    CHECK(measure_height_cm(big) == doctest::Approx(1.25 * measure_height_cm(m)).epsilon(1e-12));
}

TEST_CASE("degenerate keypoint errors name the keypoint") {
    // Two cylinders with a vertical gap; the waist fraction falls in the gap.
    TriMesh m = testutil::cylinder_mesh(40.0, 40.0, 100.0, 64);
    TriMesh upper = testutil::cylinder_mesh(40.0, 40.0, 100.0, 64);
    const int base = static_cast<int>(m.vertices.size());
    for (auto& v : upper.vertices) v.z += 900.0;
    for (const auto& v : upper.vertices) m.vertices.push_back(v);
    for (const auto& t : upper.triangles)
        m.triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
    recompute_normals(m);
    CHECK_THROWS_WITH_AS(measure_circumferences(m, {0.05, 0.62, 0.03}),
                         doctest::Contains("waist"), Error);
}
