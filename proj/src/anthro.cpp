#include "bca/anthro.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "bca/error.hpp"

namespace bca {

namespace {

std::pair<double, double> vertical_extent(const TriMesh& m) {
    if (m.vertices.empty()) throw Error::invalid("mesh has no vertices");
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& v : m.vertices) {
        lo = std::min(lo, v.z);
        hi = std::max(hi, v.z);
    }
    return {lo, hi};
}

double cross2(const std::array<double, 2>& o, const std::array<double, 2>& a,
              const std::array<double, 2>& b) {
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
}

}  // namespace

double measure_height_cm(const TriMesh& m) {
    auto [lo, hi] = vertical_extent(m);
    return (hi - lo) / 10.0;
}

CrossSection cross_section(const TriMesh& m, double h_mm) {
    CrossSection s;
    s.height_mm = h_mm;
    for (const auto& t : m.triangles) {
        const Vec3* v[3] = {&m.vertices[t[0]], &m.vertices[t[1]], &m.vertices[t[2]]};
        for (int k = 0; k < 3; ++k) {
            const Vec3& a = *v[k];
            const Vec3& b = *v[(k + 1) % 3];
            const double da = a.z - h_mm, db = b.z - h_mm;
            if (da == 0.0) s.points.push_back({a.x, a.y});
            if ((da < 0.0 && db > 0.0) || (da > 0.0 && db < 0.0)) {
                const double u = da / (da - db);
                s.points.push_back({a.x + u * (b.x - a.x), a.y + u * (b.y - a.y)});
            }
        }
    }
    return s;
}

double hull_perimeter_cm(const CrossSection& s) {
    if (s.points.size() < 3) throw Error::invalid("cross section is degenerate: fewer than 3 points");

    // Translate toward the minimum point before orientation tests to limit
    // cancellation on far-from-origin sections.
    auto pts = s.points;
    std::array<double, 2> shift = pts[0];
    for (const auto& p : pts) {
        shift[0] = std::min(shift[0], p[0]);
        shift[1] = std::min(shift[1], p[1]);
    }
    for (auto& p : pts) {
        p[0] -= shift[0];
        p[1] -= shift[1];
    }
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    const std::size_t n = pts.size();
    if (n < 3) throw Error::invalid("cross section is degenerate: fewer than 3 distinct points");

    // Andrew's monotone chain; collinear points dropped.
    std::vector<std::array<double, 2>> hull(2 * n);
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
        while (k >= 2 && cross2(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
        hull[k++] = pts[i];
    }
    const std::size_t lower = k + 1;
    for (std::size_t i = n - 1; i-- > 0;) {
        while (k >= lower && cross2(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    if (hull.size() < 3) throw Error::invalid("cross section is degenerate: collinear points");

    double perim = 0.0;
    for (std::size_t i = 0; i < hull.size(); ++i) {
        const auto& a = hull[i];
        const auto& b = hull[(i + 1) % hull.size()];
        perim += std::hypot(b[0] - a[0], b[1] - a[1]);
    }
    return perim / 10.0;
}

Circumferences measure_circumferences(const TriMesh& m, const std::array<double, 3>& fractions) {
    for (double f : fractions)
        if (!(f > 0.0 && f < 1.0)) throw Error::invalid("keypoint fractions must be in (0, 1)");
    auto [lo, hi] = vertical_extent(m);
    const char* names[3] = {"chest", "waist", "hip"};
    double out[3];
    for (int i = 0; i < 3; ++i) {
        const double h = lo + fractions[i] * (hi - lo);
        try {
            out[i] = hull_perimeter_cm(cross_section(m, h));
        } catch (const Error& e) {
            throw Error::invalid(std::string(names[i]) + " keypoint at height " + std::to_string(h) +
                                 " mm: " + e.what());
        }
    }
    return {out[0], out[1], out[2]};
}

}  // namespace bca
