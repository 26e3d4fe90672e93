#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>

#include "bca/rng.hpp"

using namespace bca;

TEST_CASE("same seed reproduces the stream") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) CHECK(a.next() == b.next());
}

TEST_CASE("uniform01 stays in [0,1)") {
    Rng r(7);
    for (int i = 0; i < 100000; ++i) {
        double u = r.uniform01();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("normal moments") {
    Rng r(3);
    const int n = 200000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        double x = r.normal();
        s += x;
        s2 += x * x;
    }
    const double mean = s / n;
    const double var = s2 / n - mean * mean;
    CHECK(std::abs(mean) < 0.01);
    CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("below is bounded and roughly uniform") {
    Rng r(11);
    std::array<int, 10> hist{};
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        auto v = r.below(10);
        REQUIRE(v < 10);
        ++hist[v];
    }
    for (int c : hist) CHECK(std::abs(c - n / 10) < 600);
}

TEST_CASE("substreams differ by path and are stable") {
    Rng a = substream(5, {1, 2});
    Rng a2 = substream(5, {1, 2});
    Rng b = substream(5, {1, 3});
    Rng c = substream(6, {1, 2});
    const auto x = a.next();
    CHECK(x == a2.next());
    CHECK(x != b.next());
    CHECK(x != c.next());
}
