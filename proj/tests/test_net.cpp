#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "bca/loss.hpp"
#include "bca/nn.hpp"
#include "bca/rng.hpp"

using namespace bca;

namespace {

NetConfig tiny_net() {
    NetConfig c;
    c.enc_hidden1 = 8;
    c.enc_hidden2 = 10;
    c.feature_dim = 12;
    c.head_hidden = {14, 9};
    c.dropout = 0.1;
    return c;
}

std::vector<Vec3> toy_cloud(int n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Vec3> pts;
    for (int i = 0; i < n; ++i)
        pts.push_back({rng.uniform(-400, 400), rng.uniform(-200, 200), rng.uniform(0, 1700)});
    return pts;
}

// Scalar objective for finite differences: weighted sum of all head outputs
// with fixed coefficients (distinct per output so gradients cannot cancel).
double objective(const Model& m, const std::vector<Vec3>& pts, Workspace& ws) {
    m.forward(pts, false, 0, ws);
    double s = 0.0;
    int k = 1;
    for (const auto& hc : ws.heads)
        for (double o : hc.out) s += 0.01 * k++ * o;
    return s;
}

std::vector<std::vector<double>> objective_dout(const Model& m) {
    std::vector<std::vector<double>> dout;
    int k = 1;
    for (const auto& h : m.heads()) {
        std::vector<double> d(h.output_dim());
        for (auto& v : d) v = 0.01 * k++;
        dout.push_back(d);
    }
    return dout;
}

}  // namespace

TEST_CASE("head specs partition the ten targets") {
    const auto heads = default_heads();
    REQUIRE(heads.size() == 3);
    CHECK(heads[0].name == "H");
    CHECK(heads[0].output_dim() == 1);
    CHECK(heads[1].output_dim() == 3);
    CHECK(heads[2].output_dim() == 6);
    std::array<int, 10> seen{};
    for (const auto& h : heads)
        for (int j : h.target_indices) ++seen[j];
    for (int c : seen) CHECK(c == 1);
}

TEST_CASE("encoding is permutation invariant bitwise") {
    Model m(tiny_net(), default_heads());
    m.init_params(1);
    auto pts = toy_cloud(40, 2);
    Workspace a, b;
    m.encode(pts, a);
    std::reverse(pts.begin(), pts.end());
    std::swap(pts[3], pts[17]);
    m.encode(pts, b);
    CHECK(a.feature == b.feature);
}

TEST_CASE("a repeated point encodes like a single point") {
    Model m(tiny_net(), default_heads());
    m.init_params(3);
    const Vec3 p{120.0, -40.0, 800.0};
    Workspace a, b;
    m.encode(std::vector<Vec3>(1, p), a);
    m.encode(std::vector<Vec3>(57, p), b);
    for (int j = 0; j < tiny_net().feature_dim; ++j)
        CHECK(a.feature[j] == doctest::Approx(b.feature[j]).epsilon(1e-12));
}

TEST_CASE("encoding an empty cloud throws") {
    Model m(tiny_net(), default_heads());
    m.init_params(1);
    Workspace ws;
    CHECK_THROWS(m.encode({}, ws));
}

TEST_CASE("eval-mode forward is deterministic; dropout only acts in train mode") {
    Model m(tiny_net(), default_heads());
    m.init_params(4);
    const auto pts = toy_cloud(30, 5);
    Workspace a, b, t1, t2;
    m.forward(pts, false, 111, a);
    m.forward(pts, false, 222, b);
    for (std::size_t h = 0; h < a.heads.size(); ++h) CHECK(a.heads[h].out == b.heads[h].out);

    m.forward(pts, true, 7, t1);
    m.forward(pts, true, 7, t2);
    for (std::size_t h = 0; h < t1.heads.size(); ++h) CHECK(t1.heads[h].out == t2.heads[h].out);

    // Some mask bits must be zero at dropout 0.4.
    NetConfig heavy = tiny_net();
    heavy.dropout = 0.4;
    Model hm(heavy, default_heads());
    hm.init_params(4);
    Workspace hw;
    hm.forward(pts, true, 9, hw);
    std::size_t zeros = 0, total = 0;
    for (const auto& hc : hw.heads) {
        for (auto v : hc.mask1) zeros += v == 0;
        total += hc.mask1.size();
    }
    CHECK(zeros > 0);
    CHECK(zeros < total);
}

TEST_CASE("parameter initialization is seeded and shaped") {
    Model a(tiny_net(), default_heads());
    Model b(tiny_net(), default_heads());
    a.init_params(42);
    b.init_params(42);
    CHECK(a.params().values == b.params().values);
    b.init_params(43);
    CHECK(a.params().values != b.params().values);

    // Final-layer biases are zero.
    for (const auto& blk : a.params().blocks)
        if (blk.name.ends_with("l3.b"))
            for (std::size_t i = blk.offset; i < blk.offset + blk.size; ++i)
                CHECK(a.params().values[i] == 0.0);
}

TEST_CASE("per-layer output variance stays within a decade of the input") {
    // Unit-Gaussian rows through one initialized linear layer.
    NetConfig c = tiny_net();
    Model m(c, default_heads());
    m.init_params(7);
    const auto& blocks = m.params().blocks;
    const double* w = nullptr;
    for (const auto& b : blocks)
        if (b.name == "enc.l2.w") w = m.params().values.data() + b.offset;
    REQUIRE(w != nullptr);
    Rng rng(8);
    const int rows = 4000, in = c.enc_hidden1, out = c.enc_hidden2;
    double ss = 0.0;
    std::size_t n = 0;
    for (int r = 0; r < rows; ++r) {
        std::vector<double> x(in);
        for (auto& v : x) v = rng.normal();
        for (int o = 0; o < out; ++o) {
            double acc = 0.0;
            for (int i = 0; i < in; ++i) acc += w[o * in + i] * x[i];
            ss += acc * acc;
            ++n;
        }
    }
    const double var = ss / static_cast<double>(n);
    CHECK(var > 0.1);
    CHECK(var < 10.0);
}

TEST_CASE("analytic gradients match central finite differences") {
    Model m(tiny_net(), default_heads());
    m.init_params(11);
    const auto pts = toy_cloud(10, 12);

    Workspace ws;
    const auto dout = objective_dout(m);
    m.forward(pts, false, 0, ws);
    std::vector<double> grads(m.param_count(), 0.0);
    m.backward(ws, dout, grads);

    const double h = 1e-5;
    double max_rel = 0.0;
    Rng pick(13);
    // Probe every block, sampling within large blocks.
    for (const auto& b : m.params().blocks) {
        const std::size_t stride = std::max<std::size_t>(1, b.size / 24);
        for (std::size_t k = pick.below(stride); k < b.size; k += stride) {
            const std::size_t i = b.offset + k;
            const double save = m.params().values[i];
            Workspace w1, w2;
            m.params().values[i] = save + h;
            const double f1 = objective(m, pts, w1);
            m.params().values[i] = save - h;
            const double f0 = objective(m, pts, w2);
            m.params().values[i] = save;
            const double fd = (f1 - f0) / (2.0 * h);
            const double scale = std::max({std::abs(fd), std::abs(grads[i]), 1e-6});
            max_rel = std::max(max_rel, std::abs(fd - grads[i]) / scale);
        }
    }
    CHECK(max_rel < 1e-4);
}

TEST_CASE("gradients of the masked loss match finite differences") {
    // Full path: forward -> masked sample loss over all heads -> backward.
    Model m(tiny_net(), default_heads());
    m.init_params(21);
    const auto pts = toy_cloud(8, 22);
    const auto heads = m.heads();
    LossConfig lc;

    MaskedTargetVector target{};
    Rng trng(23);
    for (int j = 0; j < 10; ++j) {
        target.mask[j] = j % 3 == 0 ? 0 : 1;  // some masked entries
        target.y[j] = trng.uniform(-1.5, 1.5);
    }

    auto loss_of = [&](Workspace& ws) {
        m.forward(pts, false, 0, ws);
        double total = 0.0;
        for (std::size_t h = 0; h < heads.size(); ++h)
            total += masked_sample_loss(ws.heads[h].out, target, heads[h], lc);
        return total;
    };

    Workspace ws;
    m.forward(pts, false, 0, ws);
    std::vector<std::vector<double>> dout;
    for (std::size_t h = 0; h < heads.size(); ++h) {
        std::vector<double> g;
        masked_sample_loss(ws.heads[h].out, target, heads[h], lc, &g);
        dout.push_back(g);
    }
    std::vector<double> grads(m.param_count(), 0.0);
    m.backward(ws, dout, grads);

    const double h = 1e-5;
    double max_rel = 0.0;
    for (const auto& b : m.params().blocks) {
        const std::size_t stride = std::max<std::size_t>(1, b.size / 16);
        for (std::size_t k = 0; k < b.size; k += stride) {
            const std::size_t i = b.offset + k;
            const double save = m.params().values[i];
            Workspace w1, w2;
            m.params().values[i] = save + h;
            const double f1 = loss_of(w1);
            m.params().values[i] = save - h;
            const double f0 = loss_of(w2);
            m.params().values[i] = save;
            const double fd = (f1 - f0) / (2.0 * h);
            const double scale = std::max({std::abs(fd), std::abs(grads[i]), 1e-6});
            max_rel = std::max(max_rel, std::abs(fd - grads[i]) / scale);
        }
    }
    CHECK(max_rel < 1e-4);
}

TEST_CASE("gradients are finite over random batches") {
    Model m(tiny_net(), default_heads());
    m.init_params(31);
    for (int rep = 0; rep < 100; ++rep) {
        const auto pts = toy_cloud(12, 1000 + rep);
        Workspace ws;
        m.forward(pts, true, 50 + rep, ws);
        std::vector<std::vector<double>> dout = objective_dout(m);
        std::vector<double> grads(m.param_count(), 0.0);
        m.backward(ws, dout, grads);
        for (double g : grads) REQUIRE(std::isfinite(g));
    }
}

TEST_CASE("gelu gradient matches finite differences") {
    for (double x : {-3.0, -1.0, -0.1, 0.0, 0.4, 2.5}) {
        const double h = 1e-6;
        const double fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
        CHECK(gelu_grad(x) == doctest::Approx(fd).epsilon(1e-6));
    }
}
