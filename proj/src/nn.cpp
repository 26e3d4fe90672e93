#include "bca/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "bca/error.hpp"

namespace bca {

namespace {

constexpr std::uint64_t kInitStream = 0x1217;

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Offsets into Model::off_. The encoder owns 12 slots, each head 10.
enum EncSlot { EW1, EB1, EG1, EBe1, EW2, EB2, EG2, EBe2, EW3, EB3, EG3, EBe3, kEncSlots };
enum HeadSlot { HW1, HB1, HG1, HBe1, HW2, HB2, HG2, HBe2, HW3, HB3, kHeadSlots };

void linear_forward(const double* x, int rows, int in, const double* w, const double* b, int out,
                    double* y) {
    for (int r = 0; r < rows; ++r) {
        const double* xr = x + static_cast<std::size_t>(r) * in;
        double* yr = y + static_cast<std::size_t>(r) * out;
        for (int o = 0; o < out; ++o) {
            const double* wr = w + static_cast<std::size_t>(o) * in;
            double acc = b[o];
            for (int i = 0; i < in; ++i) acc += wr[i] * xr[i];
            yr[o] = acc;
        }
    }
}

// LayerNorm + GELU over each row; caches stats and the activation.
void norm_gelu_forward(const double* pre, int rows, int dim, const double* gamma,
                       const double* beta, double* mu, double* rstd, double* act) {
    for (int r = 0; r < rows; ++r) {
        const double* x = pre + static_cast<std::size_t>(r) * dim;
        double* a = act + static_cast<std::size_t>(r) * dim;
        double m = 0.0;
        for (int j = 0; j < dim; ++j) m += x[j];
        m /= dim;
        double var = 0.0;
        for (int j = 0; j < dim; ++j) {
            const double d = x[j] - m;
            var += d * d;
        }
        var /= dim;
        const double rs = 1.0 / std::sqrt(var + kLayerNormEps);
        mu[r] = m;
        rstd[r] = rs;
        for (int j = 0; j < dim; ++j) a[j] = gelu(gamma[j] * ((x[j] - m) * rs) + beta[j]);
    }
}

// Backward of norm_gelu_forward for one row. `dact` is the gradient at the
// GELU output; accumulates dgamma/dbeta and writes dpre.
void norm_gelu_backward_row(const double* pre, double mu, double rstd, const double* gamma,
                            const double* beta, const double* dact, int dim, double* dgamma,
                            double* dbeta, double* dpre) {
    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
    // First pass: gradient at the norm output, projected through GELU.
    for (int j = 0; j < dim; ++j) {
        const double xhat = (pre[j] - mu) * rstd;
        const double y = gamma[j] * xhat + beta[j];
        const double dy = dact[j] * gelu_grad(y);
        dgamma[j] += dy * xhat;
        dbeta[j] += dy;
        const double dxhat = dy * gamma[j];
        dpre[j] = dxhat;  // staging
        mean_dxhat += dxhat;
        mean_dxhat_xhat += dxhat * xhat;
    }
    mean_dxhat /= dim;
    mean_dxhat_xhat /= dim;
    for (int j = 0; j < dim; ++j) {
        const double xhat = (pre[j] - mu) * rstd;
        dpre[j] = rstd * (dpre[j] - mean_dxhat - xhat * mean_dxhat_xhat);
    }
}

// dY (rows x out) through y = x W^T + b: accumulates dW, dB, writes dX.
void linear_backward(const double* x, const double* dy, int rows, int in, const double* w, int out,
                     double* dw, double* db, double* dx) {
    for (int r = 0; r < rows; ++r) {
        const double* xr = x + static_cast<std::size_t>(r) * in;
        const double* dyr = dy + static_cast<std::size_t>(r) * out;
        double* dxr = dx ? dx + static_cast<std::size_t>(r) * in : nullptr;
        if (dxr) std::fill(dxr, dxr + in, 0.0);
        for (int o = 0; o < out; ++o) {
            const double g = dyr[o];
            if (g == 0.0) continue;
            double* dwr = dw + static_cast<std::size_t>(o) * in;
            const double* wr = w + static_cast<std::size_t>(o) * in;
            db[o] += g;
            for (int i = 0; i < in; ++i) {
                dwr[i] += g * xr[i];
                if (dxr) dxr[i] += g * wr[i];
            }
        }
    }
}

}  // namespace

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_grad(double x) {
    const double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    const double Phi = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
    return Phi + x * phi;
}

std::vector<HeadSpec> default_heads() {
    return {{"H", {0}}, {"A", {1, 2, 3}}, {"BC", {4, 5, 6, 7, 8, 9}}};
}

std::vector<HeadSpec> heads_by_name(const std::vector<std::string>& names) {
    std::vector<HeadSpec> out;
    for (const auto& n : names) {
        bool found = false;
        for (auto& h : default_heads()) {
            if (h.name == n) {
                out.push_back(h);
                found = true;
            }
        }
        if (!found) throw Error::invalid("unknown head name: " + n);
    }
    if (out.empty()) throw Error::invalid("at least one head is required");
    return out;
}

Model::Model(NetConfig cfg, std::vector<HeadSpec> heads) : cfg_(cfg), heads_(std::move(heads)) {
    if (cfg_.enc_hidden1 < 1 || cfg_.enc_hidden2 < 1 || cfg_.feature_dim < 1 ||
        cfg_.head_hidden[0] < 1 || cfg_.head_hidden[1] < 1)
        throw Error::invalid("network dimensions must be positive");
    if (!(cfg_.dropout >= 0.0 && cfg_.dropout < 1.0))
        throw Error::invalid("dropout must be in [0, 1)");
    if (heads_.empty()) throw Error::invalid("model requires at least one head");

    auto add = [&](const std::string& name, std::size_t n, bool decay, bool enc) {
        ParamBlock b;
        b.name = name;
        b.offset = params_.values.size();
        b.size = n;
        b.decay = decay;
        b.encoder = enc;
        off_.push_back(b.offset);
        params_.blocks.push_back(b);
        params_.values.resize(params_.values.size() + n, 0.0);
    };

    const int h1 = cfg_.enc_hidden1, h2 = cfg_.enc_hidden2, fd = cfg_.feature_dim;
    add("enc.l1.w", static_cast<std::size_t>(h1) * 6, true, true);
    add("enc.l1.b", h1, false, true);
    add("enc.n1.g", h1, false, true);
    add("enc.n1.b", h1, false, true);
    add("enc.l2.w", static_cast<std::size_t>(h2) * h1, true, true);
    add("enc.l2.b", h2, false, true);
    add("enc.n2.g", h2, false, true);
    add("enc.n2.b", h2, false, true);
    add("enc.l3.w", static_cast<std::size_t>(fd) * h2, true, true);
    add("enc.l3.b", fd, false, true);
    add("enc.n3.g", fd, false, true);
    add("enc.n3.b", fd, false, true);

    const int a1 = cfg_.head_hidden[0], a2 = cfg_.head_hidden[1];
    for (const auto& h : heads_) {
        if (h.target_indices.empty()) throw Error::invalid("head " + h.name + " has no targets");
        const std::string p = "head." + h.name + ".";
        add(p + "l1.w", static_cast<std::size_t>(a1) * fd, true, false);
        add(p + "l1.b", a1, false, false);
        add(p + "n1.g", a1, false, false);
        add(p + "n1.b", a1, false, false);
        add(p + "l2.w", static_cast<std::size_t>(a2) * a1, true, false);
        add(p + "l2.b", a2, false, false);
        add(p + "n2.g", a2, false, false);
        add(p + "n2.b", a2, false, false);
        add(p + "l3.w", static_cast<std::size_t>(h.output_dim()) * a2, true, false);
        add(p + "l3.b", h.output_dim(), false, false);
    }
}

void Model::init_params(std::uint64_t seed) {
    Rng rng = substream(seed, {kInitStream});
    auto& v = params_.values;
    for (const auto& b : params_.blocks) {
        if (b.name.ends_with(".w")) {
            // Fan-in from the block shape; weights are row-major out x in.
            std::size_t in = 0;
            if (b.name == "enc.l1.w") in = 6;
            else if (b.name == "enc.l2.w") in = cfg_.enc_hidden1;
            else if (b.name == "enc.l3.w") in = cfg_.enc_hidden2;
            else if (b.name.ends_with("l1.w")) in = cfg_.feature_dim;
            else if (b.name.ends_with("l2.w")) in = cfg_.head_hidden[0];
            else in = cfg_.head_hidden[1];
            const double lim = 1.0 / std::sqrt(static_cast<double>(in));
            for (std::size_t i = 0; i < b.size; ++i) v[b.offset + i] = rng.uniform(-lim, lim);
        } else if (b.name.ends_with("n1.g") || b.name.ends_with("n2.g") || b.name.ends_with("n3.g")) {
            for (std::size_t i = 0; i < b.size; ++i) v[b.offset + i] = 1.0;
        } else {
            for (std::size_t i = 0; i < b.size; ++i) v[b.offset + i] = 0.0;
        }
    }
}

void Model::encode(const std::vector<Vec3>& points, Workspace& ws) const {
    const int n = static_cast<int>(points.size());
    if (n < 1) throw Error::invalid("cannot encode an empty point cloud");
    const int h1 = cfg_.enc_hidden1, h2 = cfg_.enc_hidden2, fd = cfg_.feature_dim;
    const double* v = params_.values.data();

    ws.n_points = n;
    ws.input.resize(static_cast<std::size_t>(n) * 6);
    // Centroid over the sorted coordinate multiset, so the feature is
    // bitwise invariant under point permutation.
    Vec3 c{0, 0, 0};
    {
        std::vector<double> vals(n);
        for (int axis = 0; axis < 3; ++axis) {
            for (int i = 0; i < n; ++i) vals[i] = points[i][axis];
            std::sort(vals.begin(), vals.end());
            double s = 0.0;
            for (double v : vals) s += v;
            c[axis] = s / static_cast<double>(n);
        }
    }
    for (int i = 0; i < n; ++i) {
        const Vec3 q = (points[i] - c) / kInputScaleMm;
        double* row = ws.input.data() + static_cast<std::size_t>(i) * 6;
        row[0] = row[3] = q.x;
        row[1] = row[4] = q.y;
        row[2] = row[5] = q.z;
    }

    auto run_layer = [&](detail::LayerCache& lc, const double* x, int in, int out, int wslot) {
        lc.pre.resize(static_cast<std::size_t>(n) * out);
        lc.mu.resize(n);
        lc.rstd.resize(n);
        lc.act.resize(static_cast<std::size_t>(n) * out);
        linear_forward(x, n, in, v + off_[wslot], v + off_[wslot + 1], out, lc.pre.data());
        norm_gelu_forward(lc.pre.data(), n, out, v + off_[wslot + 2], v + off_[wslot + 3],
                          lc.mu.data(), lc.rstd.data(), lc.act.data());
    };
    run_layer(ws.e1, ws.input.data(), 6, h1, EW1);
    run_layer(ws.e2, ws.e1.act.data(), h1, h2, EW2);
    run_layer(ws.e3, ws.e2.act.data(), h2, fd, EW3);

    ws.feature.resize(fd);
    ws.argmax.resize(fd);
    for (int j = 0; j < fd; ++j) {
        double best = ws.e3.act[j];
        int arg = 0;
        for (int r = 1; r < n; ++r) {
            const double a = ws.e3.act[static_cast<std::size_t>(r) * fd + j];
            if (a > best) {
                best = a;
                arg = r;
            }
        }
        ws.feature[j] = best;
        ws.argmax[j] = arg;
    }
}

void Model::head_forward(int head, bool train_mode, std::uint64_t drop_seed, Workspace& ws) const {
    const auto& spec = heads_.at(head);
    const int fd = cfg_.feature_dim, a1 = cfg_.head_hidden[0], a2 = cfg_.head_hidden[1];
    const int out_dim = spec.output_dim();
    const double* v = params_.values.data();
    const std::size_t base = kEncSlots + static_cast<std::size_t>(head) * kHeadSlots;

    ws.heads.resize(heads_.size());
    auto& hc = ws.heads[head];
    const double p = cfg_.dropout;
    const bool drop = train_mode && p > 0.0;
    Rng rng = substream(drop_seed, {fnv1a(spec.name)});

    auto run = [&](detail::LayerCache& lc, std::vector<std::uint8_t>& mask,
                   std::vector<double>& dropped, const double* x, int in, int dim,
                   std::size_t wslot) {
        lc.pre.resize(dim);
        lc.mu.resize(1);
        lc.rstd.resize(1);
        lc.act.resize(dim);
        linear_forward(x, 1, in, v + off_[wslot], v + off_[wslot + 1], dim, lc.pre.data());
        norm_gelu_forward(lc.pre.data(), 1, dim, v + off_[wslot + 2], v + off_[wslot + 3],
                          lc.mu.data(), lc.rstd.data(), lc.act.data());
        dropped.resize(dim);
        if (drop) {
            mask.resize(dim);
            const double scale = 1.0 / (1.0 - p);
            for (int j = 0; j < dim; ++j) {
                mask[j] = rng.uniform01() >= p ? 1 : 0;
                dropped[j] = mask[j] ? lc.act[j] * scale : 0.0;
            }
        } else {
            mask.clear();
            std::copy(lc.act.begin(), lc.act.end(), dropped.begin());
        }
    };
    run(hc.l1, hc.mask1, hc.drop1, ws.feature.data(), fd, a1, base + HW1);
    run(hc.l2, hc.mask2, hc.drop2, hc.drop1.data(), a1, a2, base + HW2);
    hc.out.resize(out_dim);
    linear_forward(hc.drop2.data(), 1, a2, v + off_[base + HW3], v + off_[base + HB3], out_dim,
                   hc.out.data());
}

void Model::forward(const std::vector<Vec3>& points, bool train_mode, std::uint64_t drop_seed,
                    Workspace& ws) const {
    encode(points, ws);
    for (std::size_t h = 0; h < heads_.size(); ++h)
        head_forward(static_cast<int>(h), train_mode, drop_seed, ws);
}

void Model::backward(const Workspace& ws, const std::vector<std::vector<double>>& dout,
                     std::vector<double>& grads) const {
    if (dout.size() != heads_.size()) throw Error::invalid("dout size must match head count");
    if (grads.size() != params_.values.size()) throw Error::invalid("gradient buffer size mismatch");
    const int fd = cfg_.feature_dim, a1 = cfg_.head_hidden[0], a2 = cfg_.head_hidden[1];
    const int h1 = cfg_.enc_hidden1, h2 = cfg_.enc_hidden2;
    const double* v = params_.values.data();
    double* g = grads.data();
    const double p = cfg_.dropout;

    std::vector<double> dfeat(fd, 0.0);
    bool any_head = false;

    std::vector<double> dd2(a2), dg2(a2), dpre2(a2), dd1(a1), dg1(a1), dpre1(a1);
    for (std::size_t h = 0; h < heads_.size(); ++h) {
        if (dout[h].empty()) continue;
        any_head = true;
        const auto& hc = ws.heads.at(h);
        const std::size_t base = kEncSlots + h * kHeadSlots;
        const int out_dim = heads_[h].output_dim();
        if (static_cast<int>(dout[h].size()) != out_dim)
            throw Error::invalid("dout dimension mismatch for head " + heads_[h].name);

        // Final linear.
        linear_backward(hc.drop2.data(), dout[h].data(), 1, a2, v + off_[base + HW3], out_dim,
                        g + off_[base + HW3], g + off_[base + HB3], dd2.data());
        // Dropout 2.
        if (!hc.mask2.empty()) {
            const double scale = 1.0 / (1.0 - p);
            for (int j = 0; j < a2; ++j) dg2[j] = hc.mask2[j] ? dd2[j] * scale : 0.0;
        } else {
            dg2 = dd2;
        }
        norm_gelu_backward_row(hc.l2.pre.data(), hc.l2.mu[0], hc.l2.rstd[0], v + off_[base + HG2],
                               v + off_[base + HBe2], dg2.data(), a2, g + off_[base + HG2],
                               g + off_[base + HBe2], dpre2.data());
        linear_backward(hc.drop1.data(), dpre2.data(), 1, a1, v + off_[base + HW2], a2,
                        g + off_[base + HW2], g + off_[base + HB2], dd1.data());
        if (!hc.mask1.empty()) {
            const double scale = 1.0 / (1.0 - p);
            for (int j = 0; j < a1; ++j) dg1[j] = hc.mask1[j] ? dd1[j] * scale : 0.0;
        } else {
            dg1 = dd1;
        }
        norm_gelu_backward_row(hc.l1.pre.data(), hc.l1.mu[0], hc.l1.rstd[0], v + off_[base + HG1],
                               v + off_[base + HBe1], dg1.data(), a1, g + off_[base + HG1],
                               g + off_[base + HBe1], dpre1.data());
        std::vector<double> dfeat_h(fd);
        linear_backward(ws.feature.data(), dpre1.data(), 1, fd, v + off_[base + HW1], a1,
                        g + off_[base + HW1], g + off_[base + HB1], dfeat_h.data());
        for (int j = 0; j < fd; ++j) dfeat[j] += dfeat_h[j];
    }
    if (!any_head) return;

    // Max pooling routes each feature gradient to its argmax point; only
    // those rows participate in the encoder backward.
    std::vector<int> rows = ws.argmax;
    std::sort(rows.begin(), rows.end());
    rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
    const int nr = static_cast<int>(rows.size());
    std::vector<int> slot_of(ws.n_points, -1);
    for (int s = 0; s < nr; ++s) slot_of[rows[s]] = s;

    auto gather = [&](const std::vector<double>& full, int dim, std::vector<double>& outv) {
        outv.resize(static_cast<std::size_t>(nr) * dim);
        for (int s = 0; s < nr; ++s)
            std::copy(full.begin() + static_cast<std::size_t>(rows[s]) * dim,
                      full.begin() + static_cast<std::size_t>(rows[s] + 1) * dim,
                      outv.begin() + static_cast<std::size_t>(s) * dim);
    };

    std::vector<double> dact3(static_cast<std::size_t>(nr) * fd, 0.0);
    for (int j = 0; j < fd; ++j) dact3[static_cast<std::size_t>(slot_of[ws.argmax[j]]) * fd + j] += dfeat[j];

    std::vector<double> pre3, act2, pre2, act1, pre1, in0;
    gather(ws.e3.pre, fd, pre3);
    gather(ws.e2.act, h2, act2);
    gather(ws.e2.pre, h2, pre2);
    gather(ws.e1.act, h1, act1);
    gather(ws.e1.pre, h1, pre1);
    gather(ws.input, 6, in0);

    std::vector<double> dpre3(static_cast<std::size_t>(nr) * fd);
    for (int s = 0; s < nr; ++s)
        norm_gelu_backward_row(pre3.data() + static_cast<std::size_t>(s) * fd, ws.e3.mu[rows[s]],
                               ws.e3.rstd[rows[s]], v + off_[EG3], v + off_[EBe3],
                               dact3.data() + static_cast<std::size_t>(s) * fd, fd, g + off_[EG3],
                               g + off_[EBe3], dpre3.data() + static_cast<std::size_t>(s) * fd);
    std::vector<double> dact2(static_cast<std::size_t>(nr) * h2);
    linear_backward(act2.data(), dpre3.data(), nr, h2, v + off_[EW3], fd, g + off_[EW3],
                    g + off_[EB3], dact2.data());
    std::vector<double> dpre2e(static_cast<std::size_t>(nr) * h2);
    for (int s = 0; s < nr; ++s)
        norm_gelu_backward_row(pre2.data() + static_cast<std::size_t>(s) * h2, ws.e2.mu[rows[s]],
                               ws.e2.rstd[rows[s]], v + off_[EG2], v + off_[EBe2],
                               dact2.data() + static_cast<std::size_t>(s) * h2, h2, g + off_[EG2],
                               g + off_[EBe2], dpre2e.data() + static_cast<std::size_t>(s) * h2);
    std::vector<double> dact1(static_cast<std::size_t>(nr) * h1);
    linear_backward(act1.data(), dpre2e.data(), nr, h1, v + off_[EW2], h2, g + off_[EW2],
                    g + off_[EB2], dact1.data());
    std::vector<double> dpre1e(static_cast<std::size_t>(nr) * h1);
    for (int s = 0; s < nr; ++s)
        norm_gelu_backward_row(pre1.data() + static_cast<std::size_t>(s) * h1, ws.e1.mu[rows[s]],
                               ws.e1.rstd[rows[s]], v + off_[EG1], v + off_[EBe1],
                               dact1.data() + static_cast<std::size_t>(s) * h1, h1, g + off_[EG1],
                               g + off_[EBe1], dpre1e.data() + static_cast<std::size_t>(s) * h1);
    linear_backward(in0.data(), dpre1e.data(), nr, 6, v + off_[EW1], h1, g + off_[EW1],
                    g + off_[EB1], nullptr);
}

}  // namespace bca
