#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "bca/rng.hpp"
#include "bca/vec3.hpp"

namespace bca {

// Encoder and head dimensions. Paper-scale defaults; tests and desk runs
// shrink them through the train config.
struct NetConfig {
    int enc_hidden1 = 64;
    int enc_hidden2 = 128;
    int feature_dim = 512;
    std::array<int, 2> head_hidden{256, 128};
    double dropout = 0.1;
};

// Regression head over a subset of the canonical 10-target vector.
struct HeadSpec {
    std::string name;
    std::vector<int> target_indices;
    int output_dim() const { return static_cast<int>(target_indices.size()); }
};

// H (height), A (chest/waist/hip), BC (six composition volumes); together
// they partition indices 0..9.
std::vector<HeadSpec> default_heads();
std::vector<HeadSpec> heads_by_name(const std::vector<std::string>& names);

struct ParamBlock {
    std::string name;
    std::size_t offset = 0;
    std::size_t size = 0;
    bool decay = false;    // weight matrices only
    bool encoder = false;  // learning-rate group
};

struct Params {
    std::vector<double> values;
    std::vector<ParamBlock> blocks;
};

namespace detail {
struct LayerCache {
    std::vector<double> pre;   // rows x dim, linear output (pre-norm)
    std::vector<double> mu;    // per row
    std::vector<double> rstd;  // per row
    std::vector<double> act;   // rows x dim, post-activation
};
struct HeadCache {
    LayerCache l1, l2;
    std::vector<std::uint8_t> mask1, mask2;  // dropout keep masks
    std::vector<double> drop1, drop2;        // post-dropout activations
    std::vector<double> out;
};
}  // namespace detail

// Per-sample activation cache reused across forward/backward calls.
struct Workspace {
    int n_points = 0;
    std::vector<double> input;  // n x 6 normalized coordinates, duplicated
    detail::LayerCache e1, e2, e3;
    std::vector<int> argmax;      // feature_dim
    std::vector<double> feature;  // feature_dim
    std::vector<detail::HeadCache> heads;
};

// Max-pooled per-point MLP encoder with task heads. All math in doubles;
// forward/backward are deterministic given the dropout stream.
class Model {
public:
    Model(NetConfig cfg, std::vector<HeadSpec> heads);

    // Fan-in-scaled uniform weights, zero biases, identity layer norms.
    void init_params(std::uint64_t seed);

    // Shared feature from raw mm coordinates (centroid-centered, /1000,
    // duplicated to 6 channels inside). Throws on an empty cloud.
    void encode(const std::vector<Vec3>& points, Workspace& ws) const;

    // Head output in normalized target units. Dropout is active only in
    // train mode; its mask stream derives from (drop_seed, head name), so a
    // head's masks do not depend on which other heads exist.
    void head_forward(int head, bool train_mode, std::uint64_t drop_seed, Workspace& ws) const;

    // encode + all heads.
    void forward(const std::vector<Vec3>& points, bool train_mode, std::uint64_t drop_seed,
                 Workspace& ws) const;

    // Accumulates parameter gradients for d(loss)/d(head outputs) into
    // `grads` (same layout as params). `dout[h]` may be empty to skip head h.
    void backward(const Workspace& ws, const std::vector<std::vector<double>>& dout,
                  std::vector<double>& grads) const;

    const Params& params() const { return params_; }
    Params& params() { return params_; }
    const NetConfig& config() const { return cfg_; }
    const std::vector<HeadSpec>& heads() const { return heads_; }
    std::size_t param_count() const { return params_.values.size(); }

private:
    NetConfig cfg_;
    std::vector<HeadSpec> heads_;
    Params params_;
    std::vector<std::size_t> off_;  // block offsets in layout order
};

inline constexpr double kInputScaleMm = 1000.0;  // mm -> activation units
inline constexpr double kLayerNormEps = 1e-5;

double gelu(double x);
double gelu_grad(double x);

}  // namespace bca
