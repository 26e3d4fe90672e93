#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bca/dataset.hpp"
#include "bca/loss.hpp"
#include "bca/nn.hpp"

namespace bca {

struct TrainConfig {
    int epochs = 150;
    int batch_size = 6;
    double lr_encoder = 5e-5;
    double lr_heads = 1e-4;
    int warmup_epochs = 10;
    double weight_decay = 0.01;
    double clip_norm = 1.0;  // <= 0 disables clipping
    std::uint64_t seed = 0;
    bool dwa = true;
    bool nh_labeled_only = true;  // head-mean denominator: labeled samples vs all
    std::size_t max_points = 2048;  // per-cloud subsample before encoding
    std::vector<std::string> head_names{"H", "A", "BC"};
    NetConfig net;
    LossConfig loss;
};

TrainConfig load_train_config(const std::string& path);
void save_train_config(const TrainConfig& cfg, const std::string& path);

// Linear warmup to the base rate, then cosine decay to zero at `epochs`.
double lr_schedule(int epoch, int epochs, int warmup_epochs, double base_lr);

// Adam moment state over the flat parameter vector.
struct AdamState {
    std::vector<double> m, v;
    int t = 0;

    explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

// Global-norm clipping, bias-corrected moments, decoupled weight decay on
// decay-flagged blocks. Throws Error("numeric") naming the first block with a
// non-finite gradient.
void optimizer_step(Params& params, const std::vector<double>& grads, AdamState& state,
                    double lr_encoder, double lr_heads, double weight_decay, double clip_norm);

// One sample staged for a batch pass.
struct BatchSample {
    const std::vector<Vec3>* points = nullptr;
    MaskedTargetVector target;      // normalized units
    std::uint64_t drop_seed = 0;
};

struct BatchResult {
    std::vector<double> grads;                      // sum over samples, ordered
    std::vector<std::vector<double>> head_losses;   // [sample][head]
    std::vector<int> labeled_counts;                // per head
};

// Forward + masked loss + backward over a batch. Per-sample gradients are
// reduced in sample order, so the result is independent of thread count.
BatchResult batch_forward_backward(const Model& model, const std::vector<BatchSample>& batch,
                                   const std::vector<double>& head_weights, const LossConfig& cfg,
                                   bool nh_labeled_only, bool train_mode, bool parallel);

struct Checkpoint {
    NetConfig net;
    std::vector<HeadSpec> heads;
    Normalizer normalizer;
    std::uint64_t seed = 0;
    Params params;
};

// Directory pair: manifest.json + params.bin (raw little-endian float64).
void save_checkpoint(const Checkpoint& ckpt, const std::string& dir);
Checkpoint load_checkpoint(const std::string& dir);

Model model_from_checkpoint(const Checkpoint& ckpt);

struct TrainResult {
    std::string checkpoint_dir;
    std::string log_path;
    int best_epoch = -1;
    double best_val = 0.0;
};

// Deterministic given (seed, config, data). Fits the normalizer on the train
// split only, selects the checkpoint by validation total loss (uniform head
// weights), writes a JSON-lines log with one record per epoch.
TrainResult train(const Dataset& data, const TrainConfig& cfg, const std::string& out_dir);

namespace ref {
BatchResult batch_forward_backward(const Model& model, const std::vector<BatchSample>& batch,
                                   const std::vector<double>& head_weights, const LossConfig& cfg,
                                   bool nh_labeled_only, bool train_mode);
}

}  // namespace bca
