#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "bca/nn.hpp"

namespace bca {

// Ten regression targets with a per-target presence mask. Masked entries
// carry no semantic value.
struct MaskedTargetVector {
    std::array<double, 10> y{};
    std::array<std::uint8_t, 10> mask{};

    int labeled_in(const HeadSpec& h) const {
        int n = 0;
        for (int j : h.target_indices) n += mask[j] ? 1 : 0;
        return n;
    }
};

// Per-target z-score statistics fitted on training-split labeled values.
struct Normalizer {
    std::array<double, 10> mean{};
    std::array<double, 10> std{};

    MaskedTargetVector normalize(const MaskedTargetVector& t) const;
    MaskedTargetVector denormalize(const MaskedTargetVector& t) const;
};

// Two-pass fit over labeled entries only. Targets with fewer than two
// labeled values or zero variance get std 1.
Normalizer fit_normalizer(const std::vector<MaskedTargetVector>& train);

struct LossConfig {
    double huber_delta = 1.0;
    double epsilon = 1e-8;        // masked-mean denominator guard
    double dwa_temperature = 2.0;
};

// 0.5 r^2 inside |r| <= delta, linear outside; C1 at the transition.
double huber(double r, double delta);
double huber_grad(double r, double delta);

// Masked per-head sample loss: sum of per-target Huber terms over labeled
// targets, divided by (labeled count + epsilon). Writes d(loss)/d(pred) when
// `grad` is non-null; gradients of masked targets are exactly zero.
double masked_sample_loss(const std::vector<double>& pred, const MaskedTargetVector& target,
                          const HeadSpec& head, const LossConfig& cfg,
                          std::vector<double>* grad = nullptr);

// Loss-ratio-driven head weights normalized to sum to the head count.
struct DwaState {
    int head_count = 0;
    std::vector<double> prev1;  // mean loss at t-1
    std::vector<double> prev2;  // mean loss at t-2
    int epochs_recorded = 0;

    explicit DwaState(int heads = 0)
        : head_count(heads), prev1(heads, 0.0), prev2(heads, 0.0) {}

    void record_epoch(const std::vector<double>& mean_losses);
};

// Uniform weights until two epochs of history exist; a zero t-2 loss yields
// a neutral ratio for that head.
std::vector<double> dwa_weights(const DwaState& state, const LossConfig& cfg);

struct TotalLoss {
    double value = 0.0;
    std::vector<double> head_means;  // 0 where a head had no labeled samples
};

// Weighted sum of per-head batch means; `labeled_counts[h]` is the number of
// samples with at least one unmasked target in head h.
TotalLoss total_loss(const std::vector<std::vector<double>>& sample_head_losses,
                     const std::vector<int>& labeled_counts, const std::vector<double>& weights);

}  // namespace bca
