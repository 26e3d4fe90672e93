#include "bca/loss.hpp"

#include <cmath>
#include <cstdio>

#include "bca/error.hpp"

namespace bca {

MaskedTargetVector Normalizer::normalize(const MaskedTargetVector& t) const {
    MaskedTargetVector out = t;
    for (int j = 0; j < 10; ++j)
        if (t.mask[j]) out.y[j] = (t.y[j] - mean[j]) / std[j];
    return out;
}

MaskedTargetVector Normalizer::denormalize(const MaskedTargetVector& t) const {
    MaskedTargetVector out = t;
    for (int j = 0; j < 10; ++j)
        if (t.mask[j]) out.y[j] = t.y[j] * std[j] + mean[j];
    return out;
}

Normalizer fit_normalizer(const std::vector<MaskedTargetVector>& train) {
    Normalizer n;
    for (int j = 0; j < 10; ++j) {
        double sum = 0.0;
        std::size_t count = 0;
        for (const auto& t : train)
            if (t.mask[j]) {
                sum += t.y[j];
                ++count;
            }
        const double mean = count > 0 ? sum / static_cast<double>(count) : 0.0;
        double ss = 0.0;
        for (const auto& t : train)
            if (t.mask[j]) ss += (t.y[j] - mean) * (t.y[j] - mean);
        double sd = count >= 2 ? std::sqrt(ss / static_cast<double>(count)) : 0.0;
        if (!(sd > 0.0)) sd = 1.0;
        n.mean[j] = mean;
        n.std[j] = sd;
    }
    return n;
}

double huber(double r, double delta) {
    const double a = std::abs(r);
    return a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
}

double huber_grad(double r, double delta) {
    if (std::abs(r) <= delta) return r;
    return r > 0.0 ? delta : -delta;
}

double masked_sample_loss(const std::vector<double>& pred, const MaskedTargetVector& target,
                          const HeadSpec& head, const LossConfig& cfg, std::vector<double>* grad) {
    if (pred.size() != head.target_indices.size())
        throw Error::invalid("prediction size does not match head " + head.name);
    if (grad) grad->assign(pred.size(), 0.0);
    double num = 0.0;
    int labeled = 0;
    for (std::size_t k = 0; k < head.target_indices.size(); ++k) {
        const int j = head.target_indices[k];
        if (!target.mask[j]) continue;
        ++labeled;
        num += huber(pred[k] - target.y[j], cfg.huber_delta);
    }
    const double denom = static_cast<double>(labeled) + cfg.epsilon;
    if (grad && labeled > 0) {
        for (std::size_t k = 0; k < head.target_indices.size(); ++k) {
            const int j = head.target_indices[k];
            if (!target.mask[j]) continue;
            (*grad)[k] = huber_grad(pred[k] - target.y[j], cfg.huber_delta) / denom;
        }
    }
    return num / denom;
}

void DwaState::record_epoch(const std::vector<double>& mean_losses) {
    if (static_cast<int>(mean_losses.size()) != head_count)
        throw Error::invalid("DWA history size mismatch");
    prev2 = prev1;
    prev1 = mean_losses;
    ++epochs_recorded;
}

std::vector<double> dwa_weights(const DwaState& state, const LossConfig& cfg) {
    const int H = state.head_count;
    std::vector<double> w(H, 1.0);
    if (state.epochs_recorded < 2) return w;
    std::vector<double> e(H);
    double sum = 0.0;
    for (int h = 0; h < H; ++h) {
        double r = 1.0;
        if (state.prev2[h] == 0.0) {
            std::fprintf(stderr,
                         "warning: zero loss history for head %d, using neutral ratio\n", h);
        } else {
            r = state.prev1[h] / state.prev2[h];
        }
        e[h] = std::exp(r / cfg.dwa_temperature);
        sum += e[h];
    }
    for (int h = 0; h < H; ++h) w[h] = static_cast<double>(H) * e[h] / sum;
    return w;
}

TotalLoss total_loss(const std::vector<std::vector<double>>& sample_head_losses,
                     const std::vector<int>& labeled_counts, const std::vector<double>& weights) {
    const std::size_t H = labeled_counts.size();
    if (weights.size() != H) throw Error::invalid("weights/head count mismatch");
    TotalLoss out;
    out.head_means.assign(H, 0.0);
    for (const auto& s : sample_head_losses)
        if (s.size() != H) throw Error::invalid("sample loss vector size mismatch");
    for (std::size_t h = 0; h < H; ++h) {
        if (labeled_counts[h] <= 0) continue;
        double sum = 0.0;
        for (const auto& s : sample_head_losses) sum += s[h];
        out.head_means[h] = sum / static_cast<double>(labeled_counts[h]);
        out.value += weights[h] * out.head_means[h];
    }
    return out;
}

}  // namespace bca
