#include "bca/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "bca/error.hpp"
#include "bca/procgen.hpp"
#include "bca/rng.hpp"
#include "bca/scan_sim.hpp"

namespace bca {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

enum : std::uint64_t { kStreamShuffle = 0x50FF, kStreamDrop = 0xD809, kStreamSubsample = 0x5B5A };

constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8;

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

double lr_schedule(int epoch, int epochs, int warmup_epochs, double base_lr) {
    if (epoch <= 0 && warmup_epochs > 0) return 0.0;
    if (warmup_epochs > 0 && epoch < warmup_epochs)
        return base_lr * static_cast<double>(epoch) / static_cast<double>(warmup_epochs);
    if (epochs <= warmup_epochs) return base_lr;
    const double u = static_cast<double>(epoch - warmup_epochs) /
                     static_cast<double>(epochs - warmup_epochs);
    return base_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * u));
}

void optimizer_step(Params& params, const std::vector<double>& grads, AdamState& state,
                    double lr_encoder, double lr_heads, double weight_decay, double clip_norm) {
    const std::size_t n = params.values.size();
    if (grads.size() != n) throw Error::invalid("gradient size mismatch");
    if (state.m.size() != n) throw Error::invalid("optimizer state size mismatch");

    for (const auto& b : params.blocks)
        for (std::size_t i = b.offset; i < b.offset + b.size; ++i)
            if (!std::isfinite(grads[i]))
                throw Error::numeric("non-finite gradient in block " + b.name);

    double scale = 1.0;
    if (clip_norm > 0.0) {
        double sq = 0.0;
        for (double g : grads) sq += g * g;
        const double gnorm = std::sqrt(sq);
        if (gnorm > clip_norm) scale = clip_norm / gnorm;
    }

    ++state.t;
    const double bc1 = 1.0 - std::pow(kBeta1, state.t);
    const double bc2 = 1.0 - std::pow(kBeta2, state.t);
    for (const auto& b : params.blocks) {
        const double lr = b.encoder ? lr_encoder : lr_heads;
        for (std::size_t i = b.offset; i < b.offset + b.size; ++i) {
            const double g = grads[i] * scale;
            state.m[i] = kBeta1 * state.m[i] + (1.0 - kBeta1) * g;
            state.v[i] = kBeta2 * state.v[i] + (1.0 - kBeta2) * g * g;
            const double mhat = state.m[i] / bc1;
            const double vhat = state.v[i] / bc2;
            params.values[i] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
            if (b.decay && weight_decay > 0.0)
                params.values[i] -= lr * weight_decay * params.values[i];
        }
    }
}

namespace {

BatchResult batch_impl(const Model& model, const std::vector<BatchSample>& batch,
                       const std::vector<double>& head_weights, const LossConfig& cfg,
                       bool nh_labeled_only, bool train_mode, bool parallel) {
    const auto& heads = model.heads();
    const std::size_t H = heads.size();
    if (head_weights.size() != H) throw Error::invalid("head weight count mismatch");
    const int B = static_cast<int>(batch.size());

    BatchResult out;
    out.labeled_counts.assign(H, 0);
    for (const auto& s : batch)
        for (std::size_t h = 0; h < H; ++h)
            if (s.target.labeled_in(heads[h]) > 0) ++out.labeled_counts[h];
    std::vector<int> denom(H);
    for (std::size_t h = 0; h < H; ++h)
        denom[h] = nh_labeled_only ? out.labeled_counts[h] : B;

    out.head_losses.assign(B, std::vector<double>(H, 0.0));
    std::vector<std::vector<double>> sample_grads(B);
    const std::size_t P = model.param_count();

#pragma omp parallel for schedule(dynamic) if (parallel && B > 1)
    for (int i = 0; i < B; ++i) {
        Workspace ws;
        const BatchSample& s = batch[i];
        model.forward(*s.points, train_mode, s.drop_seed, ws);
        std::vector<std::vector<double>> dout(H);
        bool any = false;
        for (std::size_t h = 0; h < H; ++h) {
            if (denom[h] <= 0) continue;  // head absent from batch: skipped entirely
            std::vector<double> grad;
            const double l =
                masked_sample_loss(ws.heads[h].out, s.target, heads[h], cfg, &grad);
            out.head_losses[i][h] = l;
            if (s.target.labeled_in(heads[h]) == 0) continue;
            const double w = head_weights[h] / static_cast<double>(denom[h]);
            for (auto& g : grad) g *= w;
            dout[h] = std::move(grad);
            any = true;
        }
        if (any) {
            sample_grads[i].assign(P, 0.0);
            model.backward(ws, dout, sample_grads[i]);
        }
    }

    out.grads.assign(P, 0.0);
    for (int i = 0; i < B; ++i) {
        if (sample_grads[i].empty()) continue;
        for (std::size_t k = 0; k < P; ++k) out.grads[k] += sample_grads[i][k];
    }
    return out;
}

}  // namespace

BatchResult batch_forward_backward(const Model& model, const std::vector<BatchSample>& batch,
                                   const std::vector<double>& head_weights, const LossConfig& cfg,
                                   bool nh_labeled_only, bool train_mode, bool parallel) {
    return batch_impl(model, batch, head_weights, cfg, nh_labeled_only, train_mode, parallel);
}

namespace ref {
BatchResult batch_forward_backward(const Model& model, const std::vector<BatchSample>& batch,
                                   const std::vector<double>& head_weights, const LossConfig& cfg,
                                   bool nh_labeled_only, bool train_mode) {
    return batch_impl(model, batch, head_weights, cfg, nh_labeled_only, train_mode, false);
}
}  // namespace ref

TrainConfig load_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error::io("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw Error::format(path + ": " + e.what());
    }
    TrainConfig c;
    try {
        if (j.contains("epochs")) c.epochs = j["epochs"].get<int>();
        if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
        if (j.contains("lr_encoder")) c.lr_encoder = j["lr_encoder"].get<double>();
        if (j.contains("lr_heads")) c.lr_heads = j["lr_heads"].get<double>();
        if (j.contains("warmup_epochs")) c.warmup_epochs = j["warmup_epochs"].get<int>();
        if (j.contains("weight_decay")) c.weight_decay = j["weight_decay"].get<double>();
        if (j.contains("clip_norm")) c.clip_norm = j["clip_norm"].get<double>();
        if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("dwa")) c.dwa = j["dwa"].get<bool>();
        if (j.contains("nh_labeled_only")) c.nh_labeled_only = j["nh_labeled_only"].get<bool>();
        if (j.contains("max_points")) c.max_points = j["max_points"].get<std::size_t>();
        if (j.contains("heads")) c.head_names = j["heads"].get<std::vector<std::string>>();
        if (j.contains("encoder")) {
            auto e = j["encoder"];
            if (e.contains("hidden1")) c.net.enc_hidden1 = e["hidden1"].get<int>();
            if (e.contains("hidden2")) c.net.enc_hidden2 = e["hidden2"].get<int>();
            if (e.contains("feature_dim")) c.net.feature_dim = e["feature_dim"].get<int>();
        }
        if (j.contains("head_hidden")) {
            c.net.head_hidden = {j["head_hidden"].at(0).get<int>(),
                                 j["head_hidden"].at(1).get<int>()};
        }
        if (j.contains("dropout")) c.net.dropout = j["dropout"].get<double>();
        if (j.contains("huber_delta")) c.loss.huber_delta = j["huber_delta"].get<double>();
        if (j.contains("epsilon")) c.loss.epsilon = j["epsilon"].get<double>();
        if (j.contains("dwa_temperature")) c.loss.dwa_temperature = j["dwa_temperature"].get<double>();
    } catch (const json::exception& e) {
        throw Error::format(path + ": " + e.what());
    }
    if (c.epochs < 1 || c.batch_size < 1) throw Error::invalid("epochs and batch_size must be >= 1");
    if (!(c.lr_encoder > 0.0 && c.lr_heads > 0.0)) throw Error::invalid("learning rates must be > 0");
    if (c.warmup_epochs < 0 || c.warmup_epochs > c.epochs)
        throw Error::invalid("warmup must be in [0, epochs]");
    return c;
}

void save_train_config(const TrainConfig& c, const std::string& path) {
    json j;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["lr_encoder"] = c.lr_encoder;
    j["lr_heads"] = c.lr_heads;
    j["warmup_epochs"] = c.warmup_epochs;
    j["weight_decay"] = c.weight_decay;
    j["clip_norm"] = c.clip_norm;
    j["seed"] = c.seed;
    j["dwa"] = c.dwa;
    j["nh_labeled_only"] = c.nh_labeled_only;
    j["max_points"] = c.max_points;
    j["heads"] = c.head_names;
    j["encoder"] = {{"hidden1", c.net.enc_hidden1},
                    {"hidden2", c.net.enc_hidden2},
                    {"feature_dim", c.net.feature_dim}};
    j["head_hidden"] = {c.net.head_hidden[0], c.net.head_hidden[1]};
    j["dropout"] = c.net.dropout;
    j["huber_delta"] = c.loss.huber_delta;
    j["epsilon"] = c.loss.epsilon;
    j["dwa_temperature"] = c.loss.dwa_temperature;
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw Error::io("cannot open " + path + " for writing");
    f << j.dump(2) << '\n';
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& dir) {
    fs::create_directories(dir);
    json j;
    j["format"] = "bca-checkpoint-v1";
    j["encoder"] = {{"in", 6},
                    {"hidden1", ckpt.net.enc_hidden1},
                    {"hidden2", ckpt.net.enc_hidden2},
                    {"feature_dim", ckpt.net.feature_dim}};
    j["head_hidden"] = {ckpt.net.head_hidden[0], ckpt.net.head_hidden[1]};
    j["dropout"] = ckpt.net.dropout;
    json heads = json::array();
    for (const auto& h : ckpt.heads)
        heads.push_back({{"name", h.name}, {"targets", h.target_indices}});
    j["heads"] = heads;
    json order = json::array();
    for (const char* n : kTargetNames) order.push_back(n);
    j["target_order"] = order;
    j["input_scale_mm"] = kInputScaleMm;
    j["normalizer"] = {{"mean", ckpt.normalizer.mean}, {"std", ckpt.normalizer.std}};
    j["seed"] = ckpt.seed;
    json blocks = json::array();
    for (const auto& b : ckpt.params.blocks)
        blocks.push_back({{"name", b.name},
                          {"offset", b.offset},
                          {"size", b.size},
                          {"decay", b.decay},
                          {"encoder", b.encoder}});
    j["param_blocks"] = blocks;
    j["param_count"] = ckpt.params.values.size();

    std::ofstream mf((fs::path(dir) / "manifest.json").string(), std::ios::trunc);
    if (!mf) throw Error::io("cannot write manifest in " + dir);
    mf << j.dump(2) << '\n';
    std::ofstream pf((fs::path(dir) / "params.bin").string(), std::ios::binary | std::ios::trunc);
    if (!pf) throw Error::io("cannot write params in " + dir);
    pf.write(reinterpret_cast<const char*>(ckpt.params.values.data()),
             static_cast<std::streamoff>(ckpt.params.values.size() * sizeof(double)));
    if (!pf) throw Error::io("short write on params.bin");
}

Checkpoint load_checkpoint(const std::string& dir) {
    const auto manifest = (fs::path(dir) / "manifest.json").string();
    std::ifstream mf(manifest);
    if (!mf) throw Error::io("cannot open checkpoint manifest " + manifest);
    json j;
    try {
        mf >> j;
    } catch (const std::exception& e) {
        throw Error::format(manifest + ": " + e.what());
    }
    Checkpoint c;
    try {
        if (j.at("format").get<std::string>() != "bca-checkpoint-v1")
            throw Error::format(manifest + ": unknown checkpoint format");
        c.net.enc_hidden1 = j["encoder"]["hidden1"].get<int>();
        c.net.enc_hidden2 = j["encoder"]["hidden2"].get<int>();
        c.net.feature_dim = j["encoder"]["feature_dim"].get<int>();
        c.net.head_hidden = {j["head_hidden"].at(0).get<int>(), j["head_hidden"].at(1).get<int>()};
        c.net.dropout = j["dropout"].get<double>();
        for (const auto& h : j.at("heads"))
            c.heads.push_back({h.at("name").get<std::string>(),
                               h.at("targets").get<std::vector<int>>()});
        c.normalizer.mean = j["normalizer"]["mean"].get<std::array<double, 10>>();
        c.normalizer.std = j["normalizer"]["std"].get<std::array<double, 10>>();
        c.seed = j["seed"].get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw Error::format(manifest + ": " + e.what());
    }

    Model m(c.net, c.heads);
    const std::size_t expect = j.at("param_count").get<std::size_t>();
    if (m.param_count() != expect)
        throw Error::format(manifest + ": parameter count does not match architecture");

    const auto bin = (fs::path(dir) / "params.bin").string();
    std::ifstream pf(bin, std::ios::binary);
    if (!pf) throw Error::io("cannot open " + bin);
    pf.seekg(0, std::ios::end);
    const std::size_t bytes = static_cast<std::size_t>(pf.tellg());
    pf.seekg(0);
    if (bytes != expect * sizeof(double))
        throw Error::format(bin + ": payload has " + std::to_string(bytes) + " bytes, expected " +
                            std::to_string(expect * sizeof(double)));
    c.params = m.params();
    pf.read(reinterpret_cast<char*>(c.params.values.data()),
            static_cast<std::streamoff>(bytes));
    if (!pf) throw Error::io("short read on " + bin);
    return c;
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
    Model m(ckpt.net, ckpt.heads);
    if (m.param_count() != ckpt.params.values.size())
        throw Error::invalid("checkpoint parameters do not match architecture");
    m.params().values = ckpt.params.values;
    return m;
}

namespace {

// Deterministic per-sample subsample used at load time; keyed by the sample
// id so it does not depend on split composition.
std::vector<Vec3> load_points(const Dataset& data, const std::string& id, std::size_t max_points,
                              std::uint64_t seed) {
    OrientedPointCloud pc = data.load_scan(id);
    if (pc.empty()) throw Error::invalid("scan for sample " + id + " is empty");
    if (max_points > 0 && pc.size() > max_points)
        pc = downsample(pc, max_points, combine(seed, combine(kStreamSubsample, fnv1a(id))));
    return pc.points;
}

}  // namespace

TrainResult train(const Dataset& data, const TrainConfig& cfg, const std::string& out_dir) {
    if (data.split.train.empty()) throw Error::invalid("training split is empty");
    const auto heads = heads_by_name(cfg.head_names);
    const std::size_t H = heads.size();

    // Normalizer from training-split labels only.
    std::vector<MaskedTargetVector> train_targets;
    for (const auto& id : data.split.train) train_targets.push_back(data.record(id).targets);
    const Normalizer norm = fit_normalizer(train_targets);

    // Preload clouds and normalized targets for train and val.
    struct Loaded {
        std::vector<Vec3> points;
        MaskedTargetVector target;
        std::uint64_t drop_base;
    };
    auto load_group = [&](const std::vector<std::string>& ids) {
        std::vector<Loaded> v(ids.size());
#pragma omp parallel for schedule(dynamic)
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(ids.size()); ++i) {
            v[i].points = load_points(data, ids[i], cfg.max_points, cfg.seed);
            v[i].target = norm.normalize(data.record(ids[i]).targets);
            v[i].drop_base = combine(combine(cfg.seed, kStreamDrop), fnv1a(ids[i]));
        }
        return v;
    };
    std::vector<Loaded> train_set = load_group(data.split.train);
    std::vector<Loaded> val_set = load_group(data.split.val);

    Model model(cfg.net, heads);
    model.init_params(cfg.seed);
    AdamState adam(model.param_count());
    DwaState dwa_state(static_cast<int>(H));

    fs::create_directories(out_dir);
    const std::string log_path = (fs::path(out_dir) / "train_log.jsonl").string();
    std::ofstream log(log_path, std::ios::trunc);
    if (!log) throw Error::io("cannot open " + log_path + " for writing");

    auto eval_split = [&](const std::vector<Loaded>& set) {
        if (set.empty()) return 0.0;
        std::vector<std::vector<double>> losses(set.size(), std::vector<double>(H, 0.0));
        std::vector<int> counts(H, 0);
        for (std::size_t h = 0; h < H; ++h)
            for (const auto& s : set)
                if (s.target.labeled_in(heads[h]) > 0) ++counts[h];
        const std::int64_t n = static_cast<std::int64_t>(set.size());
#pragma omp parallel for schedule(dynamic)
        for (std::int64_t i = 0; i < n; ++i) {
            Workspace ws;
            model.forward(set[i].points, false, 0, ws);
            for (std::size_t h = 0; h < H; ++h)
                losses[i][h] = masked_sample_loss(ws.heads[h].out, set[i].target, heads[h], cfg.loss);
        }
        const std::vector<double> uniform(H, 1.0);
        return total_loss(losses, counts, uniform).value;
    };

    std::vector<double> best_params;
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = -1;

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr_e = lr_schedule(epoch, cfg.epochs, cfg.warmup_epochs, cfg.lr_encoder);
        const double lr_h = lr_schedule(epoch, cfg.epochs, cfg.warmup_epochs, cfg.lr_heads);
        const std::vector<double> weights =
            cfg.dwa ? dwa_weights(dwa_state, cfg.loss) : std::vector<double>(H, 1.0);

        Rng shuffle_rng = substream(cfg.seed, {kStreamShuffle, static_cast<std::uint64_t>(epoch)});
        for (std::size_t i = 0; i + 1 < order.size(); ++i) {
            const std::size_t j = i + static_cast<std::size_t>(shuffle_rng.below(order.size() - i));
            std::swap(order[i], order[j]);
        }

        std::vector<double> epoch_loss_sum(H, 0.0);
        std::vector<std::int64_t> epoch_loss_count(H, 0);

        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            std::vector<BatchSample> batch;
            batch.reserve(stop - start);
            for (std::size_t k = start; k < stop; ++k) {
                const Loaded& s = train_set[order[k]];
                batch.push_back({&s.points, s.target,
                                 combine(s.drop_base, static_cast<std::uint64_t>(epoch))});
            }
            BatchResult r = batch_forward_backward(model, batch, weights, cfg.loss,
                                                   cfg.nh_labeled_only, true, true);
            optimizer_step(model.params(), r.grads, adam, lr_e, lr_h, cfg.weight_decay,
                           cfg.clip_norm);
            for (std::size_t h = 0; h < H; ++h) {
                for (std::size_t i = 0; i < batch.size(); ++i) {
                    if (batch[i].target.labeled_in(heads[h]) > 0) {
                        epoch_loss_sum[h] += r.head_losses[i][h];
                        ++epoch_loss_count[h];
                    }
                }
            }
        }

        std::vector<double> epoch_means(H, 0.0);
        for (std::size_t h = 0; h < H; ++h)
            if (epoch_loss_count[h] > 0)
                epoch_means[h] = epoch_loss_sum[h] / static_cast<double>(epoch_loss_count[h]);
        dwa_state.record_epoch(epoch_means);

        const double val_total = eval_split(val_set);
        if (val_set.empty() || val_total < best_val || best_epoch < 0) {
            best_val = val_total;
            best_epoch = epoch;
            best_params = model.params().values;
        }

        json rec;
        rec["epoch"] = epoch;
        rec["lr_encoder"] = lr_e;
        rec["lr_heads"] = lr_h;
        rec["w"] = weights;
        for (std::size_t h = 0; h < H; ++h) rec["loss_" + heads[h].name] = epoch_means[h];
        rec["val_total"] = val_total;
        log << rec.dump() << '\n';
    }
    log.flush();

    Checkpoint ckpt;
    ckpt.net = cfg.net;
    ckpt.heads = heads;
    ckpt.normalizer = norm;
    ckpt.seed = cfg.seed;
    ckpt.params = model.params();
    ckpt.params.values = best_params.empty() ? model.params().values : best_params;
    save_checkpoint(ckpt, out_dir);

    TrainResult res;
    res.checkpoint_dir = out_dir;
    res.log_path = log_path;
    res.best_epoch = best_epoch;
    res.best_val = best_val;
    return res;
}

}  // namespace bca
