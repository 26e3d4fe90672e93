#include "bca/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "bca/error.hpp"
#include "bca/procgen.hpp"
#include "bca/rng.hpp"
#include "bca/scan_sim.hpp"

namespace bca {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

MaeResult mae(const std::vector<double>& pred, const std::vector<double>& target) {
    if (pred.size() != target.size() || pred.empty())
        throw Error::invalid("mae requires equal-length non-empty vectors");
    const std::size_t n = pred.size();
    std::vector<double> abs_err(n);
    for (std::size_t i = 0; i < n; ++i) abs_err[i] = std::abs(pred[i] - target[i]);
    double m = 0.0;
    for (double e : abs_err) m += e;
    m /= static_cast<double>(n);
    double ss = 0.0;
    for (double e : abs_err) ss += (e - m) * (e - m);
    return {m, std::sqrt(ss / static_cast<double>(n))};
}

double pearson(const std::vector<double>& pred, const std::vector<double>& target) {
    if (pred.size() != target.size() || pred.size() < 2)
        throw Error::numeric("pearson requires at least two pairs");
    const double n = static_cast<double>(pred.size());
    double mp = 0.0, mt = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        mp += pred[i];
        mt += target[i];
    }
    mp /= n;
    mt /= n;
    double spt = 0.0, spp = 0.0, stt = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double dp = pred[i] - mp, dt = target[i] - mt;
        spt += dp * dt;
        spp += dp * dp;
        stt += dt * dt;
    }
    if (!(spp > 0.0) || !(stt > 0.0))
        throw Error::numeric("pearson undefined for zero-variance input");
    return std::clamp(spt / std::sqrt(spp * stt), -1.0, 1.0);
}

double derive_bfp(const std::map<std::string, double>& volumes) {
    auto find = [&](const char* k) -> const double* {
        auto it = volumes.find(k);
        return it == volumes.end() ? nullptr : &it->second;
    };
    const double* body = find("BODY");
    const double* sat = find("SAT");
    if (!body || !(*body > 0.0)) throw Error::invalid("derive_bfp requires positive body volume");
    if (!sat) throw Error::invalid("derive_bfp requires SAT");
    const double* visceral = find("IMVAT");
    if (!visceral) visceral = find("VAT");
    if (!visceral) throw Error::invalid("derive_bfp requires IMVAT or VAT");
    return 100.0 * (*visceral + *sat) / *body;
}

namespace {

std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void write_scatter(const std::string& path, const std::vector<double>& target,
                   const std::vector<double>& pred) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error::io("cannot open " + path + " for writing");
    f << "target,prediction\n";
    for (std::size_t i = 0; i < target.size(); ++i)
        f << format_double(target[i]) << ',' << format_double(pred[i]) << '\n';
}

constexpr const char* kUnits[10] = {"cm", "cm", "cm", "cm", "L", "L", "L", "L", "L", "L"};

}  // namespace

Report evaluate(const Checkpoint& ckpt, const Dataset& data, const std::string& split,
                const std::string& scatter_dir, std::size_t max_points) {
    const std::vector<std::string>* ids = nullptr;
    if (split == "train") ids = &data.split.train;
    else if (split == "val") ids = &data.split.val;
    else if (split == "test") ids = &data.split.test;
    else throw Error::invalid("split must be train, val or test");
    if (ids->empty()) throw Error::invalid("split '" + split + "' is empty");

    Model model = model_from_checkpoint(ckpt);
    const auto& heads = model.heads();

    // Denormalized predictions per sample in canonical target order; targets
    // a head does not cover stay absent.
    const std::size_t n = ids->size();
    std::vector<std::array<double, 10>> preds(n);
    std::vector<std::array<bool, 10>> covered(n);
    std::vector<MaskedTargetVector> truth(n);
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
        const std::string& id = (*ids)[i];
        OrientedPointCloud pc = data.load_scan(id);
        if (max_points > 0 && pc.size() > max_points)
            pc = downsample(pc, max_points, combine(combine(ckpt.seed, 0x5B5A), mix64(i)));
        Workspace ws;
        model.forward(pc.points, false, 0, ws);
        covered[i].fill(false);
        MaskedTargetVector raw{};
        for (std::size_t h = 0; h < heads.size(); ++h) {
            for (std::size_t k = 0; k < heads[h].target_indices.size(); ++k) {
                const int j = heads[h].target_indices[k];
                raw.y[j] = ws.heads[h].out[k];
                raw.mask[j] = 1;
                covered[i][j] = true;
            }
        }
        const MaskedTargetVector denorm = ckpt.normalizer.denormalize(raw);
        preds[i] = denorm.y;
        truth[i] = data.record(id).targets;
    }

    Report rep;
    rep.dataset = data.root;
    rep.split = split;
    if (!scatter_dir.empty()) fs::create_directories(scatter_dir);

    for (int j = 0; j < 10; ++j) {
        std::vector<double> p, t;
        for (std::size_t i = 0; i < n; ++i)
            if (covered[i][j] && truth[i].mask[j]) {
                p.push_back(preds[i][j]);
                t.push_back(truth[i].y[j]);
            }
        if (p.empty()) continue;  // omitted target, no unmasked pairs
        TargetReport tr;
        tr.name = kTargetNames[j];
        tr.unit = kUnits[j];
        tr.n = p.size();
        const MaeResult m = mae(p, t);
        tr.mae = m.mean;
        tr.std = m.std;
        if (p.size() >= 2) {
            try {
                tr.pearson = pearson(p, t);
            } catch (const Error&) {
                tr.pearson.reset();
            }
        }
        rep.per_target.push_back(tr);
        if (!scatter_dir.empty())
            write_scatter((fs::path(scatter_dir) / ("scatter_" + tr.name + ".csv")).string(), t, p);
    }

    // Derived body fat percent from predicted volumes where the ground truth
    // supports it (indices: 4 SAT, 5 IMVAT, 6 VAT, 7 body).
    {
        std::vector<double> p, t;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& gm = truth[i].mask;
            const bool gt_ok = gm[4] && (gm[5] || gm[6]) && gm[7] && truth[i].y[7] > 0.0;
            const bool pred_ok = covered[i][4] && (covered[i][5] || covered[i][6]) && covered[i][7] &&
                                 preds[i][7] > 0.0;
            if (!gt_ok || !pred_ok) continue;
            std::map<std::string, double> pv{{"SAT", preds[i][4]}, {"BODY", preds[i][7]}};
            if (covered[i][5]) pv["IMVAT"] = preds[i][5];
            else pv["VAT"] = preds[i][6];
            std::map<std::string, double> tv{{"SAT", truth[i].y[4]}, {"BODY", truth[i].y[7]}};
            if (gm[5]) tv["IMVAT"] = truth[i].y[5];
            else tv["VAT"] = truth[i].y[6];
            p.push_back(derive_bfp(pv));
            t.push_back(derive_bfp(tv));
        }
        if (!p.empty()) {
            TargetReport tr;
            tr.name = "bfp";
            tr.unit = "%";
            tr.n = p.size();
            const MaeResult m = mae(p, t);
            tr.mae = m.mean;
            tr.std = m.std;
            if (p.size() >= 2) {
                try {
                    tr.pearson = pearson(p, t);
                } catch (const Error&) {
                    tr.pearson.reset();
                }
            }
            rep.bfp = tr;
            if (!scatter_dir.empty())
                write_scatter((fs::path(scatter_dir) / "scatter_bfp.csv").string(), t, p);
        }
    }
    return rep;
}

namespace {

json target_to_json(const TargetReport& t) {
    json j;
    j["name"] = t.name;
    j["unit"] = t.unit;
    j["n"] = t.n;
    j["mae"] = t.mae;
    j["std"] = t.std;
    if (t.pearson) j["pearson"] = *t.pearson;
    else j["pearson"] = nullptr;
    return j;
}

TargetReport target_from_json(const json& j) {
    TargetReport t;
    t.name = j.at("name").get<std::string>();
    t.unit = j.at("unit").get<std::string>();
    t.n = j.at("n").get<std::size_t>();
    t.mae = j.at("mae").get<double>();
    t.std = j.at("std").get<double>();
    if (!j.at("pearson").is_null()) t.pearson = j.at("pearson").get<double>();
    return t;
}

}  // namespace

void save_report(const Report& r, const std::string& path) {
    json j;
    j["dataset"] = r.dataset;
    j["split"] = r.split;
    json pt = json::array();
    for (const auto& t : r.per_target) pt.push_back(target_to_json(t));
    j["per_target"] = pt;
    j["bfp"] = r.bfp ? target_to_json(*r.bfp) : json(nullptr);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error::io("cannot open " + path + " for writing");
    f << j.dump(2) << '\n';
}

Report load_report(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error::io("cannot open " + path);
    json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw Error::format(path + ": " + e.what());
    }
    Report r;
    try {
        r.dataset = j.at("dataset").get<std::string>();
        r.split = j.at("split").get<std::string>();
        for (const auto& t : j.at("per_target")) r.per_target.push_back(target_from_json(t));
        if (!j.at("bfp").is_null()) r.bfp = target_from_json(j.at("bfp"));
    } catch (const json::exception& e) {
        throw Error::format(path + ": " + e.what());
    }
    return r;
}

void validate_report_json(const std::string& path) {
    const Report r = load_report(path);
    for (const auto& t : r.per_target) {
        if (t.name.empty() || t.unit.empty()) throw Error::format(path + ": empty name or unit");
        if (t.n == 0) throw Error::format(path + ": zero-pair target " + t.name);
        if (!(t.mae >= 0.0) || !(t.std >= 0.0))
            throw Error::format(path + ": negative error statistics for " + t.name);
        if (t.pearson && !(*t.pearson >= -1.0 && *t.pearson <= 1.0))
            throw Error::format(path + ": pearson out of range for " + t.name);
    }
}

}  // namespace bca
