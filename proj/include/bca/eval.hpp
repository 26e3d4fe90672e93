#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bca/dataset.hpp"
#include "bca/trainer.hpp"

namespace bca {

struct MaeResult {
    double mean = 0.0;
    double std = 0.0;  // population std of absolute errors
};

MaeResult mae(const std::vector<double>& pred, const std::vector<double>& target);

// Product-moment correlation clamped to [-1, 1]; throws Error("numeric") on
// zero variance or fewer than two pairs.
double pearson(const std::vector<double>& pred, const std::vector<double>& target);

// 100 * (IMVAT-or-VAT + SAT) / body, preferring IMVAT. Keys: "SAT", "IMVAT",
// "VAT", "BODY"; absent keys are treated as unavailable.
double derive_bfp(const std::map<std::string, double>& volumes);

struct TargetReport {
    std::string name;
    std::string unit;
    std::size_t n = 0;
    double mae = 0.0;
    double std = 0.0;
    std::optional<double> pearson;
};

struct Report {
    std::string dataset;
    std::string split;
    std::vector<TargetReport> per_target;  // targets with no pairs are omitted
    std::optional<TargetReport> bfp;
};

// Runs the checkpoint on one split of the dataset and writes
// scatter_<target>.csv files (target,prediction) next to the report.
Report evaluate(const Checkpoint& ckpt, const Dataset& data, const std::string& split,
                const std::string& scatter_dir, std::size_t max_points = 0);

void save_report(const Report& r, const std::string& path);
Report load_report(const std::string& path);

// Throws Error("format") when the report JSON violates the schema.
void validate_report_json(const std::string& path);

}  // namespace bca
