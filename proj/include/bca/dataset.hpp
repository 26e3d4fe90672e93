#pragma once

#include <string>
#include <vector>

#include "bca/loss.hpp"
#include "bca/mesh.hpp"

namespace bca {

// One dataset row: sample id plus the masked target vector; the matching
// scan lives at <root>/scans/<id>.ply.
struct SampleRecord {
    std::string id;
    MaskedTargetVector targets;
};

struct Split {
    std::vector<std::string> train, val, test;
};

// Directory layout: volumes/, meshes/, scans/, targets.csv, split.json.
struct Dataset {
    std::string root;
    std::vector<SampleRecord> samples;
    Split split;

    const SampleRecord& record(const std::string& id) const;
    OrientedPointCloud load_scan(const std::string& id) const;
};

// targets.csv: header row, one row per sample, masked cells empty. Values
// use shortest round-trip formatting.
void save_targets_csv(const std::vector<SampleRecord>& rows, const std::string& path);
std::vector<SampleRecord> load_targets_csv(const std::string& path);

void save_split(const Split& split, const std::string& path);
Split load_split(const std::string& path);

// Deterministic 8/1/1 split over ids in order of a seeded shuffle.
Split make_split(const std::vector<std::string>& ids, std::uint64_t seed);

// Requires targets.csv and split.json under `dir`.
Dataset load_dataset(const std::string& dir);

}  // namespace bca
