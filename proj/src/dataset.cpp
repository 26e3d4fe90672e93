#include "bca/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "bca/error.hpp"
#include "bca/mesh_io.hpp"
#include "bca/procgen.hpp"
#include "bca/rng.hpp"

namespace bca {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    cells.push_back(cur);
    return cells;
}

}  // namespace

const SampleRecord& Dataset::record(const std::string& id) const {
    for (const auto& s : samples)
        if (s.id == id) return s;
    throw Error::invalid("sample id not in targets.csv: " + id);
}

OrientedPointCloud Dataset::load_scan(const std::string& id) const {
    return load_ply((fs::path(root) / "scans" / (id + ".ply")).string());
}

void save_targets_csv(const std::vector<SampleRecord>& rows, const std::string& path) {
    std::string out = "id";
    for (const char* n : kTargetNames) out += std::string(",") + n;
    out += '\n';
    for (const auto& r : rows) {
        out += r.id;
        for (int j = 0; j < 10; ++j) {
            out += ',';
            if (r.targets.mask[j]) out += format_double(r.targets.y[j]);
        }
        out += '\n';
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error::io("cannot open " + path + " for writing");
    f.write(out.data(), static_cast<std::streamoff>(out.size()));
    if (!f) throw Error::io("short write on " + path);
}

std::vector<SampleRecord> load_targets_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error::io("cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw Error::format(path + ": empty file");
    std::string expect = "id";
    for (const char* n : kTargetNames) expect += std::string(",") + n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != expect) throw Error::format(path + ": unexpected header '" + line + "'");

    std::vector<SampleRecord> rows;
    std::size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != 11)
            throw Error::format(path + ":" + std::to_string(lineno) + ": expected 11 cells");
        SampleRecord r;
        r.id = cells[0];
        if (r.id.empty())
            throw Error::format(path + ":" + std::to_string(lineno) + ": empty sample id");
        for (int j = 0; j < 10; ++j) {
            const std::string& c = cells[j + 1];
            if (c.empty()) {
                r.targets.mask[j] = 0;
                r.targets.y[j] = 0.0;
                continue;
            }
            double v = 0.0;
            auto res = std::from_chars(c.data(), c.data() + c.size(), v);
            if (res.ec != std::errc{} || res.ptr != c.data() + c.size())
                throw Error::format(path + ":" + std::to_string(lineno) + ": bad number '" + c + "'");
            r.targets.y[j] = v;
            r.targets.mask[j] = 1;
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

void save_split(const Split& split, const std::string& path) {
    json j;
    j["train"] = split.train;
    j["val"] = split.val;
    j["test"] = split.test;
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw Error::io("cannot open " + path + " for writing");
    f << j.dump(2) << '\n';
}

Split load_split(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error::io("cannot open " + path);
    json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        throw Error::format(path + ": " + e.what());
    }
    Split s;
    try {
        s.train = j.at("train").get<std::vector<std::string>>();
        s.val = j.at("val").get<std::vector<std::string>>();
        s.test = j.at("test").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw Error::format(path + ": " + e.what());
    }
    return s;
}

Split make_split(const std::vector<std::string>& ids, std::uint64_t seed) {
    std::vector<std::size_t> order(ids.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng = substream(seed, {0x5B117});
    for (std::size_t i = 0; i + 1 < order.size(); ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(order.size() - i));
        std::swap(order[i], order[j]);
    }
    // 8/1/1 with at least one sample in val and test when possible.
    const std::size_t n = ids.size();
    std::size_t n_test = std::max<std::size_t>(n >= 10 ? n / 10 : (n >= 3 ? 1 : 0), n >= 3 ? 1 : 0);
    std::size_t n_val = n_test;
    Split s;
    for (std::size_t k = 0; k < n; ++k) {
        const std::string& id = ids[order[k]];
        if (k < n_test) s.test.push_back(id);
        else if (k < n_test + n_val) s.val.push_back(id);
        else s.train.push_back(id);
    }
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.val.begin(), s.val.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

Dataset load_dataset(const std::string& dir) {
    Dataset d;
    d.root = dir;
    d.samples = load_targets_csv((fs::path(dir) / "targets.csv").string());
    d.split = load_split((fs::path(dir) / "split.json").string());
    for (const auto& group : {&d.split.train, &d.split.val, &d.split.test})
        for (const auto& id : *group) d.record(id);  // validates membership
    return d;
}

}  // namespace bca
