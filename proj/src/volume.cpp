#include "bca/volume.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "bca/error.hpp"

namespace bca {

using json = nlohmann::ordered_json;

namespace {

// Resolve "X.lvol", "X.lvol.json" or "X.lvol.raw" to the header/raw pair.
std::pair<std::string, std::string> lvol_paths(const std::string& path) {
    auto ends_with = [&](const char* suf) {
        std::string s(suf);
        return path.size() >= s.size() && path.compare(path.size() - s.size(), s.size(), s) == 0;
    };
    std::string base = path;
    if (ends_with(".json")) base = path.substr(0, path.size() - 5);
    else if (ends_with(".raw")) base = path.substr(0, path.size() - 4);
    return {base + ".json", base + ".raw"};
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error::io("cannot open " + path);
    in.seekg(0, std::ios::end);
    std::streamoff n = in.tellg();
    in.seekg(0);
    std::vector<std::uint8_t> data(static_cast<std::size_t>(n));
    if (n > 0) in.read(reinterpret_cast<char*>(data.data()), n);
    if (!in) throw Error::io("short read on " + path);
    return data;
}

void write_bytes(const std::string& path, const void* data, std::size_t n) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error::io("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamoff>(n));
    if (!out) throw Error::io("short write on " + path);
}

json load_header(const std::string& header_path) {
    std::ifstream in(header_path);
    if (!in) throw Error::io("cannot open " + header_path);
    json h;
    try {
        in >> h;
    } catch (const std::exception& e) {
        throw Error::format(header_path + ": " + e.what());
    }
    return h;
}

template <typename V>
void parse_common_header(const json& h, const std::string& path, V& v) {
    try {
        for (int i = 0; i < 3; ++i) v.dims[i] = h.at("dims").at(i).get<int>();
        for (int i = 0; i < 3; ++i) v.spacing_mm[i] = h.at("spacing_mm").at(i).get<double>();
        for (int i = 0; i < 3; ++i) v.origin_mm[i] = h.at("origin_mm").at(i).get<double>();
        v.height_axis = h.at("height_axis").get<int>();
    } catch (const json::exception& e) {
        throw Error::format(path + ": " + e.what());
    }
    for (int i = 0; i < 3; ++i) {
        if (v.dims[i] <= 0) throw Error::format(path + ": dims must be positive");
        if (v.spacing_mm[i] <= 0.0) throw Error::format(path + ": spacing must be positive");
    }
    if (v.height_axis < 0 || v.height_axis > 2)
        throw Error::format(path + ": height_axis must be 0, 1 or 2");
}

}  // namespace

void validate(const LabelVolume& v) {
    for (int i = 0; i < 3; ++i) {
        if (v.dims[i] <= 0) throw Error::format("label volume dims must be positive");
        if (v.spacing_mm[i] <= 0.0) throw Error::format("label volume spacing must be positive");
    }
    if (v.voxels.size() != v.voxel_count())
        throw Error::format("payload size " + std::to_string(v.voxels.size()) +
                            " does not match dims product " + std::to_string(v.voxel_count()));
    auto bg = v.legend.find(0);
    if (bg == v.legend.end() || bg->second != "background")
        throw Error::format("legend must map class 0 to \"background\"");
    bool present[256] = {};
    for (std::uint8_t c : v.voxels) present[c] = true;
    for (int c = 0; c < 256; ++c) {
        if (present[c] && !v.legend.count(static_cast<std::uint8_t>(c)))
            throw Error::format("voxel class " + std::to_string(c) + " missing from legend");
    }
}

LabelVolume load_label_volume(const std::string& path) {
    auto [hp, rp] = lvol_paths(path);
    json h = load_header(hp);
    LabelVolume v;
    parse_common_header(h, hp, v);
    if (h.contains("dtype") && h.at("dtype").get<std::string>() != "uint8")
        throw Error::format(hp + ": label volumes require dtype uint8");
    try {
        for (auto& [key, name] : h.at("labels").items()) {
            int id = std::stoi(key);
            if (id < 0 || id > 255) throw Error::format(hp + ": label id out of range: " + key);
            v.legend[static_cast<std::uint8_t>(id)] = name.get<std::string>();
        }
    } catch (const json::exception& e) {
        throw Error::format(hp + ": " + e.what());
    }
    auto bytes = read_bytes(rp);
    if (bytes.size() != v.voxel_count())
        throw Error::format(rp + ": payload has " + std::to_string(bytes.size()) +
                            " bytes, expected " + std::to_string(v.voxel_count()));
    v.voxels = std::move(bytes);
    validate(v);
    return v;
}

void save_label_volume(const LabelVolume& v, const std::string& path) {
    validate(v);
    auto [hp, rp] = lvol_paths(path);
    json h;
    h["dims"] = {v.dims[0], v.dims[1], v.dims[2]};
    h["spacing_mm"] = {v.spacing_mm.x, v.spacing_mm.y, v.spacing_mm.z};
    h["origin_mm"] = {v.origin_mm.x, v.origin_mm.y, v.origin_mm.z};
    h["height_axis"] = v.height_axis;
    h["dtype"] = "uint8";
    json labels = json::object();
    for (const auto& [id, name] : v.legend) labels[std::to_string(id)] = name;
    h["labels"] = labels;
    std::string text = h.dump(2);
    text.push_back('\n');
    write_bytes(hp, text.data(), text.size());
    write_bytes(rp, v.voxels.data(), v.voxels.size());
}

IntensityVolume load_intensity_volume(const std::string& path) {
    auto [hp, rp] = lvol_paths(path);
    json h = load_header(hp);
    IntensityVolume v;
    parse_common_header(h, hp, v);
    try {
        if (h.at("dtype").get<std::string>() != "float32")
            throw Error::format(hp + ": intensity volumes require dtype float32");
        v.panel = h.at("panel").get<std::string>();
    } catch (const json::exception& e) {
        throw Error::format(hp + ": " + e.what());
    }
    if (v.panel != "front" && v.panel != "back")
        throw Error::format(hp + ": panel must be \"front\" or \"back\"");
    auto bytes = read_bytes(rp);
    std::size_t n = v.dims[0] * static_cast<std::size_t>(v.dims[1]) * v.dims[2];
    if (bytes.size() != n * sizeof(float))
        throw Error::format(rp + ": payload has " + std::to_string(bytes.size()) +
                            " bytes, expected " + std::to_string(n * sizeof(float)));
    v.intensities.resize(n);
    std::memcpy(v.intensities.data(), bytes.data(), bytes.size());
    for (float f : v.intensities)
        if (!std::isfinite(f)) throw Error::format(rp + ": non-finite intensity");
    return v;
}

void save_intensity_volume(const IntensityVolume& v, const std::string& path) {
    auto [hp, rp] = lvol_paths(path);
    json h;
    h["dims"] = {v.dims[0], v.dims[1], v.dims[2]};
    h["spacing_mm"] = {v.spacing_mm.x, v.spacing_mm.y, v.spacing_mm.z};
    h["origin_mm"] = {v.origin_mm.x, v.origin_mm.y, v.origin_mm.z};
    h["height_axis"] = v.height_axis;
    h["dtype"] = "float32";
    h["panel"] = v.panel;
    std::string text = h.dump(2);
    text.push_back('\n');
    write_bytes(hp, text.data(), text.size());
    write_bytes(rp, v.intensities.data(), v.intensities.size() * sizeof(float));
}

BinaryMask body_mask(const LabelVolume& v) {
    BinaryMask m;
    m.dims = v.dims;
    m.spacing_mm = v.spacing_mm;
    m.origin_mm = v.origin_mm;
    m.height_axis = v.height_axis;
    m.bits.resize(v.voxel_count());
    const std::int64_t n = static_cast<std::int64_t>(v.voxel_count());
#pragma omp parallel for schedule(static) if (n > 65536)
    for (std::int64_t i = 0; i < n; ++i) m.bits[i] = v.voxels[i] > 0 ? 1 : 0;
    return m;
}

namespace {

// Flood fill of one constant-height slice: marks background cells 4-connected
// to the slice border, then sets everything unreached to body.
void fill_slice(const BinaryMask& in, BinaryMask& out, int height_axis, int slice,
                std::vector<std::uint8_t>& reach, std::vector<std::int32_t>& stack) {
    // In-slice axes (u, v); `slice` fixes the height axis.
    const int ua = height_axis == 0 ? 1 : 0;
    const int va = height_axis == 2 ? 1 : 2;
    const int nu = in.dims[ua], nv = in.dims[va];

    int coord[3];
    coord[height_axis] = slice;
    auto vox = [&](int u, int v) {
        coord[ua] = u;
        coord[va] = v;
        return in.index(coord[0], coord[1], coord[2]);
    };

    std::fill(reach.begin(), reach.end(), 0);
    stack.clear();
    auto push = [&](int u, int v) {
        std::size_t s = static_cast<std::size_t>(u) + static_cast<std::size_t>(nu) * v;
        if (!reach[s] && !in.bits[vox(u, v)]) {
            reach[s] = 1;
            stack.push_back(static_cast<std::int32_t>(s));
        }
    };
    for (int u = 0; u < nu; ++u) {
        push(u, 0);
        push(u, nv - 1);
    }
    for (int v = 0; v < nv; ++v) {
        push(0, v);
        push(nu - 1, v);
    }
    while (!stack.empty()) {
        std::int32_t s = stack.back();
        stack.pop_back();
        int u = s % nu, v = s / nu;
        if (u > 0) push(u - 1, v);
        if (u + 1 < nu) push(u + 1, v);
        if (v > 0) push(u, v - 1);
        if (v + 1 < nv) push(u, v + 1);
    }
    for (int v = 0; v < nv; ++v)
        for (int u = 0; u < nu; ++u) {
            std::size_t s = static_cast<std::size_t>(u) + static_cast<std::size_t>(nu) * v;
            std::size_t i = vox(u, v);
            out.bits[i] = (in.bits[i] || !reach[s]) ? 1 : 0;
        }
}

}  // namespace

BinaryMask fill_cavities(const BinaryMask& m) {
    BinaryMask out = m;
    const int ha = m.height_axis;
    const int nslices = m.dims[ha];
    const int ua = ha == 0 ? 1 : 0;
    const int va = ha == 2 ? 1 : 2;
    const std::size_t slice_size = static_cast<std::size_t>(m.dims[ua]) * m.dims[va];
#pragma omp parallel
    {
        std::vector<std::uint8_t> reach(slice_size);
        std::vector<std::int32_t> stack;
        stack.reserve(slice_size / 4 + 16);
#pragma omp for schedule(dynamic, 4)
        for (int s = 0; s < nslices; ++s) fill_slice(m, out, ha, s, reach, stack);
    }
    return out;
}

std::map<std::string, double> tissue_volumes(const LabelVolume& v) {
    const std::int64_t n = static_cast<std::int64_t>(v.voxel_count());
    std::array<std::uint64_t, 256> counts{};
#pragma omp parallel if (n > 65536)
    {
        std::array<std::uint64_t, 256> local{};
#pragma omp for schedule(static) nowait
        for (std::int64_t i = 0; i < n; ++i) ++local[v.voxels[i]];
#pragma omp critical
        for (int c = 0; c < 256; ++c) counts[c] += local[c];
    }
    const double liters_per_voxel = v.voxel_volume_mm3() * 1e-6;
    std::map<std::string, double> out;
    for (const auto& [id, name] : v.legend) {
        if (id == 0) continue;
        out[name] += static_cast<double>(counts[id]) * liters_per_voxel;
    }
    return out;
}

ScalarGrid sample_signed_field(const BinaryMask& m) {
    ScalarGrid g;
    g.dims = m.dims;
    g.spacing_mm = m.spacing_mm;
    g.origin_mm = m.origin_mm;
    g.values.resize(m.voxel_count());
    const std::int64_t n = static_cast<std::int64_t>(m.voxel_count());
#pragma omp parallel for schedule(static) if (n > 65536)
    for (std::int64_t i = 0; i < n; ++i) g.values[i] = m.bits[i] ? 1.0f : 0.0f;
    return g;
}

namespace ref {

BinaryMask body_mask(const LabelVolume& v) {
    BinaryMask m;
    m.dims = v.dims;
    m.spacing_mm = v.spacing_mm;
    m.origin_mm = v.origin_mm;
    m.height_axis = v.height_axis;
    m.bits.resize(v.voxel_count());
    for (std::size_t i = 0; i < v.voxels.size(); ++i) m.bits[i] = v.voxels[i] > 0 ? 1 : 0;
    return m;
}

BinaryMask fill_cavities(const BinaryMask& m) {
    BinaryMask out = m;
    const int ha = m.height_axis;
    const int ua = ha == 0 ? 1 : 0;
    const int va = ha == 2 ? 1 : 2;
    const std::size_t slice_size = static_cast<std::size_t>(m.dims[ua]) * m.dims[va];
    std::vector<std::uint8_t> reach(slice_size);
    std::vector<std::int32_t> stack;
    for (int s = 0; s < m.dims[ha]; ++s) fill_slice(m, out, ha, s, reach, stack);
    return out;
}

std::map<std::string, double> tissue_volumes(const LabelVolume& v) {
    std::array<std::uint64_t, 256> counts{};
    for (std::uint8_t c : v.voxels) ++counts[c];
    const double liters_per_voxel = v.voxel_volume_mm3() * 1e-6;
    std::map<std::string, double> out;
    for (const auto& [id, name] : v.legend) {
        if (id == 0) continue;
        out[name] += static_cast<double>(counts[id]) * liters_per_voxel;
    }
    return out;
}

}  // namespace ref

}  // namespace bca
