#include "bca/mesh_io.hpp"

#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "bca/error.hpp"

namespace bca {

namespace {

void append_double(std::string& out, double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

}  // namespace

void save_obj(const TriMesh& m, const std::string& path) {
    std::string out;
    out.reserve(m.vertices.size() * 32 + m.triangles.size() * 16);
    for (const auto& v : m.vertices) {
        out += "v ";
        append_double(out, v.x);
        out += ' ';
        append_double(out, v.y);
        out += ' ';
        append_double(out, v.z);
        out += '\n';
    }
    for (const auto& t : m.triangles) {
        out += "f " + std::to_string(t[0] + 1) + ' ' + std::to_string(t[1] + 1) + ' ' +
               std::to_string(t[2] + 1) + '\n';
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error::io("cannot open " + path + " for writing");
    f.write(out.data(), static_cast<std::streamoff>(out.size()));
    if (!f) throw Error::io("short write on " + path);
}

TriMesh load_obj(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error::io("cannot open " + path);
    TriMesh m;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "v") {
            Vec3 v;
            if (!(ss >> v.x >> v.y >> v.z))
                throw Error::format(path + ":" + std::to_string(lineno) + ": malformed vertex");
            m.vertices.push_back(v);
        } else if (tag == "f") {
            std::vector<long> idx;
            std::string tok;
            while (ss >> tok) {
                // Accept plain indices only; reject v/vt/vn references.
                long i = 0;
                auto res = std::from_chars(tok.data(), tok.data() + tok.size(), i);
                if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size())
                    throw Error::format(path + ":" + std::to_string(lineno) +
                                        ": face indices must be plain integers");
                idx.push_back(i);
            }
            if (idx.size() != 3)
                throw Error::format(path + ":" + std::to_string(lineno) +
                                    ": only triangular faces are supported");
            std::array<int, 3> t;
            for (int k = 0; k < 3; ++k) {
                long i = idx[k];
                if (i < 1 || i > static_cast<long>(m.vertices.size()))
                    throw Error::format(path + ":" + std::to_string(lineno) +
                                        ": face index out of range");
                t[k] = static_cast<int>(i - 1);
            }
            m.triangles.push_back(t);
        } else if (tag.empty()) {
            continue;
        } else {
            throw Error::format(path + ":" + std::to_string(lineno) + ": unsupported OBJ element '" +
                                tag + "'");
        }
    }
    recompute_normals(m);
    return m;
}

void save_ply(const OrientedPointCloud& pc, const std::string& path) {
    if (pc.points.size() != pc.normals.size())
        throw Error::invalid("point/normal count mismatch");
    std::ostringstream header;
    header << "ply\nformat binary_little_endian 1.0\nelement vertex " << pc.points.size()
           << "\nproperty float x\nproperty float y\nproperty float z\nproperty float nx\n"
              "property float ny\nproperty float nz\nend_header\n";
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error::io("cannot open " + path + " for writing");
    const std::string h = header.str();
    f.write(h.data(), static_cast<std::streamoff>(h.size()));
    std::vector<float> row(6);
    for (std::size_t i = 0; i < pc.points.size(); ++i) {
        row[0] = static_cast<float>(pc.points[i].x);
        row[1] = static_cast<float>(pc.points[i].y);
        row[2] = static_cast<float>(pc.points[i].z);
        row[3] = static_cast<float>(pc.normals[i].x);
        row[4] = static_cast<float>(pc.normals[i].y);
        row[5] = static_cast<float>(pc.normals[i].z);
        f.write(reinterpret_cast<const char*>(row.data()), 6 * sizeof(float));
    }
    if (!f) throw Error::io("short write on " + path);
}

OrientedPointCloud load_ply(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error::io("cannot open " + path);
    std::string line;
    std::size_t count = 0;
    bool header_done = false;
    std::vector<std::string> props;
    bool fmt_ok = false;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line == "ply") continue;
        if (line == "format binary_little_endian 1.0") {
            fmt_ok = true;
            continue;
        }
        if (line.rfind("comment", 0) == 0) continue;
        if (line.rfind("element vertex ", 0) == 0) {
            count = std::stoull(line.substr(15));
            continue;
        }
        if (line.rfind("element ", 0) == 0)
            throw Error::format(path + ": unsupported element '" + line + "'");
        if (line.rfind("property float ", 0) == 0) {
            props.push_back(line.substr(15));
            continue;
        }
        if (line == "end_header") {
            header_done = true;
            break;
        }
        throw Error::format(path + ": unsupported header line '" + line + "'");
    }
    if (!header_done) throw Error::format(path + ": missing end_header");
    if (!fmt_ok) throw Error::format(path + ": expected binary_little_endian 1.0");
    const std::vector<std::string> want = {"x", "y", "z", "nx", "ny", "nz"};
    if (props != want) throw Error::format(path + ": expected properties x y z nx ny nz");

    OrientedPointCloud pc;
    pc.points.resize(count);
    pc.normals.resize(count);
    std::vector<float> row(6);
    for (std::size_t i = 0; i < count; ++i) {
        f.read(reinterpret_cast<char*>(row.data()), 6 * sizeof(float));
        if (!f) throw Error::format(path + ": truncated payload");
        pc.points[i] = {row[0], row[1], row[2]};
        pc.normals[i] = {row[3], row[4], row[5]};
    }
    return pc;
}

}  // namespace bca
