#pragma once

#include "gsfix/endian.hpp"
#include "gsfix/io/files.hpp"
#include "gsfix/scene.hpp"

#include <charconv>
#include <cstdint>
#include <cstring>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace gsfix {

enum class PlyPrecision { Float32, Float64 };

namespace detail {

struct PlyProperty {
    std::string name;
    std::string type;
    int size = 0;
    std::size_t offset = 0;
};

struct PlyElement {
    std::string name;
    std::size_t count = 0;
    std::vector<PlyProperty> properties;
    std::size_t stride = 0;

    const PlyProperty *find(const std::string &n) const {
        for (const PlyProperty &p : properties) {
            if (p.name == n) {
                return &p;
            }
        }
        return nullptr;
    }
};

struct PlyFile {
    std::vector<PlyElement> elements;
    std::vector<std::string> comments;
    std::string body;
    std::size_t body_offset = 0;
};

inline int ply_type_size(const std::string &t) {
    static const std::map<std::string, int> sizes = {
        {"char", 1},   {"uchar", 1},   {"int8", 1},  {"uint8", 1},  {"short", 2},   {"ushort", 2},
        {"int16", 2},  {"uint16", 2},  {"int", 4},   {"uint", 4},   {"int32", 4},   {"uint32", 4},
        {"float", 4},  {"float32", 4}, {"double", 8}, {"float64", 8}};
    auto it = sizes.find(t);
    return it == sizes.end() ? 0 : it->second;
}

template <class T> T read_le(const char *p) {
    T v;
    std::memcpy(&v, p, sizeof v);
    return to_little(v);
}

inline double ply_value(const char *p, const std::string &t) {
    if (t == "float" || t == "float32") return read_le<float>(p);
    if (t == "double" || t == "float64") return read_le<double>(p);
    if (t == "uchar" || t == "uint8") return read_le<std::uint8_t>(p);
    if (t == "char" || t == "int8") return read_le<std::int8_t>(p);
    if (t == "ushort" || t == "uint16") return read_le<std::uint16_t>(p);
    if (t == "short" || t == "int16") return read_le<std::int16_t>(p);
    if (t == "uint" || t == "uint32") return read_le<std::uint32_t>(p);
    return read_le<std::int32_t>(p);
}

inline PlyFile parse_ply(std::string bytes, const std::string &what) {
    PlyFile f;
    const std::size_t end = bytes.find("end_header\n");
    require(bytes.rfind("ply\n", 0) == 0 && end != std::string::npos, ErrorKind::Io, what + ": not a PLY file");
    std::istringstream header(bytes.substr(0, end));
    std::string line;
    bool format_ok = false;
    while (std::getline(header, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "format") {
            std::string fmt, version;
            ls >> fmt >> version;
            require(fmt == "binary_little_endian", ErrorKind::Io,
                    what + ": only binary_little_endian PLY is supported (got " + fmt + ")");
            format_ok = true;
        } else if (key == "comment" || key == "obj_info") {
            std::string rest;
            std::getline(ls, rest);
            f.comments.push_back(rest.empty() ? rest : rest.substr(1));
        } else if (key == "element") {
            PlyElement e;
            ls >> e.name >> e.count;
            require(static_cast<bool>(ls), ErrorKind::Io, what + ": malformed element line '" + line + "'");
            f.elements.push_back(std::move(e));
        } else if (key == "property") {
            require(!f.elements.empty(), ErrorKind::Io, what + ": property before any element");
            PlyProperty p;
            ls >> p.type;
            require(p.type != "list", ErrorKind::Io, what + ": list properties are not supported");
            ls >> p.name;
            p.size = ply_type_size(p.type);
            require(p.size > 0, ErrorKind::Io, what + ": unknown property type '" + p.type + "'");
            PlyElement &e = f.elements.back();
            p.offset = e.stride;
            e.stride += static_cast<std::size_t>(p.size);
            e.properties.push_back(std::move(p));
        }
    }
    require(format_ok, ErrorKind::Io, what + ": missing format line");
    f.body_offset = end + std::strlen("end_header\n");
    std::size_t need = 0;
    for (const PlyElement &e : f.elements) {
        need += e.count * e.stride;
    }
    require(bytes.size() >= f.body_offset + need, ErrorKind::Io, what + ": file is truncated");
    f.body = std::move(bytes);
    return f;
}

// Pointer to the first record of `name`, or null.
inline const char *ply_element_data(const PlyFile &f, const std::string &name, const PlyElement **out) {
    std::size_t offset = f.body_offset;
    for (const PlyElement &e : f.elements) {
        if (e.name == name) {
            *out = &e;
            return f.body.data() + offset;
        }
        offset += e.count * e.stride;
    }
    return nullptr;
}

inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string &s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    require(res.ec == std::errc{} && res.ptr == s.data() + s.size(), ErrorKind::Io, "bad number '" + s + "'");
    return v;
}

inline std::vector<std::string> scene_property_names(int sh_degree) {
    std::vector<std::string> names = {"x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2"};
    const int rest = 3 * (sh_coeff_count(sh_degree) - 1);
    for (int i = 0; i < rest; ++i) {
        names.push_back("f_rest_" + std::to_string(i));
    }
    for (const char *n : {"opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"}) {
        names.emplace_back(n);
    }
    return names;
}

// Per-splat values in property order. f_rest is channel-major: all red
// coefficients first, then green, then blue.
inline std::vector<double> scene_record(const GaussianSplat &s, int sh_degree) {
    std::vector<double> v = {s.mean.x(), s.mean.y(), s.mean.z(), s.sh[0], s.sh[1], s.sh[2]};
    const int k = sh_coeff_count(sh_degree);
    for (int c = 0; c < 3; ++c) {
        for (int j = 1; j < k; ++j) {
            v.push_back(s.sh[3 * j + c]);
        }
    }
    v.push_back(s.opacity_raw);
    for (int i = 0; i < 3; ++i) {
        v.push_back(s.scale_raw[i]);
    }
    for (int i = 0; i < 4; ++i) {
        v.push_back(s.rotation_raw[i]);
    }
    return v;
}

} // namespace detail

// Binary little-endian PLY in the common splat layout (raw log scales, logit
// opacity, unnormalized wxyz quaternion). The background is kept in a comment.
inline std::string encode_scene_ply(const Scene &scene, PlyPrecision precision = PlyPrecision::Float32) {
    scene.validate();
    const std::vector<std::string> names = detail::scene_property_names(scene.sh_degree);
    const char *type = precision == PlyPrecision::Float32 ? "float" : "double";
    std::string out = "ply\nformat binary_little_endian 1.0\n";
    out += "comment background " + detail::format_double(scene.background.x()) + " " +
           detail::format_double(scene.background.y()) + " " + detail::format_double(scene.background.z()) + "\n";
    out += "element vertex " + std::to_string(scene.size()) + "\n";
    for (const std::string &n : names) {
        out += std::string("property ") + type + " " + n + "\n";
    }
    out += "end_header\n";
    for (const GaussianSplat &s : scene.splats) {
        for (double v : detail::scene_record(s, scene.sh_degree)) {
            if (precision == PlyPrecision::Float32) {
                const float f = detail::to_little(static_cast<float>(v));
                out.append(reinterpret_cast<const char *>(&f), sizeof f);
            } else {
                const double d = detail::to_little(v);
                out.append(reinterpret_cast<const char *>(&d), sizeof d);
            }
        }
    }
    return out;
}

inline Scene decode_scene_ply(std::string bytes, const std::string &what = "scene PLY") {
    const detail::PlyFile f = detail::parse_ply(std::move(bytes), what);
    const detail::PlyElement *vertex = nullptr;
    const char *data = detail::ply_element_data(f, "vertex", &vertex);
    require(data != nullptr, ErrorKind::Io, what + ": no vertex element");

    int rest = 0;
    while (vertex->find("f_rest_" + std::to_string(rest))) {
        ++rest;
    }
    int degree = -1;
    for (int d = 0; d <= 3; ++d) {
        if (3 * (sh_coeff_count(d) - 1) == rest) {
            degree = d;
        }
    }
    require(degree >= 0, ErrorKind::Io,
            what + ": " + std::to_string(rest) + " f_rest properties do not match any SH degree");
    std::vector<const detail::PlyProperty *> props;
    for (const std::string &n : detail::scene_property_names(degree)) {
        const detail::PlyProperty *p = vertex->find(n);
        require(p != nullptr, ErrorKind::Io, what + ": missing vertex property '" + n + "'");
        props.push_back(p);
    }

    Scene scene;
    scene.sh_degree = degree;
    for (const std::string &c : f.comments) {
        std::istringstream ls(c);
        std::string key, r, g, b;
        if (ls >> key >> r >> g >> b && key == "background") {
            scene.background = Vec3(detail::parse_double(r), detail::parse_double(g), detail::parse_double(b));
        }
    }
    const int k = sh_coeff_count(degree);
    scene.splats.resize(vertex->count);
    for (std::size_t i = 0; i < vertex->count; ++i) {
        const char *rec = data + i * vertex->stride;
        auto value = [&](std::size_t j) { return detail::ply_value(rec + props[j]->offset, props[j]->type); };
        GaussianSplat &s = scene.splats[i];
        std::size_t j = 0;
        for (int a = 0; a < 3; ++a) {
            s.mean[a] = value(j++);
        }
        s.sh.assign(3 * static_cast<std::size_t>(k), 0.0);
        for (int c = 0; c < 3; ++c) {
            s.sh[c] = value(j++);
        }
        for (int c = 0; c < 3; ++c) {
            for (int m = 1; m < k; ++m) {
                s.sh[3 * m + c] = value(j++);
            }
        }
        s.opacity_raw = value(j++);
        for (int a = 0; a < 3; ++a) {
            s.scale_raw[a] = value(j++);
        }
        for (int a = 0; a < 4; ++a) {
            s.rotation_raw[a] = value(j++);
        }
        require(s.finite(), ErrorKind::InvalidPrimitive, what + ": splat " + std::to_string(i) + " is not finite");
    }
    scene.validate();
    return scene;
}

inline void save_scene_ply(const fs::path &path, const Scene &scene, PlyPrecision precision = PlyPrecision::Float32) {
    atomic_write(path, encode_scene_ply(scene, precision));
}

inline Scene load_scene_ply(const fs::path &path) { return decode_scene_ply(read_file(path), path.string()); }

// Point cloud PLY: float x, y, z and uchar red, green, blue.
inline std::string encode_points_ply(const PointCloud &cloud) {
    cloud.validate();
    std::string out = "ply\nformat binary_little_endian 1.0\nelement vertex " + std::to_string(cloud.size()) +
                      "\nproperty float x\nproperty float y\nproperty float z\n"
                      "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        for (int a = 0; a < 3; ++a) {
            const float f = detail::to_little(static_cast<float>(cloud.positions[i][a]));
            out.append(reinterpret_cast<const char *>(&f), sizeof f);
        }
        for (int a = 0; a < 3; ++a) {
            out.push_back(static_cast<char>(std::lround(std::clamp(cloud.colors[i][a], 0.0, 1.0) * 255.0)));
        }
    }
    return out;
}

// Reads x, y, z and optional red, green, blue (integer types are divided by 255).
inline PointCloud decode_points_ply(std::string bytes, const std::string &what = "point PLY") {
    const detail::PlyFile f = detail::parse_ply(std::move(bytes), what);
    const detail::PlyElement *vertex = nullptr;
    const char *data = detail::ply_element_data(f, "vertex", &vertex);
    require(data != nullptr, ErrorKind::Io, what + ": no vertex element");
    const detail::PlyProperty *xyz[3] = {vertex->find("x"), vertex->find("y"), vertex->find("z")};
    const detail::PlyProperty *rgb[3] = {vertex->find("red"), vertex->find("green"), vertex->find("blue")};
    for (const auto *p : xyz) {
        require(p != nullptr, ErrorKind::Io, what + ": missing x/y/z");
    }
    PointCloud cloud;
    for (std::size_t i = 0; i < vertex->count; ++i) {
        const char *rec = data + i * vertex->stride;
        Vec3 p, c(0.5, 0.5, 0.5);
        for (int a = 0; a < 3; ++a) {
            p[a] = detail::ply_value(rec + xyz[a]->offset, xyz[a]->type);
            if (rgb[a]) {
                const bool integral = rgb[a]->type.find("float") == std::string::npos && rgb[a]->type != "double";
                const double v = detail::ply_value(rec + rgb[a]->offset, rgb[a]->type);
                c[a] = integral ? v / 255.0 : v;
            }
        }
        cloud.positions.push_back(p);
        cloud.colors.push_back(c);
    }
    cloud.validate();
    return cloud;
}

} // namespace gsfix
