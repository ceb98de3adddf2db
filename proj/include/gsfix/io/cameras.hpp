#pragma once

#include "gsfix/io/files.hpp"
#include "gsfix/io/ply.hpp"
#include "gsfix/scene.hpp"

#include <json.hpp>

#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace gsfix {

using json = nlohmann::json;

struct CameraRecord {
    CameraPose pose;
    std::optional<std::string> image; // path, relative to the cameras file unless absolute
};

inline json camera_to_json(const CameraPose &c) {
    const Eigen::Quaterniond &q = c.rotation;
    return {{"pose_id", c.pose_id},
            {"quaternion", {q.w(), q.x(), q.y(), q.z()}},
            {"translation", {c.translation.x(), c.translation.y(), c.translation.z()}},
            {"fx", c.fx},
            {"fy", c.fy},
            {"cx", c.cx},
            {"cy", c.cy},
            {"width", c.width},
            {"height", c.height}};
}

// Quaternions already unit length (to rounding) keep their exact bits; others are normalized.
inline CameraPose camera_from_json(const json &j) {
    try {
        const auto q = j.at("quaternion").get<std::vector<double>>();
        const auto t = j.at("translation").get<std::vector<double>>();
        const std::string id = j.at("pose_id").get<std::string>();
        require(q.size() == 4 && t.size() == 3, ErrorKind::Io,
                "camera '" + id + "': quaternion needs 4 and translation 3 entries");
        Eigen::Quaterniond quat(q[0], q[1], q[2], q[3]);
        CameraPose cam = CameraPose::make(quat, Vec3(t[0], t[1], t[2]), j.at("fx").get<double>(),
                                          j.at("fy").get<double>(), j.at("cx").get<double>(),
                                          j.at("cy").get<double>(), j.at("width").get<int>(),
                                          j.at("height").get<int>(), id);
        if (std::abs(quat.squaredNorm() - 1.0) <= 8 * std::numeric_limits<double>::epsilon()) {
            cam.rotation = quat;
        }
        return cam;
    } catch (const json::exception &e) {
        fail(ErrorKind::Io, std::string("malformed camera entry: ") + e.what());
    }
}

inline json cameras_to_json(const std::vector<CameraRecord> &cams) {
    json arr = json::array();
    for (const CameraRecord &r : cams) {
        json j = camera_to_json(r.pose);
        if (r.image) {
            j["image"] = *r.image;
        }
        arr.push_back(std::move(j));
    }
    return arr;
}

inline std::vector<CameraRecord> cameras_from_json(const json &arr) {
    require(arr.is_array(), ErrorKind::Io, "cameras file must hold a JSON array");
    std::vector<CameraRecord> out;
    std::set<std::string> ids;
    for (const json &j : arr) {
        CameraRecord r{camera_from_json(j), std::nullopt};
        require(ids.insert(r.pose.pose_id).second, ErrorKind::Io, "duplicate pose_id '" + r.pose.pose_id + "'");
        if (j.contains("image") && !j["image"].is_null()) {
            r.image = j["image"].get<std::string>();
        }
        out.push_back(std::move(r));
    }
    return out;
}

inline void save_cameras(const fs::path &path, const std::vector<CameraRecord> &cams) {
    atomic_write(path, cameras_to_json(cams).dump(2) + "\n");
}

inline void save_cameras(const fs::path &path, const std::vector<CameraPose> &poses) {
    std::vector<CameraRecord> recs;
    for (const CameraPose &p : poses) {
        recs.push_back({p, std::nullopt});
    }
    save_cameras(path, recs);
}

inline std::vector<CameraRecord> load_cameras(const fs::path &path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error &e) {
        fail(ErrorKind::Io, path.string() + ": " + e.what());
    }
    return cameras_from_json(j);
}

inline std::vector<CameraPose> poses_of(const std::vector<CameraRecord> &recs) {
    std::vector<CameraPose> out;
    for (const CameraRecord &r : recs) {
        out.push_back(r.pose);
    }
    return out;
}

// Resolve a record's image path against the directory of its cameras file.
inline fs::path image_path(const CameraRecord &r, const fs::path &cameras_file) {
    require(r.image.has_value(), ErrorKind::Io, "camera '" + r.pose.pose_id + "' has no image path");
    const fs::path p(*r.image);
    return p.is_absolute() ? p : cameras_file.parent_path() / p;
}

// COLMAP text points: "POINT3D_ID X Y Z R G B ERROR TRACK..." with '#' comments.
inline PointCloud parse_colmap_points(const std::string &text, const std::string &what = "points3D.txt") {
    PointCloud cloud;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') {
            continue;
        }
        std::istringstream ls(line);
        long long id;
        double x, y, z;
        int r, g, b;
        ls >> id >> x >> y >> z >> r >> g >> b;
        require(static_cast<bool>(ls), ErrorKind::Io, what + ":" + std::to_string(line_no) + ": malformed point line");
        require(r >= 0 && r <= 255 && g >= 0 && g <= 255 && b >= 0 && b <= 255, ErrorKind::Io,
                what + ":" + std::to_string(line_no) + ": color out of range");
        cloud.positions.emplace_back(x, y, z);
        cloud.colors.emplace_back(r / 255.0, g / 255.0, b / 255.0);
    }
    cloud.validate();
    return cloud;
}

// .txt files are read as COLMAP points, anything else as a point PLY.
inline PointCloud load_points(const fs::path &path) {
    if (path.extension() == ".txt") {
        return parse_colmap_points(read_file(path), path.string());
    }
    return decode_points_ply(read_file(path), path.string());
}

} // namespace gsfix
