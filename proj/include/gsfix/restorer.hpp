#pragma once

#include "gsfix/io/cameras.hpp"
#include "gsfix/io/png.hpp"
#include "gsfix/rasterizer.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <map>
#include <memory>
#include <optional>
#include <stop_token>
#include <string>
#include <thread>
#include <vector>

namespace gsfix {

enum class RestoreStatus { Ok, Partial, Failed };

constexpr std::string_view to_string(RestoreStatus s) {
    switch (s) {
    case RestoreStatus::Ok: return "ok";
    case RestoreStatus::Partial: return "partial";
    case RestoreStatus::Failed: return "failed";
    }
    return "failed";
}

inline RestoreStatus parse_status(const std::string &s) {
    if (s == "ok") return RestoreStatus::Ok;
    if (s == "partial") return RestoreStatus::Partial;
    if (s == "failed") return RestoreStatus::Failed;
    fail(ErrorKind::Restorer, "unknown restoration status '" + s + "'");
}

struct RestorationRequest {
    std::string scene_id;
    int round = 0;
    std::vector<Image> frames;
    std::vector<CameraPose> frame_poses;
    std::vector<Image> ref_images; // exactly two
    std::vector<CameraPose> ref_poses;

    void validate() const {
        require(frames.size() == frame_poses.size(), ErrorKind::Restorer,
                "restoration request: " + std::to_string(frames.size()) + " frames but " +
                    std::to_string(frame_poses.size()) + " poses");
        require(ref_images.size() == 2 && ref_poses.size() == 2, ErrorKind::Restorer,
                "restoration request needs exactly two references");
        require(!scene_id.empty(), ErrorKind::Restorer, "restoration request needs a scene_id");
    }
};

struct RestorationResponse {
    std::vector<Image> fixed_frames;
    std::string backend;
    RestoreStatus status = RestoreStatus::Failed;
    std::string message;

    bool ok() const { return status == RestoreStatus::Ok; }

    static RestorationResponse failure(std::string backend, std::string message) {
        return {{}, std::move(backend), RestoreStatus::Failed, std::move(message)};
    }
};

class RestorerBackend {
public:
    virtual ~RestorerBackend() = default;
    virtual std::string name() const = 0;
    virtual RestorationResponse restore(const RestorationRequest &request) = 0;
};

// Validates the request, runs the backend and checks an ok response keeps
// frame count and resolutions. Backend exceptions become failed responses.
inline RestorationResponse restore(const RestorationRequest &request, RestorerBackend &backend) {
    request.validate();
    RestorationResponse r;
    try {
        r = backend.restore(request);
    } catch (const std::exception &e) {
        return RestorationResponse::failure(backend.name(), e.what());
    }
    if (r.backend.empty()) {
        r.backend = backend.name();
    }
    if (r.ok()) {
        if (r.fixed_frames.size() != request.frames.size()) {
            return RestorationResponse::failure(r.backend, "backend returned " + std::to_string(r.fixed_frames.size()) +
                                                               " frames for " + std::to_string(request.frames.size()));
        }
        for (std::size_t i = 0; i < r.fixed_frames.size(); ++i) {
            if (!r.fixed_frames[i].same_shape(request.frames[i])) {
                return RestorationResponse::failure(r.backend, "backend changed the resolution of frame " +
                                                                   std::to_string(i));
            }
        }
    }
    return r;
}

class IdentityRestorer final : public RestorerBackend {
public:
    std::string name() const override { return "identity"; }
    RestorationResponse restore(const RestorationRequest &request) override {
        return {request.frames, name(), RestoreStatus::Ok, {}};
    }
};

// ---------------------------------------------------------------------------
// Ground truth stores
// ---------------------------------------------------------------------------

class GroundTruthStore {
public:
    virtual ~GroundTruthStore() = default;
    virtual std::optional<Image> lookup(const CameraPose &pose) const = 0;
};

class MapGroundTruthStore final : public GroundTruthStore {
public:
    void add(const std::string &pose_id, Image img) { images_[pose_id] = std::move(img); }
    std::optional<Image> lookup(const CameraPose &pose) const override {
        auto it = images_.find(pose.pose_id);
        if (it == images_.end()) {
            return std::nullopt;
        }
        return it->second;
    }

private:
    std::map<std::string, Image> images_;
};

// <dir>/<pose_id>.png
class DirectoryGroundTruthStore final : public GroundTruthStore {
public:
    explicit DirectoryGroundTruthStore(fs::path dir) : dir_(std::move(dir)) {}
    std::optional<Image> lookup(const CameraPose &pose) const override {
        const fs::path p = dir_ / (pose.pose_id + ".png");
        if (!fs::exists(p)) {
            return std::nullopt;
        }
        return read_png(p);
    }

private:
    fs::path dir_;
};

// Renders a ground-truth scene at any requested pose.
class SceneGroundTruthStore final : public GroundTruthStore {
public:
    SceneGroundTruthStore(Scene scene, RenderConfig config = {})
        : scene_(std::move(scene)), config_(std::move(config)) {}
    std::optional<Image> lookup(const CameraPose &pose) const override {
        return render(scene_, pose, config_).rgb;
    }

private:
    Scene scene_;
    RenderConfig config_;
};

namespace detail {

// Ground truth for every frame, or the failure naming the first missing pose.
inline std::optional<RestorationResponse> lookup_all(const GroundTruthStore &store, const RestorationRequest &request,
                                                     const std::string &backend, std::vector<Image> &out) {
    out.clear();
    for (std::size_t i = 0; i < request.frames.size(); ++i) {
        std::optional<Image> gt = store.lookup(request.frame_poses[i]);
        if (!gt) {
            return RestorationResponse::failure(backend, "no ground truth for pose '" +
                                                             request.frame_poses[i].pose_id + "'");
        }
        if (!gt->same_shape(request.frames[i])) {
            return RestorationResponse::failure(backend, "ground truth for pose '" + request.frame_poses[i].pose_id +
                                                             "' has a different resolution");
        }
        out.push_back(std::move(*gt));
    }
    return std::nullopt;
}

} // namespace detail

class OracleRestorer final : public RestorerBackend {
public:
    explicit OracleRestorer(std::shared_ptr<const GroundTruthStore> store) : store_(std::move(store)) {}
    std::string name() const override { return "oracle"; }
    RestorationResponse restore(const RestorationRequest &request) override {
        std::vector<Image> gt;
        if (auto err = detail::lookup_all(*store_, request, name(), gt)) {
            return *err;
        }
        return {std::move(gt), name(), RestoreStatus::Ok, {}};
    }

private:
    std::shared_ptr<const GroundTruthStore> store_;
};

// beta * ground truth + (1 - beta) * artifact frame.
class BlendRestorer final : public RestorerBackend {
public:
    BlendRestorer(std::shared_ptr<const GroundTruthStore> store, double beta) : store_(std::move(store)), beta_(beta) {
        require(beta >= 0.0 && beta <= 1.0, ErrorKind::InvalidArgument, "blend beta must be in [0, 1]");
    }
    std::string name() const override { return "blend"; }
    double beta() const { return beta_; }
    RestorationResponse restore(const RestorationRequest &request) override {
        std::vector<Image> gt;
        if (auto err = detail::lookup_all(*store_, request, name(), gt)) {
            return *err;
        }
        for (std::size_t i = 0; i < gt.size(); ++i) {
            const Image &a = request.frames[i];
            for (std::size_t k = 0; k < a.size(); ++k) {
                gt[i].data[k] = beta_ * gt[i].data[k] + (1.0 - beta_) * a.data[k];
            }
        }
        return {std::move(gt), name(), RestoreStatus::Ok, {}};
    }

private:
    std::shared_ptr<const GroundTruthStore> store_;
    double beta_;
};

// ---------------------------------------------------------------------------
// Directory exchange protocol
//
//   <root>/jobs/<scene_id>/<round>/in/request.json + frame_NNN.png + ref_N.png
//   <root>/jobs/<scene_id>/<round>/out/response.json + fixed frames
//
// Manifests are written last (atomically), so their presence marks a complete job.
// ---------------------------------------------------------------------------

struct JobPaths {
    fs::path in;
    fs::path out;
};

inline JobPaths job_paths(const fs::path &root, const std::string &scene_id, int round) {
    require(!scene_id.empty() && scene_id.find('/') == std::string::npos && scene_id != "." && scene_id != "..",
            ErrorKind::Restorer, "scene_id '" + scene_id + "' is not a valid directory name");
    const fs::path job = root / "jobs" / scene_id / std::to_string(round);
    return {job / "in", job / "out"};
}

inline std::string frame_file_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%03zu.png", i);
    return buf;
}

inline void write_request(const fs::path &in_dir, const RestorationRequest &request) {
    request.validate();
    json manifest = {{"scene_id", request.scene_id}, {"round", request.round}};
    json poses = json::array(), files = json::array(), ref_poses = json::array(), ref_files = json::array();
    for (std::size_t i = 0; i < request.frames.size(); ++i) {
        const std::string name = frame_file_name(i);
        write_png(in_dir / name, request.frames[i]);
        poses.push_back(camera_to_json(request.frame_poses[i]));
        files.push_back(name);
    }
    for (std::size_t i = 0; i < 2; ++i) {
        const std::string name = "ref_" + std::to_string(i) + ".png";
        write_png(in_dir / name, request.ref_images[i]);
        ref_poses.push_back(camera_to_json(request.ref_poses[i]));
        ref_files.push_back(name);
    }
    manifest["poses"] = poses;
    manifest["files"] = files;
    manifest["ref_poses"] = ref_poses;
    manifest["ref_files"] = ref_files;
    atomic_write(in_dir / "request.json", manifest.dump(2) + "\n");
}

inline RestorationRequest read_request(const fs::path &in_dir) {
    try {
        const json m = json::parse(read_file(in_dir / "request.json"));
        RestorationRequest r;
        r.scene_id = m.at("scene_id").get<std::string>();
        r.round = m.at("round").get<int>();
        const json &poses = m.at("poses");
        const json &files = m.at("files");
        require(poses.size() == files.size(), ErrorKind::Restorer, "request.json: poses and files differ in length");
        for (std::size_t i = 0; i < files.size(); ++i) {
            r.frame_poses.push_back(camera_from_json(poses[i]));
            r.frames.push_back(read_png(in_dir / files[i].get<std::string>()));
        }
        for (std::size_t i = 0; i < m.at("ref_files").size(); ++i) {
            r.ref_poses.push_back(camera_from_json(m.at("ref_poses").at(i)));
            r.ref_images.push_back(read_png(in_dir / m.at("ref_files")[i].get<std::string>()));
        }
        r.validate();
        return r;
    } catch (const json::exception &e) {
        fail(ErrorKind::Restorer, (in_dir / "request.json").string() + ": " + e.what());
    }
}

inline void write_response(const fs::path &out_dir, const RestorationRequest &request,
                           const RestorationResponse &response) {
    json files = json::array();
    for (std::size_t i = 0; i < response.fixed_frames.size(); ++i) {
        const std::string name = frame_file_name(i);
        write_png(out_dir / name, response.fixed_frames[i]);
        files.push_back(name);
    }
    json manifest = {{"scene_id", request.scene_id},
                     {"round", request.round},
                     {"backend", response.backend},
                     {"status", std::string(to_string(response.status))},
                     {"files", files}};
    if (!response.message.empty()) {
        manifest["message"] = response.message;
    }
    atomic_write(out_dir / "response.json", manifest.dump(2) + "\n");
}

inline RestorationResponse read_response(const fs::path &out_dir) {
    try {
        const json m = json::parse(read_file(out_dir / "response.json"));
        RestorationResponse r;
        r.backend = m.at("backend").get<std::string>();
        r.status = parse_status(m.at("status").get<std::string>());
        r.message = m.value("message", std::string());
        for (const json &f : m.at("files")) {
            r.fixed_frames.push_back(read_png(out_dir / f.get<std::string>()));
        }
        return r;
    } catch (const json::exception &e) {
        fail(ErrorKind::Restorer, (out_dir / "response.json").string() + ": " + e.what());
    }
}

// Client side: writes the job and waits for the response manifest.
class RemoteRestorer final : public RestorerBackend {
public:
    explicit RemoteRestorer(fs::path root, std::chrono::milliseconds poll = std::chrono::seconds(1),
                            std::chrono::milliseconds timeout = std::chrono::seconds(300))
        : root_(std::move(root)), poll_(poll), timeout_(timeout) {}

    std::string name() const override { return "remote"; }

    RestorationResponse restore(const RestorationRequest &request) override {
        const JobPaths job = job_paths(root_, request.scene_id, request.round);
        if (fs::exists(job.out / "response.json")) {
            fs::remove_all(job.out);
        }
        write_request(job.in, request);
        const auto deadline = std::chrono::steady_clock::now() + timeout_;
        while (!fs::exists(job.out / "response.json")) {
            if (std::chrono::steady_clock::now() >= deadline) {
                return RestorationResponse::failure(
                    name(), "timed out after " + std::to_string(timeout_.count()) + " ms waiting for " +
                                (job.out / "response.json").string());
            }
            std::this_thread::sleep_for(poll_);
        }
        RestorationResponse r = read_response(job.out);
        r.backend = name() + ":" + r.backend;
        return r;
    }

private:
    fs::path root_;
    std::chrono::milliseconds poll_;
    std::chrono::milliseconds timeout_;
};

// Server side: answers every job under <root>/jobs that has a request but no
// response yet. Returns the number of jobs handled.
inline int serve_pending_jobs(const fs::path &root, RestorerBackend &backend) {
    const fs::path jobs = root / "jobs";
    if (!fs::exists(jobs)) {
        return 0;
    }
    int handled = 0;
    for (const auto &scene : fs::directory_iterator(jobs)) {
        if (!scene.is_directory()) {
            continue;
        }
        for (const auto &round : fs::directory_iterator(scene.path())) {
            const fs::path in = round.path() / "in";
            const fs::path out = round.path() / "out";
            if (!fs::exists(in / "request.json") || fs::exists(out / "response.json")) {
                continue;
            }
            RestorationRequest request;
            RestorationResponse response;
            try {
                request = read_request(in);
                response = restore(request, backend);
            } catch (const std::exception &e) {
                request.scene_id = scene.path().filename().string();
                response = RestorationResponse::failure(backend.name(), e.what());
            }
            write_response(out, request, response);
            ++handled;
        }
    }
    return handled;
}

// Polls until stopped.
inline void serve_jobs(const fs::path &root, RestorerBackend &backend, std::stop_token stop,
                       std::chrono::milliseconds poll = std::chrono::seconds(1)) {
    while (!stop.stop_requested()) {
        serve_pending_jobs(root, backend);
        std::this_thread::sleep_for(poll);
    }
}

// In-process loopback server running `backend` on a background thread.
class LoopbackServer {
public:
    LoopbackServer(fs::path root, std::unique_ptr<RestorerBackend> backend,
                   std::chrono::milliseconds poll = std::chrono::milliseconds(10))
        : backend_(std::move(backend)),
          thread_([root = std::move(root), poll, this](std::stop_token st) { serve_jobs(root, *backend_, st, poll); }) {}

private:
    std::unique_ptr<RestorerBackend> backend_;
    std::jthread thread_;
};

// ---------------------------------------------------------------------------
// Backend selection: identity | oracle:PATH | blend:BETA:PATH | remote:DIR.
// PATH is a directory of <pose_id>.png files or a ground-truth scene .ply.
// ---------------------------------------------------------------------------

inline std::unique_ptr<RestorerBackend> make_restorer(const std::string &spec,
                                                      std::shared_ptr<const GroundTruthStore> default_store = nullptr) {
    auto store_for = [&](const std::string &path) -> std::shared_ptr<const GroundTruthStore> {
        if (!path.empty() && fs::path(path).extension() == ".ply") {
            return std::make_shared<SceneGroundTruthStore>(load_scene_ply(path), RenderConfig{});
        }
        if (!path.empty()) {
            return std::make_shared<DirectoryGroundTruthStore>(path);
        }
        require(default_store != nullptr, ErrorKind::InvalidArgument,
                "restorer '" + spec + "' needs a ground-truth directory");
        return default_store;
    };
    if (spec == "identity") {
        return std::make_unique<IdentityRestorer>();
    }
    if (spec == "oracle" || spec.rfind("oracle:", 0) == 0) {
        return std::make_unique<OracleRestorer>(store_for(spec.size() > 7 ? spec.substr(7) : ""));
    }
    if (spec.rfind("blend:", 0) == 0) {
        const std::string rest = spec.substr(6);
        const auto colon = rest.find(':');
        double beta = 0.0;
        try {
            beta = std::stod(rest.substr(0, colon));
        } catch (const std::exception &) {
            fail(ErrorKind::InvalidArgument, "restorer '" + spec + "': bad blend beta");
        }
        return std::make_unique<BlendRestorer>(store_for(colon == std::string::npos ? "" : rest.substr(colon + 1)),
                                               beta);
    }
    if (spec.rfind("remote:", 0) == 0) {
        return std::make_unique<RemoteRestorer>(spec.substr(7));
    }
    fail(ErrorKind::InvalidArgument, "unknown restorer '" + spec + "' (identity|oracle:PATH|blend:BETA:PATH|remote:DIR)");
}

} // namespace gsfix
