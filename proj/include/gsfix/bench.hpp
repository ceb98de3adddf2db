#pragma once

#include "gsfix/io/cameras.hpp"
#include "gsfix/io/png.hpp"
#include "gsfix/pipeline.hpp"

#include <cfenv>
#include <cmath>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace gsfix {

struct DenseCapture {
    std::string scene_id = "scene";
    std::vector<View> views; // in capture order
    PointCloud points;
};

enum class Split { Train, Heldout };

inline const char *to_string(Split s) { return s == Split::Train ? "train" : "heldout"; }

inline Split parse_split(const std::string &s) {
    if (s == "train") {
        return Split::Train;
    }
    require(s == "heldout", ErrorKind::Io, "unknown split '" + s + "'");
    return Split::Heldout;
}

struct EvalPair {
    std::string pose_id;
    fs::path artifact; // relative to the manifest directory
    fs::path gt;
    Split split = Split::Heldout;
};

struct BenchmarkScene {
    std::string scene_id;
    std::vector<std::string> sparse_train_ids;
    std::vector<EvalPair> eval_pairs;
    fs::path root; // directory holding scene.json

    void validate() const {
        require(!scene_id.empty(), ErrorKind::InvalidArgument, "benchmark scene needs an id");
        const std::set<std::string> train(sparse_train_ids.begin(), sparse_train_ids.end());
        require(train.size() == sparse_train_ids.size(), ErrorKind::InvalidArgument, "duplicate training id");
        std::set<std::string> seen;
        for (const EvalPair &p : eval_pairs) {
            require(seen.insert(p.pose_id).second, ErrorKind::InvalidArgument, "duplicate eval pose '" + p.pose_id + "'");
            require((p.split == Split::Train) == (train.count(p.pose_id) > 0), ErrorKind::InvalidArgument,
                    "eval pose '" + p.pose_id + "' is tagged " + to_string(p.split) + " but is" +
                        (train.count(p.pose_id) ? "" : " not") + " a training view");
        }
    }
};

// Indices round(i (M-1) / (K-1)) for i in [0, K), rounding half to even.
inline std::vector<std::size_t> select_train_indices(std::size_t capture_size, std::size_t k) {
    require(k >= 1 && k <= capture_size, ErrorKind::InvalidArgument,
            "cannot select " + std::to_string(k) + " views from a capture of " + std::to_string(capture_size));
    if (k == 1) {
        return {0};
    }
    std::vector<std::size_t> out;
    const int mode = std::fegetround();
    std::fesetround(FE_TONEAREST);
    for (std::size_t i = 0; i < k; ++i) {
        const double x = static_cast<double>(i) * static_cast<double>(capture_size - 1) / static_cast<double>(k - 1);
        out.push_back(static_cast<std::size_t>(std::nearbyint(x)));
    }
    std::fesetround(mode);
    return out;
}

inline nlohmann::json benchmark_to_json(const BenchmarkScene &s) {
    nlohmann::json pairs = nlohmann::json::array();
    for (const EvalPair &p : s.eval_pairs) {
        pairs.push_back({{"pose_id", p.pose_id},
                         {"artifact", p.artifact.generic_string()},
                         {"gt", p.gt.generic_string()},
                         {"split", to_string(p.split)}});
    }
    return {{"scene_id", s.scene_id}, {"train_ids", s.sparse_train_ids}, {"pairs", pairs}};
}

inline BenchmarkScene load_benchmark(const fs::path &manifest) {
    BenchmarkScene s;
    try {
        const nlohmann::json j = nlohmann::json::parse(read_file(manifest));
        s.scene_id = j.at("scene_id").get<std::string>();
        s.sparse_train_ids = j.at("train_ids").get<std::vector<std::string>>();
        for (const nlohmann::json &p : j.at("pairs")) {
            s.eval_pairs.push_back({p.at("pose_id").get<std::string>(), p.at("artifact").get<std::string>(),
                                    p.at("gt").get<std::string>(), parse_split(p.at("split").get<std::string>())});
        }
    } catch (const nlohmann::json::exception &e) {
        fail(ErrorKind::Io, manifest.string() + ": " + e.what());
    }
    s.root = manifest.parent_path();
    s.validate();
    return s;
}

// Fits a sparse-view scene on K stride-selected views, then renders every
// capture pose and writes artifact/GT PNG pairs plus scene.json under `out`.
inline BenchmarkScene build_res_scene(const DenseCapture &capture, std::size_t k, const TrainConfig &train,
                                      const fs::path &out, const RenderConfig &render_cfg = {},
                                      Scene *fitted = nullptr) {
    require(k >= 2, ErrorKind::InvalidArgument, "a benchmark build needs at least 2 training views");
    const std::vector<std::size_t> idx = select_train_indices(capture.views.size(), k);
    ReconJob job;
    job.scene_id = capture.scene_id;
    job.init_points = capture.points;
    job.baseline_config = train;
    job.render = render_cfg;
    job.rounds = 0;
    BenchmarkScene bench;
    bench.scene_id = capture.scene_id;
    bench.root = out;
    for (std::size_t i : idx) {
        job.inputs.push_back(capture.views[i]);
        bench.sparse_train_ids.push_back(capture.views[i].pose.pose_id);
    }
    const Scene scene = fit_baseline(job);
    const std::set<std::string> train_ids(bench.sparse_train_ids.begin(), bench.sparse_train_ids.end());
    bench.eval_pairs.resize(capture.views.size());
    parallel_for(capture.views.size(), [&](std::size_t i) {
        const View &v = capture.views[i];
        EvalPair &p = bench.eval_pairs[i];
        p.pose_id = v.pose.pose_id;
        p.artifact = fs::path("artifact") / (v.pose.pose_id + ".png");
        p.gt = fs::path("gt") / (v.pose.pose_id + ".png");
        p.split = train_ids.count(v.pose.pose_id) ? Split::Train : Split::Heldout;
        write_png(out / p.artifact, render(scene, v.pose, render_cfg).rgb);
        write_png(out / p.gt, v.image);
    });
    bench.validate();
    save_scene_ply(out / "scene.ply", scene);
    atomic_write(out / "scene.json", benchmark_to_json(bench).dump(2) + "\n");
    if (fitted) {
        *fitted = scene;
    }
    return bench;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct FrameMetrics {
    std::string pose_id;
    Split split = Split::Heldout;
    double psnr = 0.0;
    double ssim = 0.0;
    std::map<std::string, double> external;
};

struct SceneMeans {
    std::size_t frames = 0;
    double psnr = 0.0;
    double ssim = 0.0;
    std::map<std::string, double> external;
};

struct MetricsReport {
    std::string scene_id;
    std::vector<FrameMetrics> per_frame;
    SceneMeans per_scene;
    SceneMeans train;
    SceneMeans heldout;
};

// name -> (pose_id -> score)
using ExternalScores = std::map<std::string, std::map<std::string, double>>;

inline ExternalScores parse_external_scores(const nlohmann::json &j, const std::string &what = "external scores") {
    ExternalScores out;
    try {
        require(j.is_object(), ErrorKind::Io, what + ": expected an object of metric name -> {pose_id: score}");
        for (const auto &[name, rows] : j.items()) {
            for (const auto &[pose, v] : rows.items()) {
                out[name][pose] = v.get<double>();
            }
        }
    } catch (const nlohmann::json::exception &e) {
        fail(ErrorKind::Io, what + ": " + e.what());
    }
    return out;
}

inline SceneMeans mean_of(const std::vector<const FrameMetrics *> &rows) {
    SceneMeans m;
    m.frames = rows.size();
    if (rows.empty()) {
        return m;
    }
    for (const FrameMetrics *r : rows) {
        m.psnr += r->psnr;
        m.ssim += r->ssim;
        for (const auto &[k, v] : r->external) {
            m.external[k] += v;
        }
    }
    const double n = static_cast<double>(rows.size());
    m.psnr /= n;
    m.ssim /= n;
    for (auto &[k, v] : m.external) {
        v /= n;
    }
    return m;
}

inline void summarize(MetricsReport &r) {
    std::vector<const FrameMetrics *> all, train, held;
    for (const FrameMetrics &f : r.per_frame) {
        all.push_back(&f);
        (f.split == Split::Train ? train : held).push_back(&f);
    }
    r.per_scene = mean_of(all);
    r.train = mean_of(train);
    r.heldout = mean_of(held);
}

// Per-frame PSNR/SSIM of candidate frames against the scene's GT images.
// Every external metric must cover every evaluated pose.
inline MetricsReport evaluate_scene(const BenchmarkScene &scene, const std::map<std::string, Image> &candidates,
                                    const ExternalScores &external = {}) {
    scene.validate();
    MetricsReport r;
    r.scene_id = scene.scene_id;
    r.per_frame.resize(scene.eval_pairs.size());
    for (const EvalPair &p : scene.eval_pairs) {
        require(candidates.count(p.pose_id) > 0, ErrorKind::Io, "no candidate frame for pose '" + p.pose_id + "'");
        for (const auto &[name, rows] : external) {
            require(rows.count(p.pose_id) > 0, ErrorKind::Io,
                    "external metric '" + name + "' has no score for pose '" + p.pose_id + "'");
        }
    }
    parallel_for(scene.eval_pairs.size(), [&](std::size_t i) {
        const EvalPair &p = scene.eval_pairs[i];
        const Image gt = read_png(scene.root / p.gt);
        const Image &cand = candidates.at(p.pose_id);
        require(cand.width == gt.width && cand.height == gt.height && cand.channels == gt.channels, ErrorKind::Shape,
                "candidate for '" + p.pose_id + "' does not match its ground truth resolution");
        FrameMetrics &f = r.per_frame[i];
        f.pose_id = p.pose_id;
        f.split = p.split;
        f.psnr = psnr(cand, gt);
        f.ssim = ssim(cand, gt);
        for (const auto &[name, rows] : external) {
            f.external[name] = rows.at(p.pose_id);
        }
    });
    summarize(r);
    return r;
}

// Candidates read from <dir>/<pose_id>.png.
inline std::map<std::string, Image> load_candidates(const BenchmarkScene &scene, const fs::path &dir) {
    std::map<std::string, Image> out;
    for (const EvalPair &p : scene.eval_pairs) {
        out.emplace(p.pose_id, read_png(dir / (p.pose_id + ".png")));
    }
    return out;
}

inline std::map<std::string, Image> load_artifacts(const BenchmarkScene &scene) {
    std::map<std::string, Image> out;
    for (const EvalPair &p : scene.eval_pairs) {
        out.emplace(p.pose_id, read_png(scene.root / p.artifact));
    }
    return out;
}

inline nlohmann::json means_to_json(const SceneMeans &m) {
    nlohmann::json j = {{"frames", m.frames}, {"psnr", m.psnr}, {"ssim", m.ssim}};
    for (const auto &[k, v] : m.external) {
        j[k] = v;
    }
    return j;
}

inline nlohmann::json report_to_json(const MetricsReport &r) {
    nlohmann::json frames = nlohmann::json::array();
    for (const FrameMetrics &f : r.per_frame) {
        nlohmann::json j = {{"pose_id", f.pose_id}, {"split", to_string(f.split)}, {"psnr", f.psnr}, {"ssim", f.ssim}};
        for (const auto &[k, v] : f.external) {
            j[k] = v;
        }
        frames.push_back(std::move(j));
    }
    return {{"scene_id", r.scene_id},
            {"per_frame", frames},
            {"per_scene", means_to_json(r.per_scene)},
            {"train", means_to_json(r.train)},
            {"heldout", means_to_json(r.heldout)}};
}

inline MetricsReport report_from_json(const nlohmann::json &j) {
    MetricsReport r;
    try {
        r.scene_id = j.at("scene_id").get<std::string>();
        for (const nlohmann::json &f : j.at("per_frame")) {
            FrameMetrics m;
            for (const auto &[k, v] : f.items()) {
                if (k == "pose_id") {
                    m.pose_id = v.get<std::string>();
                } else if (k == "split") {
                    m.split = parse_split(v.get<std::string>());
                } else if (k == "psnr") {
                    m.psnr = v.get<double>();
                } else if (k == "ssim") {
                    m.ssim = v.get<double>();
                } else {
                    m.external[k] = v.get<double>();
                }
            }
            r.per_frame.push_back(std::move(m));
        }
    } catch (const nlohmann::json::exception &e) {
        fail(ErrorKind::Io, std::string("malformed metrics report: ") + e.what());
    }
    summarize(r);
    return r;
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

struct ReportTable {
    std::vector<std::string> columns; // after "scene": psnr, ssim, then external names (lpips first)
    std::vector<std::pair<std::string, std::vector<double>>> rows;
    std::vector<double> average;

    std::string to_csv() const {
        std::ostringstream out;
        out << "scene";
        for (const std::string &c : columns) {
            out << ',' << c;
        }
        out << '\n';
        auto row = [&](const std::string &name, const std::vector<double> &v) {
            out << name;
            for (double x : v) {
                out << ',' << detail::format_double(x);
            }
            out << '\n';
        };
        for (const auto &[name, v] : rows) {
            row(name, v);
        }
        row("average", average);
        return out.str();
    }

    std::string to_text() const {
        std::size_t name_w = std::string("average").size();
        for (const auto &r : rows) {
            name_w = std::max(name_w, r.first.size());
        }
        std::ostringstream out;
        out << std::left << std::setw(static_cast<int>(name_w)) << "scene";
        for (const std::string &c : columns) {
            out << "  " << std::right << std::setw(8) << c;
        }
        out << '\n';
        auto row = [&](const std::string &name, const std::vector<double> &v) {
            out << std::left << std::setw(static_cast<int>(name_w)) << name;
            for (std::size_t i = 0; i < v.size(); ++i) {
                out << "  " << std::right << std::setw(8) << std::fixed << std::setprecision(columns[i] == "psnr" ? 2 : 3)
                    << v[i];
            }
            out << '\n';
        };
        for (const auto &[name, v] : rows) {
            row(name, v);
        }
        row("average", average);
        return out.str();
    }
};

// One row per scene (per-scene means) plus the column average. All reports
// must carry the same external metrics.
inline ReportTable aggregate_report(const std::vector<MetricsReport> &reports) {
    require(!reports.empty(), ErrorKind::InvalidArgument, "no reports to aggregate");
    ReportTable t;
    std::vector<std::string> ext;
    for (const auto &[k, v] : reports.front().per_scene.external) {
        ext.push_back(k);
    }
    std::stable_partition(ext.begin(), ext.end(), [](const std::string &s) { return s == "lpips"; });
    t.columns = {"psnr", "ssim"};
    t.columns.insert(t.columns.end(), ext.begin(), ext.end());
    t.average.assign(t.columns.size(), 0.0);
    for (const MetricsReport &r : reports) {
        require(r.per_scene.external.size() == ext.size(), ErrorKind::InvalidArgument,
                "scene '" + r.scene_id + "' has a different set of external metrics");
        std::vector<double> v = {r.per_scene.psnr, r.per_scene.ssim};
        for (const std::string &e : ext) {
            require(r.per_scene.external.count(e) > 0, ErrorKind::InvalidArgument,
                    "scene '" + r.scene_id + "' lacks external metric '" + e + "'");
            v.push_back(r.per_scene.external.at(e));
        }
        for (std::size_t i = 0; i < v.size(); ++i) {
            t.average[i] += v[i];
        }
        t.rows.emplace_back(r.scene_id, std::move(v));
    }
    for (double &a : t.average) {
        a /= static_cast<double>(reports.size());
    }
    return t;
}

// Capture from a cameras file whose entries carry image paths.
inline DenseCapture load_capture(const fs::path &cameras, const fs::path &points, std::string scene_id) {
    DenseCapture c;
    c.scene_id = std::move(scene_id);
    for (const CameraRecord &r : load_cameras(cameras)) {
        c.views.push_back({r.pose, read_png(image_path(r, cameras))});
        require(c.views.back().image.width == r.pose.width && c.views.back().image.height == r.pose.height,
                ErrorKind::Shape, "image for '" + r.pose.pose_id + "' does not match its camera");
    }
    c.points = load_points(points);
    return c;
}

} // namespace gsfix
