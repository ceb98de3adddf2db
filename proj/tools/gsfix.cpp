#include "gsfix/bench.hpp"
#include "gsfix/gradcheck.hpp"
#include "gsfix/io/cameras.hpp"
#include "gsfix/io/ply.hpp"
#include "gsfix/io/png.hpp"
#include "gsfix/pipeline.hpp"
#include "gsfix/restorer.hpp"
#include "gsfix/synthetic_job.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <csignal>
#include <iostream>

using namespace gsfix;
using nlohmann::json;

namespace {

[[noreturn]] void usage_error(const std::string &msg) { fail(ErrorKind::InvalidArgument, msg); }

std::vector<View> load_views(const fs::path &cameras, const std::string &images_dir) {
    std::vector<View> views;
    for (const CameraRecord &r : load_cameras(cameras)) {
        const fs::path img = images_dir.empty() ? image_path(r, cameras) : fs::path(images_dir) / (r.pose.pose_id + ".png");
        View v{r.pose, read_png(img)};
        require(v.image.width == r.pose.width && v.image.height == r.pose.height, ErrorKind::Shape,
                img.string() + " does not match camera '" + r.pose.pose_id + "'");
        views.push_back(std::move(v));
    }
    return views;
}

void write_views(const fs::path &dir, const std::vector<View> &views, const std::string &manifest) {
    std::vector<CameraRecord> recs;
    for (const View &v : views) {
        const std::string file = v.pose.pose_id + ".png";
        write_png(dir / file, v.image);
        recs.push_back({v.pose, file});
    }
    save_cameras(dir / manifest, recs);
}

TrajectorySplit parse_split_arg(const std::string &s) {
    TrajectorySplit split;
    char c1 = 0, c2 = 0;
    std::istringstream in(s);
    in >> split.lead_in >> c1 >> split.orbit >> c2 >> split.lead_out;
    require(in && c1 == ',' && c2 == ',' && in.peek() == EOF, ErrorKind::InvalidArgument,
            "--split expects a,b,c (got '" + s + "')");
    return split;
}

// ---------------------------------------------------------------------------

struct FitArgs {
    std::string cameras, points, images, out, log;
    int iters = 500;
    int densify_interval = 0;
    bool float64 = false;
};

int run_fit(const FitArgs &a, std::uint64_t seed) {
    ReconJob job;
    job.inputs = load_views(a.cameras, a.images);
    job.init_points = load_points(a.points);
    job.rounds = 0;
    job.baseline_config.iterations = a.iters;
    job.baseline_config.densify_interval = a.densify_interval;
    job.baseline_config.seed = seed;
    AuditLog log;
    const Scene scene = fit_baseline(job, &log);
    save_scene_ply(a.out, scene, a.float64 ? PlyPrecision::Float64 : PlyPrecision::Float32);
    if (!a.log.empty()) {
        atomic_write(a.log, log.to_json().dump(2) + "\n");
    }
    std::cout << json{{"scene", a.out}, {"splats", scene.size()}}.dump() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

struct RenderArgs {
    std::string scene, cameras, out, traj, split, refs;
    int frames = 49;
};

int run_render(const RenderArgs &a) {
    const std::vector<CameraPose> cams = poses_of(load_cameras(a.cameras));
    std::vector<CameraPose> poses;
    std::vector<std::string> labels;
    json info = {{"traj", a.traj.empty() ? "cameras" : a.traj}};
    if (a.traj.empty()) {
        poses = cams;
        labels.assign(cams.size(), "camera");
    } else {
        require(cams.size() >= 2, ErrorKind::InvalidArgument, "trajectories need at least 2 cameras");
        std::size_t ia = 0, ib = 1;
        if (!a.refs.empty()) {
            const auto comma = a.refs.find(',');
            require(comma != std::string::npos, ErrorKind::InvalidArgument, "--refs expects two pose ids A,B");
            auto find = [&](const std::string &id) {
                for (std::size_t i = 0; i < cams.size(); ++i) {
                    if (cams[i].pose_id == id) {
                        return i;
                    }
                }
                fail(ErrorKind::InvalidArgument, "no camera named '" + id + "'");
            };
            ia = find(a.refs.substr(0, comma));
            ib = find(a.refs.substr(comma + 1));
        }
        TrajectoryPlan plan;
        if (a.traj == "interp") {
            plan = sample_interpolation(cams[ia], cams[ib], a.frames);
        } else if (a.traj == "ellipse") {
            const OrbitPath orbit = fit_orbit_path(cams);
            plan = sample_ellipse(orbit, 0.0, 2 * std::numbers::pi, a.frames, cams[0], "orbit");
        } else if (a.traj == "refguided") {
            std::optional<OrbitPath> orbit;
            try {
                orbit = fit_orbit_path(cams);
            } catch (const Error &e) {
                info["warning"] = std::string("orbit fit failed, using interpolation: ") + e.what();
            }
            if (orbit) {
                const TrajectorySplit split = a.split.empty() ? default_split(a.frames) : parse_split_arg(a.split);
                plan = sample_reference_guided(cams[ia], cams[ib], &*orbit, a.frames, split);
            } else {
                plan = sample_interpolation(cams[ia], cams[ib], a.frames);
                plan.interpolation_fallback = true;
            }
            info["interpolation_fallback"] = plan.interpolation_fallback;
        } else {
            usage_error("--traj must be interp, ellipse or refguided");
        }
        poses = plan.poses;
        for (SegmentLabel l : plan.labels) {
            labels.emplace_back(to_string(l));
        }
    }

    std::optional<Scene> scene;
    if (!a.scene.empty()) {
        scene = load_scene_ply(a.scene);
    }
    std::vector<CameraRecord> recs(poses.size());
    parallel_for(poses.size(), [&](std::size_t i) {
        recs[i].pose = poses[i];
        if (scene) {
            const std::string file = poses[i].pose_id + ".png";
            write_png(fs::path(a.out) / file, render(*scene, poses[i]).rgb);
            recs[i].image = file;
        }
    });
    json manifest = cameras_to_json(recs);
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        manifest[i]["segment"] = labels[i];
    }
    atomic_write(fs::path(a.out) / "cameras.json", manifest.dump(2) + "\n");
    info["frames"] = poses.size();
    info["manifest"] = (fs::path(a.out) / "cameras.json").string();
    std::cout << info.dump() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// fix --job config.json
//
// {
//   "scene_id": "garden", "cameras": "train/cameras.json", "points": "points.ply",
//   "heldout": "heldout/cameras.json", "rounds": 3, "restorer": "identity",
//   "trajectory": {"kind": "refguided", "frames": 49, "split": [8, 33, 8]},
//   "baseline": {"iterations": 500, "densify_interval": 0},
//   "round": {"iterations": 300, "anneal_span": 150},
//   "out": "out"
// }
// Relative paths resolve against the config file's directory.

void apply_train_config(const json &j, TrainConfig &cfg) {
    cfg.iterations = j.value("iterations", cfg.iterations);
    cfg.densify_interval = j.value("densify_interval", cfg.densify_interval);
    cfg.densify_from = j.value("densify_from", cfg.densify_from);
    cfg.densify_until = j.value("densify_until", cfg.densify_until);
    cfg.loss.anneal_span = j.value("anneal_span", cfg.loss.anneal_span);
    cfg.loss.lambda_gen_start = j.value("lambda_start", cfg.loss.lambda_gen_start);
    cfg.loss.lambda_gen_end = j.value("lambda_end", cfg.loss.lambda_gen_end);
}

int run_fix(const std::string &job_path, std::uint64_t seed) {
    json cfg;
    try {
        cfg = json::parse(read_file(job_path));
    } catch (const json::parse_error &e) {
        fail(ErrorKind::Io, job_path + ": " + e.what());
    }
    const fs::path base = fs::path(job_path).parent_path();
    auto resolve = [&](const std::string &p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
    ReconJob job;
    fs::path out;
    std::string restorer_spec;
    try {
        job.scene_id = cfg.value("scene_id", std::string("scene"));
        job.inputs = load_views(resolve(cfg.at("cameras").get<std::string>()), "");
        job.init_points = load_points(resolve(cfg.at("points").get<std::string>()));
        if (cfg.contains("heldout")) {
            job.heldout = load_views(resolve(cfg["heldout"].get<std::string>()), "");
        }
        job.rounds = cfg.value("rounds", 3);
        if (cfg.contains("trajectory")) {
            const json &t = cfg["trajectory"];
            const std::string kind = t.value("kind", std::string("refguided"));
            require(kind == "refguided" || kind == "interp", ErrorKind::InvalidArgument,
                    "trajectory.kind must be refguided or interp");
            job.trajectory.kind = kind == "interp" ? TrajectoryKind::Interpolation : TrajectoryKind::ReferenceGuided;
            job.trajectory.frames = t.value("frames", job.trajectory.frames);
            if (t.contains("split")) {
                const auto s = t["split"].get<std::vector<int>>();
                require(s.size() == 3, ErrorKind::InvalidArgument, "trajectory.split needs 3 entries");
                job.trajectory.split = TrajectorySplit{s[0], s[1], s[2]};
            }
        }
        apply_train_config(cfg.value("baseline", json::object()), job.baseline_config);
        apply_train_config(cfg.value("round", json::object()), job.round_config);
        job.baseline_config.seed = seed;
        job.round_config.seed = seed;
        restorer_spec = cfg.value("restorer", std::string("identity"));
        const std::size_t path_at = restorer_spec.rfind("oracle:", 0) == 0  ? 7
                                    : restorer_spec.rfind("blend:", 0) == 0 ? restorer_spec.find(':', 6) + 1
                                                                             : 0;
        if (path_at > 0 && path_at < restorer_spec.size() && !fs::path(restorer_spec.substr(path_at)).is_absolute()) {
            restorer_spec = restorer_spec.substr(0, path_at) + resolve(restorer_spec.substr(path_at)).string();
        }
        if (restorer_spec.rfind("remote:", 0) == 0) {
            restorer_spec = "remote:" + resolve(restorer_spec.substr(7)).string();
        }
        out = resolve(cfg.value("out", std::string("out")));
    } catch (const json::exception &e) {
        fail(ErrorKind::Io, job_path + ": " + e.what());
    }

    const std::unique_ptr<RestorerBackend> backend = make_restorer(restorer_spec);
    AuditLog fit_log;
    const Scene baseline = fit_baseline(job, &fit_log);
    save_scene_ply(out / "baseline.ply", baseline);
    ReconResult r = run_iterative_recon(job, baseline, *backend);
    for (std::size_t i = 0; i < r.round_scenes.size(); ++i) {
        save_scene_ply(out / ("round_" + std::to_string(i + 1) + ".ply"), r.round_scenes[i]);
    }
    save_scene_ply(out / "scene.ply", r.scene);
    json audit = fit_log.to_json();
    for (const json &e : r.log.events) {
        audit.push_back(e);
    }
    atomic_write(out / "audit.json", audit.dump(2) + "\n");
    const json metrics = metrics_to_json(r);
    atomic_write(out / "metrics.json", metrics.dump(2) + "\n");
    std::cout << metrics.dump() << "\n";
    if (r.failure) {
        fail(ErrorKind::Restorer, *r.failure);
    }
    return 0;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
    std::string cameras, points, out, scene_id = "scene";
    std::size_t k = 3;
    int iters = 500;
    std::string manifest, candidates, external;
    std::vector<std::string> reports;
    std::string csv, text;
};

int run_bench_build(const BenchArgs &a, std::uint64_t seed) {
    const DenseCapture cap = load_capture(a.cameras, a.points, a.scene_id);
    TrainConfig cfg;
    cfg.iterations = a.iters;
    cfg.seed = seed;
    const BenchmarkScene b = build_res_scene(cap, a.k, cfg, a.out);
    std::cout << json{{"manifest", (fs::path(a.out) / "scene.json").string()},
                      {"train_ids", b.sparse_train_ids},
                      {"pairs", b.eval_pairs.size()}}
                     .dump()
              << "\n";
    return 0;
}

int run_bench_eval(const BenchArgs &a) {
    const BenchmarkScene b = load_benchmark(a.manifest);
    const auto candidates = a.candidates.empty() ? load_artifacts(b) : load_candidates(b, a.candidates);
    ExternalScores ext;
    if (!a.external.empty()) {
        json j;
        try {
            j = json::parse(read_file(a.external));
        } catch (const json::parse_error &e) {
            fail(ErrorKind::Io, a.external + ": " + e.what());
        }
        ext = parse_external_scores(j, a.external);
    }
    const MetricsReport r = evaluate_scene(b, candidates, ext);
    const json j = report_to_json(r);
    if (!a.out.empty()) {
        atomic_write(a.out, j.dump(2) + "\n");
    }
    std::cout << json{{"scene_id", r.scene_id}, {"per_scene", j["per_scene"]}}.dump() << "\n";
    return 0;
}

int run_bench_report(const BenchArgs &a) {
    std::vector<MetricsReport> reports;
    for (const std::string &p : a.reports) {
        try {
            reports.push_back(report_from_json(json::parse(read_file(p))));
        } catch (const json::parse_error &e) {
            fail(ErrorKind::Io, p + ": " + e.what());
        }
    }
    const ReportTable t = aggregate_report(reports);
    if (!a.csv.empty()) {
        atomic_write(a.csv, t.to_csv());
    }
    if (!a.text.empty()) {
        atomic_write(a.text, t.to_text());
    }
    std::cout << t.to_text();
    return 0;
}

// ---------------------------------------------------------------------------

int run_gradcheck(std::uint64_t seed, int splats, int res, int degree) {
    const GradcheckResult r = gradcheck_random(seed, splats, res, degree);
    json groups = json::object();
    for (ParamGroup g : kParamGroups) {
        groups[std::string(to_string(g))] = r.relative_error(g);
    }
    std::cout << json{{"samples", r.samples}, {"excluded", r.excluded}, {"relative_error", groups}}.dump() << "\n";
    std::cout << "max relative error: " << r.worst() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------

int run_synth(const std::string &out, std::uint64_t seed, int splats, int size, int train, int heldout) {
    RingSceneOptions o;
    o.splats = splats;
    o.image_size = size;
    o.focal = 80.0 * size / 64.0;
    o.train_views = train;
    o.heldout_views = heldout;
    const RingScene rs = make_ring_scene(seed, o);
    const fs::path dir(out);
    save_scene_ply(dir / "truth.ply", rs.truth);
    atomic_write(dir / "points.ply", encode_points_ply(rs.init_points));
    write_views(dir / "train", rs.train, "cameras.json");
    write_views(dir / "heldout", rs.heldout, "cameras.json");
    std::cout << json{{"truth", (dir / "truth.ply").string()},
                      {"train", rs.train.size()},
                      {"heldout", rs.heldout.size()},
                      {"points", rs.init_points.size()}}
                     .dump()
              << "\n";
    return 0;
}

int run_serve(const std::string &root, const std::string &spec, bool once, int poll_ms) {
    const std::unique_ptr<RestorerBackend> backend = make_restorer(spec);
    if (once) {
        std::cout << json{{"served", serve_pending_jobs(root, *backend)}}.dump() << "\n";
        return 0;
    }
    static std::stop_source stop;
    std::signal(SIGINT, [](int) { stop.request_stop(); });
    std::signal(SIGTERM, [](int) { stop.request_stop(); });
    serve_jobs(root, *backend, stop.get_token(), std::chrono::milliseconds(poll_ms));
    return 0;
}

void print_error(std::string_view kind, const std::string &message) {
    std::cerr << json{{"error", kind}, {"message", message}}.dump() << std::endl;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Sparse-view Gaussian splatting reconstruction with restoration in the loop"};
    app.require_subcommand(1);
    app.fallthrough();
    std::uint64_t seed = 0;
    app.add_option("--seed", seed, "Seed for all randomness")->capture_default_str();

    FitArgs fit;
    CLI::App *fit_cmd = app.add_subcommand("fit", "Fit a baseline scene from sparse views");
    fit_cmd->add_option("--cameras", fit.cameras, "Cameras JSON (entries may carry image paths)")->required();
    fit_cmd->add_option("--points", fit.points, "Init points: PLY or COLMAP points3D.txt")->required();
    fit_cmd->add_option("--images", fit.images, "Directory of <pose_id>.png, overrides per-camera paths");
    fit_cmd->add_option("--out", fit.out, "Output scene PLY")->required();
    fit_cmd->add_option("--iters", fit.iters, "Optimization iterations")->capture_default_str();
    fit_cmd->add_option("--densify-interval", fit.densify_interval, "0 disables densification")->capture_default_str();
    fit_cmd->add_option("--log", fit.log, "Write the audit log JSON here");
    fit_cmd->add_flag("--float64", fit.float64, "Store double-precision properties");

    RenderArgs ren;
    CLI::App *render_cmd = app.add_subcommand("render", "Render cameras or a sampled trajectory");
    render_cmd->add_option("--scene", ren.scene, "Scene PLY (omit to write the manifest only)");
    render_cmd->add_option("--cameras", ren.cameras, "Cameras JSON")->required();
    render_cmd->add_option("--out", ren.out, "Output directory")->required();
    render_cmd->add_option("--traj", ren.traj, "interp | ellipse | refguided")
        ->check(CLI::IsMember({"interp", "ellipse", "refguided"}));
    render_cmd->add_option("--frames", ren.frames, "Frames in the trajectory")->capture_default_str();
    render_cmd->add_option("--split", ren.split, "Reference-guided split a,b,c");
    render_cmd->add_option("--refs", ren.refs, "Reference pose ids A,B (default: first two cameras)");

    std::string job_path;
    CLI::App *fix_cmd = app.add_subcommand("fix", "Run the iterative restoration loop");
    fix_cmd->add_option("--job", job_path, "Job config JSON")->required();

    BenchArgs bench;
    CLI::App *bench_cmd = app.add_subcommand("bench", "Benchmark builder and evaluation");
    bench_cmd->require_subcommand(1);
    CLI::App *bench_build = bench_cmd->add_subcommand("build", "Build artifact/GT pairs from a dense capture");
    bench_build->add_option("--cameras", bench.cameras, "Dense capture cameras JSON with images")->required();
    bench_build->add_option("--points", bench.points, "Init points")->required();
    bench_build->add_option("--k", bench.k, "Training views")->capture_default_str();
    bench_build->add_option("--iters", bench.iters, "Optimization iterations")->capture_default_str();
    bench_build->add_option("--scene-id", bench.scene_id, "Scene id")->capture_default_str();
    bench_build->add_option("--out", bench.out, "Output directory")->required();
    CLI::App *bench_eval = bench_cmd->add_subcommand("eval", "Score candidate frames against GT");
    bench_eval->add_option("--manifest", bench.manifest, "scene.json from bench build")->required();
    bench_eval->add_option("--candidates", bench.candidates, "Directory of <pose_id>.png (default: artifacts)");
    bench_eval->add_option("--external", bench.external, "External scores JSON {metric: {pose_id: score}}");
    bench_eval->add_option("--out", bench.out, "Report JSON");
    CLI::App *bench_report = bench_cmd->add_subcommand("report", "Aggregate per-scene reports");
    bench_report->add_option("--reports", bench.reports, "Report JSON files")->required();
    bench_report->add_option("--csv", bench.csv, "CSV output");
    bench_report->add_option("--text", bench.text, "Aligned text output");

    int gc_splats = 50, gc_res = 32, gc_degree = 1;
    CLI::App *grad_cmd = app.add_subcommand("gradcheck", "Compare analytic gradients to finite differences");
    grad_cmd->add_option("--splats", gc_splats, "Splat count")->capture_default_str();
    grad_cmd->add_option("--res", gc_res, "Image size")->capture_default_str();
    grad_cmd->add_option("--sh-degree", gc_degree, "SH degree")->capture_default_str()->check(CLI::Range(0, 3));

    std::string synth_out;
    int synth_splats = 300, synth_size = 64, synth_train = 3, synth_heldout = 8;
    CLI::App *synth_cmd = app.add_subcommand("synth", "Write a synthetic ring dataset");
    synth_cmd->add_option("--out", synth_out, "Output directory")->required();
    synth_cmd->add_option("--splats", synth_splats, "Ground-truth splats")->capture_default_str();
    synth_cmd->add_option("--size", synth_size, "Image size")->capture_default_str();
    synth_cmd->add_option("--train", synth_train, "Training views")->capture_default_str();
    synth_cmd->add_option("--heldout", synth_heldout, "Held-out views")->capture_default_str();

    std::string serve_root, serve_backend = "identity";
    bool serve_once = false;
    int serve_poll = 1000;
    CLI::App *serve_cmd = app.add_subcommand("serve", "Answer restorer jobs under a directory");
    serve_cmd->add_option("--root", serve_root, "Job root shared with remote:DIR")->required();
    serve_cmd->add_option("--backend", serve_backend, "identity | oracle:PATH | blend:BETA:PATH")->capture_default_str();
    serve_cmd->add_option("--poll-ms", serve_poll, "Polling interval")->capture_default_str();
    serve_cmd->add_flag("--once", serve_once, "Serve pending jobs and exit");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        print_error("usage", e.what());
        return 2;
    }

    try {
        if (*fit_cmd) {
            return run_fit(fit, seed);
        }
        if (*render_cmd) {
            return run_render(ren);
        }
        if (*fix_cmd) {
            return run_fix(job_path, seed);
        }
        if (*bench_build) {
            return run_bench_build(bench, seed);
        }
        if (*bench_eval) {
            return run_bench_eval(bench);
        }
        if (*bench_report) {
            return run_bench_report(bench);
        }
        if (*grad_cmd) {
            return run_gradcheck(seed, gc_splats, gc_res, gc_degree);
        }
        if (*synth_cmd) {
            return run_synth(synth_out, seed, synth_splats, synth_size, synth_train, synth_heldout);
        }
        if (*serve_cmd) {
            return run_serve(serve_root, serve_backend, serve_once, serve_poll);
        }
    } catch (const Error &e) {
        print_error(to_string(e.kind()), e.what());
        return 1;
    } catch (const std::exception &e) {
        print_error("internal", e.what());
        return 1;
    }
    return 0;
}
