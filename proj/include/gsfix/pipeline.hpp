#pragma once

#include "gsfix/optimizer.hpp"
#include "gsfix/restorer.hpp"
#include "gsfix/trajectory.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <functional>
#include <future>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace gsfix {

struct View {
    CameraPose pose;
    Image image;
};

enum class TrajectoryKind { Interpolation, ReferenceGuided };

struct TrajectorySpec {
    TrajectoryKind kind = TrajectoryKind::ReferenceGuided;
    int frames = 49; // per plan, including both references
    std::optional<TrajectorySplit> split;

    void validate() const {
        require(frames >= 2, ErrorKind::InvalidArgument, "trajectory needs at least 2 frames per plan");
        if (split) {
            require(split->total() == frames, ErrorKind::InvalidArgument, "trajectory split must sum to frames");
        }
    }
};

struct ReconJob {
    std::string scene_id = "scene";
    std::vector<View> inputs; // K reference views in trajectory order
    PointCloud init_points;
    int rounds = 3;
    TrajectorySpec trajectory;
    TrainConfig baseline_config;
    TrainConfig round_config;
    RenderConfig render;
    Vec3 background = Vec3::Zero();
    std::vector<View> heldout; // optional, only used for metrics

    void validate() const {
        require(inputs.size() >= 2, ErrorKind::InvalidArgument, "reconstruction needs at least 2 input views");
        require(rounds >= 0, ErrorKind::InvalidArgument, "rounds must be non-negative");
        for (const View &v : inputs) {
            v.pose.validate();
            require(v.image.width == v.pose.width && v.image.height == v.pose.height && v.image.channels == 3,
                    ErrorKind::Shape, "input image for '" + v.pose.pose_id + "' does not match its camera");
        }
        for (const View &v : heldout) {
            require(v.image.width == v.pose.width && v.image.height == v.pose.height && v.image.channels == 3,
                    ErrorKind::Shape, "held-out image for '" + v.pose.pose_id + "' does not match its camera");
        }
        trajectory.validate();
        baseline_config.validate();
        round_config.validate();
        render.validate();
    }
};

// ---------------------------------------------------------------------------
// Audit log
// ---------------------------------------------------------------------------

struct AuditLog {
    std::vector<nlohmann::json> events;

    void add(nlohmann::json e) { events.push_back(std::move(e)); }
    nlohmann::json to_json() const { return nlohmann::json(events); }
};

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

inline bool point_in_frustum(const Vec3 &p, const CameraPose &cam, double near = kDefaultNearPlane) {
    const Vec3 c = cam.to_camera(p);
    if (!(c.z() > near)) {
        return false;
    }
    const Vec2 uv = cam.project(c);
    // Pixel centers sit at integer coordinates, so the image covers [-0.5, size - 0.5).
    return uv.x() >= -0.5 && uv.x() < cam.width - 0.5 && uv.y() >= -0.5 && uv.y() < cam.height - 0.5;
}

// Keeps points inside at least one camera's frustum.
inline PointCloud filter_visible_points(const PointCloud &points, const std::vector<CameraPose> &cams,
                                        double near = kDefaultNearPlane) {
    points.validate();
    PointCloud out;
    for (std::size_t i = 0; i < points.size(); ++i) {
        for (const CameraPose &c : cams) {
            if (point_in_frustum(points.positions[i], c, near)) {
                out.positions.push_back(points.positions[i]);
                out.colors.push_back(points.colors[i]);
                break;
            }
        }
    }
    return out;
}

// Mean distance to the k nearest other points (brute force).
inline std::vector<double> mean_knn_distance(const std::vector<Vec3> &pts, int k = 3) {
    std::vector<double> out(pts.size(), 0.0);
    parallel_for(pts.size(), [&](std::size_t i) {
        std::vector<double> d;
        d.reserve(pts.size());
        for (std::size_t j = 0; j < pts.size(); ++j) {
            if (j != i) {
                d.push_back((pts[i] - pts[j]).norm());
            }
        }
        const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(k), d.size());
        if (kk == 0) {
            out[i] = 0.0;
            return;
        }
        std::partial_sort(d.begin(), d.begin() + static_cast<long>(kk), d.end());
        double s = 0.0;
        for (std::size_t m = 0; m < kk; ++m) {
            s += d[m];
        }
        out[i] = s / static_cast<double>(kk);
    });
    return out;
}

inline constexpr double kInitOpacity = 0.1;
inline constexpr double kMinInitScale = 1e-4;

// One isotropic splat per point: scale from the mean 3-NN distance, opacity
// 0.1, degree-0 color from the point color.
inline Scene initialize_scene(const PointCloud &points, const Vec3 &background = Vec3::Zero()) {
    points.validate();
    require(points.size() > 0, ErrorKind::InitFailure, "no points left to initialize the scene from");
    const std::vector<double> knn = mean_knn_distance(points.positions, 3);
    Scene scene;
    scene.sh_degree = 0;
    scene.background = background;
    for (std::size_t i = 0; i < points.size(); ++i) {
        GaussianSplat s;
        s.mean = points.positions[i];
        s.scale_raw = Vec3::Constant(std::log(std::max(knn[i], kMinInitScale)));
        s.rotation_raw = Vec4(1, 0, 0, 0);
        s.opacity_raw = logit(kInitOpacity);
        s.sh = {(points.colors[i][0] - 0.5) / sh_const::C0, (points.colors[i][1] - 0.5) / sh_const::C0,
                (points.colors[i][2] - 0.5) / sh_const::C0};
        scene.splats.push_back(std::move(s));
    }
    return scene;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainStats {
    std::vector<double> loss; // per iteration
    std::size_t final_splats = 0;
};

namespace detail {

// d(loss)/d(params) for one view, given the gradient of the loss with respect to its render.
inline void accumulate_view_grad(const Scene &scene, const CameraPose &cam, const RenderConfig &cfg,
                                 const Image &upstream, GradientBuffer &grads) {
    grads += render_backward(scene, cam, cfg, upstream);
}

} // namespace detail

// Each iteration takes reference view (iter mod K) and, when generative views
// are present, one generative view drawn uniformly at random. The loss is
// L_recon + lambda(iter) L_gen with lambda annealed from iteration 0.
inline TrainStats train_scene(Scene &scene, const std::vector<View> &refs, const std::vector<View> &gen,
                              const TrainConfig &config, const RenderConfig &render_cfg) {
    config.validate();
    require(!refs.empty(), ErrorKind::InvalidArgument, "training needs at least one reference view");
    TrainStats stats;
    if (config.iterations == 0) {
        stats.final_splats = scene.size();
        return stats;
    }
    std::mt19937_64 rng(config.seed);
    AdamState adam = AdamState::for_scene(scene);
    DensifyStats dstats = DensifyStats::for_scene(scene);
    std::uniform_int_distribution<std::size_t> pick_gen(0, gen.empty() ? 0 : gen.size() - 1);
    for (int iter = 0; iter < config.iterations; ++iter) {
        const View &ref = refs[static_cast<std::size_t>(iter) % refs.size()];
        const View *g = gen.empty() ? nullptr : &gen[pick_gen(rng)];
        std::vector<Image> ref_r{render(scene, ref.pose, render_cfg).rgb}, ref_t{ref.image};
        std::vector<Image> gen_r, gen_t;
        if (g) {
            gen_r.push_back(render(scene, g->pose, render_cfg).rgb);
            gen_t.push_back(g->image);
        }
        const TotalLoss loss = total_loss(ref_r, ref_t, gen_r, gen_t, iter, config.loss, true);
        stats.loss.push_back(loss.value);
        GradientBuffer grads = GradientBuffer::zeros_like(scene);
        detail::accumulate_view_grad(scene, ref.pose, render_cfg, loss.ref_grads[0], grads);
        if (g && loss.gen_scales[0] != 0.0) {
            detail::accumulate_view_grad(scene, g->pose, render_cfg, loss.gen_grads[0], grads);
        }
        optimize_step(scene, grads, adam, config);
        if (config.densify_interval > 0) {
            dstats.accumulate(grads);
            const int next = iter + 1;
            if (next >= config.densify_from && next <= config.densify_until && next % config.densify_interval == 0) {
                densify_and_prune(scene, dstats, config, rng, &adam);
                dstats = DensifyStats::for_scene(scene);
            }
        }
    }
    stats.final_splats = scene.size();
    return stats;
}

struct ViewMetrics {
    double psnr = 0.0;
    double ssim = 0.0;
};

inline ViewMetrics evaluate_views(const Scene &scene, const std::vector<View> &views, const RenderConfig &cfg) {
    ViewMetrics m;
    if (views.empty()) {
        return m;
    }
    for (const View &v : views) {
        const Image r = render(scene, v.pose, cfg).rgb;
        m.psnr += psnr(r, v.image);
        m.ssim += ssim(r, v.image);
    }
    m.psnr /= static_cast<double>(views.size());
    m.ssim /= static_cast<double>(views.size());
    return m;
}

namespace detail {

inline nlohmann::json loss_summary(const std::vector<double> &loss, int samples = 20) {
    nlohmann::json trace = nlohmann::json::array();
    if (loss.empty()) {
        return trace;
    }
    const std::size_t step = std::max<std::size_t>(1, loss.size() / static_cast<std::size_t>(samples));
    for (std::size_t i = 0; i < loss.size(); i += step) {
        trace.push_back({{"iter", i}, {"loss", loss[i]}});
    }
    trace.push_back({{"iter", loss.size() - 1}, {"loss", loss.back()}});
    return trace;
}

} // namespace detail

// Filters the points to the input frusta, initializes, then optimizes with the
// reconstruction loss only.
inline Scene fit_baseline(const ReconJob &job, AuditLog *log = nullptr) {
    job.validate();
    std::vector<CameraPose> poses;
    for (const View &v : job.inputs) {
        poses.push_back(v.pose);
    }
    const PointCloud visible = filter_visible_points(job.init_points, poses, job.render.near_plane);
    require(visible.size() > 0, ErrorKind::InitFailure,
            "none of the " + std::to_string(job.init_points.size()) + " init points is visible from the input views");
    Scene scene = initialize_scene(visible, job.background);
    const TrainStats stats = train_scene(scene, job.inputs, {}, job.baseline_config, job.render);
    if (log) {
        log->add({{"event", "baseline"},
                  {"points", job.init_points.size()},
                  {"visible_points", visible.size()},
                  {"iterations", job.baseline_config.iterations},
                  {"splats", stats.final_splats},
                  {"loss", detail::loss_summary(stats.loss)}});
    }
    return scene;
}

// ---------------------------------------------------------------------------
// Iterative restoration loop
// ---------------------------------------------------------------------------

struct RoundReport {
    int round = 0;
    std::size_t plans = 0;
    std::size_t frames_restored = 0;
    std::size_t generative_views = 0;
    std::size_t training_views = 0;
    std::optional<ViewMetrics> heldout;
    double final_loss = 0.0;
};

struct ReconResult {
    Scene scene;
    std::optional<ViewMetrics> baseline_heldout;
    std::vector<RoundReport> rounds;
    std::vector<Scene> round_scenes; // scene after each completed round
    std::vector<View> generative_set;
    AuditLog log;
    std::optional<std::string> failure; // set when a round was aborted and rolled back
};

inline bool same_pose(const CameraPose &a, const CameraPose &b, double tol = 1e-12) {
    return a.rotation.angularDistance(b.rotation) <= tol && (a.translation - b.translation).norm() <= tol;
}

// Reference-guided (or interpolation) plans for every adjacent pair of input views.
inline std::vector<TrajectoryPlan> plan_trajectories(const ReconJob &job, AuditLog *log = nullptr) {
    std::vector<CameraPose> poses;
    for (const View &v : job.inputs) {
        poses.push_back(v.pose);
    }
    std::optional<OrbitPath> orbit;
    if (job.trajectory.kind == TrajectoryKind::ReferenceGuided) {
        try {
            orbit = fit_orbit_path(poses);
        } catch (const Error &e) {
            if (log) {
                log->add({{"event", "warning"}, {"message", std::string("orbit fit failed, using interpolation: ") +
                                                                e.what()}});
            }
        }
    }
    const int n = job.trajectory.frames;
    std::vector<TrajectoryPlan> plans;
    for (std::size_t k = 0; k + 1 < poses.size(); ++k) {
        if (orbit) {
            const TrajectorySplit split = job.trajectory.split.value_or(default_split(n));
            plans.push_back(sample_reference_guided(poses[k], poses[k + 1], &*orbit, n, split));
            if (plans.back().interpolation_fallback && log) {
                log->add({{"event", "warning"},
                          {"message", "zero-length orbit arc between '" + poses[k].pose_id + "' and '" +
                                          poses[k + 1].pose_id + "', using interpolation"}});
            }
        } else {
            plans.push_back(sample_interpolation(poses[k], poses[k + 1], n));
        }
    }
    return plans;
}

// Renders every plan's interior poses, restores them against the plan's two
// references, merges the fixed frames into the generative set (latest wins at
// an identical pose), then re-optimizes with the annealed total loss. A failed
// restoration aborts the round and restores the pre-round state.
inline ReconResult run_iterative_recon(const ReconJob &job, const Scene &baseline, RestorerBackend &backend) {
    job.validate();
    ReconResult result;
    result.scene = baseline;
    if (!job.heldout.empty()) {
        result.baseline_heldout = evaluate_views(baseline, job.heldout, job.render);
    }
    const std::vector<TrajectoryPlan> plans = plan_trajectories(job, &result.log);

    for (int round = 1; round <= job.rounds; ++round) {
        const Scene snapshot = result.scene;
        const std::vector<View> gen_snapshot = result.generative_set;

        std::vector<RestorationRequest> requests(plans.size());
        for (std::size_t p = 0; p < plans.size(); ++p) {
            RestorationRequest &req = requests[p];
            req.scene_id = job.scene_id + "-pair" + std::to_string(p);
            req.round = round;
            for (std::size_t i = 1; i + 1 < plans[p].size(); ++i) {
                req.frame_poses.push_back(plans[p].poses[i]);
                req.frames.push_back(render(result.scene, plans[p].poses[i], job.render).rgb);
            }
            req.ref_poses = {job.inputs[p].pose, job.inputs[p + 1].pose};
            req.ref_images = {job.inputs[p].image, job.inputs[p + 1].image};
        }

        std::vector<RestorationResponse> responses(plans.size());
        {
            std::vector<std::future<RestorationResponse>> pending;
            for (const RestorationRequest &req : requests) {
                pending.push_back(std::async(std::launch::async, [&backend, &req] { return restore(req, backend); }));
            }
            for (std::size_t p = 0; p < pending.size(); ++p) {
                responses[p] = pending[p].get();
            }
        }

        std::optional<std::string> failure;
        for (std::size_t p = 0; p < plans.size(); ++p) {
            result.log.add({{"event", "restore"},
                            {"round", round},
                            {"scene_id", requests[p].scene_id},
                            {"backend", responses[p].backend},
                            {"status", std::string(to_string(responses[p].status))},
                            {"frames", requests[p].frames.size()},
                            {"message", responses[p].message}});
            if (!responses[p].ok() && !failure) {
                failure = "round " + std::to_string(round) + ": restorer " + std::string(to_string(responses[p].status)) +
                          " for " + requests[p].scene_id + (responses[p].message.empty() ? "" : ": " + responses[p].message);
            }
        }

        RoundReport report;
        report.round = round;
        report.plans = plans.size();
        if (!failure) {
            for (std::size_t p = 0; p < plans.size(); ++p) {
                for (std::size_t i = 0; i < responses[p].fixed_frames.size(); ++i) {
                    View v{requests[p].frame_poses[i], std::move(responses[p].fixed_frames[i])};
                    auto same = std::find_if(result.generative_set.begin(), result.generative_set.end(),
                                             [&](const View &g) { return same_pose(g.pose, v.pose); });
                    if (same != result.generative_set.end()) {
                        *same = std::move(v);
                    } else {
                        result.generative_set.push_back(std::move(v));
                    }
                    ++report.frames_restored;
                }
            }
            try {
                TrainConfig cfg = job.round_config;
                cfg.seed = job.round_config.seed + static_cast<std::uint64_t>(round);
                const TrainStats stats = train_scene(result.scene, job.inputs, result.generative_set, cfg, job.render);
                report.final_loss = stats.loss.empty() ? 0.0 : stats.loss.back();
                result.log.add({{"event", "train"},
                                {"round", round},
                                {"iterations", cfg.iterations},
                                {"generative_views", result.generative_set.size()},
                                {"splats", stats.final_splats},
                                {"loss", detail::loss_summary(stats.loss)}});
            } catch (const Error &e) {
                failure = "round " + std::to_string(round) + ": optimization failed: " + e.what();
            }
        }

        if (failure) {
            result.scene = snapshot;
            result.generative_set = gen_snapshot;
            result.failure = failure;
            result.log.add({{"event", "rollback"}, {"round", round}, {"message", *failure}});
            break;
        }

        report.generative_views = result.generative_set.size();
        report.training_views = job.inputs.size() + result.generative_set.size();
        if (!job.heldout.empty()) {
            report.heldout = evaluate_views(result.scene, job.heldout, job.render);
        }
        result.rounds.push_back(report);
        result.round_scenes.push_back(result.scene);
    }
    return result;
}

inline nlohmann::json metrics_to_json(const ReconResult &r) {
    nlohmann::json rounds = nlohmann::json::array();
    for (const RoundReport &rep : r.rounds) {
        nlohmann::json j = {{"round", rep.round},
                            {"plans", rep.plans},
                            {"frames_restored", rep.frames_restored},
                            {"generative_views", rep.generative_views},
                            {"training_views", rep.training_views},
                            {"final_loss", rep.final_loss}};
        if (rep.heldout) {
            j["heldout_psnr"] = rep.heldout->psnr;
            j["heldout_ssim"] = rep.heldout->ssim;
        }
        rounds.push_back(std::move(j));
    }
    nlohmann::json out = {{"rounds", rounds}};
    if (r.baseline_heldout) {
        out["baseline_heldout_psnr"] = r.baseline_heldout->psnr;
        out["baseline_heldout_ssim"] = r.baseline_heldout->ssim;
    }
    if (r.failure) {
        out["failure"] = *r.failure;
    }
    return out;
}

} // namespace gsfix
