#pragma once

#include "gsfix/losses.hpp"
#include "gsfix/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace gsfix {

struct LossWeights {
    double lambda_l1 = 0.8;
    double lambda_ssim = 0.2;
    double lambda_gen_start = 0.0;
    double lambda_gen_end = 1.0;
    int anneal_span = 1000;

    void validate() const {
        require(lambda_l1 >= 0 && lambda_ssim >= 0 && lambda_gen_start >= 0 && lambda_gen_end >= 0,
                ErrorKind::InvalidArgument, "loss weights must be non-negative");
        require(lambda_gen_start <= lambda_gen_end, ErrorKind::InvalidArgument,
                "lambda_gen_start must not exceed lambda_gen_end");
        require(anneal_span >= 0, ErrorKind::InvalidArgument, "anneal_span must be non-negative");
    }
};

// Linear ramp from lambda_gen_start (iter 0) to lambda_gen_end (iter >= anneal_span).
inline double anneal_lambda(int iter, const LossWeights &w) {
    if (iter <= 0) {
        return w.anneal_span == 0 ? w.lambda_gen_end : w.lambda_gen_start;
    }
    if (iter >= w.anneal_span) {
        return w.lambda_gen_end;
    }
    const double t = static_cast<double>(iter) / static_cast<double>(w.anneal_span);
    return w.lambda_gen_start + (w.lambda_gen_end - w.lambda_gen_start) * t;
}

// lambda_l1 * L1 + lambda_ssim * (1 - SSIM) for one image pair.
inline double photometric_loss(const Image &render, const Image &target, const LossWeights &w,
                               Image *grad = nullptr) {
    Image g_l1, g_ssim;
    const double l1 = l1_loss(render, target, grad ? &g_l1 : nullptr);
    const double s = ssim(render, target, grad ? &g_ssim : nullptr);
    if (grad) {
        *grad = Image(render.width, render.height, render.channels);
        for (std::size_t i = 0; i < grad->size(); ++i) {
            grad->data[i] = w.lambda_l1 * g_l1.data[i] - w.lambda_ssim * g_ssim.data[i];
        }
    }
    return w.lambda_l1 * l1 + w.lambda_ssim * (1.0 - s);
}

struct TotalLoss {
    double value = 0.0;
    double recon = 0.0;
    double gen = 0.0;
    double lambda = 0.0;
    // d(total)/d(pair loss) for each pair: 1/n_ref for reference pairs,
    // lambda/n_gen for generative pairs.
    std::vector<double> ref_scales;
    std::vector<double> gen_scales;
    // d(total)/d(render) per image; filled when gradients are requested.
    std::vector<Image> ref_grads;
    std::vector<Image> gen_grads;
};

// L = L_recon + lambda(iter) * L_gen, each term the mean photometric loss over its pairs.
inline TotalLoss total_loss(const std::vector<Image> &renders_ref, const std::vector<Image> &targets_ref,
                            const std::vector<Image> &renders_gen, const std::vector<Image> &targets_gen, int iter,
                            const LossWeights &weights, bool with_grads = false) {
    weights.validate();
    require(renders_ref.size() == targets_ref.size(), ErrorKind::Shape, "reference renders/targets differ in count");
    require(renders_gen.size() == targets_gen.size(), ErrorKind::Shape, "generative renders/targets differ in count");
    TotalLoss out;
    out.lambda = anneal_lambda(iter, weights);
    auto accumulate = [&](const std::vector<Image> &renders, const std::vector<Image> &targets, double scale,
                          std::vector<double> &scales, std::vector<Image> &grads) {
        double sum = 0.0;
        for (std::size_t i = 0; i < renders.size(); ++i) {
            Image g;
            sum += photometric_loss(renders[i], targets[i], weights, with_grads ? &g : nullptr);
            scales.push_back(scale);
            if (with_grads) {
                for (double &v : g.data) {
                    v *= scale;
                }
                grads.push_back(std::move(g));
            }
        }
        return renders.empty() ? 0.0 : sum / static_cast<double>(renders.size());
    };
    const double ref_scale = renders_ref.empty() ? 0.0 : 1.0 / static_cast<double>(renders_ref.size());
    const double gen_scale = renders_gen.empty() ? 0.0 : out.lambda / static_cast<double>(renders_gen.size());
    out.recon = accumulate(renders_ref, targets_ref, ref_scale, out.ref_scales, out.ref_grads);
    out.gen = accumulate(renders_gen, targets_gen, gen_scale, out.gen_scales, out.gen_grads);
    out.value = renders_gen.empty() ? out.recon : out.recon + out.lambda * out.gen;
    return out;
}

// ---------------------------------------------------------------------------
// Parameter updates
// ---------------------------------------------------------------------------

struct LearningRates {
    double mean = 1.6e-3;
    double scale = 5e-3;
    double rotation = 1e-3;
    double opacity = 5e-2;
    double sh_dc = 2.5e-3;
    double sh_rest = 2.5e-3 / 20.0;
};

struct TrainConfig {
    int iterations = 500;
    LearningRates lr;
    int densify_interval = 0; // 0 disables densify/prune
    int densify_from = 100;
    int densify_until = 1500;
    double densify_grad_threshold = 2e-4;
    double prune_opacity_threshold = 0.005;
    double split_scale_threshold = 0.05; // splats larger than this (max axis, meters) split instead of clone
    std::size_t max_splats = 100000;
    LossWeights loss;
    std::uint64_t seed = 0;

    void validate() const {
        require(iterations >= 0, ErrorKind::InvalidArgument, "iterations must be non-negative");
        require(densify_interval >= 0, ErrorKind::InvalidArgument, "densify_interval must be non-negative");
        require(densify_grad_threshold > 0 && prune_opacity_threshold > 0 && split_scale_threshold > 0,
                ErrorKind::InvalidArgument, "thresholds must be positive");
        require(max_splats > 0, ErrorKind::InvalidArgument, "max_splats must be positive");
        loss.validate();
    }
};

// First and second moments for every raw parameter.
struct AdamState {
    GradientBuffer m;
    GradientBuffer v;
    long step = 0;

    static AdamState for_scene(const Scene &scene) {
        return {GradientBuffer::zeros_like(scene), GradientBuffer::zeros_like(scene), 0};
    }
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-15;

namespace detail {

inline bool splat_grad_is_zero(const GradientBuffer &g, std::size_t i) {
    if (!g.mean[i].isZero(0) || !g.scale_raw[i].isZero(0) || !g.rotation_raw[i].isZero(0) || g.opacity_raw[i] != 0) {
        return false;
    }
    return std::all_of(g.sh[i].begin(), g.sh[i].end(), [](double x) { return x == 0.0; });
}

struct AdamScalar {
    double bias1;
    double bias2;
    void operator()(double &param, double grad, double &m, double &v, double lr, bool frozen) const {
        m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * grad;
        v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * grad * grad;
        if (frozen) {
            return;
        }
        const double m_hat = m / bias1;
        const double v_hat = v / bias2;
        param -= lr * m_hat / (std::sqrt(v_hat) + kAdamEps);
    }
};

} // namespace detail

// One adaptive-moment step with per-group learning rates. Splats whose whole
// gradient is zero (not seen this step) keep their parameters while their
// moments decay. Quaternions are renormalized afterwards.
inline void optimize_step(Scene &scene, const GradientBuffer &grads, AdamState &state, const TrainConfig &config) {
    require(grads.size() == scene.size() && state.m.size() == scene.size() && state.v.size() == scene.size(),
            ErrorKind::Shape, "optimizer state does not match the scene");
    ++state.step;
    const detail::AdamScalar adam{1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step)),
                                  1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step))};
    const LearningRates &lr = config.lr;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        GaussianSplat &s = scene.splats[i];
        const bool frozen = detail::splat_grad_is_zero(grads, i);
        for (int k = 0; k < 3; ++k) {
            adam(s.mean[k], grads.mean[i][k], state.m.mean[i][k], state.v.mean[i][k], lr.mean, frozen);
            adam(s.scale_raw[k], grads.scale_raw[i][k], state.m.scale_raw[i][k], state.v.scale_raw[i][k], lr.scale,
                 frozen);
        }
        for (int k = 0; k < 4; ++k) {
            adam(s.rotation_raw[k], grads.rotation_raw[i][k], state.m.rotation_raw[i][k],
                 state.v.rotation_raw[i][k], lr.rotation, frozen);
        }
        adam(s.opacity_raw, grads.opacity_raw[i], state.m.opacity_raw[i], state.v.opacity_raw[i], lr.opacity, frozen);
        for (std::size_t k = 0; k < s.sh.size(); ++k) {
            adam(s.sh[k], grads.sh[i][k], state.m.sh[i][k], state.v.sh[i][k], k < 3 ? lr.sh_dc : lr.sh_rest, frozen);
        }
        if (!frozen) {
            s.rotation_raw = normalized_rotation(s.rotation_raw);
        }
    }
}

// ---------------------------------------------------------------------------
// Densification and pruning
// ---------------------------------------------------------------------------

// Running sum of positional gradient norms per splat.
struct DensifyStats {
    std::vector<double> grad_norm_sum;
    std::vector<int> count;

    static DensifyStats for_scene(const Scene &scene) {
        return {std::vector<double>(scene.size(), 0.0), std::vector<int>(scene.size(), 0)};
    }

    void accumulate(const GradientBuffer &g) {
        require(g.size() == grad_norm_sum.size(), ErrorKind::Shape, "densify stats do not match gradients");
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (!detail::splat_grad_is_zero(g, i)) {
                grad_norm_sum[i] += g.mean[i].norm();
                ++count[i];
            }
        }
    }

    double average(std::size_t i) const { return count[i] > 0 ? grad_norm_sum[i] / count[i] : 0.0; }
};

struct DensifyResult {
    std::size_t cloned = 0;
    std::size_t split = 0;
    std::size_t pruned = 0;
};

// Clones small high-gradient splats, splits large ones into two with scale/1.6,
// then prunes splats with opacity below the threshold. Growth stops at
// max_splats. When `state` is given its moments follow the splats (new splats
// start from zero moments).
inline DensifyResult densify_and_prune(Scene &scene, const DensifyStats &stats, const TrainConfig &config,
                                       std::mt19937_64 &rng, AdamState *state = nullptr) {
    require(stats.grad_norm_sum.size() == scene.size(), ErrorKind::Shape, "densify stats do not match the scene");
    DensifyResult result;
    const std::size_t n = scene.size();

    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < n; ++i) {
        if (stats.average(i) >= config.densify_grad_threshold) {
            candidates.push_back(i);
        }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [&](std::size_t a, std::size_t b) { return stats.average(a) > stats.average(b); });

    // origin[j] is the source index whose moments output splat j inherits, -1 for none.
    std::vector<GaussianSplat> out;
    std::vector<long> origin;
    out.reserve(n + candidates.size());
    std::vector<int> action(n, 0); // 0 keep, 1 clone, 2 split
    std::size_t projected = n;
    for (std::size_t i : candidates) {
        if (projected >= config.max_splats) {
            break;
        }
        action[i] = scene.splats[i].scale().maxCoeff() > config.split_scale_threshold ? 2 : 1;
        ++projected;
    }
    std::normal_distribution<double> n01;
    const double shrink = std::log(1.6);
    for (std::size_t i = 0; i < n; ++i) {
        const GaussianSplat &s = scene.splats[i];
        if (action[i] == 2) {
            const Mat3 r = quaternion_matrix(s.rotation());
            const Vec3 scale = s.scale();
            for (int child = 0; child < 2; ++child) {
                GaussianSplat c = s;
                const Vec3 offset(n01(rng) * scale[0], n01(rng) * scale[1], n01(rng) * scale[2]);
                c.mean = s.mean + r * offset;
                c.scale_raw = s.scale_raw - Vec3::Constant(shrink);
                out.push_back(std::move(c));
                origin.push_back(-1);
            }
            ++result.split;
            continue;
        }
        out.push_back(s);
        origin.push_back(static_cast<long>(i));
        if (action[i] == 1) {
            out.push_back(s);
            origin.push_back(-1);
            ++result.cloned;
        }
    }

    std::vector<GaussianSplat> kept;
    std::vector<long> kept_origin;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out[i].opacity() < config.prune_opacity_threshold) {
            ++result.pruned;
            continue;
        }
        kept.push_back(std::move(out[i]));
        kept_origin.push_back(origin[i]);
    }
    if (kept.size() > config.max_splats) {
        // Only reachable when the input already exceeded the cap: drop the most transparent.
        std::vector<std::size_t> idx(kept.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(),
                         [&](std::size_t a, std::size_t b) { return kept[a].opacity_raw > kept[b].opacity_raw; });
        idx.resize(config.max_splats);
        std::sort(idx.begin(), idx.end());
        std::vector<GaussianSplat> trimmed;
        std::vector<long> trimmed_origin;
        for (std::size_t i : idx) {
            trimmed.push_back(std::move(kept[i]));
            trimmed_origin.push_back(kept_origin[i]);
        }
        result.pruned += kept.size() - trimmed.size();
        kept = std::move(trimmed);
        kept_origin = std::move(trimmed_origin);
    }

    scene.splats = std::move(kept);
    if (state) {
        AdamState next = AdamState::for_scene(scene);
        next.step = state->step;
        for (std::size_t j = 0; j < scene.size(); ++j) {
            const long o = kept_origin[j];
            if (o < 0) {
                continue;
            }
            for (GradientBuffer *pair : {&next.m, &next.v}) {
                const GradientBuffer &src = pair == &next.m ? state->m : state->v;
                pair->mean[j] = src.mean[o];
                pair->scale_raw[j] = src.scale_raw[o];
                pair->rotation_raw[j] = src.rotation_raw[o];
                pair->opacity_raw[j] = src.opacity_raw[o];
                pair->sh[j] = src.sh[o];
            }
        }
        *state = std::move(next);
    }
    return result;
}

} // namespace gsfix
