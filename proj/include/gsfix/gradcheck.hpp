#pragma once

#include "gsfix/rasterizer.hpp"
#include "gsfix/synthetic.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace gsfix {

enum class ParamGroup { Mean = 0, Scale, Rotation, Opacity, Sh };

inline constexpr std::array<ParamGroup, 5> kParamGroups = {ParamGroup::Mean, ParamGroup::Scale, ParamGroup::Rotation,
                                                           ParamGroup::Opacity, ParamGroup::Sh};

constexpr std::string_view to_string(ParamGroup g) {
    switch (g) {
    case ParamGroup::Mean: return "mean";
    case ParamGroup::Scale: return "scale_raw";
    case ParamGroup::Rotation: return "rotation_raw";
    case ParamGroup::Opacity: return "opacity_raw";
    case ParamGroup::Sh: return "sh";
    }
    return "?";
}

inline int group_size(ParamGroup g, const GaussianSplat &s) {
    switch (g) {
    case ParamGroup::Mean: return 3;
    case ParamGroup::Scale: return 3;
    case ParamGroup::Rotation: return 4;
    case ParamGroup::Opacity: return 1;
    case ParamGroup::Sh: return static_cast<int>(s.sh.size());
    }
    return 0;
}

inline double &raw_param(GaussianSplat &s, ParamGroup g, int k) {
    switch (g) {
    case ParamGroup::Mean: return s.mean[k];
    case ParamGroup::Scale: return s.scale_raw[k];
    case ParamGroup::Rotation: return s.rotation_raw[k];
    case ParamGroup::Opacity: return s.opacity_raw;
    case ParamGroup::Sh: return s.sh[k];
    }
    return s.opacity_raw;
}

inline double grad_entry(const GradientBuffer &gb, std::size_t i, ParamGroup g, int k) {
    switch (g) {
    case ParamGroup::Mean: return gb.mean[i][k];
    case ParamGroup::Scale: return gb.scale_raw[i][k];
    case ParamGroup::Rotation: return gb.rotation_raw[i][k];
    case ParamGroup::Opacity: return gb.opacity_raw[i];
    case ParamGroup::Sh: return gb.sh[i][k];
    }
    return 0.0;
}

inline double weighted_sum(const Image &weights, const Image &img) {
    double acc = 0.0;
    for (std::size_t i = 0; i < img.size(); ++i) {
        acc += weights.data[i] * img.data[i];
    }
    return acc;
}

// Per-pixel hash of the ordered list of composited splats. Two renders with
// equal signatures lie on the same smooth branch of the compositing function.
inline std::vector<std::uint64_t> contribution_signature(const Scene &scene, const CameraPose &cam,
                                                         const RenderConfig &cfg) {
    const detail::Prepared prep = detail::prepare(scene, cam, cfg);
    std::vector<std::uint64_t> sig(static_cast<std::size_t>(cam.width) * cam.height);
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            std::uint64_t h = 1469598103934665603ull;
            detail::traverse_pixel(prep, prep.order, x, y, cfg, [&](const detail::Contribution &c) {
                h = (h ^ static_cast<std::uint64_t>(c.index + 1)) * 1099511628211ull;
            });
            sig[static_cast<std::size_t>(y) * cam.width + x] = h;
        }
    }
    return sig;
}

struct GradcheckResult {
    std::array<double, 5> max_abs_error{};
    std::array<double, 5> max_abs_fd{};
    std::size_t samples = 0;
    // Central differences whose two renders composite a different ordered
    // splat set straddle a discontinuity (alpha cutoff, transmittance floor,
    // depth swap) and are skipped.
    std::size_t excluded = 0;

    // max |analytic - fd| / max |fd| within a parameter group.
    double relative_error(ParamGroup g) const {
        const auto i = static_cast<std::size_t>(g);
        if (max_abs_fd[i] == 0.0) {
            return max_abs_error[i];
        }
        return max_abs_error[i] / max_abs_fd[i];
    }

    double worst() const {
        double w = 0.0;
        for (ParamGroup g : kParamGroups) {
            w = std::max(w, relative_error(g));
        }
        return w;
    }
};

// Compares render_backward against central finite differences of
// L = sum(upstream * rgb) on every raw parameter of every splat.
inline GradcheckResult gradcheck(const Scene &scene, const CameraPose &cam, const RenderConfig &cfg,
                                 const Image &upstream, double h = 1e-4) {
    const GradientBuffer analytic = render_backward(scene, cam, cfg, upstream);
    GradcheckResult res;
    Scene probe = scene;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        for (ParamGroup g : kParamGroups) {
            const int n = group_size(g, scene.splats[i]);
            for (int k = 0; k < n; ++k) {
                double &p = raw_param(probe.splats[i], g, k);
                const double original = p;
                p = original + h;
                const RenderedFrame plus = render(probe, cam, cfg);
                const auto sig_plus = contribution_signature(probe, cam, cfg);
                p = original - h;
                const RenderedFrame minus = render(probe, cam, cfg);
                const auto sig_minus = contribution_signature(probe, cam, cfg);
                p = original;
                ++res.samples;
                if (sig_plus != sig_minus) {
                    ++res.excluded;
                    continue;
                }
                const double fd = (weighted_sum(upstream, plus.rgb) - weighted_sum(upstream, minus.rgb)) / (2.0 * h);
                const double a = grad_entry(analytic, i, g, k);
                const auto gi = static_cast<std::size_t>(g);
                res.max_abs_error[gi] = std::max(res.max_abs_error[gi], std::abs(a - fd));
                res.max_abs_fd[gi] = std::max(res.max_abs_fd[gi], std::abs(fd));
            }
        }
    }
    return res;
}

// Seeded random scene of `splats` splats seen by a slightly off-axis camera,
// checked against a random upstream gradient.
inline GradcheckResult gradcheck_random(std::uint64_t seed, int splats = 50, int res = 32, int sh_degree = 1) {
    require(splats > 0 && res > 0, ErrorKind::InvalidArgument, "gradcheck needs positive splat count and resolution");
    std::mt19937_64 rng(seed);
    const CameraPose cam = simple_camera(Vec3(0.4, -0.3, -4), res, 30.0 * res / 32.0);
    RandomSceneOptions opt;
    opt.sh_degree = sh_degree;
    const Scene scene = random_scene(rng, splats, cam, opt);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Image upstream(res, res, 3);
    for (double &v : upstream.data) {
        v = u(rng);
    }
    return gradcheck(scene, cam, {}, upstream);
}

} // namespace gsfix
