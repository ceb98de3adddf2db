#pragma once

#include "gsfix/pipeline.hpp"
#include "gsfix/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace gsfix {

struct RingSceneOptions {
    int splats = 300;
    int image_size = 64;
    double focal = 80.0;
    double ring_radius = 3.0;
    double ring_height = 0.3;
    double heldout_height = 0.45;
    double object_radius = 0.8;
    int train_views = 3;
    double train_arc_deg = 150.0;
    int heldout_views = 8;
    double init_fraction = 0.7;   // share of ground-truth means used as init points
    double init_position_noise = 0.03;
    double init_color_noise = 0.1;
};

struct RingScene {
    Scene truth;
    std::vector<View> train;
    std::vector<View> heldout;
    PointCloud init_points;
};

inline CameraPose ring_camera(const RingSceneOptions &o, double angle_deg, double height, std::string id) {
    const double a = angle_deg * std::numbers::pi / 180.0;
    const Vec3 eye(o.ring_radius * std::cos(a), height, o.ring_radius * std::sin(a));
    return simple_camera(eye, o.image_size, o.focal, std::move(id));
}

// Blobby ground-truth scene near the origin, seen by cameras on a horizontal
// ring. Training views span the arc; held-out views sit between them at a
// different height.
inline RingScene make_ring_scene(std::uint64_t seed, const RingSceneOptions &o = {}) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> n01(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

    RingScene out;
    out.truth.sh_degree = 0;
    for (int i = 0; i < o.splats; ++i) {
        GaussianSplat s;
        Vec3 dir(n01(rng), n01(rng), n01(rng));
        dir.normalize();
        s.mean = dir * o.object_radius * std::cbrt(u01(rng));
        for (int k = 0; k < 3; ++k) {
            s.scale_raw[k] = std::log(uniform(0.03, 0.12));
        }
        s.rotation_raw = Vec4(n01(rng), n01(rng), n01(rng), n01(rng));
        s.opacity_raw = logit(uniform(0.5, 0.95));
        s.sh.resize(3);
        for (int c = 0; c < 3; ++c) {
            s.sh[c] = (uniform(0.1, 0.9) - 0.5) / sh_const::C0;
        }
        out.truth.splats.push_back(std::move(s));
    }

    for (int i = 0; i < o.train_views; ++i) {
        const double a = o.train_views == 1 ? 0.0 : o.train_arc_deg * i / (o.train_views - 1);
        CameraPose cam = ring_camera(o, a, o.ring_height, "train_" + std::to_string(i));
        out.train.push_back({cam, render(out.truth, cam).rgb});
    }
    for (int i = 0; i < o.heldout_views; ++i) {
        const double a = o.train_arc_deg * (i + 0.5) / o.heldout_views;
        CameraPose cam = ring_camera(o, a, o.heldout_height, "heldout_" + std::to_string(i));
        out.heldout.push_back({cam, render(out.truth, cam).rgb});
    }

    for (const GaussianSplat &s : out.truth.splats) {
        if (u01(rng) >= o.init_fraction) {
            continue;
        }
        Vec3 color;
        for (int c = 0; c < 3; ++c) {
            color[c] = std::clamp(0.5 + sh_const::C0 * s.sh[c] + o.init_color_noise * n01(rng), 0.0, 1.0);
        }
        out.init_points.positions.push_back(s.mean + o.init_position_noise * Vec3(n01(rng), n01(rng), n01(rng)));
        out.init_points.colors.push_back(color);
    }
    return out;
}

} // namespace gsfix
