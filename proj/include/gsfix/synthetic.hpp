#pragma once

#include "gsfix/scene.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace gsfix {

struct RandomSceneOptions {
    int sh_degree = 0;
    double depth_min = 2.0;
    double depth_max = 5.0;
    double sigma_px_min = 1.0;  // screen-space standard deviation range
    double sigma_px_max = 4.0;
    double opacity_min = 0.1;
    double opacity_max = 0.9;
    double base_color_min = 0.2;
    double base_color_max = 0.8;
    double sh_rest_amplitude = 0.05;
    double screen_margin = 0.1; // fraction of the image kept clear at each border
};

// Random splats placed inside `cam`'s frustum with sizes given in pixels.
inline Scene random_scene(std::mt19937_64 &rng, int count, const CameraPose &cam, const RandomSceneOptions &opt = {}) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> n01(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

    Scene scene;
    scene.sh_degree = opt.sh_degree;
    const int n_coeffs = sh_coeff_count(opt.sh_degree);
    const Mat3 r_wc = cam.rotation_matrix().transpose();
    const Vec3 center = cam.center();
    for (int i = 0; i < count; ++i) {
        GaussianSplat s;
        const double u = uniform(opt.screen_margin, 1.0 - opt.screen_margin) * cam.width;
        const double v = uniform(opt.screen_margin, 1.0 - opt.screen_margin) * cam.height;
        const double z = uniform(opt.depth_min, opt.depth_max);
        const Vec3 p_cam((u - cam.cx) * z / cam.fx, (v - cam.cy) * z / cam.fy, z);
        s.mean = r_wc * p_cam + center;
        for (int k = 0; k < 3; ++k) {
            const double sigma_px = uniform(opt.sigma_px_min, opt.sigma_px_max);
            s.scale_raw[k] = std::log(sigma_px * z / cam.fx);
        }
        s.rotation_raw = Vec4(n01(rng), n01(rng), n01(rng), n01(rng));
        if (s.rotation_raw.norm() < 1e-3) {
            s.rotation_raw = Vec4(1, 0, 0, 0);
        }
        s.opacity_raw = logit(uniform(opt.opacity_min, opt.opacity_max));
        s.sh.assign(3 * n_coeffs, 0.0);
        for (int c = 0; c < 3; ++c) {
            s.sh[c] = (uniform(opt.base_color_min, opt.base_color_max) - 0.5) / sh_const::C0;
        }
        for (int k = 1; k < n_coeffs; ++k) {
            for (int c = 0; c < 3; ++c) {
                s.sh[3 * k + c] = uniform(-opt.sh_rest_amplitude, opt.sh_rest_amplitude);
            }
        }
        scene.splats.push_back(std::move(s));
    }
    return scene;
}

// Camera at `eye` looking at the origin with a square image.
inline CameraPose simple_camera(const Vec3 &eye, int size, double focal, std::string id = "cam",
                                const Vec3 &target = Vec3::Zero()) {
    return CameraPose::look_at(eye, target, Vec3::UnitY(), focal, focal, size / 2.0, size / 2.0, size, size,
                               std::move(id));
}

} // namespace gsfix
