#pragma once

#include "gsfix/error.hpp"
#include "gsfix/image.hpp"
#include "gsfix/parallel.hpp"
#include "gsfix/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

namespace gsfix {

inline constexpr double kMaxAlpha = 0.99;

struct RenderConfig {
    int tile_size = 16;
    double alpha_cutoff = 1.0 / 255.0;
    double transmittance_floor = 1e-4;
    std::optional<Vec3> background; // overrides Scene::background when set
    double near_plane = kDefaultNearPlane;

    void validate() const {
        require(tile_size >= 4, ErrorKind::InvalidArgument, "tile_size must be >= 4");
        require(alpha_cutoff > 0 && alpha_cutoff < 1, ErrorKind::InvalidArgument, "alpha_cutoff must be in (0, 1)");
        require(transmittance_floor > 0 && transmittance_floor < 1, ErrorKind::InvalidArgument,
                "transmittance_floor must be in (0, 1)");
        require(near_plane > 0, ErrorKind::InvalidArgument, "near_plane must be > 0");
    }
};

struct RenderedFrame {
    Image rgb;
    std::vector<double> alpha;     // 1 - final transmittance, per pixel
    std::vector<int> contributors; // composited splat count, per pixel

    int width() const { return rgb.width; }
    int height() const { return rgb.height; }
};

// Gradients with respect to the raw (stored) splat parameters.
struct GradientBuffer {
    std::vector<Vec3> mean;
    std::vector<Vec3> scale_raw;
    std::vector<Vec4> rotation_raw;
    std::vector<double> opacity_raw;
    std::vector<std::vector<double>> sh;

    static GradientBuffer zeros_like(const Scene &scene) {
        GradientBuffer g;
        const std::size_t n = scene.size();
        g.mean.assign(n, Vec3::Zero());
        g.scale_raw.assign(n, Vec3::Zero());
        g.rotation_raw.assign(n, Vec4::Zero());
        g.opacity_raw.assign(n, 0.0);
        g.sh.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            g.sh[i].assign(scene.splats[i].sh.size(), 0.0);
        }
        return g;
    }

    std::size_t size() const { return mean.size(); }

    GradientBuffer &operator+=(const GradientBuffer &o) {
        require(o.size() == size(), ErrorKind::Shape, "gradient buffers differ in splat count");
        for (std::size_t i = 0; i < size(); ++i) {
            mean[i] += o.mean[i];
            scale_raw[i] += o.scale_raw[i];
            rotation_raw[i] += o.rotation_raw[i];
            opacity_raw[i] += o.opacity_raw[i];
            for (std::size_t k = 0; k < sh[i].size(); ++k) {
                sh[i][k] += o.sh[i][k];
            }
        }
        return *this;
    }

    bool all_zero() const {
        for (std::size_t i = 0; i < size(); ++i) {
            if (!mean[i].isZero(0) || !scale_raw[i].isZero(0) || !rotation_raw[i].isZero(0) || opacity_raw[i] != 0) {
                return false;
            }
            for (double v : sh[i]) {
                if (v != 0) {
                    return false;
                }
            }
        }
        return true;
    }
};

namespace detail {

// Per-splat screen-space state shared by the forward and backward passes.
struct SplatView {
    bool in_front = false;
    bool visible = false; // in front and its alpha >= cutoff footprint touches the image
    Vec3 p_cam = Vec3::Zero();
    Vec2 mean2d = Vec2::Zero();
    Mat2 cov2d = Mat2::Identity();
    Mat2 conic = Mat2::Identity();
    double depth = 0.0;
    double opacity = 0.0;
    Vec3 view_dir = Vec3::UnitZ(); // normalized mean - camera center
    Vec3 color_raw = Vec3::Zero(); // 0.5 + SH sum
    Vec3 color = Vec3::Zero();     // clamped to [0, 1]
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1;
};

struct Prepared {
    std::vector<SplatView> views;
    std::vector<int> order; // in-front splats sorted by (depth, index)
    Vec3 background = Vec3::Zero();
    Mat3 rot_cam = Mat3::Identity();
    Vec3 cam_center = Vec3::Zero();
};

inline Prepared prepare(const Scene &scene, const CameraPose &cam, const RenderConfig &cfg) {
    cfg.validate();
    cam.validate();
    scene.validate();
    Prepared prep;
    prep.background = cfg.background.value_or(scene.background);
    prep.rot_cam = cam.rotation_matrix();
    prep.cam_center = cam.center();
    prep.views.resize(scene.size());
    for (std::size_t i = 0; i < scene.size(); ++i) {
        if (!scene.splats[i].finite()) {
            fail(ErrorKind::Render, "splat " + std::to_string(i) + " has non-finite parameters");
        }
    }
    parallel_for(scene.size(), [&](std::size_t i) {
        const GaussianSplat &s = scene.splats[i];
        SplatView &v = prep.views[i];
        v.p_cam = prep.rot_cam * s.mean + cam.translation;
        if (!(v.p_cam.z() > cfg.near_plane)) {
            return;
        }
        v.in_front = true;
        v.depth = v.p_cam.z();
        v.mean2d = cam.project(v.p_cam);
        v.cov2d = project_covariance(cam, prep.rot_cam, v.p_cam, build_covariance(s.scale_raw, s.rotation_raw));
        v.conic = v.cov2d.inverse();
        v.opacity = s.opacity();
        v.view_dir = (s.mean - prep.cam_center).normalized();
        v.color_raw = eval_sh(s.sh, v.view_dir, scene.sh_degree);
        v.color = v.color_raw.cwiseMax(0.0).cwiseMin(1.0);
        if (v.opacity < cfg.alpha_cutoff) {
            return;
        }
        // Footprint where opacity * exp(-q/2) >= cutoff, i.e. q <= m2.
        const double m2 = 2.0 * std::log(v.opacity / cfg.alpha_cutoff);
        const double ex = std::sqrt(m2 * v.cov2d(0, 0)) + 1.0;
        const double ey = std::sqrt(m2 * v.cov2d(1, 1)) + 1.0;
        v.x0 = std::max(0, static_cast<int>(std::ceil(v.mean2d.x() - ex)));
        v.x1 = std::min(cam.width - 1, static_cast<int>(std::floor(v.mean2d.x() + ex)));
        v.y0 = std::max(0, static_cast<int>(std::ceil(v.mean2d.y() - ey)));
        v.y1 = std::min(cam.height - 1, static_cast<int>(std::floor(v.mean2d.y() + ey)));
        v.visible = v.x0 <= v.x1 && v.y0 <= v.y1;
    });
    for (std::size_t i = 0; i < scene.size(); ++i) {
        if (prep.views[i].in_front) {
            prep.order.push_back(static_cast<int>(i));
        }
    }
    std::sort(prep.order.begin(), prep.order.end(), [&](int a, int b) {
        const double da = prep.views[a].depth, db = prep.views[b].depth;
        return da < db || (da == db && a < b);
    });
    return prep;
}

// Gaussian falloff and clamped alpha of splat v at pixel (px, py).
struct AlphaSample {
    double alpha;
    double gauss;
    Vec2 d;
};

inline AlphaSample sample_alpha(const SplatView &v, double px, double py) {
    const Vec2 d(px - v.mean2d.x(), py - v.mean2d.y());
    const double q = v.conic(0, 0) * d.x() * d.x() + 2.0 * v.conic(0, 1) * d.x() * d.y() + v.conic(1, 1) * d.y() * d.y();
    const double g = std::exp(-0.5 * q);
    return {std::min(kMaxAlpha, v.opacity * g), g, d};
}

struct Contribution {
    int index;
    double alpha;
    double gauss;
    double transmittance; // before this splat
    Vec2 d;
};

// Front-to-back traversal shared by every render path. `on_hit` sees each
// composited contribution in order; returns the final transmittance.
template <typename OnHit>
inline double traverse_pixel(const Prepared &prep, std::span<const int> list, int px, int py,
                             const RenderConfig &cfg, OnHit &&on_hit) {
    double t = 1.0;
    for (int idx : list) {
        const SplatView &v = prep.views[idx];
        const AlphaSample s = sample_alpha(v, px, py);
        if (s.alpha < cfg.alpha_cutoff) {
            continue;
        }
        const double t_next = t * (1.0 - s.alpha);
        if (t_next < cfg.transmittance_floor) {
            break;
        }
        on_hit(Contribution{idx, s.alpha, s.gauss, t, s.d});
        t = t_next;
    }
    return t;
}

inline void shade_pixel(const Prepared &prep, std::span<const int> list, int px, int py, const RenderConfig &cfg,
                        RenderedFrame &out) {
    Vec3 rgb = Vec3::Zero();
    int count = 0;
    const double t = traverse_pixel(prep, list, px, py, cfg, [&](const Contribution &c) {
        rgb += prep.views[c.index].color * (c.alpha * c.transmittance);
        ++count;
    });
    rgb += t * prep.background;
    for (int ch = 0; ch < 3; ++ch) {
        out.rgb.at(px, py, ch) = std::clamp(rgb[ch], 0.0, 1.0);
    }
    const std::size_t p = static_cast<std::size_t>(py) * out.rgb.width + px;
    out.alpha[p] = std::clamp(1.0 - t, 0.0, 1.0);
    out.contributors[p] = count;
}

struct TileGrid {
    int tile_size;
    int tiles_x;
    int tiles_y;

    TileGrid(const CameraPose &cam, int ts)
        : tile_size(ts), tiles_x((cam.width + ts - 1) / ts), tiles_y((cam.height + ts - 1) / ts) {}

    std::size_t count() const { return static_cast<std::size_t>(tiles_x) * tiles_y; }
};

// Depth-ordered splats whose footprint overlaps tile t.
inline std::vector<int> tile_list(const Prepared &prep, const TileGrid &grid, std::size_t t, int width, int height,
                                  int &x_begin, int &x_end, int &y_begin, int &y_end) {
    const int tx = static_cast<int>(t % grid.tiles_x);
    const int ty = static_cast<int>(t / grid.tiles_x);
    x_begin = tx * grid.tile_size;
    y_begin = ty * grid.tile_size;
    x_end = std::min(width, x_begin + grid.tile_size);
    y_end = std::min(height, y_begin + grid.tile_size);
    std::vector<int> list;
    for (int idx : prep.order) {
        const SplatView &v = prep.views[idx];
        if (v.visible && v.x0 < x_end && v.x1 >= x_begin && v.y0 < y_end && v.y1 >= y_begin) {
            list.push_back(idx);
        }
    }
    return list;
}

inline RenderedFrame blank_frame(const CameraPose &cam) {
    RenderedFrame f;
    f.rgb = Image(cam.width, cam.height, 3);
    const std::size_t n = static_cast<std::size_t>(cam.width) * cam.height;
    f.alpha.assign(n, 0.0);
    f.contributors.assign(n, 0);
    return f;
}

} // namespace detail

// Tiled front-to-back alpha compositing:
//   C = sum_i c_i a_i prod_{j<i} (1 - a_j) + T_final * background
inline RenderedFrame render(const Scene &scene, const CameraPose &cam, const RenderConfig &cfg = {}) {
    const detail::Prepared prep = detail::prepare(scene, cam, cfg);
    const detail::TileGrid grid(cam, cfg.tile_size);
    RenderedFrame out = detail::blank_frame(cam);
    parallel_for(grid.count(), [&](std::size_t t) {
        int x0, x1, y0, y1;
        const std::vector<int> list = detail::tile_list(prep, grid, t, cam.width, cam.height, x0, x1, y0, y1);
        for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) {
                detail::shade_pixel(prep, list, x, y, cfg, out);
            }
        }
    });
    return out;
}

// Brute-force oracle: every in-front splat is tested at every pixel, no tiling.
inline RenderedFrame render_reference(const Scene &scene, const CameraPose &cam, const RenderConfig &cfg = {}) {
    const detail::Prepared prep = detail::prepare(scene, cam, cfg);
    RenderedFrame out = detail::blank_frame(cam);
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            detail::shade_pixel(prep, prep.order, x, y, cfg, out);
        }
    }
    return out;
}

namespace detail {

// Screen-space gradients of one splat accumulated over pixels.
struct ScreenGrad {
    Vec2 mean2d = Vec2::Zero();
    Mat2 conic = Mat2::Zero(); // dL/dK treating K as a full 2x2 matrix
    Vec3 color = Vec3::Zero(); // w.r.t. the clamped color
    double opacity = 0.0;      // w.r.t. sigmoid(opacity_raw)

    ScreenGrad &operator+=(const ScreenGrad &o) {
        mean2d += o.mean2d;
        conic += o.conic;
        color += o.color;
        opacity += o.opacity;
        return *this;
    }
};

// dR/dq for R = quaternion_matrix(q), contracted with dL/dR.
inline Vec4 quaternion_matrix_vjp(const Vec4 &q, const Mat3 &g) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Vec4 out;
    out[0] = 2 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    out[1] = 2 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0) +
                  w * g(2, 1) - 2 * x * g(2, 2));
    out[2] = 2 * (-2 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) +
                  z * g(2, 1) - 2 * y * g(2, 2));
    out[3] = 2 * (-2 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2 * z * g(1, 1) + y * g(1, 2) +
                  x * g(2, 0) + y * g(2, 1));
    return out;
}

// Chain screen-space gradients of splat i back to its raw parameters.
inline void backprop_splat(const GaussianSplat &s, const SplatView &v, const ScreenGrad &sg, const CameraPose &cam,
                           const Mat3 &rot_cam, const Vec3 &cam_center, int sh_degree, Vec3 &g_mean,
                           Vec3 &g_scale_raw, Vec4 &g_rotation_raw, double &g_opacity_raw,
                           std::vector<double> &g_sh) {
    // Opacity.
    const double sig = v.opacity;
    g_opacity_raw = sg.opacity * sig * (1.0 - sig);

    // Color -> SH coefficients and view direction.
    const int n_coeffs = sh_coeff_count(sh_degree);
    std::array<double, kMaxShCoeffs> basis{};
    std::array<Vec3, kMaxShCoeffs> basis_grad{};
    sh_basis(v.view_dir, sh_degree, basis, &basis_grad);
    Vec3 g_color_raw;
    for (int c = 0; c < 3; ++c) {
        const bool inside = v.color_raw[c] > 0.0 && v.color_raw[c] < 1.0;
        g_color_raw[c] = inside ? sg.color[c] : 0.0;
    }
    Vec3 g_dir = Vec3::Zero();
    for (int k = 0; k < n_coeffs; ++k) {
        double dot = 0.0;
        for (int c = 0; c < 3; ++c) {
            g_sh[3 * k + c] = g_color_raw[c] * basis[k];
            dot += g_color_raw[c] * s.sh[3 * k + c];
        }
        g_dir += dot * basis_grad[k];
    }
    const Vec3 offset = s.mean - cam_center;
    const double dist = offset.norm();
    g_mean = (g_dir - v.view_dir * v.view_dir.dot(g_dir)) / dist;

    // Conic -> 2D covariance.
    const Mat2 g_cov2d = -v.conic * sg.conic * v.conic;

    // 2D covariance -> 3D covariance and projection Jacobian.
    const Vec4 q_hat = normalized_rotation(s.rotation_raw);
    const Mat3 r = quaternion_matrix(q_hat);
    const Vec3 scale = s.scale();
    const Mat3 m = r * scale.asDiagonal();
    const Mat3 cov3d = m * m.transpose();
    const Eigen::Matrix<double, 2, 3> jac = projection_jacobian(cam, v.p_cam);
    const Eigen::Matrix<double, 2, 3> t = jac * rot_cam;
    const Mat3 g_cov3d = t.transpose() * g_cov2d * t;
    const Eigen::Matrix<double, 2, 3> g_t = (g_cov2d + g_cov2d.transpose()) * t * cov3d;
    const Eigen::Matrix<double, 2, 3> g_jac = g_t * rot_cam.transpose();

    // Camera-space mean from the projected mean and the Jacobian.
    const double x = v.p_cam.x(), y = v.p_cam.y(), z = v.p_cam.z();
    const double iz = 1.0 / z, iz2 = iz * iz, iz3 = iz2 * iz;
    Vec3 g_p;
    g_p.x() = sg.mean2d.x() * cam.fx * iz + g_jac(0, 2) * (-cam.fx * iz2);
    g_p.y() = sg.mean2d.y() * cam.fy * iz + g_jac(1, 2) * (-cam.fy * iz2);
    g_p.z() = sg.mean2d.x() * (-cam.fx * x * iz2) + sg.mean2d.y() * (-cam.fy * y * iz2) +
              g_jac(0, 0) * (-cam.fx * iz2) + g_jac(0, 2) * (2.0 * cam.fx * x * iz3) +
              g_jac(1, 1) * (-cam.fy * iz2) + g_jac(1, 2) * (2.0 * cam.fy * y * iz3);
    g_mean += rot_cam.transpose() * g_p;

    // 3D covariance -> scale and rotation.
    const Mat3 g_m = (g_cov3d + g_cov3d.transpose()) * m;
    Mat3 g_r;
    for (int k = 0; k < 3; ++k) {
        g_r.col(k) = scale[k] * g_m.col(k);
        g_scale_raw[k] = scale[k] * r.col(k).dot(g_m.col(k));
    }
    const Vec4 g_qhat = quaternion_matrix_vjp(q_hat, g_r);
    g_rotation_raw = (g_qhat - q_hat * q_hat.dot(g_qhat)) / s.rotation_raw.norm();
}

} // namespace detail

// Gradient of L with respect to every raw splat parameter, given dL/d(rgb).
// Recomputes the forward traversal per tile; per-tile partial sums are reduced
// in tile order so results do not depend on thread scheduling.
inline GradientBuffer render_backward(const Scene &scene, const CameraPose &cam, const RenderConfig &cfg,
                                      const Image &upstream) {
    require(upstream.width == cam.width && upstream.height == cam.height && upstream.channels == 3,
            ErrorKind::Shape, "upstream gradient does not match the camera resolution");
    for (double v : upstream.data) {
        require(std::isfinite(v), ErrorKind::InvalidArgument, "upstream gradient must be finite");
    }
    const detail::Prepared prep = detail::prepare(scene, cam, cfg);
    const detail::TileGrid grid(cam, cfg.tile_size);

    struct TileResult {
        std::vector<int> ids;
        std::vector<detail::ScreenGrad> grads;
    };
    std::vector<TileResult> tiles(grid.count());

    parallel_for(grid.count(), [&](std::size_t t) {
        int x0, x1, y0, y1;
        TileResult &res = tiles[t];
        res.ids = detail::tile_list(prep, grid, t, cam.width, cam.height, x0, x1, y0, y1);
        res.grads.assign(res.ids.size(), {});
        std::vector<int> local(scene.size(), -1);
        for (std::size_t k = 0; k < res.ids.size(); ++k) {
            local[res.ids[k]] = static_cast<int>(k);
        }
        std::vector<detail::Contribution> hits;
        for (int py = y0; py < y1; ++py) {
            for (int px = x0; px < x1; ++px) {
                const Vec3 g(upstream.at(px, py, 0), upstream.at(px, py, 1), upstream.at(px, py, 2));
                if (g.isZero(0)) {
                    continue;
                }
                hits.clear();
                const double t_final = detail::traverse_pixel(prep, res.ids, px, py, cfg,
                                                              [&](const detail::Contribution &c) { hits.push_back(c); });
                Vec3 after = t_final * prep.background;
                for (auto it = hits.rbegin(); it != hits.rend(); ++it) {
                    const detail::SplatView &v = prep.views[it->index];
                    detail::ScreenGrad &sg = res.grads[local[it->index]];
                    const double w = it->alpha * it->transmittance;
                    sg.color += g * w;
                    const double g_alpha = g.dot(v.color * it->transmittance - after / (1.0 - it->alpha));
                    after += v.color * w;
                    if (v.opacity * it->gauss >= kMaxAlpha) {
                        continue; // clamped: alpha is locally constant
                    }
                    sg.opacity += g_alpha * it->gauss;
                    const double g_q = g_alpha * v.opacity * (-0.5 * it->gauss);
                    sg.conic += g_q * (it->d * it->d.transpose());
                    sg.mean2d += g_q * (-2.0 * (v.conic * it->d));
                }
            }
        }
    });

    std::vector<detail::ScreenGrad> screen(scene.size());
    for (const TileResult &res : tiles) {
        for (std::size_t k = 0; k < res.ids.size(); ++k) {
            screen[res.ids[k]] += res.grads[k];
        }
    }

    GradientBuffer out = GradientBuffer::zeros_like(scene);
    parallel_for(scene.size(), [&](std::size_t i) {
        const detail::SplatView &v = prep.views[i];
        if (!v.visible) {
            return;
        }
        detail::backprop_splat(scene.splats[i], v, screen[i], cam, prep.rot_cam, prep.cam_center, scene.sh_degree,
                               out.mean[i], out.scale_raw[i], out.rotation_raw[i], out.opacity_raw[i], out.sh[i]);
    });
    return out;
}

} // namespace gsfix
