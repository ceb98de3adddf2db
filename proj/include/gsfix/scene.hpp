#pragma once

#include "gsfix/error.hpp"

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gsfix {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kDegenerateQuaternionNorm = 1e-12;
inline constexpr double kDefaultNearPlane = 0.01;
inline constexpr double kLowPassFloor = 0.3; // px^2 added to both diagonal entries of cov2d

inline double sigmoid(double x) {
    if (x >= 0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

// ---------------------------------------------------------------------------
// Camera
// ---------------------------------------------------------------------------

// Pinhole camera. `rotation` and `translation` map world points into the camera
// frame: p_cam = R * p_world + t. The camera looks down +z; image x grows with
// camera x, image y grows with camera y. Pixel (i, j) samples the continuous
// image coordinate (i, j).
struct CameraPose {
    Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
    Vec3 translation = Vec3::Zero();
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;
    std::string pose_id;

    static CameraPose make(const Eigen::Quaterniond &q, const Vec3 &t, double fx, double fy, double cx, double cy,
                           int width, int height, std::string pose_id) {
        CameraPose cam;
        require(q.norm() > kDegenerateQuaternionNorm, ErrorKind::InvalidArgument,
                "camera '" + pose_id + "': degenerate rotation quaternion");
        cam.rotation = q.normalized();
        cam.translation = t;
        cam.fx = fx;
        cam.fy = fy;
        cam.cx = cx;
        cam.cy = cy;
        cam.width = width;
        cam.height = height;
        cam.pose_id = std::move(pose_id);
        cam.validate();
        return cam;
    }

    // Camera whose optical axis passes from `eye` through `target`, with the
    // image "down" direction opposite to `up` (projected).
    static CameraPose look_at(const Vec3 &eye, const Vec3 &target, const Vec3 &up, double fx, double fy, double cx,
                              double cy, int width, int height, std::string pose_id);

    void validate() const {
        require(std::abs(rotation.norm() - 1.0) <= 1e-9, ErrorKind::InvalidArgument,
                "camera '" + pose_id + "': rotation is not a unit quaternion");
        require(fx > 0 && fy > 0, ErrorKind::InvalidArgument, "camera '" + pose_id + "': focal lengths must be > 0");
        require(width > 0 && height > 0, ErrorKind::InvalidArgument,
                "camera '" + pose_id + "': resolution must be positive");
        require(cx >= 0 && cx < width && cy >= 0 && cy < height, ErrorKind::InvalidArgument,
                "camera '" + pose_id + "': principal point outside the image");
        require(translation.allFinite() && std::isfinite(fx) && std::isfinite(fy), ErrorKind::InvalidArgument,
                "camera '" + pose_id + "': non-finite parameters");
    }

    Mat3 rotation_matrix() const { return rotation.toRotationMatrix(); }
    Vec3 to_camera(const Vec3 &world) const { return rotation * world + translation; }
    Vec3 center() const { return -(rotation.conjugate() * translation); }
    Vec3 forward() const { return rotation.conjugate() * Vec3::UnitZ(); }

    Vec2 project(const Vec3 &cam_point) const {
        return {fx * cam_point.x() / cam_point.z() + cx, fy * cam_point.y() / cam_point.z() + cy};
    }

    // Same pose with intrinsics rescaled for a `factor`-times larger image.
    CameraPose rescaled(int factor) const {
        CameraPose out = *this;
        out.fx *= factor;
        out.fy *= factor;
        out.cx *= factor;
        out.cy *= factor;
        out.width *= factor;
        out.height *= factor;
        return out;
    }
};

inline CameraPose CameraPose::look_at(const Vec3 &eye, const Vec3 &target, const Vec3 &up, double fx, double fy,
                                      double cx, double cy, int width, int height, std::string pose_id) {
    const Vec3 z = (target - eye).normalized();
    require(z.allFinite(), ErrorKind::DegenerateGeometry, "look_at: eye and target coincide");
    Vec3 x = z.cross(up);
    if (x.norm() < 1e-9) {
        // Looking along the up axis: any perpendicular works.
        x = z.cross(std::abs(z.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX());
    }
    x.normalize();
    const Vec3 y = z.cross(x);
    Mat3 r;
    r.row(0) = x.transpose();
    r.row(1) = y.transpose();
    r.row(2) = z.transpose();
    const Eigen::Quaterniond q(r);
    return make(q, -(r * eye), fx, fy, cx, cy, width, height, std::move(pose_id));
}

// ---------------------------------------------------------------------------
// Gaussian primitives
// ---------------------------------------------------------------------------

constexpr int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

// One anisotropic Gaussian. Raw storage keeps invariants under unconstrained
// updates: scale = exp(scale_raw), opacity = sigmoid(opacity_raw), rotation =
// normalize(rotation_raw) with rotation_raw ordered (w, x, y, z).
// sh holds sh_coeff_count(degree) RGB triples: sh[3 * k + channel].
struct GaussianSplat {
    Vec3 mean = Vec3::Zero();
    Vec3 scale_raw = Vec3::Zero();
    Vec4 rotation_raw = Vec4(1, 0, 0, 0);
    double opacity_raw = 0.0;
    std::vector<double> sh = std::vector<double>(3, 0.0);

    Vec3 scale() const { return scale_raw.array().exp(); }
    double opacity() const { return sigmoid(opacity_raw); }
    Vec4 rotation() const { return rotation_raw / rotation_raw.norm(); }

    bool finite() const {
        if (!mean.allFinite() || !scale_raw.allFinite() || !rotation_raw.allFinite() || !std::isfinite(opacity_raw)) {
            return false;
        }
        for (double c : sh) {
            if (!std::isfinite(c)) {
                return false;
            }
        }
        return true;
    }

    friend bool operator==(const GaussianSplat &, const GaussianSplat &) = default;
};

struct Scene {
    std::vector<GaussianSplat> splats;
    int sh_degree = 0;
    Vec3 background = Vec3::Zero();

    std::size_t size() const { return splats.size(); }
    bool empty() const { return splats.empty(); }

    void validate() const {
        require(sh_degree >= 0 && sh_degree <= 3, ErrorKind::InvalidArgument, "sh_degree must be in [0, 3]");
        const std::size_t expected = 3 * static_cast<std::size_t>(sh_coeff_count(sh_degree));
        for (std::size_t i = 0; i < splats.size(); ++i) {
            require(splats[i].sh.size() == expected, ErrorKind::Shape,
                    "splat " + std::to_string(i) + " has " + std::to_string(splats[i].sh.size()) +
                        " sh coefficients, expected " + std::to_string(expected));
            require(splats[i].rotation_raw.norm() > kDegenerateQuaternionNorm, ErrorKind::InvalidPrimitive,
                    "splat " + std::to_string(i) + " has a degenerate rotation quaternion");
        }
    }

    friend bool operator==(const Scene &, const Scene &) = default;
};

// Colored points (colors in [0,1]) used to initialize splats.
struct PointCloud {
    std::vector<Vec3> positions;
    std::vector<Vec3> colors;

    std::size_t size() const { return positions.size(); }

    void validate() const {
        require(colors.size() == positions.size(), ErrorKind::Shape, "point cloud needs one color per point");
        for (std::size_t i = 0; i < positions.size(); ++i) {
            require(positions[i].allFinite() && colors[i].allFinite(), ErrorKind::InvalidArgument,
                    "point " + std::to_string(i) + " is not finite");
        }
    }
};

// ---------------------------------------------------------------------------
// Covariance
// ---------------------------------------------------------------------------

// Rotation matrix of a unit quaternion (w, x, y, z).
inline Mat3 quaternion_matrix(const Vec4 &q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

inline Vec4 normalized_rotation(const Vec4 &rotation_raw) {
    const double n = rotation_raw.norm();
    require(n > kDegenerateQuaternionNorm, ErrorKind::InvalidPrimitive, "degenerate rotation quaternion");
    return rotation_raw / n;
}

// Sigma = R S S^T R^T with S = diag(exp(scale_raw)).
inline Mat3 build_covariance(const Vec3 &scale_raw, const Vec4 &rotation_raw) {
    const Mat3 r = quaternion_matrix(normalized_rotation(rotation_raw));
    const Mat3 m = r * scale_raw.array().exp().matrix().asDiagonal();
    Mat3 sigma = m * m.transpose();
    // Exact symmetry; the product above can differ in the last ulp.
    sigma = 0.5 * (sigma + sigma.transpose()).eval();
    return sigma;
}

// ---------------------------------------------------------------------------
// Spherical harmonics (real basis, Condon-Shortley phase, degree <= 3)
// ---------------------------------------------------------------------------

namespace sh_const {
inline constexpr double C0 = 0.28209479177387814;
inline constexpr double C1 = 0.4886025119029199;
inline constexpr std::array<double, 5> C2 = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                                             -1.0925484305920792, 0.5462742152960396};
inline constexpr std::array<double, 7> C3 = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                                             0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                                             -0.5900435899266435};
} // namespace sh_const

inline constexpr int kMaxShCoeffs = 16;

// Basis values Y_k(dir) for k < sh_coeff_count(degree). If `grad` is non-null
// it receives dY_k/d(x, y, z) treating the components as independent.
inline void sh_basis(const Vec3 &dir, int degree, std::array<double, kMaxShCoeffs> &value,
                     std::array<Vec3, kMaxShCoeffs> *grad = nullptr) {
    using namespace sh_const;
    const double x = dir.x(), y = dir.y(), z = dir.z();
    value[0] = C0;
    if (grad) {
        (*grad)[0].setZero();
    }
    if (degree < 1) {
        return;
    }
    value[1] = -C1 * y;
    value[2] = C1 * z;
    value[3] = -C1 * x;
    if (grad) {
        (*grad)[1] = Vec3(0, -C1, 0);
        (*grad)[2] = Vec3(0, 0, C1);
        (*grad)[3] = Vec3(-C1, 0, 0);
    }
    if (degree < 2) {
        return;
    }
    const double xx = x * x, yy = y * y, zz = z * z;
    value[4] = C2[0] * x * y;
    value[5] = C2[1] * y * z;
    value[6] = C2[2] * (2 * zz - xx - yy);
    value[7] = C2[3] * x * z;
    value[8] = C2[4] * (xx - yy);
    if (grad) {
        (*grad)[4] = C2[0] * Vec3(y, x, 0);
        (*grad)[5] = C2[1] * Vec3(0, z, y);
        (*grad)[6] = C2[2] * Vec3(-2 * x, -2 * y, 4 * z);
        (*grad)[7] = C2[3] * Vec3(z, 0, x);
        (*grad)[8] = C2[4] * Vec3(2 * x, -2 * y, 0);
    }
    if (degree < 3) {
        return;
    }
    value[9] = C3[0] * y * (3 * xx - yy);
    value[10] = C3[1] * x * y * z;
    value[11] = C3[2] * y * (4 * zz - xx - yy);
    value[12] = C3[3] * z * (2 * zz - 3 * xx - 3 * yy);
    value[13] = C3[4] * x * (4 * zz - xx - yy);
    value[14] = C3[5] * z * (xx - yy);
    value[15] = C3[6] * x * (xx - 3 * yy);
    if (grad) {
        (*grad)[9] = C3[0] * Vec3(6 * x * y, 3 * xx - 3 * yy, 0);
        (*grad)[10] = C3[1] * Vec3(y * z, x * z, x * y);
        (*grad)[11] = C3[2] * Vec3(-2 * x * y, 4 * zz - xx - 3 * yy, 8 * y * z);
        (*grad)[12] = C3[3] * Vec3(-6 * x * z, -6 * y * z, 6 * zz - 3 * xx - 3 * yy);
        (*grad)[13] = C3[4] * Vec3(4 * zz - 3 * xx - yy, -2 * x * y, 8 * x * z);
        (*grad)[14] = C3[5] * Vec3(2 * x * z, -2 * y * z, xx - yy);
        (*grad)[15] = C3[6] * Vec3(3 * xx - 3 * yy, -6 * x * y, 0);
    }
}

// rgb = 0.5 + sum_k sh_k Y_k(dir), unclamped.
inline Vec3 eval_sh(std::span<const double> sh, const Vec3 &view_dir, int degree) {
    require(degree >= 0 && degree <= 3, ErrorKind::InvalidArgument, "sh degree must be in [0, 3]");
    const int n = sh_coeff_count(degree);
    require(sh.size() == static_cast<std::size_t>(3 * n), ErrorKind::Shape,
            "sh coefficient count " + std::to_string(sh.size()) + " does not match degree " + std::to_string(degree));
    std::array<double, kMaxShCoeffs> basis{};
    sh_basis(view_dir, degree, basis);
    Vec3 rgb = Vec3::Constant(0.5);
    for (int k = 0; k < n; ++k) {
        for (int c = 0; c < 3; ++c) {
            rgb[c] += sh[3 * k + c] * basis[k];
        }
    }
    return rgb;
}

// ---------------------------------------------------------------------------
// Projection
// ---------------------------------------------------------------------------

struct ProjectedGaussian {
    Vec2 mean2d;
    Mat2 cov2d;
    double depth = 0.0;
};

// Jacobian of the pinhole projection at camera-space point p.
inline Eigen::Matrix<double, 2, 3> projection_jacobian(const CameraPose &cam, const Vec3 &p) {
    const double iz = 1.0 / p.z();
    Eigen::Matrix<double, 2, 3> j;
    j << cam.fx * iz, 0.0, -cam.fx * p.x() * iz * iz,
         0.0, cam.fy * iz, -cam.fy * p.y() * iz * iz;
    return j;
}

// EWA projection of a 3D covariance at camera-space point p_cam.
inline Mat2 project_covariance(const CameraPose &cam, const Mat3 &rot_cam, const Vec3 &p_cam, const Mat3 &cov3d) {
    const Eigen::Matrix<double, 2, 3> t = projection_jacobian(cam, p_cam) * rot_cam;
    Mat2 cov2d = t * cov3d * t.transpose();
    cov2d(0, 1) = cov2d(1, 0) = 0.5 * (cov2d(0, 1) + cov2d(1, 0));
    cov2d(0, 0) += kLowPassFloor;
    cov2d(1, 1) += kLowPassFloor;
    return cov2d;
}

// Returns nullopt (culled) when the mean is not in front of the near plane.
inline std::optional<ProjectedGaussian> project_gaussian(const GaussianSplat &splat, const CameraPose &cam,
                                                         double near_plane = kDefaultNearPlane) {
    const Mat3 rot = cam.rotation_matrix();
    const Vec3 p = rot * splat.mean + cam.translation;
    if (!(p.z() > near_plane)) {
        return std::nullopt;
    }
    ProjectedGaussian out;
    out.mean2d = cam.project(p);
    out.cov2d = project_covariance(cam, rot, p, build_covariance(splat.scale_raw, splat.rotation_raw));
    out.depth = p.z();
    return out;
}

} // namespace gsfix
