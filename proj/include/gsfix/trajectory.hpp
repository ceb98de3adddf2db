#pragma once

#include "gsfix/scene.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace gsfix {

enum class SegmentLabel { Reference, Interp, Orbit };

constexpr std::string_view to_string(SegmentLabel l) {
    switch (l) {
    case SegmentLabel::Reference: return "reference";
    case SegmentLabel::Interp: return "interp";
    case SegmentLabel::Orbit: return "orbit";
    }
    return "?";
}

struct TrajectoryPlan {
    std::vector<CameraPose> poses;
    std::vector<SegmentLabel> labels;
    std::pair<std::string, std::string> source_refs;
    // Set when a reference-guided request degenerated to plain interpolation.
    bool interpolation_fallback = false;

    std::size_t size() const { return poses.size(); }
};

// Ellipse center + a cos(theta) u + b sin(theta) v in the plane spanned by u, v.
struct OrbitPath {
    Vec3 center = Vec3::Zero();
    Vec3 basis_u = Vec3::UnitX();
    Vec3 basis_v = Vec3::UnitZ();
    Vec2 radii = Vec2::Ones();
    Vec3 look_at = Vec3::Zero();

    Vec3 point(double theta) const {
        return center + radii[0] * std::cos(theta) * basis_u + radii[1] * std::sin(theta) * basis_v;
    }
    Vec3 normal() const { return basis_u.cross(basis_v); }

    // Implicit-conic residual (x/a)^2 + (y/b)^2 - 1 of a point's in-plane coordinates.
    double conic_residual(const Vec3 &p) const {
        const Vec3 d = p - center;
        const double x = d.dot(basis_u) / radii[0];
        const double y = d.dot(basis_v) / radii[1];
        return x * x + y * y - 1.0;
    }

    void validate() const {
        require(std::abs(basis_u.dot(basis_v)) <= 1e-9, ErrorKind::InvalidArgument, "orbit basis is not orthogonal");
        require(radii[0] > 0 && radii[1] > 0, ErrorKind::InvalidArgument, "orbit radii must be positive");
    }
};

// ---------------------------------------------------------------------------
// Pose interpolation
// ---------------------------------------------------------------------------

inline Eigen::Quaterniond slerp_shortest(const Eigen::Quaterniond &a, Eigen::Quaterniond b, double t) {
    double dot = a.coeffs().dot(b.coeffs());
    if (dot < 0) {
        b.coeffs() = -b.coeffs();
        dot = -dot;
    }
    if (dot > 1.0 - 1e-12) {
        Eigen::Quaterniond q;
        q.coeffs() = (1.0 - t) * a.coeffs() + t * b.coeffs();
        return q.normalized();
    }
    const double theta = std::acos(std::min(1.0, dot));
    const double s = std::sin(theta);
    Eigen::Quaterniond q;
    q.coeffs() = (std::sin((1.0 - t) * theta) / s) * a.coeffs() + (std::sin(t * theta) / s) * b.coeffs();
    return q.normalized();
}

// Slerp on rotation (hemisphere-corrected), lerp on translation; intrinsics from a.
inline CameraPose interpolate_pose(const CameraPose &a, const CameraPose &b, double t) {
    require(t >= 0.0 && t <= 1.0, ErrorKind::InvalidArgument, "interpolation parameter must be in [0, 1]");
    if (t == 0.0) {
        return a;
    }
    CameraPose out = a;
    out.rotation = slerp_shortest(a.rotation, b.rotation, t);
    out.translation = (1.0 - t) * a.translation + t * b.translation;
    if (t == 1.0) {
        out.rotation = a.rotation.coeffs().dot(b.rotation.coeffs()) < 0 ? Eigen::Quaterniond(-b.rotation.coeffs())
                                                                        : b.rotation;
        out.translation = b.translation;
    }
    out.pose_id = a.pose_id + "~" + b.pose_id;
    return out;
}

// Angle between two camera orientations, radians.
inline double rotation_distance(const CameraPose &a, const CameraPose &b) {
    return a.rotation.angularDistance(b.rotation);
}

// ---------------------------------------------------------------------------
// Orbit fitting
// ---------------------------------------------------------------------------

namespace detail {

struct Conic2 {
    Vec2 center;
    Vec2 radii;
    Vec2 axis_u; // in-plane direction of radii[0]
};

// General conic a x^2 + b xy + c y^2 + d x + e y + f = 0 -> ellipse parameters.
inline std::optional<Conic2> conic_to_ellipse(const Eigen::Matrix<double, 6, 1> &k) {
    const double a = k[0], b = k[1], c = k[2], d = k[3], e = k[4], f = k[5];
    if (b * b - 4 * a * c >= 0) {
        return std::nullopt;
    }
    Mat2 m;
    m << 2 * a, b, b, 2 * c;
    const Vec2 center = m.fullPivLu().solve(Vec2(-d, -e));
    const double f0 = a * center.x() * center.x() + b * center.x() * center.y() + c * center.y() * center.y() +
                      d * center.x() + e * center.y() + f;
    Mat2 q;
    q << a, b / 2, b / 2, c;
    Eigen::SelfAdjointEigenSolver<Mat2> eig(q);
    const Vec2 lam = eig.eigenvalues();
    if (!(-f0 / lam[0] > 0) || !(-f0 / lam[1] > 0)) {
        return std::nullopt;
    }
    return Conic2{center, Vec2(std::sqrt(-f0 / lam[0]), std::sqrt(-f0 / lam[1])), eig.eigenvectors().col(0)};
}

// Algebraic circle fit x^2 + y^2 + D x + E y + F = 0.
inline Conic2 fit_circle(const std::vector<Vec2> &pts) {
    Eigen::MatrixXd a(pts.size(), 3);
    Eigen::VectorXd rhs(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        a.row(i) << pts[i].x(), pts[i].y(), 1.0;
        rhs[i] = -pts[i].squaredNorm();
    }
    const Eigen::Vector3d sol = a.colPivHouseholderQr().solve(rhs);
    const Vec2 center(-sol[0] / 2, -sol[1] / 2);
    const double r2 = center.squaredNorm() - sol[2];
    require(r2 > 0, ErrorKind::DegenerateGeometry, "orbit fit: camera centers do not define a circle");
    const double r = std::sqrt(r2);
    return {center, Vec2(r, r), Vec2::UnitX()};
}

// Least-squares conic through >= 5 points (unit-norm coefficients, smallest
// singular vector), on coordinates normalized for conditioning.
inline std::optional<Conic2> fit_ellipse(const std::vector<Vec2> &pts) {
    Vec2 mean = Vec2::Zero();
    for (const Vec2 &p : pts) {
        mean += p;
    }
    mean /= static_cast<double>(pts.size());
    double scale = 0.0;
    for (const Vec2 &p : pts) {
        scale += (p - mean).norm();
    }
    scale /= static_cast<double>(pts.size());
    if (!(scale > 0)) {
        return std::nullopt;
    }
    Eigen::MatrixXd design(pts.size(), 6);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const Vec2 p = (pts[i] - mean) / scale;
        design.row(i) << p.x() * p.x(), p.x() * p.y(), p.y() * p.y(), p.x(), p.y(), 1.0;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(design, Eigen::ComputeFullV);
    const Eigen::Matrix<double, 6, 1> k = svd.matrixV().col(5);
    auto ellipse = conic_to_ellipse(k);
    if (!ellipse) {
        return std::nullopt;
    }
    ellipse->center = ellipse->center * scale + mean;
    ellipse->radii *= scale;
    return ellipse;
}

} // namespace detail

// Plane through the camera centers (least squares), an ellipse fitted to the
// in-plane centers, and a look-at target where the optical axes converge.
inline OrbitPath fit_orbit_path(const std::vector<CameraPose> &poses) {
    require(poses.size() >= 3, ErrorKind::DegenerateGeometry, "orbit fit needs at least 3 poses");
    const std::size_t n = poses.size();
    Eigen::MatrixXd centers(n, 3);
    Vec3 centroid = Vec3::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        centers.row(i) = poses[i].center().transpose();
        centroid += poses[i].center();
    }
    centroid /= static_cast<double>(n);
    const Eigen::MatrixXd centered = centers.rowwise() - centroid.transpose();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeFullV);
    const Eigen::VectorXd sv = svd.singularValues();
    require(sv[0] > 1e-12 && sv[1] > 1e-9 * sv[0], ErrorKind::DegenerateGeometry,
            "orbit fit: camera centers are collinear");
    const Vec3 e1 = svd.matrixV().col(0);
    const Vec3 e2 = svd.matrixV().col(1);
    Vec3 normal = e1.cross(e2).normalized();

    std::vector<Vec2> pts;
    pts.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3 d = poses[i].center() - centroid;
        pts.emplace_back(d.dot(e1), d.dot(e2));
    }
    std::optional<detail::Conic2> conic;
    if (n >= 5) {
        conic = detail::fit_ellipse(pts);
    }
    if (!conic) {
        conic = detail::fit_circle(pts);
    }

    OrbitPath orbit;
    orbit.center = centroid + conic->center.x() * e1 + conic->center.y() * e2;
    orbit.basis_u = (conic->axis_u.x() * e1 + conic->axis_u.y() * e2).normalized();
    // Keep the orbit normal on the side the cameras' "up" points to, so the
    // parameter angle runs the same way for every fit.
    Vec3 mean_up = Vec3::Zero();
    for (const CameraPose &p : poses) {
        mean_up -= p.rotation.conjugate() * Vec3::UnitY();
    }
    if (normal.dot(mean_up) < 0) {
        normal = -normal;
    }
    orbit.basis_v = normal.cross(orbit.basis_u).normalized();
    orbit.radii = conic->radii;

    // Target: the point closest (least squares) to every optical axis.
    Mat3 a = Mat3::Zero();
    Vec3 b = Vec3::Zero();
    for (const CameraPose &p : poses) {
        const Vec3 f = p.forward();
        const Mat3 proj = Mat3::Identity() - f * f.transpose();
        a += proj;
        b += proj * p.center();
    }
    Eigen::SelfAdjointEigenSolver<Mat3> eig(a);
    if (eig.eigenvalues().minCoeff() > 1e-6 * eig.eigenvalues().maxCoeff()) {
        orbit.look_at = a.ldlt().solve(b);
    } else {
        orbit.look_at = orbit.center;
    }
    orbit.validate();
    return orbit;
}

// Parameter angle of the orbit point nearest to p: coarse scan, then
// golden-section refinement to 1e-8 rad.
inline double nearest_orbit_angle(const OrbitPath &orbit, const Vec3 &p) {
    constexpr int coarse = 720;
    const double step = 2.0 * std::numbers::pi / coarse;
    auto dist2 = [&](double th) { return (orbit.point(th) - p).squaredNorm(); };
    double best = 0.0, best_d = dist2(0.0);
    for (int i = 1; i < coarse; ++i) {
        const double d = dist2(i * step);
        if (d < best_d) {
            best_d = d;
            best = i * step;
        }
    }
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = best - step, hi = best + step;
    double x1 = hi - inv_phi * (hi - lo), x2 = lo + inv_phi * (hi - lo);
    double f1 = dist2(x1), f2 = dist2(x2);
    while (hi - lo > 1e-8) {
        if (f1 < f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = dist2(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = dist2(x2);
        }
    }
    return 0.5 * (lo + hi);
}

// Camera on the orbit at angle theta looking at orbit.look_at (+y world up).
inline CameraPose orbit_pose(const OrbitPath &orbit, double theta, const CameraPose &intrinsics, std::string id) {
    return CameraPose::look_at(orbit.point(theta), orbit.look_at, Vec3::UnitY(), intrinsics.fx, intrinsics.fy,
                               intrinsics.cx, intrinsics.cy, intrinsics.width, intrinsics.height, std::move(id));
}

// ---------------------------------------------------------------------------
// Samplers
// ---------------------------------------------------------------------------

inline std::string plan_pose_id(const CameraPose &a, const CameraPose &b, std::size_t k) {
    return a.pose_id + "-" + b.pose_id + "-" + std::to_string(k);
}

// n poses at t = k / (n - 1); the ends are the references themselves.
inline TrajectoryPlan sample_interpolation(const CameraPose &ref_a, const CameraPose &ref_b, int n) {
    require(n >= 2, ErrorKind::InvalidArgument, "interpolation needs at least 2 poses");
    TrajectoryPlan plan;
    plan.source_refs = {ref_a.pose_id, ref_b.pose_id};
    for (int k = 0; k < n; ++k) {
        if (k == 0) {
            plan.poses.push_back(ref_a);
            plan.labels.push_back(SegmentLabel::Reference);
        } else if (k == n - 1) {
            plan.poses.push_back(ref_b);
            plan.labels.push_back(SegmentLabel::Reference);
        } else {
            CameraPose p = interpolate_pose(ref_a, ref_b, static_cast<double>(k) / (n - 1));
            p.pose_id = plan_pose_id(ref_a, ref_b, k);
            plan.poses.push_back(std::move(p));
            plan.labels.push_back(SegmentLabel::Interp);
        }
    }
    return plan;
}

// n poses at uniform angle steps over [theta_start, theta_end]; a full turn
// excludes the repeated end angle. Intrinsics come from `intrinsics`.
inline TrajectoryPlan sample_ellipse(const OrbitPath &orbit, double theta_start, double theta_end, int n,
                                     const CameraPose &intrinsics, const std::string &id_prefix = "orbit") {
    require(n >= 1, ErrorKind::InvalidArgument, "ellipse sampling needs at least 1 pose");
    orbit.validate();
    const double arc = theta_end - theta_start;
    const bool closed = std::abs(arc) >= 2.0 * std::numbers::pi - 1e-12;
    const double step = n == 1 ? 0.0 : (closed ? arc / n : arc / (n - 1));
    TrajectoryPlan plan;
    for (int k = 0; k < n; ++k) {
        plan.poses.push_back(orbit_pose(orbit, theta_start + k * step, intrinsics, id_prefix + "-" + std::to_string(k)));
        plan.labels.push_back(SegmentLabel::Orbit);
    }
    return plan;
}

struct TrajectorySplit {
    int lead_in = 8;  // interpolation from reference A onto the orbit
    int orbit = 33;   // samples along the orbit arc
    int lead_out = 8; // interpolation from the orbit into reference B

    int total() const { return lead_in + orbit + lead_out; }
};

// Split proportional to (8, 33, 8) of 49 frames, keeping both legs >= 1.
inline TrajectorySplit default_split(int n) {
    require(n >= 2, ErrorKind::InvalidArgument, "trajectory needs at least 2 poses");
    int leg = std::max(1, static_cast<int>(std::lround(n * 8.0 / 49.0)));
    while (2 * leg > n) {
        --leg;
    }
    return {leg, n - 2 * leg, leg};
}

// Reference-guided path: interpolate from ref A onto its nearest orbit point,
// follow the orbit along the shorter arc to ref B's nearest point, interpolate
// into ref B. With no orbit samples (split.orbit == 0) this is exactly
// sample_interpolation.
inline TrajectoryPlan sample_reference_guided(const CameraPose &ref_a, const CameraPose &ref_b,
                                              const OrbitPath *orbit, int n, const TrajectorySplit &split) {
    require(split.total() == n, ErrorKind::InvalidArgument, "trajectory split must sum to n");
    require(split.lead_in >= 1 && split.lead_out >= 1 && split.orbit >= 0, ErrorKind::InvalidArgument,
            "trajectory split needs lead_in, lead_out >= 1 and orbit >= 0");
    if (split.orbit == 0) {
        return sample_interpolation(ref_a, ref_b, n);
    }
    require(orbit != nullptr, ErrorKind::InvalidArgument, "reference-guided sampling with orbit frames needs an orbit");
    orbit->validate();

    const double theta_a = nearest_orbit_angle(*orbit, ref_a.center());
    const double theta_b = nearest_orbit_angle(*orbit, ref_b.center());
    double delta = std::remainder(theta_b - theta_a, 2.0 * std::numbers::pi);
    if (std::abs(delta) < 1e-9) {
        TrajectoryPlan plan = sample_interpolation(ref_a, ref_b, n);
        plan.interpolation_fallback = true;
        return plan;
    }

    TrajectoryPlan plan;
    plan.source_refs = {ref_a.pose_id, ref_b.pose_id};
    std::size_t k = 0;
    auto push = [&](CameraPose p, SegmentLabel label, bool keep_id = false) {
        if (!keep_id) {
            p.pose_id = plan_pose_id(ref_a, ref_b, k);
        }
        plan.poses.push_back(std::move(p));
        plan.labels.push_back(label);
        ++k;
    };

    const CameraPose entry = orbit_pose(*orbit, theta_a, ref_a, "entry");
    const CameraPose exit = orbit_pose(*orbit, theta_a + delta, ref_a, "exit");
    for (int i = 0; i < split.lead_in; ++i) {
        if (i == 0) {
            push(ref_a, SegmentLabel::Reference, true);
        } else {
            push(interpolate_pose(ref_a, entry, static_cast<double>(i) / split.lead_in), SegmentLabel::Interp);
        }
    }
    for (int i = 0; i < split.orbit; ++i) {
        const double frac = split.orbit == 1 ? 0.5 : static_cast<double>(i) / (split.orbit - 1);
        push(orbit_pose(*orbit, theta_a + frac * delta, ref_a, ""), SegmentLabel::Orbit);
    }
    for (int i = 1; i <= split.lead_out; ++i) {
        if (i == split.lead_out) {
            push(ref_b, SegmentLabel::Reference, true);
        } else {
            push(interpolate_pose(exit, ref_b, static_cast<double>(i) / split.lead_out), SegmentLabel::Interp);
        }
    }
    return plan;
}

} // namespace gsfix
