#include "gsfix/synthetic.hpp"
#include "gsfix/trajectory.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

namespace gsfix {
namespace {

constexpr double kPi = std::numbers::pi;

CameraPose ring_pose(double theta, double radius, const std::string &id, double height = 0.0) {
    return CameraPose::look_at(Vec3(radius * std::cos(theta), radius * std::sin(theta), height), Vec3::Zero(),
                               Vec3::UnitY(), 50, 50, 32, 24, 64, 48, id);
}

std::vector<CameraPose> ring(int n, double radius, double height = 0.0) {
    std::vector<CameraPose> poses;
    for (int i = 0; i < n; ++i) {
        poses.push_back(ring_pose(2 * kPi * i / n, radius, "r" + std::to_string(i), height));
    }
    return poses;
}

void expect_pose_eq(const CameraPose &a, const CameraPose &b, double tol = 1e-9) {
    EXPECT_LE(a.rotation.angularDistance(b.rotation), tol);
    EXPECT_LE((a.translation - b.translation).norm(), tol);
}

TEST(Interpolate, Endpoints) {
    const CameraPose a = simple_camera(Vec3(0, 0, -3), 32, 30, "a");
    const CameraPose b = simple_camera(Vec3(2, 1, -3), 32, 30, "b");
    const CameraPose p0 = interpolate_pose(a, b, 0.0);
    EXPECT_EQ(p0.rotation.coeffs(), a.rotation.coeffs());
    EXPECT_EQ(p0.translation, a.translation);
    expect_pose_eq(interpolate_pose(a, b, 1.0), b);
    EXPECT_THROW(interpolate_pose(a, b, 1.5), Error);
    EXPECT_THROW(interpolate_pose(a, b, -0.1), Error);
}

TEST(Interpolate, HalfwayAboutZ) {
    const Eigen::Quaterniond qb(Eigen::AngleAxisd(kPi / 2, Vec3::UnitZ()));
    const CameraPose a = CameraPose::make(Eigen::Quaterniond::Identity(), Vec3::Zero(), 10, 10, 5, 5, 10, 10, "a");
    const CameraPose b = CameraPose::make(qb, Vec3(2, 0, 0), 20, 20, 10, 10, 20, 20, "b");
    const CameraPose m = interpolate_pose(a, b, 0.5);
    const Eigen::Quaterniond expected(std::cos(kPi / 8), 0, 0, std::sin(kPi / 8));
    EXPECT_LE(m.rotation.angularDistance(expected), 1e-9);
    EXPECT_NEAR((m.translation - Vec3(1, 0, 0)).norm(), 0.0, 1e-12);
    EXPECT_EQ(m.fx, 10);
    EXPECT_EQ(m.width, 10);
}

TEST(Interpolate, HemisphereCorrection) {
    const Eigen::Quaterniond qb(Eigen::AngleAxisd(0.4, Vec3::UnitY()));
    const Eigen::Quaterniond neg(-qb.w(), -qb.x(), -qb.y(), -qb.z());
    const CameraPose a = CameraPose::make(Eigen::Quaterniond::Identity(), Vec3::Zero(), 10, 10, 5, 5, 10, 10, "a");
    const CameraPose b = CameraPose::make(neg, Vec3::Zero(), 10, 10, 5, 5, 10, 10, "b");
    const CameraPose m = interpolate_pose(a, b, 0.5);
    EXPECT_NEAR(m.rotation.angularDistance(Eigen::Quaterniond::Identity()), 0.2, 1e-9);
}

TEST(Interpolate, SlerpOracleRandom) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-kPi, kPi);
    for (int trial = 0; trial < 20; ++trial) {
        const Vec3 axis = Vec3(u(rng), u(rng), u(rng)).normalized();
        const double angle = std::abs(u(rng));
        const double t = (u(rng) + kPi) / (2 * kPi);
        const Eigen::Quaterniond qb(Eigen::AngleAxisd(angle, axis));
        const CameraPose a = CameraPose::make(Eigen::Quaterniond::Identity(), Vec3::Zero(), 1, 1, 0, 0, 1, 1, "a");
        const CameraPose b = CameraPose::make(qb, Vec3::Zero(), 1, 1, 0, 0, 1, 1, "b");
        const Eigen::Quaterniond expected(Eigen::AngleAxisd(t * angle, axis));
        EXPECT_LE(interpolate_pose(a, b, t).rotation.angularDistance(expected), 1e-9);
    }
}

TEST(OrbitFit, ExactCircle) {
    const OrbitPath orbit = fit_orbit_path(ring(8, 2.0));
    EXPECT_NEAR(orbit.radii[0], 2.0, 1e-6);
    EXPECT_NEAR(orbit.radii[1], 2.0, 1e-6);
    EXPECT_LE(orbit.center.norm(), 1e-6);
    EXPECT_LE(std::abs(orbit.basis_u.dot(orbit.basis_v)), 1e-9);
    EXPECT_NEAR(std::abs(orbit.normal().z()), 1.0, 1e-9);
    EXPECT_LE(orbit.look_at.norm(), 1e-6);
}

TEST(OrbitFit, ThreePointsUseCircle) {
    const OrbitPath orbit = fit_orbit_path(ring(3, 1.5, 0.5));
    EXPECT_NEAR(orbit.radii[0], 1.5, 1e-9);
    EXPECT_NEAR(orbit.radii[1], 1.5, 1e-9);
    EXPECT_LE((orbit.center - Vec3(0, 0, 0.5)).norm(), 1e-9);
}

TEST(OrbitFit, Ellipse) {
    std::vector<CameraPose> poses;
    for (int i = 0; i < 10; ++i) {
        const double th = 2 * kPi * i / 10 + 0.1;
        poses.push_back(CameraPose::look_at(Vec3(3 * std::cos(th), 0.5, 1.5 * std::sin(th)), Vec3(0, 0.5, 0),
                                            Vec3::UnitY(), 40, 40, 20, 20, 40, 40, "e" + std::to_string(i)));
    }
    const OrbitPath orbit = fit_orbit_path(poses);
    const double a = std::max(orbit.radii[0], orbit.radii[1]);
    const double b = std::min(orbit.radii[0], orbit.radii[1]);
    EXPECT_NEAR(a, 3.0, 1e-6);
    EXPECT_NEAR(b, 1.5, 1e-6);
    for (const CameraPose &p : poses) {
        EXPECT_NEAR(orbit.conic_residual(p.center()), 0.0, 1e-9);
    }
}

// Independent least-squares circle fit on the noisy centers: minimize the
// geometric residual sum (|p - c| - r)^2 by Gauss-Newton from the centroid.
double geometric_circle_radius(const std::vector<Vec2> &pts) {
    Vec2 c = Vec2::Zero();
    for (const Vec2 &p : pts) {
        c += p;
    }
    c /= static_cast<double>(pts.size());
    double r = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
        Eigen::MatrixXd j(pts.size(), 3);
        Eigen::VectorXd res(pts.size());
        r = 0.0;
        for (const Vec2 &p : pts) {
            r += (p - c).norm();
        }
        r /= static_cast<double>(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const Vec2 d = pts[i] - c;
            const double n = d.norm();
            res[i] = n - r;
            j.row(i) << -d.x() / n, -d.y() / n, -1.0;
        }
        const Eigen::Vector3d step = j.colPivHouseholderQr().solve(-res);
        c += step.head<2>();
        if (step.norm() < 1e-14) {
            break;
        }
    }
    return r;
}

TEST(OrbitFit, NoisyCircle) {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> noise(0.0, 1e-3);
    std::vector<CameraPose> poses;
    std::vector<Vec2> pts;
    for (int i = 0; i < 8; ++i) {
        const double th = 2 * kPi * i / 8;
        const Vec3 eye(2 * std::cos(th) + noise(rng), 2 * std::sin(th) + noise(rng), noise(rng));
        poses.push_back(CameraPose::look_at(eye, Vec3::Zero(), Vec3::UnitY(), 50, 50, 32, 24, 64, 48, "n"));
        pts.emplace_back(eye.x(), eye.y());
    }
    const OrbitPath orbit = fit_orbit_path(poses);
    const double oracle = geometric_circle_radius(pts);
    EXPECT_NEAR(oracle, 2.0, 1e-2);
    EXPECT_NEAR(orbit.radii[0], 2.0, 1e-2);
    EXPECT_NEAR(orbit.radii[1], 2.0, 1e-2);
    EXPECT_NEAR(0.5 * (orbit.radii[0] + orbit.radii[1]), oracle, 5e-3);
}

TEST(OrbitFit, Degenerate) {
    std::vector<CameraPose> line;
    for (int i = 0; i < 3; ++i) {
        line.push_back(simple_camera(Vec3(i, 0, -3), 32, 30, "l"));
    }
    try {
        fit_orbit_path(line);
        FAIL() << "expected degenerate-geometry error";
    } catch (const Error &e) {
        EXPECT_EQ(e.kind(), ErrorKind::DegenerateGeometry);
    }
    EXPECT_THROW(fit_orbit_path(ring(2, 1.0)), Error);
}

TEST(OrbitFit, LookAtWhereAxesConverge) {
    std::vector<CameraPose> poses;
    for (int i = 0; i < 6; ++i) {
        const double th = 2 * kPi * i / 6;
        poses.push_back(CameraPose::look_at(Vec3(2 * std::cos(th), 1.0, 2 * std::sin(th)), Vec3(0, 0, 0),
                                            Vec3::UnitY(), 40, 40, 20, 20, 40, 40, "c"));
    }
    const OrbitPath orbit = fit_orbit_path(poses);
    EXPECT_LE(orbit.look_at.norm(), 1e-9);
    EXPECT_GT(orbit.normal().y(), 0.99);
}

TEST(Interpolation, TwoPoses) {
    const CameraPose a = simple_camera(Vec3(0, 0, -3), 32, 30, "a");
    const CameraPose b = simple_camera(Vec3(1, 0, -3), 32, 30, "b");
    const TrajectoryPlan plan = sample_interpolation(a, b, 2);
    ASSERT_EQ(plan.size(), 2u);
    EXPECT_EQ(plan.poses[0].pose_id, "a");
    EXPECT_EQ(plan.poses[1].pose_id, "b");
    expect_pose_eq(plan.poses[0], a, 0.0);
    expect_pose_eq(plan.poses[1], b, 0.0);
    EXPECT_EQ(plan.labels[0], SegmentLabel::Reference);
    EXPECT_EQ(plan.labels[1], SegmentLabel::Reference);
    EXPECT_EQ(plan.source_refs.first, "a");
    EXPECT_EQ(plan.source_refs.second, "b");
    EXPECT_THROW(sample_interpolation(a, b, 1), Error);
}

TEST(Interpolation, MidpointAndMonotone) {
    const CameraPose a = simple_camera(Vec3(0, 0, -3), 32, 30, "a");
    const CameraPose b = simple_camera(Vec3(2, 1, -4), 32, 30, "b");
    const TrajectoryPlan three = sample_interpolation(a, b, 3);
    expect_pose_eq(three.poses[1], interpolate_pose(a, b, 0.5), 0.0);
    EXPECT_EQ(three.labels[1], SegmentLabel::Interp);

    const TrajectoryPlan plan = sample_interpolation(a, b, 49);
    ASSERT_EQ(plan.size(), 49u);
    const Vec3 dir = b.translation - a.translation;
    double prev = -1.0;
    for (std::size_t k = 0; k < plan.size(); ++k) {
        const double t = (plan.poses[k].translation - a.translation).dot(dir) / dir.squaredNorm();
        EXPECT_GT(t, prev);
        EXPECT_NEAR(t, k / 48.0, 1e-12);
        prev = t;
    }
}

TEST(Ellipse, SinglePoseLooksAtTarget) {
    OrbitPath orbit;
    orbit.center = Vec3(0, 1, 0);
    orbit.basis_u = Vec3::UnitX();
    orbit.basis_v = Vec3::UnitZ();
    orbit.radii = Vec2(3, 2);
    orbit.look_at = Vec3(0.2, 0.1, -0.3);
    const CameraPose intr = simple_camera(Vec3(0, 0, -3), 32, 30, "i");
    const TrajectoryPlan plan = sample_ellipse(orbit, 0.7, 0.7, 1, intr);
    ASSERT_EQ(plan.size(), 1u);
    const CameraPose &p = plan.poses[0];
    const Vec3 to_target = (orbit.look_at - p.center()).normalized();
    EXPECT_LE(std::acos(std::min(1.0, p.forward().dot(to_target))), 1e-6);
    EXPECT_EQ(plan.labels[0], SegmentLabel::Orbit);
}

TEST(Ellipse, FullCircleQuarterSpacing) {
    OrbitPath orbit;
    orbit.radii = Vec2(2, 2);
    orbit.look_at = Vec3(0, -0.5, 0);
    const CameraPose intr = simple_camera(Vec3(0, 0, -3), 32, 30, "i");
    const TrajectoryPlan plan = sample_ellipse(orbit, 0.0, 2 * kPi, 4, intr);
    ASSERT_EQ(plan.size(), 4u);
    for (int k = 0; k < 4; ++k) {
        const Vec3 a = plan.poses[k].center() - orbit.center;
        const Vec3 b = plan.poses[(k + 1) % 4].center() - orbit.center;
        EXPECT_NEAR(std::acos(a.normalized().dot(b.normalized())), kPi / 2, 1e-9);
    }
}

TEST(Ellipse, SamplesOnSurface) {
    OrbitPath orbit;
    orbit.center = Vec3(0.5, 1.0, -0.2);
    const Vec3 n = Vec3(0.1, 1.0, 0.2).normalized();
    orbit.basis_u = n.cross(Vec3::UnitZ()).normalized();
    orbit.basis_v = n.cross(orbit.basis_u);
    orbit.radii = Vec2(2.5, 1.25);
    orbit.look_at = Vec3::Zero();
    const CameraPose intr = simple_camera(Vec3(0, 0, -3), 32, 30, "i");
    const TrajectoryPlan plan = sample_ellipse(orbit, -1.0, 2.5, 17, intr);
    for (const CameraPose &p : plan.poses) {
        // Oracle: distance to the ellipse = distance to nearest point found by dense search.
        const Vec3 c = p.center();
        const Vec3 d = c - orbit.center;
        EXPECT_LE(std::abs(d.dot(n)), 1e-9);
        const double x = d.dot(orbit.basis_u), y = d.dot(orbit.basis_v);
        EXPECT_NEAR(x * x / (2.5 * 2.5) + y * y / (1.25 * 1.25), 1.0, 1e-9);
    }
}

TEST(ReferenceGuided, DegenerateSplitIsInterpolation) {
    const CameraPose a = ring_pose(0.3, 2.0, "a", 0.4);
    const CameraPose b = ring_pose(1.2, 2.0, "b", 0.4);
    const TrajectoryPlan plan = sample_reference_guided(a, b, nullptr, 2, {1, 0, 1});
    ASSERT_EQ(plan.size(), 2u);
    expect_pose_eq(plan.poses[0], a, 0.0);
    expect_pose_eq(plan.poses[1], b, 0.0);

    const OrbitPath orbit = fit_orbit_path(ring(8, 2.0));
    const TrajectoryPlan five = sample_reference_guided(a, b, &orbit, 5, {2, 0, 3});
    const TrajectoryPlan interp = sample_interpolation(a, b, 5);
    for (int k = 0; k < 5; ++k) {
        expect_pose_eq(five.poses[k], interp.poses[k], 0.0);
        EXPECT_EQ(five.labels[k], interp.labels[k]);
    }
}

TEST(ReferenceGuided, SplitValidation) {
    const CameraPose a = ring_pose(0.3, 2.0, "a");
    const CameraPose b = ring_pose(1.2, 2.0, "b");
    const OrbitPath orbit = fit_orbit_path(ring(8, 2.0));
    EXPECT_THROW(sample_reference_guided(a, b, &orbit, 10, {1, 7, 1}), Error);
    EXPECT_THROW(sample_reference_guided(a, b, &orbit, 10, {0, 9, 1}), Error);
    EXPECT_THROW(sample_reference_guided(a, b, nullptr, 10, {1, 8, 1}), Error);
}

TEST(ReferenceGuided, RefsOnOrbit) {
    const std::vector<CameraPose> poses = ring(8, 2.0);
    const OrbitPath orbit = fit_orbit_path(poses);
    const int n = 12;
    const TrajectoryPlan plan = sample_reference_guided(poses[1], poses[3], &orbit, n, {1, n - 2, 1});
    ASSERT_EQ(plan.size(), static_cast<std::size_t>(n));
    expect_pose_eq(plan.poses.front(), poses[1]);
    expect_pose_eq(plan.poses.back(), poses[3]);
    for (int k = 1; k < n - 1; ++k) {
        EXPECT_EQ(plan.labels[k], SegmentLabel::Orbit);
        const Vec3 c = plan.poses[k].center();
        EXPECT_NEAR(std::hypot(c.x(), c.y()), 2.0, 1e-9);
        EXPECT_NEAR(c.z(), 0.0, 1e-9);
    }
    // Shorter arc: angles stay between the two references.
    for (int k = 1; k < n - 1; ++k) {
        const Vec3 c = plan.poses[k].center();
        const double th = std::atan2(c.y(), c.x());
        EXPECT_GE(th, 2 * kPi / 8 - 1e-6);
        EXPECT_LE(th, 6 * kPi / 8 + 1e-6);
    }
}

TEST(ReferenceGuided, ShorterDirectionAcrossWrap) {
    const std::vector<CameraPose> poses = ring(8, 2.0);
    const OrbitPath orbit = fit_orbit_path(poses);
    const TrajectoryPlan plan = sample_reference_guided(poses[7], poses[1], &orbit, 7, {1, 5, 1});
    for (std::size_t k = 1; k + 1 < plan.size(); ++k) {
        const Vec3 c = plan.poses[k].center();
        EXPECT_GT(c.x(), 1.4); // arc through theta = 0, not through pi
    }
}

TEST(ReferenceGuided, ContinuityOffOrbit) {
    std::vector<CameraPose> level;
    for (int i = 0; i < 8; ++i) {
        const double th = 2 * kPi * i / 8;
        level.push_back(CameraPose::look_at(Vec3(2 * std::cos(th), 0.5, 2 * std::sin(th)), Vec3::Zero(),
                                            Vec3::UnitY(), 50, 50, 32, 24, 64, 48, "h"));
    }
    const OrbitPath orbit = fit_orbit_path(level);
    const CameraPose a = CameraPose::look_at(Vec3(2.3, 0.8, 0.3), Vec3(0.1, 0, 0), Vec3::UnitY(), 50, 50, 32, 24,
                                             64, 48, "a");
    const CameraPose b = CameraPose::look_at(Vec3(-0.5, 0.3, 2.2), Vec3(0, 0.1, 0), Vec3::UnitY(), 50, 50, 32, 24,
                                             64, 48, "b");
    const int n = 49;
    const TrajectoryPlan plan = sample_reference_guided(a, b, &orbit, n, default_split(n));
    ASSERT_EQ(plan.size(), 49u);
    expect_pose_eq(plan.poses.front(), a);
    expect_pose_eq(plan.poses.back(), b);
    EXPECT_EQ(plan.poses.front().pose_id, "a");
    EXPECT_EQ(plan.poses.back().pose_id, "b");
    std::vector<double> steps;
    double sum = 0.0;
    for (std::size_t k = 1; k < plan.size(); ++k) {
        steps.push_back(rotation_distance(plan.poses[k - 1], plan.poses[k]));
        sum += steps.back();
    }
    const double mean = sum / steps.size();
    for (double s : steps) {
        EXPECT_LE(s, 2.0 * mean);
    }
    int orbit_count = 0;
    for (SegmentLabel l : plan.labels) {
        orbit_count += l == SegmentLabel::Orbit;
    }
    EXPECT_EQ(orbit_count, 33);
    EXPECT_FALSE(plan.interpolation_fallback);
}

TEST(ReferenceGuided, ZeroArcFallsBack) {
    const std::vector<CameraPose> poses = ring(8, 2.0);
    const OrbitPath orbit = fit_orbit_path(poses);
    const CameraPose a = ring_pose(0.5, 2.0, "a", 0.2);
    const CameraPose b = ring_pose(0.5, 2.5, "b", -0.1);
    const TrajectoryPlan plan = sample_reference_guided(a, b, &orbit, 6, {1, 4, 1});
    EXPECT_TRUE(plan.interpolation_fallback);
    const TrajectoryPlan interp = sample_interpolation(a, b, 6);
    for (int k = 0; k < 6; ++k) {
        expect_pose_eq(plan.poses[k], interp.poses[k], 0.0);
    }
}

TEST(ReferenceGuided, DefaultSplit) {
    const TrajectorySplit s49 = default_split(49);
    EXPECT_EQ(s49.lead_in, 8);
    EXPECT_EQ(s49.orbit, 33);
    EXPECT_EQ(s49.lead_out, 8);
    const TrajectorySplit s2 = default_split(2);
    EXPECT_EQ(s2.lead_in, 1);
    EXPECT_EQ(s2.orbit, 0);
    EXPECT_EQ(s2.lead_out, 1);
    for (int n = 2; n < 100; ++n) {
        const TrajectorySplit s = default_split(n);
        EXPECT_EQ(s.total(), n);
        EXPECT_GE(s.lead_in, 1);
        EXPECT_GE(s.orbit, 0);
    }
}

} // namespace
} // namespace gsfix
