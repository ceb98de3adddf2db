#include "gsfix/scene.hpp"

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace gsfix {
namespace {

Vec4 random_quaternion(std::mt19937_64 &rng) {
    std::normal_distribution<double> n01;
    Vec4 q(n01(rng), n01(rng), n01(rng), n01(rng));
    return q.normalized();
}

// Real spherical harmonic from associated Legendre polynomials. std::assoc_legendre
// omits the Condon-Shortley phase, so (-1)^m is applied here.
double real_sh_oracle(int l, int m, const Vec3 &dir) {
    const double theta = std::acos(std::clamp(dir.z(), -1.0, 1.0));
    const double phi = std::atan2(dir.y(), dir.x());
    const int am = std::abs(m);
    double fact_ratio = 1.0; // (l - |m|)! / (l + |m|)!
    for (int k = l - am + 1; k <= l + am; ++k) {
        fact_ratio /= k;
    }
    const double k_lm = std::sqrt((2 * l + 1) / (4.0 * std::numbers::pi) * fact_ratio);
    const double p = std::assoc_legendre(l, am, std::cos(theta));
    const double cs = (am % 2 == 0) ? 1.0 : -1.0;
    if (m == 0) {
        return k_lm * p;
    }
    if (m > 0) {
        return std::sqrt(2.0) * k_lm * cs * p * std::cos(m * phi);
    }
    return std::sqrt(2.0) * k_lm * cs * p * std::sin(am * phi);
}

CameraPose axis_camera(double f = 100.0) {
    return CameraPose::make(Eigen::Quaterniond::Identity(), Vec3::Zero(), f, f, 32, 24, 64, 48, "axis");
}

TEST(CameraPose, NormalizesQuaternionAndValidatesIntrinsics) {
    const CameraPose cam =
        CameraPose::make(Eigen::Quaterniond(2, 0, 0, 0), Vec3(1, 2, 3), 50, 50, 10, 10, 20, 20, "a");
    EXPECT_NEAR(cam.rotation.norm(), 1.0, 1e-9);
    EXPECT_THROW(CameraPose::make(Eigen::Quaterniond::Identity(), Vec3::Zero(), 0, 50, 10, 10, 20, 20, "b"), Error);
    EXPECT_THROW(CameraPose::make(Eigen::Quaterniond::Identity(), Vec3::Zero(), 50, 50, 20, 10, 20, 20, "c"), Error);
    EXPECT_THROW(CameraPose::make(Eigen::Quaterniond(0, 0, 0, 0), Vec3::Zero(), 50, 50, 10, 10, 20, 20, "d"), Error);
}

TEST(CameraPose, LookAtPointsOpticalAxisAtTarget) {
    const Vec3 eye(3, 1, -2), target(0.5, -0.2, 0.1);
    const CameraPose cam = CameraPose::look_at(eye, target, Vec3::UnitY(), 40, 40, 16, 16, 32, 32, "l");
    EXPECT_NEAR((cam.center() - eye).norm(), 0.0, 1e-12);
    const Vec3 p = cam.to_camera(target);
    EXPECT_NEAR(p.x(), 0.0, 1e-12);
    EXPECT_NEAR(p.y(), 0.0, 1e-12);
    EXPECT_GT(p.z(), 0.0);
    // World up maps to image up (negative camera y).
    EXPECT_LT((cam.rotation_matrix() * Vec3::UnitY()).y(), 0.0);
}

TEST(BuildCovariance, IdentityInputsGiveIdentity) {
    const Mat3 sigma = build_covariance(Vec3::Zero(), Vec4(1, 0, 0, 0));
    EXPECT_TRUE(sigma.isApprox(Mat3::Identity(), 1e-15));
}

TEST(BuildCovariance, AxisAlignedScalesSquare) {
    const Mat3 sigma = build_covariance(Vec3(std::log(2.0), 0, 0), Vec4(1, 0, 0, 0));
    Mat3 expected = Mat3::Identity();
    expected(0, 0) = 4.0;
    EXPECT_LT((sigma - expected).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(BuildCovariance, EigenvaluesAreSquaredScales) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> scale(0.1, 3.0);
    for (int trial = 0; trial < 50; ++trial) {
        const Vec3 s(scale(rng), scale(rng), scale(rng));
        const Mat3 sigma = build_covariance(s.array().log(), random_quaternion(rng));
        Eigen::SelfAdjointEigenSolver<Mat3> eig(sigma);
        std::array<double, 3> got{eig.eigenvalues()[0], eig.eigenvalues()[1], eig.eigenvalues()[2]};
        std::array<double, 3> want{s[0] * s[0], s[1] * s[1], s[2] * s[2]};
        std::sort(got.begin(), got.end());
        std::sort(want.begin(), want.end());
        for (int k = 0; k < 3; ++k) {
            EXPECT_NEAR(got[k], want[k], 1e-9);
        }
    }
}

TEST(BuildCovariance, SymmetricPositiveDefiniteAndSignInvariant) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> raw(-4.0, 2.0);
    std::normal_distribution<double> n01;
    for (int trial = 0; trial < 200; ++trial) {
        const Vec3 scale_raw(raw(rng), raw(rng), raw(rng));
        const Vec4 q(n01(rng), n01(rng), n01(rng), n01(rng));
        const Mat3 sigma = build_covariance(scale_raw, q);
        EXPECT_LE((sigma - sigma.transpose()).cwiseAbs().maxCoeff(), 1e-12);
        Eigen::SelfAdjointEigenSolver<Mat3> eig(sigma);
        EXPECT_GT(eig.eigenvalues().minCoeff(), 0.0);
        EXPECT_EQ(build_covariance(scale_raw, -q), sigma);
    }
}

TEST(BuildCovariance, DegenerateQuaternionIsInvalidPrimitive) {
    try {
        build_covariance(Vec3::Zero(), Vec4(1e-13, 0, 0, 0));
        FAIL() << "expected an error";
    } catch (const Error &e) {
        EXPECT_EQ(e.kind(), ErrorKind::InvalidPrimitive);
    }
}

TEST(EvalSh, DegreeZeroZeroCoefficientsIsHalfGray) {
    const std::vector<double> sh(3, 0.0);
    const Vec3 rgb = eval_sh(sh, Vec3(0, 0, 1), 0);
    EXPECT_EQ(rgb, Vec3::Constant(0.5));
}

TEST(EvalSh, DegreeZeroIsViewIndependent) {
    const std::vector<double> sh = {0.3, -0.7, 1.1};
    const Vec3 a = eval_sh(sh, Vec3(1, 2, 3).normalized(), 0);
    const Vec3 b = eval_sh(sh, Vec3(-3, 0.5, -1).normalized(), 0);
    EXPECT_EQ(a, b);
}

class EvalShOracle : public ::testing::TestWithParam<int> {};

TEST_P(EvalShOracle, MatchesLegendreBasisTable) {
    const int degree = GetParam();
    std::mt19937_64 rng(100 + degree);
    std::normal_distribution<double> n01;
    const int n = sh_coeff_count(degree);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> sh(3 * n);
        for (double &c : sh) {
            c = n01(rng);
        }
        const Vec3 dir = Vec3(n01(rng), n01(rng), n01(rng)).normalized();
        Vec3 expected = Vec3::Constant(0.5);
        for (int l = 0; l <= degree; ++l) {
            for (int m = -l; m <= l; ++m) {
                const int k = l * l + m + l;
                const double y = real_sh_oracle(l, m, dir);
                for (int c = 0; c < 3; ++c) {
                    expected[c] += sh[3 * k + c] * y;
                }
            }
        }
        const Vec3 got = eval_sh(sh, dir, degree);
        EXPECT_LT((got - expected).cwiseAbs().maxCoeff(), 1e-9) << "degree " << degree;
    }
}

INSTANTIATE_TEST_SUITE_P(Degrees, EvalShOracle, ::testing::Values(1, 2, 3));

TEST(EvalSh, BasisGradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n01;
    for (int trial = 0; trial < 10; ++trial) {
        const Vec3 dir = Vec3(n01(rng), n01(rng), n01(rng)).normalized();
        std::array<double, kMaxShCoeffs> v{}, vp{}, vm{};
        std::array<Vec3, kMaxShCoeffs> g{};
        sh_basis(dir, 3, v, &g);
        for (int axis = 0; axis < 3; ++axis) {
            const double h = 1e-6;
            Vec3 dp = dir, dm = dir;
            dp[axis] += h;
            dm[axis] -= h;
            sh_basis(dp, 3, vp);
            sh_basis(dm, 3, vm);
            for (int k = 0; k < 16; ++k) {
                EXPECT_NEAR(g[k][axis], (vp[k] - vm[k]) / (2 * h), 1e-7);
            }
        }
    }
}

TEST(EvalSh, CoefficientCountMismatchIsShapeError) {
    const std::vector<double> sh(9, 0.0);
    try {
        eval_sh(sh, Vec3::UnitZ(), 0);
        FAIL();
    } catch (const Error &e) {
        EXPECT_EQ(e.kind(), ErrorKind::Shape);
    }
}

TEST(ProjectGaussian, AxisPointProjectsToPrincipalPoint) {
    GaussianSplat s;
    s.mean = Vec3(0, 0, 1);
    s.scale_raw = Vec3::Constant(std::log(1e-4));
    const auto p = project_gaussian(s, axis_camera());
    ASSERT_TRUE(p.has_value());
    EXPECT_EQ(p->mean2d, Vec2(32, 24));
    EXPECT_DOUBLE_EQ(p->depth, 1.0);
}

TEST(ProjectGaussian, DoublingFocalDoublesOffset) {
    GaussianSplat s;
    s.mean = Vec3(0.1, -0.05, 2.0);
    const auto a = project_gaussian(s, axis_camera(100));
    const auto b = project_gaussian(s, axis_camera(200));
    ASSERT_TRUE(a && b);
    EXPECT_NEAR(b->mean2d.x() - 32, 2 * (a->mean2d.x() - 32), 1e-12);
}

TEST(ProjectGaussian, BehindCameraIsCulled) {
    GaussianSplat s;
    s.mean = Vec3(0, 0, -1);
    EXPECT_FALSE(project_gaussian(s, axis_camera()).has_value());
    s.mean = Vec3(0, 0, 0.005);
    EXPECT_FALSE(project_gaussian(s, axis_camera()).has_value());
}

TEST(ProjectGaussian, CovarianceMatchesNumericalJacobianPropagation) {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const CameraPose cam = CameraPose::look_at(Vec3(0.3, -0.2, -4), Vec3::Zero(), Vec3::UnitY(), 80, 90, 32, 30, 64,
                                               60, "fd");
    for (int trial = 0; trial < 30; ++trial) {
        GaussianSplat s;
        s.mean = Vec3(u(rng), u(rng), u(rng));
        s.scale_raw = Vec3(std::log(0.05 + 0.2 * std::abs(u(rng))), std::log(0.05 + 0.2 * std::abs(u(rng))),
                           std::log(0.05 + 0.2 * std::abs(u(rng))));
        s.rotation_raw = random_quaternion(rng);
        const auto proj = project_gaussian(s, cam);
        ASSERT_TRUE(proj);
        // Numerical Jacobian of world point -> pixel.
        Eigen::Matrix<double, 2, 3> j;
        const double h = 1e-6;
        for (int axis = 0; axis < 3; ++axis) {
            Vec3 p = s.mean, m = s.mean;
            p[axis] += h;
            m[axis] -= h;
            j.col(axis) = (cam.project(cam.to_camera(p)) - cam.project(cam.to_camera(m))) / (2 * h);
        }
        Mat2 expected = j * build_covariance(s.scale_raw, s.rotation_raw) * j.transpose();
        expected += kLowPassFloor * Mat2::Identity();
        const double rel = (proj->cov2d - expected).cwiseAbs().maxCoeff() / expected.cwiseAbs().maxCoeff();
        EXPECT_LT(rel, 1e-4);
        EXPECT_EQ(proj->cov2d(0, 1), proj->cov2d(1, 0));
    }
}

TEST(ProjectGaussian, DepthOrderingMatchesCameraSpaceZ) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const CameraPose cam = CameraPose::look_at(Vec3(2, 1, -3), Vec3::Zero(), Vec3::UnitY(), 50, 50, 16, 16, 32, 32,
                                               "d");
    for (int trial = 0; trial < 100; ++trial) {
        GaussianSplat a, b;
        a.mean = Vec3(u(rng), u(rng), u(rng));
        b.mean = Vec3(u(rng), u(rng), u(rng));
        const auto pa = project_gaussian(a, cam);
        const auto pb = project_gaussian(b, cam);
        ASSERT_TRUE(pa && pb);
        EXPECT_EQ(pa->depth < pb->depth, cam.to_camera(a.mean).z() < cam.to_camera(b.mean).z());
    }
}

TEST(Scene, ValidateChecksShLength) {
    Scene scene;
    scene.sh_degree = 1;
    scene.splats.resize(1);
    EXPECT_THROW(scene.validate(), Error);
    scene.splats[0].sh.assign(12, 0.0);
    EXPECT_NO_THROW(scene.validate());
}

TEST(Splat, RawParameterizationKeepsInvariants) {
    GaussianSplat s;
    s.scale_raw = Vec3(-50, 0, 50);
    s.opacity_raw = -30;
    EXPECT_TRUE((s.scale().array() > 0).all());
    EXPECT_GT(s.opacity(), 0.0);
    s.opacity_raw = 30;
    EXPECT_LT(s.opacity(), 1.0 + 1e-15);
    s.rotation_raw = Vec4(3, 4, 0, 0);
    EXPECT_NEAR(s.rotation().norm(), 1.0, 1e-15);
}

} // namespace
} // namespace gsfix
