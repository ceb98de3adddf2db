#include "gsfix/io/cameras.hpp"
#include "gsfix/io/png.hpp"
#include "gsfix/io/ply.hpp"
#include "gsfix/synthetic.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <random>

namespace gsfix {
namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("gsfix_io_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

Scene random_test_scene(int degree, std::uint64_t seed, bool float_exact) {
    std::mt19937_64 rng(seed);
    RandomSceneOptions opt;
    opt.sh_degree = degree;
    Scene s = random_scene(rng, 25, simple_camera(Vec3(0, 0, -4), 32, 30), opt);
    s.background = Vec3(0.1, 0.25, 1.0 / 3.0);
    if (float_exact) {
        auto snap = [](double &v) { v = static_cast<float>(v); };
        for (GaussianSplat &g : s.splats) {
            for (int i = 0; i < 3; ++i) {
                snap(g.mean[i]);
                snap(g.scale_raw[i]);
            }
            for (int i = 0; i < 4; ++i) {
                snap(g.rotation_raw[i]);
            }
            snap(g.opacity_raw);
            for (double &c : g.sh) {
                snap(c);
            }
        }
    }
    return s;
}

TEST(Png, RoundTripIsLossless) {
    TempDir dir;
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> u(0, 255);
    for (int channels : {1, 3, 4}) {
        Image img(7, 5, channels);
        for (double &v : img.data) {
            v = u(rng) / 255.0;
        }
        const fs::path p = dir.path / ("img" + std::to_string(channels) + ".png");
        write_png(p, img);
        EXPECT_EQ(read_png(p, channels), img);
        EXPECT_EQ(read_png(p, 0).channels, channels);
    }
}

TEST(Png, QuantizesAndClamps) {
    Image img(2, 1, 3);
    img.data = {-0.5, 0.5, 1.5, 0.1, 0.2, 0.3};
    const Image back = decode_png(encode_png(img));
    EXPECT_EQ(back, quantize8(img));
    EXPECT_EQ(back.data[0], 0.0);
    EXPECT_EQ(back.data[2], 1.0);
    EXPECT_EQ(back.data[1], 128.0 / 255.0);
}

TEST(Png, Errors) {
    EXPECT_THROW(decode_png("not a png"), Error);
    EXPECT_THROW(read_png("/nonexistent/x.png"), Error);
    EXPECT_THROW(encode_png(Image(2, 2, 5)), Error);
}

TEST(ScenePly, DoublePrecisionRoundTripIsBitwise) {
    for (int degree = 0; degree <= 3; ++degree) {
        const Scene s = random_test_scene(degree, degree, false);
        const Scene back = decode_scene_ply(encode_scene_ply(s, PlyPrecision::Float64));
        EXPECT_EQ(back, s);
    }
}

TEST(ScenePly, FloatRoundTripIsBitwise) {
    TempDir dir;
    for (int degree = 0; degree <= 3; ++degree) {
        const Scene s = random_test_scene(degree, 10 + degree, true);
        const fs::path p = dir.path / "scene.ply";
        save_scene_ply(p, s);
        const Scene back = load_scene_ply(p);
        EXPECT_EQ(back.sh_degree, degree);
        EXPECT_EQ(back, s);
        const std::string first = read_file(p);
        save_scene_ply(p, back);
        EXPECT_EQ(read_file(p), first);
    }
}

TEST(ScenePly, LayoutMatchesConvention) {
    const Scene s = random_test_scene(1, 3, true);
    const std::string bytes = encode_scene_ply(s);
    const std::string header = bytes.substr(0, bytes.find("end_header"));
    EXPECT_NE(header.find("property float f_rest_8\n"), std::string::npos);
    EXPECT_EQ(header.find("f_rest_9"), std::string::npos);
    // 3 + 3 + 9 + 1 + 3 + 4 floats per splat.
    EXPECT_EQ(bytes.size() - bytes.find("end_header\n") - 11, s.size() * 23 * 4);
    // f_rest is channel-major: f_rest_1 is the red channel of the second degree-1 coefficient.
    const char *body = bytes.data() + bytes.find("end_header\n") + 11;
    float v;
    std::memcpy(&v, body + (6 + 1) * 4, 4);
    EXPECT_EQ(v, static_cast<float>(s.splats[0].sh[3 * 2 + 0]));
    std::memcpy(&v, body + (6 + 3) * 4, 4);
    EXPECT_EQ(v, static_cast<float>(s.splats[0].sh[3 * 1 + 1]));
}

TEST(ScenePly, ToleratesExtraPropertiesAndElements) {
    std::string bytes = "ply\r\nformat binary_little_endian 1.0\r\n";
    bytes = "ply\nformat binary_little_endian 1.0\ncomment made elsewhere\nelement vertex 1\n"
            "property float x\nproperty float y\nproperty float z\nproperty float nx\nproperty float ny\n"
            "property float nz\nproperty float f_dc_0\nproperty float f_dc_1\nproperty float f_dc_2\n"
            "property float opacity\nproperty float scale_0\nproperty float scale_1\nproperty float scale_2\n"
            "property float rot_0\nproperty float rot_1\nproperty float rot_2\nproperty float rot_3\n"
            "element extra 2\nproperty uchar flag\nend_header\n";
    const float vals[17] = {1, 2, 3, 0, 0, 1, 0.5f, 0.25f, 0.125f, -1, -2, -3, -4, 1, 0, 0, 0};
    bytes.append(reinterpret_cast<const char *>(vals), sizeof vals);
    bytes += "\x01\x02";
    const Scene s = decode_scene_ply(bytes);
    ASSERT_EQ(s.size(), 1u);
    EXPECT_EQ(s.sh_degree, 0);
    EXPECT_EQ(s.splats[0].mean, Vec3(1, 2, 3));
    EXPECT_EQ(s.splats[0].sh[1], 0.25);
    EXPECT_EQ(s.splats[0].opacity_raw, -1.0);
    EXPECT_EQ(s.splats[0].scale_raw, Vec3(-2, -3, -4));
}

TEST(ScenePly, Errors) {
    const std::string good = encode_scene_ply(random_test_scene(0, 1, true));
    EXPECT_THROW(decode_scene_ply(good.substr(0, good.size() - 3)), Error);
    std::string be = good;
    be.replace(be.find("binary_little_endian"), 20, "binary_big_endian");
    EXPECT_THROW(decode_scene_ply(be), Error);
    std::string missing = good;
    missing.replace(missing.find("property float opacity"), 22, "property float opacitx");
    EXPECT_THROW(decode_scene_ply(missing), Error);
    std::string odd = good;
    odd.replace(odd.find("property float f_dc_2\n"), 22, "property float f_dc_2\nproperty float f_rest_0\n");
    EXPECT_THROW(decode_scene_ply(odd), Error);
    EXPECT_THROW(decode_scene_ply("garbage"), Error);
}

TEST(PointsPly, RoundTrip) {
    PointCloud c;
    c.positions = {Vec3(1, 2, 3), Vec3(-0.5, 0.25, 8)};
    c.colors = {Vec3(1, 0, 128.0 / 255.0), Vec3(0.2, 0.4, 0.6)};
    const PointCloud back = decode_points_ply(encode_points_ply(c));
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back.positions[1], c.positions[1]);
    EXPECT_EQ(back.colors[0], c.colors[0]);
    EXPECT_NEAR(back.colors[1][1], 0.4, 0.5 / 255);
}

TEST(Cameras, RoundTripIsBitwise) {
    TempDir dir;
    std::vector<CameraRecord> cams;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-3, 3);
    for (int i = 0; i < 6; ++i) {
        CameraPose p = simple_camera(Vec3(u(rng), u(rng), -4 + u(rng) * 0.1), 40 + i, 35.123456789 + i,
                                     "view_" + std::to_string(i));
        p.cx = 20.1 / 3.0;
        cams.push_back({p, i % 2 ? std::optional<std::string>("img" + std::to_string(i) + ".png") : std::nullopt});
    }
    const fs::path p = dir.path / "cams.json";
    save_cameras(p, cams);
    const auto back = load_cameras(p);
    ASSERT_EQ(back.size(), cams.size());
    for (std::size_t i = 0; i < cams.size(); ++i) {
        const CameraPose &a = cams[i].pose, &b = back[i].pose;
        EXPECT_EQ(a.rotation.coeffs(), b.rotation.coeffs());
        EXPECT_EQ(a.translation, b.translation);
        EXPECT_EQ(a.fx, b.fx);
        EXPECT_EQ(a.cx, b.cx);
        EXPECT_EQ(a.width, b.width);
        EXPECT_EQ(a.pose_id, b.pose_id);
        EXPECT_EQ(cams[i].image, back[i].image);
    }
    const std::string first = read_file(p);
    save_cameras(p, back);
    EXPECT_EQ(read_file(p), first);
    EXPECT_EQ(image_path(back[1], p), dir.path / "img1.png");
}

TEST(Cameras, NormalizesAndValidates) {
    json j = json::array();
    j.push_back({{"pose_id", "a"}, {"quaternion", {2, 0, 0, 0}}, {"translation", {0, 0, 1}}, {"fx", 10}, {"fy", 10},
                 {"cx", 5}, {"cy", 5}, {"width", 10}, {"height", 10}});
    const auto cams = cameras_from_json(j);
    EXPECT_EQ(cams[0].pose.rotation.w(), 1.0);
    j.push_back(j[0]);
    EXPECT_THROW(cameras_from_json(j), Error);
    json bad = json::array({{{"pose_id", "b"}, {"quaternion", {1, 0, 0}}}});
    EXPECT_THROW(cameras_from_json(bad), Error);
    EXPECT_THROW(cameras_from_json(json::object()), Error);
}

TEST(Colmap, ParsesPoints) {
    const std::string text = "# 3D point list with one line of data per point:\n"
                             "#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)\n"
                             "\n"
                             "1 0.5 -1.25 3 255 0 51 0.7 1 2 3 4\n"
                             "7 1e-3 2 -3 10 20 30 1.5\n";
    const PointCloud c = parse_colmap_points(text);
    ASSERT_EQ(c.size(), 2u);
    EXPECT_EQ(c.positions[0], Vec3(0.5, -1.25, 3));
    EXPECT_EQ(c.colors[0], Vec3(1.0, 0.0, 51 / 255.0));
    EXPECT_EQ(c.positions[1].x(), 1e-3);
    EXPECT_THROW(parse_colmap_points("1 2 3\n"), Error);
    EXPECT_THROW(parse_colmap_points("1 0 0 0 300 0 0 0\n"), Error);
}

TEST(AtomicWrite, LeavesNoTempFiles) {
    TempDir dir;
    const fs::path p = dir.path / "sub" / "file.bin";
    atomic_write(p, "first");
    atomic_write(p, "second");
    EXPECT_EQ(read_file(p), "second");
    int entries = 0;
    for ([[maybe_unused]] const auto &e : fs::directory_iterator(p.parent_path())) {
        ++entries;
    }
    EXPECT_EQ(entries, 1);
}

} // namespace
} // namespace gsfix
