#include "gsfix/io/cameras.hpp"
#include "gsfix/io/ply.hpp"

#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <sys/wait.h>
#include <unistd.h>

using namespace gsfix;

namespace {

struct CliRun {
    int status = -1;
    std::string out;
    std::string err;
};

const fs::path &workdir() {
    static const fs::path dir = [] {
        const fs::path d = fs::temp_directory_path() / ("gsfix_cli_" + std::to_string(::getpid()));
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

CliRun cli(const std::string &args) {
    const fs::path err = workdir() / "stderr.txt";
    const std::string cmd = "cd '" + workdir().string() + "' && '" GSFIX_CLI "' " + args + " 2>'" + err.string() + "'";
    CliRun r;
    FILE *pipe = ::popen(cmd.c_str(), "r");
    std::array<char, 4096> buf{};
    std::size_t n;
    while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) {
        r.out.append(buf.data(), n);
    }
    const int status = ::pclose(pipe);
    r.status = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = read_file(err);
    return r;
}

class Cli : public ::testing::Test {
  protected:
    static void SetUpTestSuite() {
        const CliRun r = cli("synth --out data --splats 60 --size 24 --heldout 2");
        ASSERT_EQ(r.status, 0) << r.err;
    }
    static void TearDownTestSuite() { fs::remove_all(workdir()); }
};

void expect_json_error(const CliRun &r) {
    EXPECT_NE(r.status, 0);
    const nlohmann::json j = nlohmann::json::parse(r.err);
    EXPECT_TRUE(j.contains("error"));
    EXPECT_TRUE(j.contains("message"));
}

} // namespace

TEST_F(Cli, RefGuidedTwoFramesListsExactlyTheReferences) {
    const CliRun r = cli("render --cameras data/train/cameras.json --refs train_0,train_2 --traj refguided --frames 2 --out two");
    ASSERT_EQ(r.status, 0) << r.err;
    const auto recs = load_cameras(workdir() / "two" / "cameras.json");
    const auto refs = load_cameras(workdir() / "data" / "train" / "cameras.json");
    ASSERT_EQ(recs.size(), 2u);
    EXPECT_EQ(recs[0].pose.pose_id, "train_0");
    EXPECT_EQ(recs[1].pose.pose_id, "train_2");
    EXPECT_EQ(recs[0].pose.rotation.coeffs(), refs[0].pose.rotation.coeffs());
    EXPECT_EQ(recs[1].pose.translation, refs[2].pose.translation);
}

TEST_F(Cli, RenderWritesFramesAndSegments) {
    const CliRun fit = cli("fit --cameras data/train/cameras.json --points data/points.ply --iters 5 --out r.ply");
    ASSERT_EQ(fit.status, 0) << fit.err;
    const CliRun r = cli("render --scene r.ply --cameras data/train/cameras.json --traj refguided --frames 9 --split 2,5,2 --out traj");
    ASSERT_EQ(r.status, 0) << r.err;
    const nlohmann::json m = nlohmann::json::parse(read_file(workdir() / "traj" / "cameras.json"));
    ASSERT_EQ(m.size(), 9u);
    EXPECT_EQ(m[0]["segment"], "reference");
    EXPECT_EQ(m[4]["segment"], "orbit");
    for (const auto &e : m) {
        EXPECT_TRUE(fs::exists(workdir() / "traj" / e["image"].get<std::string>()));
    }
    const CliRun ell = cli("render --cameras data/train/cameras.json --traj ellipse --frames 12 --out ell");
    ASSERT_EQ(ell.status, 0) << ell.err;
    EXPECT_EQ(load_cameras(workdir() / "ell" / "cameras.json").size(), 12u);
}

TEST_F(Cli, FixWithZeroRoundsMatchesFitBytes) {
    const CliRun fit = cli("fit --cameras data/train/cameras.json --points data/points.ply --iters 20 --out fit.ply --seed 4");
    ASSERT_EQ(fit.status, 0) << fit.err;
    atomic_write(workdir() / "job0.json",
                 R"({"cameras": "data/train/cameras.json", "points": "data/points.ply", "rounds": 0,
                     "baseline": {"iterations": 20}, "out": "fix0"})");
    const CliRun fix = cli("--seed 4 fix --job job0.json");
    ASSERT_EQ(fix.status, 0) << fix.err;
    EXPECT_EQ(read_file(workdir() / "fit.ply"), read_file(workdir() / "fix0" / "scene.ply"));
}

TEST_F(Cli, FixRunsRoundsWithOracleScene) {
    atomic_write(workdir() / "job1.json",
                 R"({"cameras": "data/train/cameras.json", "points": "data/points.ply",
                     "heldout": "data/heldout/cameras.json", "rounds": 2, "restorer": "blend:0.5:data/truth.ply",
                     "trajectory": {"kind": "refguided", "frames": 6, "split": [1, 4, 1]},
                     "baseline": {"iterations": 10}, "round": {"iterations": 5, "anneal_span": 5}, "out": "fix1"})");
    const CliRun fix = cli("fix --job job1.json");
    ASSERT_EQ(fix.status, 0) << fix.err;
    const nlohmann::json m = nlohmann::json::parse(read_file(workdir() / "fix1" / "metrics.json"));
    EXPECT_EQ(m["rounds"].size(), 2u);
    EXPECT_TRUE(fs::exists(workdir() / "fix1" / "round_1.ply"));
    EXPECT_TRUE(fs::exists(workdir() / "fix1" / "round_2.ply"));
    const nlohmann::json audit = nlohmann::json::parse(read_file(workdir() / "fix1" / "audit.json"));
    int restores = 0;
    for (const auto &e : audit) {
        restores += e["event"] == "restore";
    }
    EXPECT_EQ(restores, 4);
}

TEST_F(Cli, FixFailureSurfacesAsJsonError) {
    atomic_write(workdir() / "job2.json",
                 R"({"cameras": "data/train/cameras.json", "points": "data/points.ply", "rounds": 1,
                     "restorer": "oracle:missing_dir", "trajectory": {"frames": 4},
                     "baseline": {"iterations": 3}, "round": {"iterations": 3}, "out": "fix2"})");
    const CliRun fix = cli("fix --job job2.json");
    expect_json_error(fix);
    EXPECT_EQ(nlohmann::json::parse(fix.err)["error"], "restorer");
    EXPECT_EQ(read_file(workdir() / "fix2" / "scene.ply"), read_file(workdir() / "fix2" / "baseline.ply"));
}

TEST_F(Cli, SameSeedSameBytes) {
    ASSERT_EQ(cli("fit --cameras data/train/cameras.json --points data/points.ply --iters 15 --densify-interval 5 "
                  "--out a.ply --seed 9")
                  .status,
              0);
    ASSERT_EQ(cli("--seed 9 fit --cameras data/train/cameras.json --points data/points.ply --iters 15 "
                  "--densify-interval 5 --out b.ply")
                  .status,
              0);
    EXPECT_EQ(read_file(workdir() / "a.ply"), read_file(workdir() / "b.ply"));
}

TEST_F(Cli, GradcheckBelowTolerance) {
    const CliRun r = cli("gradcheck --splats 50 --res 32");
    ASSERT_EQ(r.status, 0) << r.err;
    const auto at = r.out.find("max relative error: ");
    ASSERT_NE(at, std::string::npos) << r.out;
    EXPECT_LT(std::stod(r.out.substr(at + 20)), 1e-3);
}

TEST_F(Cli, BenchBuildEvalReport) {
    ASSERT_EQ(cli("synth --out dense --splats 40 --size 24 --train 6 --heldout 0").status, 0);
    const CliRun b = cli("bench build --cameras dense/train/cameras.json --points dense/points.ply --k 3 --iters 10 "
                      "--scene-id s1 --out bench");
    ASSERT_EQ(b.status, 0) << b.err;
    EXPECT_EQ(nlohmann::json::parse(b.out)["train_ids"],
              nlohmann::json({"train_0", "train_2", "train_5"}));
    atomic_write(workdir() / "lpips.json", R"({"lpips": {"train_0": 0.1, "train_1": 0.2, "train_2": 0.3,
                                                         "train_3": 0.4, "train_4": 0.5, "train_5": 0.6}})");
    const CliRun e = cli("bench eval --manifest bench/scene.json --external lpips.json --out r1.json");
    ASSERT_EQ(e.status, 0) << e.err;
    const CliRun gt = cli("bench eval --manifest bench/scene.json --candidates bench/gt --out r2.json");
    ASSERT_EQ(gt.status, 0) << gt.err;
    EXPECT_EQ(nlohmann::json::parse(gt.out)["per_scene"]["psnr"], 100.0);
    const CliRun rep = cli("bench report --reports r1.json --csv table.csv --text table.txt");
    ASSERT_EQ(rep.status, 0) << rep.err;
    EXPECT_EQ(read_file(workdir() / "table.csv").rfind("scene,psnr,ssim,lpips\ns1,", 0), 0u);
    EXPECT_NE(rep.out.find("average"), std::string::npos);
    expect_json_error(cli("bench report --reports r1.json r2.json"));
}

TEST_F(Cli, ServeOnceAnswersPendingJobs) {
    const CliRun r = cli("serve --root jobs --once");
    ASSERT_EQ(r.status, 0) << r.err;
    EXPECT_EQ(nlohmann::json::parse(r.out)["served"], 0);
}

TEST_F(Cli, ErrorsAreMachineParsable) {
    expect_json_error(cli("fit --cameras nope.json --points nope.ply --out x.ply"));
    expect_json_error(cli("render --cameras data/train/cameras.json --traj refguided --split 1,2 --out z"));
    expect_json_error(cli("render --cameras data/train/cameras.json --traj spiral --out z"));
    expect_json_error(cli("gradcheck --splats 0"));
    expect_json_error(cli(""));
    const CliRun usage = cli("fit --cameras a.json");
    EXPECT_EQ(usage.status, 2);
}
