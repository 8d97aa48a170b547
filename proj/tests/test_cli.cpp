#include <gtest/gtest.h>
#include <sys/wait.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "helpers.hpp"

using namespace rvolest;
namespace fs = std::filesystem;

namespace {

const fs::path kScratch = fs::temp_directory_path() / "rvolest_cli_test";

int run(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + " " + RVOLEST_CLI_PATH + " " + args + " 2>/dev/null";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

long lines(const fs::path& p) {
    const std::string s = slurp(p);
    return std::count(s.begin(), s.end(), '\n');
}

fs::path dir(const std::string& name) {
    const fs::path d = kScratch / name;
    fs::remove_all(d);
    return d;
}

class Cli : public ::testing::Test {
protected:
    static void SetUpTestSuite() { fs::create_directories(kScratch); }
};

} // namespace

TEST_F(Cli, SimulateWritesOneRowPerObservation) {
    const fs::path out = dir("sim");
    ASSERT_EQ(run("simulate --preset sec6-1-spike --seed 3 --out " + out.string()), 0);
    EXPECT_EQ(lines(out / "path.csv"), 5002);
    const std::string truth = slurp(out / "truth.csv");
    EXPECT_EQ(truth.find("jump,"), std::string::npos);
    EXPECT_NE(truth.find("spike,"), std::string::npos);
    EXPECT_TRUE(fs::exists(out / "scenario.json"));
}

TEST_F(Cli, SimulateIsByteReproducible) {
    const fs::path a = dir("sim_a"), b = dir("sim_b");
    ASSERT_EQ(run("simulate --preset sec6-2-jump-normal --n 1000 --seed 8 --out " + a.string()), 0);
    ASSERT_EQ(run("simulate --preset sec6-2-jump-normal --n 1000 --seed 8 --out " + b.string()), 0);
    for (const char* f : {"path.csv", "truth.csv", "scenario.json"}) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    EXPECT_NE(slurp(a / "truth.csv").find("jump,"), std::string::npos);
}

TEST_F(Cli, SimulateFromConfigFile) {
    const fs::path out = dir("sim_cfg");
    fs::create_directories(kScratch);
    const fs::path cfg = kScratch / "scenario.json";
    std::ofstream(cfg) << R"({"preset": "sec6-1-clean", "n": 300, "seed": 4})";
    ASSERT_EQ(run("simulate --config " + cfg.string() + " --out " + out.string()), 0);
    EXPECT_EQ(lines(out / "path.csv"), 302);
    EXPECT_EQ(lines(out / "truth.csv"), 1);
}

TEST_F(Cli, MalformedCsvExitsWithInputErrorAndNoOutput) {
    const fs::path out = dir("bad");
    const fs::path csv = kScratch / "bad.csv";
    std::ofstream(csv) << "j,t,X_1,X_2,X_3,Y_1\n0,0,1,0,1,0\n1,0.5,1,0,1,zzz\n";
    EXPECT_EQ(run("estimate --path " + csv.string() + " --out " + out.string()), 2);
    EXPECT_FALSE(fs::exists(out / "estimate.json"));
    EXPECT_EQ(run("estimate --path " + (kScratch / "missing.csv").string() + " --out " + out.string()), 2);
    EXPECT_EQ(run("simulate --preset nope --out " + out.string()), 2);
    EXPECT_EQ(run("estimate --path " + csv.string() + " --variant dp --lambda -1 --out " + out.string()), 2);
    EXPECT_EQ(run("frobnicate"), 2);
    EXPECT_FALSE(fs::exists(out));
}

TEST_F(Cli, EstimateJsonRoundTripsTheObjective) {
    const fs::path sim = dir("est_sim"), out = dir("est");
    ASSERT_EQ(run("simulate --preset sec6-1-clean --seed 5 --out " + sim.string()), 0);
    ASSERT_EQ(run("estimate --path " + (sim / "path.csv").string() + " --variant dp --lambda 0.5 --out " +
                  out.string()),
              0);
    const auto j = nlohmann::json::parse(slurp(out / "estimate.json"));
    const auto th = j["theta_hat"].get<std::vector<double>>();
    const Vector theta = Eigen::Map<const Vector>(th.data(), static_cast<Eigen::Index>(th.size()));
    const ObservationPath path = read_path_csv((sim / "path.csv").string());
    const QuasiLikelihood ql(path, make_builtin(j["model"].get<std::string>()), RobustConfig::density_power(0.5));
    EXPECT_NEAR(ql.value(theta), j["objective"].get<double>(), 1e-10);
    EXPECT_TRUE(j["converged"].get<bool>());
    EXPECT_FALSE(j["on_boundary"].get<bool>());
    const double truth[] = {-2.0, 3.0, 0.0};
    for (int i = 0; i < 3; ++i) {
        const auto ci = j["ci"][i].get<std::vector<double>>();
        const double se = (ci[1] - ci[0]) / (2.0 * 1.959963984540054);
        EXPECT_NEAR(0.5 * (ci[0] + ci[1]), th[i], 1e-12);
        EXPECT_LT(std::abs(th[i] - truth[i]), 3.0 * se) << i;
    }
    EXPECT_GT(j["taper"]["value"].get<double>(), 0.0);
    for (const char* key : {"gamma_hat", "sigma_hat", "fisher_hat", "avar"}) EXPECT_EQ(j[key].size(), 3u) << key;
}

TEST_F(Cli, GqlfOnJumpDiffusionHitsTheBound) {
    const fs::path sim = dir("jd_sim"), out = dir("jd");
    ASSERT_EQ(run("simulate --preset sec6-5-jumpdiff --seed 2 --out " + sim.string()), 0);
    ASSERT_EQ(run("estimate --path " + (sim / "path.csv").string() +
                  " --model rational-diffusion --variant gqlf --out " + out.string()),
              0);
    const auto j = nlohmann::json::parse(slurp(out / "estimate.json"));
    EXPECT_TRUE(j["converged"].get<bool>());
    EXPECT_TRUE(j["on_boundary"].get<bool>());
    EXPECT_GT(j["theta_hat"][0].get<double>(), 8.0);
}

TEST_F(Cli, MonteCarloSmokeRunIsThreadIndependent) {
    const fs::path a = dir("mc1"), b = dir("mc2");
    const std::string common = "montecarlo --preset sec6-1-spike --n 1000 --reps 10 --seed 6 ";
    ASSERT_EQ(run(common + "--threads 1 --out " + a.string()), 0);
    ASSERT_EQ(run(common + "--threads 3 --out " + b.string()), 0);
    EXPECT_EQ(lines(a / "raw_theta.csv"), 1 + 10 * 3);
    EXPECT_EQ(lines(a / "raw_u.csv"), 1 + 10 * 3);
    EXPECT_EQ(lines(a / "summary.csv"), 1 + 3 * 3);
    EXPECT_EQ(slurp(a / "raw_theta.csv"), slurp(b / "raw_theta.csv"));
    EXPECT_EQ(slurp(a / "raw_u.csv"), slurp(b / "raw_u.csv"));
}

TEST_F(Cli, ThreadsFallBackToEnvironment) {
    const fs::path a = dir("env1"), b = dir("env2");
    const std::string common = "montecarlo --preset sec6-1-clean --n 500 --reps 4 --variant holder --lambda 0.3 ";
    ASSERT_EQ(run(common + "--out " + a.string()), 0);
    ASSERT_EQ(run(common + "--out " + b.string(), "RVOLEST_THREADS=2"), 0);
    EXPECT_EQ(lines(a / "raw_theta.csv"), 5);
    EXPECT_EQ(slurp(a / "raw_theta.csv"), slurp(b / "raw_theta.csv"));
}

TEST_F(Cli, SweepLambdaRowsPerLambdaAndCoordinate) {
    const fs::path out = dir("sweep");
    ASSERT_EQ(run("sweep-lambda --preset sec6-1-clean --n 500 --reps 2 --out " + out.string()), 0);
    EXPECT_EQ(lines(out / "lambda_sweep.csv"), 1 + 10 * 3);
}

TEST_F(Cli, ClusterFlagsSpikes) {
    const fs::path sim = dir("cl_sim"), out = dir("cl");
    ASSERT_EQ(run("simulate --preset sec6-1-spike --seed 4 --out " + sim.string()), 0);
    ASSERT_EQ(run("cluster --path " + (sim / "path.csv").string() + " --k 4 --out " + out.string()), 0);
    std::istringstream in(slurp(out / "clusters.csv"));
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "j,t_j,eps_hat,label,in_D");
    int flagged = 0, rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        flagged += line.back() == '1';
    }
    EXPECT_EQ(rows, 5000);
    EXPECT_GE(flagged, 1);
    EXPECT_EQ(lines(out / "k_sweep.csv"), 1 + 7);
}
