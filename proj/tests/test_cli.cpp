#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "trinet/distribution.hpp"
#include "trinet/inequality.hpp"
#include "trinet/quantum.hpp"
#include "trinet/stats.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace trinet;

namespace {

const std::string kSmallFit = " --batch 300 --iterations 100 --restarts 2 --eval-samples 5000 --widths 8,8 --threads 1";

class Cli : public ::testing::Test {
protected:
    fs::path dir;

    void SetUp() override {
        dir = fs::temp_directory_path() /
              ("trinet_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }

    std::string path(const std::string& name) const { return (dir / name).string(); }

    int run(const std::string& args, const std::string& env = "") const {
        const std::string cmd = env + " " + TRINET_CLI + " " + args + " > " + path("stdout.txt") + " 2> " + path("stderr.txt");
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    std::string slurp(const std::string& name) const {
        std::ifstream in(path(name));
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    json read_json(const std::string& name) const { return json::parse(slurp(name)); }
};

}  // namespace

TEST_F(Cli, SimulateElegant) {
    ASSERT_EQ(run("simulate --out " + path("p.json")), 0);
    const auto p = distribution_from_json(read_json("p.json"));
    EXPECT_NEAR(p(0, 0, 0), 25.0 / 256.0, 1e-12);
    const auto m = read_json("p.json.manifest.json");
    EXPECT_EQ(m["command"], "simulate");
    EXPECT_TRUE(m.contains("wall_clock_seconds"));
    EXPECT_TRUE(m.contains("version"));
    EXPECT_EQ(m["options"]["povm"], "ejm");
    EXPECT_EQ(slurp("p.json").find("wall_clock"), std::string::npos);
}

TEST_F(Cli, SimulateTrivialPovmAndRotation) {
    ASSERT_EQ(run("simulate --povm id --out " + path("u.csv")), 0);
    std::ifstream in(path("u.csv"));
    EXPECT_LT(max_abs_difference(read_distribution_csv(in), TriangleDistribution::uniform()), 1e-15);

    ASSERT_EQ(run("simulate --rotate-tetrahedron 30,40,10 --out " + path("r.json")), 0);
    EXPECT_LT(max_abs_difference(distribution_from_json(read_json("r.json")), elegant_distribution()), 1e-10);
}

TEST_F(Cli, SimulateCustomStateIsDigested) {
    std::ofstream(path("state.json")) << to_json(QubitPairState::maximally_mixed()).dump();
    ASSERT_EQ(run("simulate --state " + path("state.json") + " --out " + path("p.json")), 0);
    EXPECT_LT(max_abs_difference(distribution_from_json(read_json("p.json")), TriangleDistribution::uniform()), 1e-12);
    const auto m = read_json("p.json.manifest.json");
    EXPECT_EQ(m["inputs"][path("state.json")]["sha256"].get<std::string>().size(), 64u);
}

TEST_F(Cli, UsageErrors) {
    EXPECT_EQ(run("simulate --bogus 1"), 2);
    EXPECT_EQ(run("frobnicate"), 2);
    EXPECT_EQ(run("simulate --rotate-tetrahedron 1,2 --out " + path("x.json")), 2);
    EXPECT_EQ(run("inequality --target " + path("missing.json")), 2);
    EXPECT_EQ(run("fit --target elegant --lr -1 --out " + path("f.json")), 2);
    EXPECT_NE(slurp("stderr.txt").find("learning rate"), std::string::npos);
    EXPECT_EQ(run("--help"), 0);
    EXPECT_EQ(run("fit --help"), 0);
}

TEST_F(Cli, InequalityVerdictsAndExitCodes) {
    EXPECT_EQ(run("inequality --target elegant --w 0.0922 --out " + path("e.json")), 1);
    const auto e = read_json("e.json");
    EXPECT_NEAR(e["margin"].get<double>(), 0.009615625, 1e-12);
    EXPECT_EQ(e["verdict"], "violated");
    EXPECT_EQ(e["bound"].get<double>(), 0.0264);

    ASSERT_EQ(run("simulate --povm id --out " + path("u.json")), 0);
    EXPECT_EQ(run("inequality --target " + path("u.json") + " --out " + path("u_report.json")), 0);
    EXPECT_EQ(read_json("u_report.json")["verdict"], "satisfied");

    EXPECT_EQ(run("inequality --target elegant --w 0.5"), 2);  // no bound for this w
    EXPECT_EQ(run("inequality --target elegant --w 0.5 --bound 0.5"), 0);
}

TEST_F(Cli, InequalitySweep) {
    EXPECT_EQ(run("inequality --target elegant --sweep --out " + path("sweep.csv")), 1);
    std::istringstream in(slurp("sweep.csv"));
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "w,s111,delta,f_value,bound,margin,ratio_vs_elegant");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_GT(rows, 1);
    EXPECT_NE(slurp("stdout.txt").find("peak ratio"), std::string::npos);
}

TEST_F(Cli, SynthIsReproducibleFromManifest) {
    ASSERT_EQ(run("synth --target elegant --events 3343 --nu 0.95 --seed 11 --out " + path("c.csv")), 0);
    std::ifstream in(path("c.csv"));
    const auto t = read_counts_csv(in);
    EXPECT_EQ(t.total(), 3343u);
    const auto first = slurp("c.csv");
    fs::remove(path("c.csv"));
    ASSERT_EQ(run("synth --config " + path("c.csv.manifest.json")), 0);
    EXPECT_EQ(slurp("c.csv"), first);
}

TEST_F(Cli, ResampleStatistic) {
    ASSERT_EQ(run("synth --target elegant --events 3343 --seed 3 --out " + path("c.json")), 0);
    ASSERT_EQ(run("resample --counts " + path("c.json") + " --statistic s111 --replicates 50 --seed 4 --out " +
                  path("r.json")),
              0);
    const auto r = read_json("r.json");
    EXPECT_EQ(r["values"].size(), 50u);
    EXPECT_GT(r["std"].get<double>(), 0.0);
    EXPECT_EQ(read_json("r.json.manifest.json")["seeds"]["replicates"].size(), 50u);
    EXPECT_EQ(run("resample --counts " + path("c.json") + " --statistic median --out " + path("x.json")), 2);
}

TEST_F(Cli, FitConfigPrecedenceAndRerun) {
    std::ofstream(path("cfg.json")) << R"({"restarts": 3, "iterations": 60, "batch": 200, "eval-samples": 4000,
                                        "widths": [8, 8], "threads": 1, "seed": 21})";
    ASSERT_EQ(run("fit --config " + path("cfg.json") + " --restarts 2 --out " + path("f.json")), 0);
    const auto f = read_json("f.json");
    EXPECT_EQ(f["restarts"].size(), 2u);      // flag beats config
    EXPECT_EQ(f["config"]["iterations"], 60);  // config beats default
    EXPECT_EQ(f["config"]["seed"], 21);
    const auto first = slurp("f.json");
    ASSERT_EQ(run("fit --config " + path("f.json.manifest.json")), 0);
    EXPECT_EQ(slurp("f.json"), first);
}

TEST_F(Cli, FitCheckpointAndThreadsEnv) {
    ASSERT_EQ(run("fit --target uniform" + kSmallFit + " --checkpoint " + path("m.json") + " --out " + path("f.json"),
                  "TRINET_THREADS=2"),
              0);
    const auto m = read_json("m.json");
    EXPECT_EQ(m["format"], "trinet-lhv-model");
    EXPECT_TRUE(m.contains("seed"));
    EXPECT_EQ(m["objective"]["kind"], "distance");
}

TEST_F(Cli, MaximizeTriggersAlarmAboveBound) {
    EXPECT_EQ(run("fit --maximize-w 0.0922 --bound -1" + kSmallFit + " --out " + path("f.json")), 4);
    EXPECT_NE(slurp("stderr.txt").find("ALARM"), std::string::npos);
    EXPECT_TRUE(read_json("f.json")["bound_check"]["alarm"].get<bool>());
    EXPECT_EQ(run("fit --maximize-w 0.0922 --bound 1" + kSmallFit + " --out " + path("g.json")), 0);
}

TEST_F(Cli, VisibilityCurveAndFit) {
    ASSERT_EQ(run("visibility --target elegant --nus 0.9,0.95,1.0" + kSmallFit + " --out " + path("v.csv")), 0);
    std::istringstream in(slurp("v.csv"));
    std::string line;
    int rows = -1;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, 3);
    const auto fit = read_json("v.csv.fit.json");
    EXPECT_TRUE(fit.contains("x_intercept") || fit.contains("error"));
    EXPECT_EQ(read_json("v.csv.manifest.json")["seeds"]["points"].size(), 3u);
}

TEST_F(Cli, BoundSearchWritesTable) {
    ASSERT_EQ(run("inequality --search --grid 0.16,0.0922" + kSmallFit + " --out " + path("b.csv")), 0);
    std::ifstream in(path("b.csv"));
    const auto table = read_bound_table(in);
    ASSERT_EQ(table.size(), 2u);
    EXPECT_EQ(table[0].provenance, "published");
    EXPECT_EQ(table[1].provenance, "lhv-search");
    EXPECT_TRUE(table[1].seed.has_value());
}
