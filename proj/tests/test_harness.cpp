#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "dcc/config.hpp"
#include "dcc/errors.hpp"
#include "dcc/harness.hpp"
#include "dcc/stats.hpp"

using namespace dcc;
namespace fs = std::filesystem;

TEST(NormalizeRewards, Examples) {
    const std::vector<double> raw{4.0, 2.0, 8.0};
    EXPECT_EQ(normalize_rewards(raw, 4.0), (std::vector<double>{1.0, 0.5, 2.0}));
    const std::vector<double> flat(4, 3.5);
    EXPECT_EQ(normalize_rewards(flat, 3.5), std::vector<double>(4, 1.0));
    EXPECT_THROW(normalize_rewards(raw, 0.0), DomainError);
}

TEST(SampleInstances, ReproducibleAndValid) {
    const SampleSets sets;
    const auto a = sample_instances(sets, 20, 7);
    const auto b = sample_instances(sets, 20, 7);
    ASSERT_EQ(a.size(), 20u);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(device_model_to_json(a[i]), device_model_to_json(b[i]));
        EXPECT_EQ(a[i].cost.min_value(), 1);
        EXPECT_EQ(a[i].aoi_cap, 15);
        EXPECT_EQ(a[i].battery_cap, 15);
        EXPECT_LE(a[i].harvest.min_value(), a[i].harvest.max_value());
        EXPECT_TRUE(check_crowd_incentive(a[i]));
    }
    EXPECT_NE(device_model_to_json(a[0]), device_model_to_json(sample_instances(sets, 1, 8)[0]));
}

TEST(SampleInstances, GridHasValidCells) {
    const SampleSets sets;
    int valid = 0;
    for (int hmin : sets.min_H)
        for (int hmax : sets.max_H)
            for (int cmax : sets.max_C) {
                if (hmax < hmin) continue;
                DeviceModel m;
                m.aoi_cap = sets.M;
                m.battery_cap = sets.B;
                m.harvest = MarkovChain::birth_death(hmin, hmax);
                m.cost = MarkovChain::birth_death(1, cmax);
                valid += check_crowd_incentive(m);
            }
    EXPECT_GT(valid, 0);
}

TEST(Config, JsonRoundTrip) {
    ExperimentConfig c;
    c.env.n_agents = 2;
    c.env.alpha = 2.5;
    c.solver.steps = 1234;
    c.slow.theta0 = {1.0, 2.0};
    c.iql.decay_every = 99;
    const nlohmann::json j = to_json(c);
    EXPECT_EQ(to_json(config_from_json(j)), j);
    EXPECT_EQ(config_hash(config_from_json(j)), config_hash(c));
    ExperimentConfig d = c;
    d.solver.steps = 1235;
    EXPECT_NE(config_hash(d), config_hash(c));
}

TEST(Config, UnknownKeysRejected) {
    EXPECT_THROW(config_from_json(nlohmann::json{{"n_agent", 3}}), ConfigError);
    EXPECT_THROW(config_from_json(nlohmann::json{{"solver", {{"stepz", 3}}}}), ConfigError);
    EXPECT_NO_THROW(config_from_json(nlohmann::json::object()));
}

TEST(Config, FastDividesBudget) {
    ExperimentConfig c;
    c.solver.steps = 100000;
    EXPECT_EQ(fast_config(c).solver.steps, 10000u);
}

TEST(Stats, PairedTTestMatchesReference) {
    const std::vector<double> a{1, 2, 3, 4, 5}, b{2, 2, 4, 5, 7};
    const PairedTTest t = paired_t_test_less(a, b);
    EXPECT_NEAR(t.mean_diff, -1.0, 1e-15);
    EXPECT_NEAR(t.t, -3.162277660168379, 1e-12);
    EXPECT_EQ(t.df, 4.0);
    EXPECT_NEAR(t.p, 0.017054711583704817, 1e-10);
    const std::vector<double> c{0.3, 0.9, 1.4, 0.2, 0.8, 1.1}, d{0.5, 0.7, 1.9, 0.6, 0.9, 1.0};
    EXPECT_NEAR(paired_t_test_less(c, d).p, 0.11870965503162459, 1e-10);
    EXPECT_NEAR(paired_t_test_less(d, c).p, 1.0 - 0.11870965503162459, 1e-10);
    EXPECT_THROW(paired_t_test_less(std::vector<double>{1.0}, std::vector<double>{2.0}), DomainError);
}

TEST(Stats, MeanAndStdev) {
    const std::vector<double> x{2, 4, 4, 4, 5, 5, 7, 9};
    EXPECT_DOUBLE_EQ(mean(x), 5.0);
    EXPECT_NEAR(stdev(x), std::sqrt(32.0 / 7.0), 1e-15);
    EXPECT_EQ(stdev(std::vector<double>{3.0}), 0.0);
}

TEST(RunBatch, SharedDevicesAndNormalization) {
    ExperimentConfig cfg;
    cfg.env.n_agents = 2;
    cfg.env.M = 4;
    cfg.env.B = 3;
    cfg.solver.steps = 2000;
    cfg.slow.iterations = 1;
    cfg.eval.rollouts = 4;
    const auto runs = run_batch(cfg, {Method::Dcc, Method::Iql}, 11, 2);
    ASSERT_EQ(runs.size(), 2u);
    EXPECT_EQ(runs[0].seed, 11u);
    EXPECT_EQ(runs[1].seed, 12u);
    for (const auto& r : runs) {
        ASSERT_EQ(r.reports.size(), 2u);
        EXPECT_EQ(r.reports[0].method, "dcc");
        EXPECT_EQ(r.reports[1].method, "iql");
        RunReport first = r.reports[0];
        first.iterations.resize(1);
        EXPECT_DOUBLE_EQ(normalized_final_reward(first, r.reports[0]), 1.0);
    }
}

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(DCC_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path scratch_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("dcc_cli_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

} // namespace

TEST(Cli, UsageErrorsExitNonzero) {
    EXPECT_NE(run_cli(""), 0);
    EXPECT_NE(run_cli("no-such-command"), 0);
    EXPECT_NE(run_cli("lp-solve --no-such-flag"), 0);
    EXPECT_NE(run_cli("train-dcc --runs 0"), 0);
    EXPECT_EQ(run_cli("lp-solve --config /nonexistent/config.json"), 2);
}

TEST(Cli, LpSolveWritesLayout) {
    const fs::path dir = scratch_dir("lp");
    {
        std::ofstream f(dir / "cfg.json");
        f << R"({"M": 4, "B": 3, "sample_devices": false, "harvest": {"min": 0, "max": 2}, "cost": {"min": 1, "max": 3}})";
    }
    const std::string args = "lp-solve --config " + (dir / "cfg.json").string() + " --seed 3 --out " +
                             (dir / "out").string() + " --lp-dump " + (dir / "model.lp").string();
    ASSERT_EQ(run_cli(args), 0);
    EXPECT_TRUE(fs::exists(dir / "out" / "lp-solve" / "3" / "results.csv"));
    EXPECT_TRUE(fs::exists(dir / "out" / "lp-solve" / "summary.json"));
    EXPECT_GT(fs::file_size(dir / "model.lp"), 0u);
    std::ifstream f(dir / "out" / "lp-solve" / "3" / "results.csv");
    std::string header;
    std::getline(f, header);
    EXPECT_EQ(header.rfind("seed,config_hash,", 0), 0u);
    fs::remove_all(dir);
}
