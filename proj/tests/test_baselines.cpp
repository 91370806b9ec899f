#include <gtest/gtest.h>

#include "dcc/baselines.hpp"
#include "dcc/harness.hpp"

using namespace dcc;

namespace {

ExperimentConfig small_config(int n_agents) {
    ExperimentConfig cfg;
    cfg.env.n_agents = n_agents;
    cfg.solver.steps = 2000;
    cfg.slow.iterations = 2;
    cfg.eval.rollouts = 4;
    return cfg;
}

std::vector<DeviceModel> devices(int n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<DeviceModel> out;
    for (int i = 0; i < n; ++i) out.push_back(small_instance(rng, 2.0));
    return out;
}

} // namespace

TEST(Iql, CheckpointsMatchDccBudget) {
    const ExperimentConfig cfg = small_config(3);
    const RunReport r = train_iql(cfg, devices(3, 1), 5);
    EXPECT_EQ(r.method, "iql");
    ASSERT_EQ(r.iterations.size(), 3u);
    for (int n = 0; n < 3; ++n) {
        EXPECT_EQ(r.iterations[n].iteration, n);
        EXPECT_EQ(r.iterations[n].steps, static_cast<std::size_t>(3 * n + 1) * cfg.solver.steps);
        EXPECT_GE(r.iterations[n].offload_frequency, 0.0);
        EXPECT_LE(r.iterations[n].offload_frequency, 1.0);
    }
}

// Alone, the joint reward is the agent's own cost, so both signals train identically.
TEST(Iql, SingleAgentSignalsCoincide) {
    const ExperimentConfig cfg = small_config(1);
    const auto ds = devices(1, 2);
    const RunReport a = train_iql(cfg, ds, 3, IqlSignal::Selfish);
    const RunReport b = train_iql_common(cfg, ds, 3);
    ASSERT_EQ(a.iterations.size(), b.iterations.size());
    for (std::size_t k = 0; k < a.iterations.size(); ++k)
        EXPECT_EQ(a.iterations[k].joint_reward, b.iterations[k].joint_reward);
    EXPECT_EQ(a.signal_variance, b.signal_variance);
}

TEST(Iql, CommonSignalIsNoisier) {
    const ExperimentConfig cfg = small_config(6);
    const auto ds = devices(6, 3);
    const RunReport selfish = train_iql(cfg, ds, 4, IqlSignal::Selfish);
    const RunReport common = train_iql_common(cfg, ds, 4);
    EXPECT_GT(common.signal_variance, selfish.signal_variance);
    EXPECT_EQ(common.method, "iql_common");
}

TEST(Iql, Deterministic) {
    const ExperimentConfig cfg = small_config(3);
    const auto ds = devices(3, 4);
    std::ostringstream a, b, c;
    train_iql(cfg, ds, 9).write_csv(a);
    train_iql(cfg, ds, 9).write_csv(b);
    train_iql(cfg, ds, 10).write_csv(c);
    EXPECT_EQ(a.str(), b.str());
    EXPECT_NE(a.str(), c.str());
}

TEST(IqlAgent, LearnAppliesQUpdate) {
    const auto ds = devices(1, 5);
    const TabularCmdp c = build_cmdp(ds[0], 0.0, 0.0);
    IqlConfig cfg;
    IqlAgent ag(c, cfg, 1);
    const double before = ag.q().at(0, Action::Wait);
    ag.learn(0, Action::Wait, 2.0, 0);
    EXPECT_NEAR(ag.q().at(0, Action::Wait), before + cfg.learning_rate * (2.0 + c.discount() * before - before),
                1e-15);
    for (int k = 0; k < 100; ++k) EXPECT_TRUE(c.admissible(0, ag.act(0)));
}
