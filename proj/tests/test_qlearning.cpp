#include <gtest/gtest.h>

#include <cmath>

#include "dcc/errors.hpp"
#include "dcc/harness.hpp"
#include "dcc/lp_oracle.hpp"
#include "dcc/qlearning.hpp"
#include "oracles.hpp"

using namespace dcc;

namespace {

std::vector<std::uint8_t> all_mask(std::size_t n) { return std::vector<std::uint8_t>(n, 0b111); }

// Small instance whose unconstrained optimum offloads a lot, so 0.3 theta_max binds.
TabularCmdp binding_instance(std::uint64_t seed) {
    Rng rng(seed);
    for (;;) {
        const DeviceModel m = small_instance(rng, 1.0);
        const TabularCmdp c = build_cmdp(m, 0.0, 4.0);
        if (c.num_states() > 200) continue;
        if (solve_cmdp_lp(c, c.theta_max()).cost > 0.5 * c.theta_max()) return c;
    }
}

} // namespace

TEST(ShapedReward, Examples) {
    EXPECT_DOUBLE_EQ(shaped_reward(2.6, 1.0, 0.5), 3.1);
    EXPECT_DOUBLE_EQ(shaped_reward(2.0, 0.0, 7.0), 2.0);
    EXPECT_DOUBLE_EQ(shaped_reward(4.25, 1.0, 0.0), 4.25);
    EXPECT_THROW(shaped_reward(1.0, 1.0, -0.1), DomainError);
}

TEST(QUpdate, FullLearningRateOverwrites) {
    QTable q(2, all_mask(2), 1.0, 0.0, 1.0);
    q.at(1, Action::Wait) = 3.0;
    q.at(1, Action::LocalProcess) = 5.0;
    q.at(1, Action::Offload) = 4.0;
    q_update(q, 0, Action::Offload, 2.0, 1, 0.5);
    EXPECT_DOUBLE_EQ(q.at(0, Action::Offload), 2.0 + 0.5 * 3.0);
}

TEST(QUpdate, MyopicLimitIsMeanReward) {
    QTable q(1, all_mask(1), 0.01, 0.0, 1.0);
    Rng rng(1);
    for (int k = 0; k < 20000; ++k) q_update(q, 0, Action::Wait, uniform01(rng) < 0.3 ? 10.0 : 0.0, 0, 0.0);
    EXPECT_NEAR(q.at(0, Action::Wait), 3.0, 0.3);
}

// Two-state deterministic MDP: exhaustive sweeps of q_update reach the value-iteration fixed point.
TEST(QUpdate, SweepsMatchValueIteration) {
    const double r[2][3] = {{1.0, 2.0, 0.5}, {3.0, 0.25, 2.0}};
    const std::size_t next[2][3] = {{0, 1, 1}, {0, 1, 0}};
    const double gamma = 0.9;
    QTable q(2, all_mask(2), 1.0, 0.0, 1.0);
    for (int sweep = 0; sweep < 2000; ++sweep)
        for (std::size_t s = 0; s < 2; ++s)
            for (Action a : kAllActions) q_update(q, s, a, r[s][index_of(a)], next[s][index_of(a)], gamma);
    double v[2] = {0, 0};
    for (int it = 0; it < 2000; ++it) {
        double w[2];
        for (std::size_t s = 0; s < 2; ++s) {
            w[s] = 1e300;
            for (std::size_t a = 0; a < 3; ++a) w[s] = std::min(w[s], r[s][a] + gamma * v[next[s][a]]);
        }
        v[0] = w[0];
        v[1] = w[1];
    }
    for (std::size_t s = 0; s < 2; ++s) {
        EXPECT_NEAR(q.min_value(s), v[s], 1e-6);
        for (Action a : kAllActions)
            EXPECT_NEAR(q.at(s, a), r[s][index_of(a)] + gamma * v[next[s][index_of(a)]], 1e-6);
    }
}

TEST(LambdaUpdate, Examples) {
    LagrangeState ls{0.5, 1.0, 0};
    EXPECT_NEAR(lambda_update(ls, 0.3, 0.2).lambda, 0.6, 1e-15);
    EXPECT_EQ(lambda_update(LagrangeState{0.1, 1.0, 0}, 0.0, 0.5).lambda, 0.0);
    const LagrangeState fixed = lambda_update(LagrangeState{0.7, 1.0, 3}, 0.4, 0.4);
    EXPECT_EQ(fixed.lambda, 0.7);
    EXPECT_EQ(fixed.k, 4);
}

TEST(LambdaUpdate, ProjectedAndStepsShrink) {
    Rng rng(2);
    LagrangeState ls;
    double prev_eta = ls.eta();
    for (int k = 0; k < 500; ++k) {
        ls = lambda_update(ls, 3.0 * uniform01(rng), 1.5);
        EXPECT_GE(ls.lambda, 0.0);
        EXPECT_LE(ls.eta(), prev_eta);
        prev_eta = ls.eta();
    }
    EXPECT_LT(ls.eta(), 0.01);
}

TEST(QTable, GreedyTiesAndMask) {
    QTable q(1, all_mask(1), 0.5, 0.0, 1.0);
    EXPECT_EQ(q.greedy(0), Action::Wait);
    q.at(0, Action::Wait) = 1.0;
    q.at(0, Action::Offload) = -1.0;
    EXPECT_EQ(q.greedy(0), Action::Offload);
    q.forbid(Action::Offload);
    EXPECT_EQ(q.greedy(0), Action::LocalProcess);
    EXPECT_FALSE(q.allowed(0, Action::Offload));
}

TEST(QTable, EpsilonGreedyFrequencies) {
    QTable q(1, all_mask(1), 0.5, 0.3, 1.0);
    q.at(0, Action::LocalProcess) = -1.0;
    Rng rng(3);
    std::array<int, 3> hits{};
    const int n = 90000;
    for (int k = 0; k < n; ++k) ++hits[index_of(q.epsilon_greedy(0, rng))];
    const double expect[3] = {0.1, 0.8, 0.1};
    for (std::size_t a = 0; a < 3; ++a)
        EXPECT_NEAR(hits[a] / double(n), expect[a], 5 * std::sqrt(expect[a] * (1 - expect[a]) / n));
}

TEST(QTable, MaskedActionsNeverExplored) {
    QTable q(1, all_mask(1), 0.5, 1.0, 1.0);
    q.forbid(Action::Offload);
    Rng rng(4);
    for (int k = 0; k < 5000; ++k) EXPECT_NE(q.epsilon_greedy(0, rng), Action::Offload);
}

TEST(QTable, UnmaskInheritsGreedyValue) {
    const TabularCmdp c = build_cmdp(oracle::hand_model(), 0.0, 0.0, oracle::hand_options());
    QTable q = QTable::for_cmdp(c, 0.5, 0.0, 1.0, 0.0);
    q.forbid(Action::Offload);
    for (std::size_t s = 0; s < c.num_states(); ++s) {
        q.at(s, Action::Wait) = 5.0 + s;
        q.at(s, Action::LocalProcess) = 4.0 + s;
    }
    const std::vector<Action> before = [&] {
        std::vector<Action> g;
        for (std::size_t s = 0; s < c.num_states(); ++s) g.push_back(q.greedy(s));
        return g;
    }();
    q.unmask(c);
    for (std::size_t s = 0; s < c.num_states(); ++s) {
        EXPECT_TRUE(q.allowed(s, Action::Offload));
        EXPECT_EQ(q.at(s, Action::Offload), 4.0 + s);
        EXPECT_EQ(q.greedy(s), before[s]);
    }
}

TEST(QTable, RejectsBadParameters) {
    EXPECT_THROW(QTable(1, all_mask(1), 0.5, 1.5, 1.0), ConfigError);
    EXPECT_THROW(QTable(1, all_mask(1), 0.0, 0.1, 1.0), ConfigError);
    const TabularCmdp c = build_cmdp(oracle::hand_model(), 0.0, 0.0, oracle::hand_options());
    EXPECT_THROW(QTable::for_cmdp(c, 0.5, 0.1, 1.0, std::nan("")), ConfigError);
}

TEST(TrainConstrained, ZeroBudgetNeverOffloads) {
    const TabularCmdp c = binding_instance(5).with_theta(0.0, 4.0);
    SolverConfig cfg;
    cfg.steps = 20000;
    const TrainResult r = train_constrained(c, cfg, 1);
    EXPECT_EQ(r.K, 0.0);
    for (std::size_t s = 0; s < c.num_states(); ++s) EXPECT_EQ(r.policy.prob(s, Action::Offload), 0.0);
}

TEST(TrainConstrained, SlackBudgetMatchesUnconstrainedOptimum) {
    const TabularCmdp base = binding_instance(6);
    const TabularCmdp c = base.with_theta(base.theta_max(), 4.0);
    SolverConfig cfg;
    cfg.steps = 1000000;
    const TrainResult r = train_constrained(c, cfg, 2);
    EXPECT_EQ(r.lambda, 0.0);
    const double vi = oracle::value_iteration(c).value;
    EXPECT_NEAR(r.J, vi, 0.02 * vi);
}

TEST(TrainConstrained, BindingBudgetIsMet) {
    const TabularCmdp base = binding_instance(7);
    const double theta = 0.3 * base.theta_max();
    const TabularCmdp c = base.with_theta(theta, 4.0);
    ASSERT_GT(solve_cmdp_lp(c, theta).lambda_raw, 0.0);
    SolverConfig cfg;
    cfg.steps = 1000000;
    // warm-started calls in sequence, each restarting the multiplier step size
    TrainResult r = train_constrained(c, cfg, 3);
    for (std::uint64_t call = 1; call < 4; ++call) {
        FastState st{r.q, r.lambda};
        r = train_constrained(c, cfg, 3 + call, 0, &st);
    }
    EXPECT_LE(std::abs(r.K - theta), 0.05 * c.theta_max());
    EXPECT_NEAR(r.J, solve_cmdp_lp(c, theta).objective, 0.02 * std::abs(r.J));
    EXPECT_GT(r.lambda, 0.0);
    EXPECT_NEAR(r.J_tilde, r.J + r.lambda * (r.K - theta), 1e-12);
}

TEST(TrainConstrained, TooSmallBudget) {
    const TabularCmdp c = binding_instance(8);
    SolverConfig cfg;
    cfg.steps = 10;
    cfg.outer_iters = 25;
    EXPECT_THROW(train_constrained(c, cfg, 1), ConfigError);
}

TEST(TrainConstrained, Deterministic) {
    const TabularCmdp c = binding_instance(9).with_theta(5.0, 4.0);
    SolverConfig cfg;
    cfg.steps = 50000;
    const TrainResult a = train_constrained(c, cfg, 11, 2);
    const TrainResult b = train_constrained(c, cfg, 11, 2);
    EXPECT_EQ(a.q, b.q);
    EXPECT_EQ(a.policy, b.policy);
    EXPECT_EQ(a.lambda, b.lambda);
    const TrainResult other = train_constrained(c, cfg, 12, 2);
    EXPECT_NE(a.q, other.q);
}

TEST(TrainConstrained, TelemetryRows) {
    const TabularCmdp c = binding_instance(10).with_theta(5.0, 4.0);
    SolverConfig cfg;
    cfg.steps = 5000;
    cfg.outer_iters = 5;
    const TrainResult r = train_constrained(c, cfg, 1, 3);
    ASSERT_EQ(r.telemetry.size(), 5u);
    for (int k = 0; k < 5; ++k) {
        EXPECT_EQ(r.telemetry[k].agent_id, 3u);
        EXPECT_EQ(r.telemetry[k].outer_iter, k);
        EXPECT_GE(r.telemetry[k].lambda, 0.0);
    }
    EXPECT_NEAR(r.telemetry.back().epsilon, cfg.epsilon0 * std::pow(cfg.epsilon_decay, 5), 1e-15);
}

TEST(TrainConstrained, WarmStartContinuesFromState) {
    const TabularCmdp c = binding_instance(11).with_theta(5.0, 4.0);
    SolverConfig cfg;
    cfg.steps = 20000;
    const TrainResult first = train_constrained(c, cfg, 1);
    FastState st{first.q, first.lambda};
    const TrainResult cont = train_constrained(c, cfg, 2, 0, &st);
    const TrainResult cold = train_constrained(c, cfg, 2, 0);
    EXPECT_NE(cont.q, cold.q);
    // the first lambda update starts from the carried multiplier
    const double step = cont.telemetry.front().lambda - first.lambda;
    EXPECT_LE(std::abs(step), c.theta_max());
}

// Raising lambda never raises the discounted cost of the greedy policy of r + lambda c.
TEST(Shaping, MonotoneInLambda) {
    for (std::uint64_t seed : {12u, 13u, 14u}) {
        const TabularCmdp c = binding_instance(seed);
        double prev = std::numeric_limits<double>::infinity();
        for (int k = 0; k <= 40; ++k) {
            const double lambda = 0.1 * k;
            const auto vi = oracle::value_iteration(c, lambda);
            const double K = discounted_value(c, AgentPolicy::deterministic(vi.greedy)).K;
            EXPECT_LE(K, prev + 1e-9) << "lambda " << lambda;
            prev = K;
        }
    }
}

TEST(Occupancy, MixtureValuesAreLinear) {
    const TabularCmdp c = binding_instance(15);
    const auto a = AgentPolicy::deterministic(oracle::value_iteration(c, 0.0).greedy);
    const auto b = AgentPolicy::deterministic(oracle::value_iteration(c, 3.0).greedy);
    const auto da = state_occupancy(c, a);
    const auto db = state_occupancy(c, b);
    double mass = 0.0;
    for (double x : da) mass += x;
    EXPECT_NEAR(mass, c.theta_max(), 1e-9);
    const PolicyValue va = discounted_value(c, a), vb = discounted_value(c, b);
    EXPECT_NEAR(occupancy_value(a, da, c.reward_table()), va.J, 1e-9);
    for (double w : {0.0, 0.25, 0.7, 1.0}) {
        const PolicyValue v = discounted_value(c, mix_occupancies(a, da, b, db, w));
        EXPECT_NEAR(v.J, w * va.J + (1 - w) * vb.J, 1e-8);
        EXPECT_NEAR(v.K, w * va.K + (1 - w) * vb.K, 1e-8);
    }
    EXPECT_THROW(mix_occupancies(a, da, b, db, 1.5), DomainError);
}

TEST(EvaluatePolicy, ExactAndMonteCarloAgree) {
    const TabularCmdp c = binding_instance(16);
    const auto p = AgentPolicy::deterministic(oracle::value_iteration(c, 1.0).greedy);
    SolverConfig cfg;
    Rng rng(1);
    const Evaluation exact = evaluate_policy(c, p, cfg, rng);
    EXPECT_TRUE(exact.exact);
    cfg.exact_state_cap = 0;
    cfg.k_rollouts = 2000;
    const Evaluation mc = evaluate_policy(c, p, cfg, rng);
    EXPECT_FALSE(mc.exact);
    EXPECT_NEAR(mc.K, exact.K, 0.05 * c.theta_max());
    EXPECT_NEAR(mc.J, exact.J, 0.02 * exact.J);
}
