#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <vector>

#include "dcc/env.hpp"
#include "dcc/errors.hpp"
#include "dcc/harness.hpp"

using namespace dcc;

namespace {

DeviceModel fixed_device(int M, int B, int H, int C) {
    DeviceModel m;
    m.aoi_cap = M;
    m.battery_cap = B;
    m.harvest = MarkovChain::birth_death(H, H);
    m.cost = MarkovChain::birth_death(C, C);
    return m;
}

DeviceState at(int x, int e) { return DeviceState{x, e, 0, 0}; }

} // namespace

TEST(Penalty, Values) {
    EXPECT_DOUBLE_EQ(penalty(1, 2), 0.0);
    EXPECT_DOUBLE_EQ(penalty(3, 1), 2.0);
    EXPECT_DOUBLE_EQ(penalty(4, 2), 9.0);
    EXPECT_THROW(penalty(0.5, 1), DomainError);
    EXPECT_THROW(penalty_derivative(0.0, 2), DomainError);
}

TEST(Penalty, Monotone) {
    for (double alpha : {0.5, 1.0, 2.0, 3.0})
        for (double n = 1.0; n < 12.0; n += 0.25) EXPECT_LE(penalty(n, alpha), penalty(n + 0.25, alpha));
}

TEST(Penalty, DerivativeMatchesDifference) {
    for (double alpha : {0.5, 1.0, 2.0, 3.0})
        for (double n : {1.3, 2.0, 4.5}) {
            const double h = 1e-6;
            const double fd = (penalty(n + h, alpha) - penalty(n - h, alpha)) / (2 * h);
            EXPECT_NEAR(penalty_derivative(n, alpha), fd, 1e-6 * std::max(1.0, fd));
        }
}

TEST(LocalUtility, Branches) {
    EXPECT_DOUBLE_EQ(local_utility(at(3, 5)), 3.0);
    EXPECT_DOUBLE_EQ(local_utility(at(4, -2)), 6.0);
    EXPECT_DOUBLE_EQ(local_utility(at(1, 0)), 1.0);
}

TEST(StepDevice, Examples) {
    Rng rng(1);
    const DeviceModel off = fixed_device(15, 15, 1, 5);
    DeviceState s = step_device(at(3, 5), Action::Offload, off, rng);
    EXPECT_EQ(s.aoi, 1);
    EXPECT_EQ(s.battery, 6);

    s = step_device(at(3, 1), Action::LocalProcess, off, rng);
    EXPECT_EQ(s.aoi, 4);
    EXPECT_EQ(s.battery, -3);
    EXPECT_TRUE(s.pending());

    const DeviceModel idle = fixed_device(6, 4, 0, 1);
    s = step_device(at(6, 0), Action::Wait, idle, rng);
    EXPECT_EQ(s.aoi, 6);
    EXPECT_EQ(s.battery, 0);
}

TEST(StepDevice, RechargeCompletesPendingTask) {
    Rng rng(2);
    const DeviceModel m = fixed_device(15, 15, 2, 5);
    DeviceState s = step_device(at(5, -3), Action::Wait, m, rng);
    EXPECT_EQ(s.battery, -1);
    EXPECT_EQ(s.aoi, 6);
    s = step_device(s, Action::Wait, m, rng);
    EXPECT_EQ(s.battery, 1);
    EXPECT_EQ(s.aoi, 1);
}

TEST(StepDevice, PendingForbidsWork) {
    Rng rng(3);
    const DeviceModel m = fixed_device(15, 15, 1, 5);
    EXPECT_THROW(step_device(at(2, -1), Action::Offload, m, rng), ContractViolation);
    EXPECT_THROW(step_device(at(2, -1), Action::LocalProcess, m, rng), ContractViolation);
    EXPECT_NO_THROW(step_device(at(2, -1), Action::Wait, m, rng));
}

TEST(StepDevice, TrajectoryInvariants) {
    const auto devices = sample_instances(SampleSets{}, 4, 11);
    for (const DeviceModel& m : devices) {
        Rng rng(5);
        DeviceState s = initial_state(m);
        for (int t = 0; t < 5000; ++t) {
            std::vector<Action> ok;
            for (Action a : kAllActions)
                if (admissible(s, a)) ok.push_back(a);
            const Action a = ok[std::uniform_int_distribution<std::size_t>(0, ok.size() - 1)(rng)];
            s = step_device(s, a, m, rng);
            ASSERT_GE(s.aoi, 1);
            ASSERT_LE(s.aoi, m.aoi_cap);
            ASSERT_LE(s.battery, m.battery_cap);
            ASSERT_GE(s.battery, m.battery_floor());
            ASSERT_EQ(s.pending(), s.battery < 0);
        }
    }
}

TEST(MarkovChain, BirthDeathRows) {
    const MarkovChain c = MarkovChain::birth_death(1, 4);
    for (std::size_t i = 0; i < c.size(); ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < c.size(); ++j) sum += c.prob(i, j);
        EXPECT_NEAR(sum, 1.0, 1e-15);
    }
    EXPECT_DOUBLE_EQ(c.prob(1, 0), 0.25);
    EXPECT_DOUBLE_EQ(c.prob(1, 2), 0.25);
    EXPECT_DOUBLE_EQ(c.prob(1, 1), 0.5);
    // reflection at the ends sends the outward quarter back inside
    EXPECT_DOUBLE_EQ(c.prob(0, 1), 0.5);
    EXPECT_DOUBLE_EQ(c.prob(0, 0), 0.5);
}

TEST(MarkovChain, SampleFrequencies) {
    const MarkovChain c = MarkovChain::birth_death(0, 3);
    Rng rng(9);
    std::map<std::size_t, int> hits;
    const int n = 200000;
    for (int k = 0; k < n; ++k) ++hits[c.sample_next(1, rng)];
    for (std::size_t j = 0; j < c.size(); ++j) {
        const double p = c.prob(1, j);
        const double se = std::sqrt(p * (1 - p) / n) + 1e-12;
        EXPECT_NEAR(hits[j] / double(n), p, 5 * se);
    }
}

TEST(MarkovChain, CustomRejectsNonStochastic) {
    EXPECT_THROW(MarkovChain::custom(0, 1, {0.5, 0.4, 0.0, 1.0}), ConfigError);
    EXPECT_NO_THROW(MarkovChain::custom(0, 1, {0.5, 0.5, 0.0, 1.0}));
}

TEST(JointReward, Examples) {
    const std::vector<DeviceState> s{at(2, 0), at(3, 1), at(4, 2)};
    const std::vector<Action> a{Action::Offload, Action::Offload, Action::Wait};
    EXPECT_DOUBLE_EQ(joint_reward(s, a, 1.0), 11.0);

    const std::vector<Action> idle(3, Action::Wait);
    EXPECT_DOUBLE_EQ(joint_reward(s, idle, 2.0), 9.0);

    const std::vector<Action> one{Action::Offload, Action::Wait, Action::LocalProcess};
    EXPECT_DOUBLE_EQ(joint_reward(s, one, 2.0), 9.0);
}

TEST(JointReward, SingleOffloaderRemoval) {
    Rng rng(4);
    std::uniform_int_distribution<int> x(1, 10), e(-3, 8);
    for (int k = 0; k < 200; ++k) {
        std::vector<DeviceState> s;
        std::vector<Action> a;
        for (int i = 0; i < 5; ++i) {
            s.push_back(at(x(rng), e(rng)));
            a.push_back(Action::Wait);
        }
        const std::size_t who = k % 5;
        s[who].battery = std::abs(s[who].battery);
        a[who] = Action::Offload;
        std::vector<DeviceState> rest = s;
        std::vector<Action> rest_a = a;
        rest.erase(rest.begin() + who);
        rest_a.erase(rest_a.begin() + who);
        EXPECT_DOUBLE_EQ(joint_reward(s, a, 2.5), joint_reward(rest, rest_a, 2.5) + local_utility(s[who]));
    }
}

TEST(JointReward, LinearDecompositionIdentity) {
    Rng rng(6);
    std::uniform_int_distribution<int> x(1, 10), e(0, 8), act(0, 2);
    std::uniform_real_distribution<double> th(0.0, 4.0);
    for (int k = 0; k < 500; ++k) {
        std::vector<DeviceState> s;
        std::vector<Action> a;
        std::vector<double> others;
        for (int i = 0; i < 6; ++i) {
            s.push_back(at(x(rng), e(rng)));
            a.push_back(static_cast<Action>(act(rng)));
            others.push_back(th(rng));
        }
        int n = 0;
        for (Action b : a) n += b == Action::Offload;
        double approx = 0.0, gap = 0.0;
        for (int i = 0; i < 6; ++i) {
            approx += approx_reward(s[i], a[i], others[i], 1.0);
            if (a[i] == Action::Offload) gap += penalty(n, 1.0) - penalty(1 + others[i], 1.0);
        }
        EXPECT_NEAR(joint_reward(s, a, 1.0) - approx, gap, 1e-12);
    }
}

// Independent Bernoulli offloaders at rates p_i: the expected gap vanishes when theta_-i is the
// sum of the other agents' rates.
TEST(JointReward, LinearGapHasZeroMean) {
    const std::vector<double> p{0.1, 0.35, 0.6, 0.25};
    Rng rng(8);
    const int n = 400000;
    double sum = 0.0, sq = 0.0;
    for (int k = 0; k < n; ++k) {
        std::vector<DeviceState> s(p.size(), at(2, 1));
        std::vector<Action> a;
        for (double q : p) a.push_back(uniform01(rng) < q ? Action::Offload : Action::Wait);
        double approx = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            double others = 0.0;
            for (std::size_t j = 0; j < p.size(); ++j)
                if (j != i) others += p[j];
            approx += approx_reward(s[i], a[i], others, 1.0);
        }
        const double d = joint_reward(s, a, 1.0) - approx;
        sum += d;
        sq += d * d;
    }
    const double m = sum / n;
    const double se = std::sqrt((sq / n - m * m) / n);
    EXPECT_LT(std::abs(m), 4 * se);
}

TEST(ApproxReward, Examples) {
    EXPECT_DOUBLE_EQ(approx_reward(at(2, 1), Action::Offload, 0.6, 1.0), 2.6);
    EXPECT_DOUBLE_EQ(approx_reward(at(2, 1), Action::Wait, 0.6, 1.0), 2.0);
    EXPECT_DOUBLE_EQ(approx_reward(at(5, 0), Action::Offload, 0.0, 2.0), 5.0);
    EXPECT_THROW(approx_reward(at(2, 1), Action::Wait, -0.1, 1.0), DomainError);
}

TEST(CrowdIncentive, Examples) {
    EXPECT_TRUE(check_crowd_incentive(fixed_device(15, 15, 1, 5)));
    // harvest tops the battery up whatever the action: offloading never beats local processing
    EXPECT_FALSE(check_crowd_incentive(fixed_device(2, 1, 3, 1)));
    for (const DeviceModel& m : sample_instances(SampleSets{}, 5, 0)) EXPECT_TRUE(check_crowd_incentive(m));
}

// Exhaustive one-step enumeration over the whole sample grid.
TEST(CrowdIncentive, SampleGridHasValidMembers) {
    const SampleSets sets;
    int valid = 0;
    for (int minH : sets.min_H)
        for (int maxH : sets.max_H)
            for (int maxC : sets.max_C) {
                if (maxH < minH) continue;
                DeviceModel m;
                m.harvest = MarkovChain::birth_death(minH, maxH);
                m.cost = MarkovChain::birth_death(1, maxC);
                valid += check_crowd_incentive(m);
            }
    EXPECT_GT(valid, 0);
}

TEST(ReachableStates, StartFirstAndClosed) {
    const DeviceModel m = fixed_device(3, 2, 1, 2);
    const auto states = reachable_states(m, initial_state(m));
    ASSERT_FALSE(states.empty());
    EXPECT_EQ(states.front(), initial_state(m));
    for (const DeviceState& s : states)
        for (Action a : kAllActions) {
            if (!admissible(s, a)) continue;
            const DeviceOutcome o = device_outcome(s, a, m);
            bool found = false;
            for (const DeviceState& t : states) found |= t.aoi == o.aoi && t.battery == o.battery;
            EXPECT_TRUE(found);
        }
}

// Devices stepped with independent streams reproduce the product kernel.
TEST(StepDevice, JointKernelFactorizes) {
    DeviceModel m;
    m.aoi_cap = 4;
    m.battery_cap = 3;
    m.harvest = MarkovChain::birth_death(0, 2);
    m.cost = MarkovChain::birth_death(1, 2);
    const DeviceState s0{2, 1, 1, 0};
    const DeviceState s1{3, 2, 0, 1};
    Rng r0 = make_stream(5, {0}), r1 = make_stream(5, {1});
    std::map<std::pair<int, int>, int> joint;
    const int n = 200000;
    auto key = [](const DeviceState& s) { return s.harvest_state * 10 + s.cost_state; };
    auto kernel = [&](const DeviceState& s, int k) {
        return m.harvest.prob(s.harvest_state, k / 10) * m.cost.prob(s.cost_state, k % 10);
    };
    for (int k = 0; k < n; ++k) {
        const int a = key(step_device(s0, Action::Wait, m, r0));
        const int b = key(step_device(s1, Action::Offload, m, r1));
        ++joint[{a, b}];
    }
    double covered = 0.0;
    for (const auto& [ab, count] : joint) {
        const double p = kernel(s0, ab.first) * kernel(s1, ab.second);
        ASSERT_GT(p, 0.0);
        covered += p;
        const double se = std::sqrt(p * (1 - p) / n);
        EXPECT_NEAR(double(count) / n, p, 5 * se);
    }
    EXPECT_NEAR(covered, 1.0, 1e-12);
}

TEST(DeviceModel, ValidateRejectsBadCaps) {
    DeviceModel m;
    m.aoi_cap = 0;
    EXPECT_THROW(m.validate(), ConfigError);
    DeviceModel g;
    g.discount = 1.0;
    EXPECT_THROW(g.validate(), ConfigError);
}
