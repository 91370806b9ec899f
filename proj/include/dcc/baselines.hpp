#pragma once

#include <cstdint>
#include <vector>

#include "dcc/coordinator.hpp"
#include "dcc/qlearning.hpp"

namespace dcc {

/// One independent learner. It sees only its own state index and the scalar reward the
/// environment hands it; nothing about other agents passes through this interface.
class IqlAgent {
public:
    IqlAgent(const TabularCmdp& cmdp, const IqlConfig& cfg, std::uint64_t seed);

    Action act(std::size_t s);
    void learn(std::size_t s, Action a, double reward, std::size_t s_next);
    void decay_exploration() { q_.epsilon *= q_.epsilon_decay; }
    AgentPolicy greedy_policy() const { return q_.greedy_policy(); }
    const QTable& q() const { return q_; }

private:
    QTable q_;
    Rng rng_;
    double gamma_;
};

enum class IqlSignal { Selfish, Common };

/// Independent Q-learning on the joint environment. Every agent takes `total_steps` steps;
/// greedy policies are evaluated after (3n + 1) * cfg.solver.steps steps, n = 0..iterations,
/// matching the learning budget DCC has consumed at its n-th evaluation.
RunReport train_iql(const ExperimentConfig& cfg, const std::vector<DeviceModel>& devices, std::uint64_t seed,
                    IqlSignal signal = IqlSignal::Selfish);

inline RunReport train_iql_common(const ExperimentConfig& cfg, const std::vector<DeviceModel>& devices,
                                  std::uint64_t seed) {
    return train_iql(cfg, devices, seed, IqlSignal::Common);
}

} // namespace dcc
