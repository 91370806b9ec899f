#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "dcc/cmdp.hpp"
#include "dcc/config.hpp"

namespace dcc {

/// Tabular action values for a cost-minimizing learner. Actions outside `mask` are never
/// selected and never bootstrapped from.
class QTable {
public:
    QTable() = default;
    QTable(std::size_t num_states, std::vector<std::uint8_t> mask, double learning_rate,
           double epsilon, double epsilon_decay, double initial_value = 0.0);
    /// Table over the CMDP's admissible actions, every entry equal to `initial_value`.
    static QTable for_cmdp(const TabularCmdp& cmdp, double learning_rate, double epsilon,
                           double epsilon_decay, double initial_value = 0.0);

    std::size_t num_states() const { return mask_.size(); }
    double& at(std::size_t s, Action a) { return q_[s * kNumActions + index_of(a)]; }
    double at(std::size_t s, Action a) const { return q_[s * kNumActions + index_of(a)]; }
    bool allowed(std::size_t s, Action a) const { return (mask_[s] >> index_of(a)) & 1U; }
    /// Removes `a` from every state's action set (hard masking of the crowd action).
    void forbid(Action a);
    /// Restores the CMDP's admissible action sets. Actions that were masked start at the
    /// state's current greedy value, so ties keep the previous greedy choice.
    void unmask(const TabularCmdp& cmdp);

    /// argmin over allowed actions; ties go to the lowest action index.
    Action greedy(std::size_t s) const;
    double min_value(std::size_t s) const;
    /// With probability epsilon a uniformly random allowed action, else greedy.
    Action epsilon_greedy(std::size_t s, Rng& rng) const;
    AgentPolicy greedy_policy() const;

    double learning_rate = 0.5;
    double epsilon = 0.05;
    double epsilon_decay = 0.95;

    const std::vector<double>& values() const { return q_; }
    friend bool operator==(const QTable&, const QTable&) = default;

private:
    std::vector<double> q_;
    std::vector<std::uint8_t> mask_;
};

/// r_hat + lambda c.
double shaped_reward(double r_hat, double c, double lambda);

/// q(s,a) <- (1 - lr) q(s,a) + lr (r_total + gamma min_a' q(s',a')).
void q_update(QTable& qt, std::size_t s, Action a, double r_total, std::size_t s_next, double gamma);

struct LagrangeState {
    double lambda = 0.0;
    double eta0 = 1.0;
    int k = 0; ///< updates applied so far

    double eta() const { return eta0 / (1.0 + k); }
};

/// lambda <- max(0, lambda + eta_k (K_hat - theta_i)); advances k.
LagrangeState lambda_update(LagrangeState ls, double K_hat, double theta_i);

struct TelemetryRow {
    std::size_t agent_id = 0;
    int outer_iter = 0;
    double lambda = 0.0;
    double J_hat = 0.0;
    double K_hat = 0.0;
    double epsilon = 0.0;
};

struct TrainResult {
    AgentPolicy policy;   ///< greedy policy of the final Q-table
    QTable q;
    double lambda = 0.0;
    double J = 0.0;       ///< discounted approximate reward of `policy`
    double K = 0.0;       ///< discounted cost of `policy`
    double J_tilde = 0.0; ///< J + lambda (K - theta_i)
    bool exact = false;   ///< J, K from a direct solve rather than rollouts
    std::vector<TelemetryRow> telemetry;
};

/// Fast-timescale iterates carried from one run to the next.
struct FastState {
    QTable q;
    double lambda = 0.0;
};

/// Constrained Q-learning on a CMDP built for (theta_i, theta_minus_i): outer_iters lambda
/// updates, each preceded by steps / outer_iters Q-learning steps on the shaped reward and
/// followed by a rollout estimate of the greedy policy's cost. theta_i = 0 masks the crowd
/// action outright. With `warm`, learning continues from its Q-values and lambda (the step
/// sequence and exploration restart). Throws ConfigError if the budget does not cover one step
/// per outer iteration.
TrainResult train_constrained(const TabularCmdp& cmdp, const SolverConfig& cfg, std::uint64_t seed,
                              std::size_t agent_id = 0, const FastState* warm = nullptr);

/// Exact when the CMDP is at most `exact_state_cap` states, else Monte Carlo with
/// `rollouts` rollouts truncated at `truncation`.
struct Evaluation {
    double J = 0.0;
    double K = 0.0;
    bool exact = false;
};
Evaluation evaluate_policy(const TabularCmdp& cmdp, const AgentPolicy& policy,
                           const SolverConfig& cfg, Rng& rng);

} // namespace dcc
