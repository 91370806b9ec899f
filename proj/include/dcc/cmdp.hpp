#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "dcc/env.hpp"

namespace dcc {

/// Per-agent offload budgets theta in discounted-cost units, each in [0, theta_max].
class ConstraintVector {
public:
    ConstraintVector(std::vector<double> theta, double theta_max);

    static ConstraintVector zeros(std::size_t n, double theta_max);
    /// Componentwise clamp of `theta` into [0, theta_max].
    static ConstraintVector projected(std::vector<double> theta, double theta_max);

    std::size_t size() const { return theta_.size(); }
    double operator[](std::size_t i) const { return theta_[i]; }
    double theta_max() const { return theta_max_; }
    const std::vector<double>& values() const { return theta_; }

    /// theta_{-i} = sum_{j != i} theta_j.
    double others(std::size_t i) const;
    /// theta_i / theta_max: the per-step offload rate the budget corresponds to.
    double rate(std::size_t i) const { return theta_[i] / theta_max_; }

private:
    std::vector<double> theta_;
    double theta_max_;
};

/// Stationary randomized policy pi(a | s) over a CMDP's state index.
class AgentPolicy {
public:
    using Row = std::array<double, kNumActions>;

    AgentPolicy() = default;
    explicit AgentPolicy(std::vector<Row> rows);
    static AgentPolicy deterministic(std::span<const Action> actions);

    std::size_t size() const { return rows_.size(); }
    const Row& operator[](std::size_t s) const { return rows_[s]; }
    double prob(std::size_t s, Action a) const { return rows_[s][index_of(a)]; }
    Action sample(std::size_t s, Rng& rng) const;
    /// Most likely action (ties broken toward the lower action index).
    Action mode(std::size_t s) const;

    friend bool operator==(const AgentPolicy&, const AgentPolicy&) = default;

private:
    std::vector<Row> rows_;
};

struct Transition {
    std::uint32_t next;
    double prob;
};

struct CmdpOptions {
    std::size_t max_states = 100000;
    std::optional<DeviceState> start; ///< deterministic start; defaults to initial_state(model)
};

/// Tabular constrained MDP of one agent. The state space, kernel and utilities are shared
/// (immutable) between copies; reward and cost tables depend on theta.
class TabularCmdp {
public:
    struct Structure {
        std::vector<DeviceState> states;
        std::unordered_map<std::uint64_t, std::uint32_t> lookup;
        std::vector<std::uint8_t> action_mask;  ///< bit a set iff action a admissible
        std::vector<std::uint32_t> row_offsets; ///< CSR offsets, size S * kNumActions + 1
        std::vector<Transition> transitions;
        double discount = 0.95;
        std::optional<DeviceModel> model;
    };

    TabularCmdp(std::shared_ptr<const Structure> structure, std::vector<double> reward,
                std::vector<double> cost, std::vector<double> initial, double theta_i,
                double theta_minus_i, double theta_max);

    std::size_t num_states() const { return s_->states.size(); }
    const DeviceState& state(std::size_t s) const { return s_->states[s]; }
    std::optional<std::size_t> find(const DeviceState& st) const;
    bool admissible(std::size_t s, Action a) const {
        return (s_->action_mask[s] >> index_of(a)) & 1U;
    }
    std::span<const Transition> transitions(std::size_t s, Action a) const;
    double reward(std::size_t s, Action a) const { return reward_[s * kNumActions + index_of(a)]; }
    double cost(std::size_t s, Action a) const { return cost_[s * kNumActions + index_of(a)]; }
    std::span<const double> reward_table() const { return reward_; }
    std::span<const double> cost_table() const { return cost_; }
    double discount() const { return s_->discount; }
    const std::vector<double>& initial() const { return initial_; }
    double theta_i() const { return theta_i_; }
    double theta_minus_i() const { return theta_minus_i_; }
    double theta_max() const { return theta_max_; }
    const std::optional<DeviceModel>& model() const { return s_->model; }
    const std::shared_ptr<const Structure>& structure() const { return s_; }

    /// Same state space and kernel; reward rebuilt for new budgets (requires a model).
    TabularCmdp with_theta(double theta_i, double theta_minus_i) const;
    /// Same CMDP with a different initial distribution beta.
    TabularCmdp with_initial(std::vector<double> initial) const;

    /// Samples s' ~ p(. | s, a).
    std::size_t sample_next(std::size_t s, Action a, Rng& rng) const;

    nlohmann::json to_json() const;
    static TabularCmdp from_json(const nlohmann::json& j);

private:
    std::shared_ptr<const Structure> s_;
    std::vector<double> reward_;
    std::vector<double> cost_;
    std::vector<double> initial_;
    double theta_i_;
    double theta_minus_i_;
    double theta_max_;
};

std::uint64_t pack_state(const DeviceState& s);

/// Enumerates every state reachable from the start state and fills the exact kernel.
/// The reward uses the approximated congestion d(1 + theta_minus_i / theta_max).
/// Throws SizeError when the reachable set exceeds options.max_states.
TabularCmdp build_cmdp(const DeviceModel& model, double theta_i, double theta_minus_i,
                       const CmdpOptions& options = {});

struct PolicyValue {
    double J = 0.0; ///< discounted reward from beta
    double K = 0.0; ///< discounted cost from beta
    std::vector<double> reward_values; ///< V_r(s)
    std::vector<double> cost_values;   ///< V_c(s)
};

/// Exact policy evaluation: solves (I - gamma P_pi) V = r_pi for reward and cost.
PolicyValue discounted_value(const TabularCmdp& cmdp, const AgentPolicy& policy);

/// Discounted state visitation beta^T (I - gamma P_pi)^{-1}; sums to 1 / (1 - gamma).
std::vector<double> state_occupancy(const TabularCmdp& cmdp, const AgentPolicy& policy);

/// Stationary policy whose state-action occupancy is w rho_a + (1 - w) rho_b, given the two
/// policies' state occupancies; its J and K are the same mixture of the two policies' values.
/// States neither policy visits follow `a`.
AgentPolicy mix_occupancies(const AgentPolicy& a, const std::vector<double>& da, const AgentPolicy& b,
                            const std::vector<double>& db, double w);

/// sum_s d(s) sum_a pi(a|s) table(s, a): the discounted value of `table` given the policy's
/// state occupancy d.
double occupancy_value(const AgentPolicy& policy, const std::vector<double>& occupancy,
                       std::span<const double> table);

struct MonteCarloValue {
    double J = 0.0;
    double K = 0.0;
    double J_se = 0.0; ///< standard error of the mean over rollouts
    double K_se = 0.0;
};

/// Rollouts of `horizon` steps from states drawn from beta; discounted reward and cost sums.
MonteCarloValue monte_carlo_value(const TabularCmdp& cmdp, const AgentPolicy& policy,
                                  int rollouts, std::size_t horizon, Rng& rng);

/// Draws a start state index from beta (no draw when beta is a point mass on state 0).
std::size_t sample_initial(const std::vector<double>& beta, Rng& rng);

/// Smallest H with gamma^H <= tol.
std::size_t truncation_horizon(double gamma, double tol);

/// beta^T (I - gamma P_pi)^{-1} g_pi for an arbitrary (state, action) table g.
double evaluate_table(const TabularCmdp& cmdp, const AgentPolicy& policy,
                      std::span<const double> table);

/// Error bound between the true and the approximated discounted joint reward,
///   1/(1-gamma) * sum_i rate_i * | rate_{-i}/(N-1) d(N) - d(1 + rate_{-i}) |,
/// with per-step offload rates. Exactly 0 for alpha = 1. Throws DomainError if N < 2.
double approximation_bound(std::span<const double> rates, double gamma, double alpha);

} // namespace dcc
