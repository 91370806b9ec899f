#pragma once

#include <cstdint>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dcc/cmdp.hpp"
#include "dcc/config.hpp"
#include "dcc/qlearning.hpp"

namespace dcc {

/// Result of solving one agent's CMDP at fixed (theta_i, theta_minus_i).
struct AgentSolution {
    AgentPolicy policy;
    double J = 0.0;
    double K = 0.0;
    double lambda = 0.0;  ///< multiplier of K <= theta_i in discounted units
    double J_tilde = 0.0; ///< J + lambda (K - theta_i)
    std::vector<TelemetryRow> telemetry;
    std::shared_ptr<const FastState> state; ///< learner state to continue from (null for exact backends)
};

/// Backend for evaluate_optimal_constrained_policy.
class ConstrainedSolver {
public:
    virtual ~ConstrainedSolver() = default;
    /// `cmdp` carries the agent's state space; the solver rebuilds rewards for the given budgets.
    virtual AgentSolution solve(const TabularCmdp& cmdp, std::size_t agent, double theta_i,
                                double theta_minus_i, std::uint64_t seed,
                                const FastState* warm = nullptr) const = 0;
    /// Learning steps one call consumes (0 for exact backends).
    virtual std::size_t steps_per_call() const = 0;
};

class QlSolver : public ConstrainedSolver {
public:
    explicit QlSolver(SolverConfig cfg) : cfg_(std::move(cfg)) {}
    AgentSolution solve(const TabularCmdp& cmdp, std::size_t agent, double theta_i, double theta_minus_i,
                        std::uint64_t seed, const FastState* warm = nullptr) const override;
    std::size_t steps_per_call() const override { return cfg_.steps; }

private:
    SolverConfig cfg_;
};

class LpSolver : public ConstrainedSolver {
public:
    explicit LpSolver(std::size_t max_states = 2000) : max_states_(max_states) {}
    AgentSolution solve(const TabularCmdp& cmdp, std::size_t agent, double theta_i, double theta_minus_i,
                        std::uint64_t seed, const FastState* warm = nullptr) const override;
    std::size_t steps_per_call() const override { return 0; }

private:
    std::size_t max_states_;
};

/// J~ at (theta_i, theta_-i), (theta_i + eps, theta_-i), (theta_i, theta_-i + |eps|).
/// eps is negative (a backward difference) when theta_i + |eps| would leave [0, theta_max].
struct Triple {
    double base = 0.0;
    double local = 0.0;
    double coupling = 0.0;
    double eps = 0.0;
};

struct GradientEstimate {
    std::vector<double> local;    ///< dJ~_i / dtheta_i
    std::vector<double> coupling; ///< dJ~_i / dtheta_-i
    std::vector<double> g;        ///< g_i = local_i + sum_{j != i} coupling_j
};

/// Slow-timescale steps alpha_n = alpha0 / (n+1)^a and perturbations c_n = c0 / (n+1)^c,
/// or both held constant. c_n is a perturbation of the rate theta / theta_max; alpha_n scales
/// the gradient of J~ in discounted units.
struct SlowSchedule {
    double alpha0 = 0.25;
    double c0 = 0.05;
    double alpha_exponent = 1.0;
    double c_exponent = 0.25;
    bool constant = false;

    static SlowSchedule from(const SlowConfig& cfg);
    double alpha(int n) const;
    double c(int n) const;
    /// sum alpha_n = inf (a <= 1) and sum (alpha_n / c_n)^2 < inf (2 (a - c) > 1).
    bool satisfies_convergence_conditions() const;
};

/// Runs the three evaluations with common random numbers (one seed and one starting learner
/// state for all three). Requires theta_i + eps inside [0, theta_max]; eps = 0 returns three
/// identical values.
Triple evaluate_triple(const ConstrainedSolver& solver, const TabularCmdp& cmdp, std::size_t agent,
                       const ConstraintVector& theta, double eps, std::uint64_t seed,
                       AgentSolution* base_out = nullptr, const FastState* warm = nullptr);

/// Finite differences per agent and the chain-rule assembly. All triples must share |eps|.
GradientEstimate assemble_gradient(const std::vector<Triple>& triples);

/// Projected descent step theta - alpha_n g, clamped to [0, theta_max].
ConstraintVector theta_step(const ConstraintVector& theta, const GradientEstimate& g, int n,
                            const SlowSchedule& schedule);

/// Shared perturbation of iteration n in discounted units: theta_max |N(0, c_n)|, with
/// |N(0, c_n)| clipped below at c_n / 10.
double draw_perturbation(const SlowSchedule& schedule, int n, std::uint64_t seed, double theta_max);

struct IterationRecord {
    int iteration = 0;
    std::size_t steps = 0; ///< learning steps per agent consumed before this evaluation
    std::vector<double> theta;
    std::vector<double> J, K, lambda, J_tilde;
    std::vector<double> local, coupling, gradient; ///< empty on the final evaluation
    double eps = 0.0;
    double joint_reward = 0.0;
    double joint_reward_se = 0.0;
    double offload_frequency = 0.0;
};

struct RunReport {
    std::string method;
    std::uint64_t seed = 0;
    std::string config_hash;
    std::size_t n_agents = 0;
    std::vector<IterationRecord> iterations;
    std::vector<TelemetryRow> telemetry;
    double signal_variance = 0.0; ///< variance of the learners' reward signal (IQL only)

    nlohmann::json to_json() const;
    /// One row per (iteration, agent).
    void write_csv(std::ostream& os) const;
    void write_telemetry_csv(std::ostream& os) const;
};

std::string results_csv_header();
std::string telemetry_csv_header();
/// %.17g, the fixed number format of every CSV this library writes.
std::string fmt(double v);

/// One CMDP per device (theta = 0); solvers rebuild rewards with with_theta.
std::vector<TabularCmdp> build_device_cmdps(const std::vector<DeviceModel>& devices,
                                            std::size_t max_states = 100000);

/// Slow iterations of per-agent triples, gradient assembly and projected steps,
/// then a final evaluation at the last theta. Iteration records carry the composed policies'
/// true joint reward on the joint environment.
RunReport run_dcc(const ExperimentConfig& cfg, const std::vector<DeviceModel>& devices,
                  const ConstrainedSolver& solver, std::uint64_t seed);

/// Evaluation of composed policies shared by every method, seeded per checkpoint so that
/// methods are compared on common random numbers.
struct JointEvaluation {
    double reward = 0.0;
    double reward_se = 0.0;
    double offload_frequency = 0.0;
    std::vector<double> K;
};
JointEvaluation evaluate_composed(const std::vector<TabularCmdp>& cmdps,
                                  const std::vector<AgentPolicy>& policies, const ExperimentConfig& cfg,
                                  std::uint64_t seed, int checkpoint);

} // namespace dcc
