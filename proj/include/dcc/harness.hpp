#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dcc/config.hpp"
#include "dcc/coordinator.hpp"
#include "dcc/env.hpp"

namespace dcc {

/// Value sets device parameters are drawn from.
struct SampleSets {
    std::vector<int> min_H{0, 1};
    std::vector<int> max_H{1, 2, 3};
    std::vector<int> min_C{1};
    std::vector<int> max_C{5, 7, 10};
    int M = 15;
    int B = 15;
    double gamma = 0.95;
    ChainKind kind = ChainKind::BirthDeath;
};

/// n device models drawn independently; draws with max_H < min_H or failing
/// check_crowd_incentive are redrawn.
std::vector<DeviceModel> sample_instances(const SampleSets& sets, std::size_t n, std::uint64_t seed,
                                          double alpha = 1.0);

/// raw / baseline elementwise. Throws DomainError for a zero baseline.
std::vector<double> normalize_rewards(std::span<const double> raw, double baseline);

/// The cfg.env.n_agents devices of one run: sampled from the default sets (seeded by `seed`)
/// or all equal to cfg.env's fixed device.
std::vector<DeviceModel> system_devices(const ExperimentConfig& cfg, std::uint64_t seed);

/// Learning budgets divided by 10.
ExperimentConfig fast_config(ExperimentConfig cfg);

enum class Method { Dcc, Iql, IqlCommon };
std::string to_string(Method m);

RunReport run_method(Method m, const ExperimentConfig& cfg, const std::vector<DeviceModel>& devices,
                     std::uint64_t seed);

/// One run: every method on the same devices and seed.
struct SeedRuns {
    std::uint64_t seed = 0;
    std::vector<RunReport> reports; ///< in the order of `methods`
};

/// Runs r = 0..runs-1 use seed + r; runs execute on the worker pool.
std::vector<SeedRuns> run_batch(const ExperimentConfig& cfg, const std::vector<Method>& methods,
                                std::uint64_t seed, int runs);

/// Final-evaluation joint reward divided by the same seed's first DCC evaluation.
double normalized_final_reward(const RunReport& report, const RunReport& dcc_reference);

// ---------------------------------------------------------------------------------------------
// verification experiments on small instances

/// Small random device for LP-based checks (M <= 5, B <= 4, C <= 3).
DeviceModel small_instance(Rng& rng, double alpha);

struct GradientCheck {
    double alpha = 1.0;
    std::size_t states = 0;
    double theta_i = 0.0;
    double theta_minus_i = 0.0;
    double K = 0.0;
    double local_fd = 0.0;                  ///< forward difference in theta_i
    double local_left = 0.0;                ///< backward difference in theta_i
    double neg_lambda_over_theta_max = 0.0; ///< -lambda* / theta_max
    double coupling_fd = 0.0;
    double coupling_left = 0.0;
    double coupling_analytic = 0.0;         ///< (theta_i / theta_max) d'(1 + theta_-i / theta_max)
};

/// LP finite differences of the optimal Lagrangian value around (theta_i, theta_minus_i).
GradientCheck gradient_check(const TabularCmdp& cmdp, double theta_i, double theta_minus_i, double eps);

/// Random instance with theta_i inside the binding region (5%..95% of the unconstrained cost).
GradientCheck random_gradient_check(Rng& rng, double alpha, double eps);

struct BoundCheck {
    double alpha = 1.0;
    std::size_t n_agents = 0;
    double J_mc = 0.0;     ///< true joint reward, Monte Carlo
    double J_se = 0.0;
    double J_exact = 0.0;  ///< true joint reward, exact (stationary agents)
    double J_approx = 0.0; ///< sum of per-agent CMDP values
    double error = 0.0;    ///< |J_mc - J_approx|
    double bound = 0.0;
    bool within() const { return error <= bound + 3.0 * J_se; }
};

/// n_agents small devices with LP policies, each started in its stationary distribution.
BoundCheck random_bound_check(Rng& rng, double alpha, std::size_t n_agents, int rollouts,
                              std::size_t horizon, std::uint64_t sim_seed);

struct ExactnessCheck {
    double joint = 0.0;  ///< product-chain value under the true reward
    double approx = 0.0; ///< sum_i J~_i
    double rel_error() const;
};

/// Linear penalty, n_agents tiny devices, LP policies at random budgets, stationary starts.
ExactnessCheck random_exactness_check(Rng& rng, std::size_t n_agents);

// ---------------------------------------------------------------------------------------------
// CLI experiments; each writes <out>/<experiment>/<seed>/results.csv and
// <out>/<experiment>/summary.json.

struct CliOptions {
    std::uint64_t seed = 0;
    int runs = 15;
    std::filesystem::path out = "results";
    bool fast = false;
    double eps = 1e-5;
    std::optional<double> alpha;
    std::optional<double> theta;
    double theta_minus = 0.0;
    std::optional<std::string> lp_dump;
    std::size_t max_states = 2000;
};

void experiment_train(Method m, ExperimentConfig cfg, const CliOptions& opt);
void experiment_lp_solve(ExperimentConfig cfg, const CliOptions& opt);
void experiment_verify_gradient(ExperimentConfig cfg, const CliOptions& opt);
void experiment_verify_bound(ExperimentConfig cfg, const CliOptions& opt);
void experiment_scalability(ExperimentConfig cfg, const CliOptions& opt);
void experiment_frequency(ExperimentConfig cfg, const CliOptions& opt);

} // namespace dcc
