#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dcc/env.hpp"

namespace dcc {

struct ChainSpec {
    int min = 0;
    int max = 0;
    ChainKind kind = ChainKind::BirthDeath;
};

/// Environment section of the experiment config.
struct EnvConfig {
    int n_agents = 10;
    int M = 15;
    int B = 15;
    double alpha = 1.0;
    double gamma = 0.95;
    ChainSpec harvest{0, 3, ChainKind::BirthDeath};
    ChainSpec cost{1, 10, ChainKind::BirthDeath};
    std::uint64_t seed = 0;
    /// Draw each device from the sample sets instead of using harvest/cost above.
    bool sample_devices = true;

    DeviceModel device_model() const;
};

/// Fast and intermediate timescales (one constrained Q-learning run).
struct SolverConfig {
    std::size_t steps = 100000;     ///< Q-learning steps per constraint evaluation
    int outer_iters = 25;           ///< lambda updates per run, K
    double learning_rate = 0.5;
    double epsilon0 = 0.05;
    double epsilon_decay = 0.95;    ///< applied after every lambda update
    double eta0 = 1.0;              ///< eta_k = eta0 / (1 + k)
    int k_rollouts = 32;
    double truncation = 1e-3;       ///< rollout horizon: gamma^H <= truncation
    std::size_t exact_state_cap = 20000; ///< evaluate exactly (direct solve) up to this size
    bool warm_start = true;         ///< continue each agent's Q-table and lambda across slow iterations
    double q_init = 0.0;            ///< initial Q-value of every entry
};

/// Slow timescale.
struct SlowConfig {
    int iterations = 5;
    double alpha0 = 0.25;
    double c0 = 0.05;
    bool constant_steps = true;     ///< short 5-iteration runs keep alpha_n, c_n fixed
    bool lambda_shortcut = false;
    std::vector<double> theta0;     ///< empty: all zeros
};

struct IqlConfig {
    double learning_rate = 0.05;
    double epsilon0 = 0.05;
    double epsilon_decay = 0.95;
    std::size_t decay_every = 0;    ///< steps between epsilon decays; 0: total steps / outer_iters
    double q_init = 0.0;
};

/// Monte Carlo evaluation of composed policies on the joint environment.
struct EvalConfig {
    int rollouts = 32;
    std::size_t horizon = 0; ///< 0: truncation horizon of the solver
};

struct ExperimentConfig {
    EnvConfig env;
    SolverConfig solver;
    SlowConfig slow;
    IqlConfig iql;
    EvalConfig eval;
};

nlohmann::json device_model_to_json(const DeviceModel& m);
DeviceModel device_model_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ExperimentConfig& c);
/// Missing keys keep their defaults; unknown keys are a ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

/// 64-bit FNV-1a of the canonical JSON dump.
std::uint64_t config_hash(const ExperimentConfig& c);
std::string hex64(std::uint64_t v);

} // namespace dcc
