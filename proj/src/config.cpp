#include "dcc/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "dcc/errors.hpp"

namespace dcc {

using nlohmann::json;

DeviceModel EnvConfig::device_model() const {
    DeviceModel m;
    m.aoi_cap = M;
    m.battery_cap = B;
    m.harvest = MarkovChain::make(harvest.kind, harvest.min, harvest.max);
    m.cost = MarkovChain::make(cost.kind, cost.min, cost.max);
    m.penalty_alpha = alpha;
    m.discount = gamma;
    m.validate();
    return m;
}

namespace {

json chain_json(const MarkovChain& c) {
    json j{{"min", c.min_value()}, {"max", c.max_value()}, {"kind", to_string(c.kind())}};
    std::vector<double> rows;
    for (std::size_t a = 0; a < c.size(); ++a)
        for (std::size_t b = 0; b < c.size(); ++b) rows.push_back(c.prob(a, b));
    j["matrix"] = rows;
    return j;
}

MarkovChain chain_from(const json& j) {
    const int lo = j.at("min").get<int>();
    const int hi = j.at("max").get<int>();
    if (j.contains("matrix")) return MarkovChain::custom(lo, hi, j.at("matrix").get<std::vector<double>>());
    return MarkovChain::make(chain_kind_from_string(j.value("kind", std::string("birth_death"))), lo, hi);
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : j.items())
        if (!ok.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
}

template <class T> void read(const json& j, const char* key, T& out) {
    if (j.contains(key)) {
        try {
            out = j.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
        }
    }
}

json chain_spec_json(const ChainSpec& c) {
    return {{"min", c.min}, {"max", c.max}, {"kind", to_string(c.kind)}};
}

ChainSpec chain_spec_from(const json& j, ChainSpec c, const std::string& where) {
    check_keys(j, {"min", "max", "kind"}, where);
    read(j, "min", c.min);
    read(j, "max", c.max);
    if (j.contains("kind")) c.kind = chain_kind_from_string(j.at("kind").get<std::string>());
    return c;
}

} // namespace

json device_model_to_json(const DeviceModel& m) {
    return {{"M", m.aoi_cap},           {"B", m.battery_cap},
            {"harvest", chain_json(m.harvest)}, {"cost", chain_json(m.cost)},
            {"alpha", m.penalty_alpha}, {"gamma", m.discount}};
}

DeviceModel device_model_from_json(const json& j) {
    DeviceModel m;
    m.aoi_cap = j.at("M").get<int>();
    m.battery_cap = j.at("B").get<int>();
    m.harvest = chain_from(j.at("harvest"));
    m.cost = chain_from(j.at("cost"));
    m.penalty_alpha = j.at("alpha").get<double>();
    m.discount = j.at("gamma").get<double>();
    m.validate();
    return m;
}

json to_json(const ExperimentConfig& c) {
    json j;
    j["n_agents"] = c.env.n_agents;
    j["M"] = c.env.M;
    j["B"] = c.env.B;
    j["alpha"] = c.env.alpha;
    j["gamma"] = c.env.gamma;
    j["harvest"] = chain_spec_json(c.env.harvest);
    j["cost"] = chain_spec_json(c.env.cost);
    j["seed"] = c.env.seed;
    j["sample_devices"] = c.env.sample_devices;
    j["solver"] = {{"steps", c.solver.steps},
                   {"outer_iters", c.solver.outer_iters},
                   {"learning_rate", c.solver.learning_rate},
                   {"epsilon0", c.solver.epsilon0},
                   {"epsilon_decay", c.solver.epsilon_decay},
                   {"eta0", c.solver.eta0},
                   {"k_rollouts", c.solver.k_rollouts},
                   {"truncation", c.solver.truncation},
                   {"exact_state_cap", c.solver.exact_state_cap},
                   {"warm_start", c.solver.warm_start},
                   {"q_init", c.solver.q_init}};
    j["slow"] = {{"iterations", c.slow.iterations},
                 {"alpha0", c.slow.alpha0},
                 {"c0", c.slow.c0},
                 {"constant_steps", c.slow.constant_steps},
                 {"lambda_shortcut", c.slow.lambda_shortcut},
                 {"theta0", c.slow.theta0}};
    j["iql"] = {{"learning_rate", c.iql.learning_rate},
                {"epsilon0", c.iql.epsilon0},
                {"epsilon_decay", c.iql.epsilon_decay},
                {"decay_every", c.iql.decay_every},
                {"q_init", c.iql.q_init}};
    j["eval"] = {{"rollouts", c.eval.rollouts}, {"horizon", c.eval.horizon}};
    return j;
}

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    check_keys(j, {"n_agents", "M", "B", "alpha", "gamma", "harvest", "cost", "seed",
                   "sample_devices", "solver", "slow", "iql", "eval"},
               "config");
    read(j, "n_agents", c.env.n_agents);
    read(j, "M", c.env.M);
    read(j, "B", c.env.B);
    read(j, "alpha", c.env.alpha);
    read(j, "gamma", c.env.gamma);
    read(j, "seed", c.env.seed);
    read(j, "sample_devices", c.env.sample_devices);
    if (j.contains("harvest")) c.env.harvest = chain_spec_from(j["harvest"], c.env.harvest, "harvest");
    if (j.contains("cost")) c.env.cost = chain_spec_from(j["cost"], c.env.cost, "cost");
    if (j.contains("solver")) {
        const json& s = j["solver"];
        check_keys(s, {"steps", "outer_iters", "learning_rate", "epsilon0", "epsilon_decay", "eta0",
                       "k_rollouts", "truncation", "exact_state_cap", "warm_start", "q_init"},
                   "solver");
        read(s, "steps", c.solver.steps);
        read(s, "outer_iters", c.solver.outer_iters);
        read(s, "learning_rate", c.solver.learning_rate);
        read(s, "epsilon0", c.solver.epsilon0);
        read(s, "epsilon_decay", c.solver.epsilon_decay);
        read(s, "eta0", c.solver.eta0);
        read(s, "k_rollouts", c.solver.k_rollouts);
        read(s, "truncation", c.solver.truncation);
        read(s, "exact_state_cap", c.solver.exact_state_cap);
        read(s, "warm_start", c.solver.warm_start);
        read(s, "q_init", c.solver.q_init);
    }
    if (j.contains("slow")) {
        const json& s = j["slow"];
        check_keys(s, {"iterations", "alpha0", "c0", "constant_steps", "lambda_shortcut", "theta0"},
                   "slow");
        read(s, "iterations", c.slow.iterations);
        read(s, "alpha0", c.slow.alpha0);
        read(s, "c0", c.slow.c0);
        read(s, "constant_steps", c.slow.constant_steps);
        read(s, "lambda_shortcut", c.slow.lambda_shortcut);
        read(s, "theta0", c.slow.theta0);
    }
    if (j.contains("iql")) {
        const json& s = j["iql"];
        check_keys(s, {"learning_rate", "epsilon0", "epsilon_decay", "decay_every", "q_init"}, "iql");
        read(s, "learning_rate", c.iql.learning_rate);
        read(s, "epsilon0", c.iql.epsilon0);
        read(s, "epsilon_decay", c.iql.epsilon_decay);
        read(s, "decay_every", c.iql.decay_every);
        read(s, "q_init", c.iql.q_init);
    }
    if (j.contains("eval")) {
        const json& s = j["eval"];
        check_keys(s, {"rollouts", "horizon"}, "eval");
        read(s, "rollouts", c.eval.rollouts);
        read(s, "horizon", c.eval.horizon);
    }
    if (c.env.n_agents < 1) throw ConfigError("n_agents must be >= 1");
    if (c.solver.steps == 0 || c.solver.outer_iters < 1) throw ConfigError("solver budget must be positive");
    if (c.slow.iterations < 0) throw ConfigError("slow.iterations must be >= 0");
    if (!c.slow.theta0.empty() && c.slow.theta0.size() != static_cast<std::size_t>(c.env.n_agents))
        throw ConfigError("slow.theta0 must have n_agents entries");
    if (!c.env.sample_devices) (void)c.env.device_model();
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config " + path + " is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

std::uint64_t config_hash(const ExperimentConfig& c) {
    const std::string s = to_json(c).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

} // namespace dcc
