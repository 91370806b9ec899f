#include "dcc/env.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

#include "dcc/errors.hpp"

namespace dcc {

std::string to_string(Action a) {
    switch (a) {
    case Action::Wait: return "wait";
    case Action::LocalProcess: return "local";
    case Action::Offload: return "offload";
    }
    return "?";
}

std::string to_string(ChainKind k) {
    return k == ChainKind::BirthDeath ? "birth_death" : "iid_uniform";
}

ChainKind chain_kind_from_string(const std::string& s) {
    if (s == "birth_death") return ChainKind::BirthDeath;
    if (s == "iid_uniform") return ChainKind::IidUniform;
    throw ConfigError("unknown chain kind '" + s + "' (expected birth_death or iid_uniform)");
}

// ---------------------------------------------------------------------------------------------
// MarkovChain

MarkovChain::MarkovChain(int min_value, int max_value, ChainKind kind, std::vector<double> matrix)
    : min_value_(min_value), max_value_(max_value), kind_(kind), matrix_(std::move(matrix)) {
    const std::size_t k = size();
    if (matrix_.size() != k * k) throw ConfigError("chain matrix has wrong size");
    for (std::size_t i = 0; i < k; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            const double p = matrix_[i * k + j];
            if (!(p >= 0.0)) throw ConfigError("chain matrix has a negative entry");
            row += p;
        }
        if (std::abs(row - 1.0) > 1e-12) throw ConfigError("chain matrix is not row-stochastic");
    }
}

MarkovChain MarkovChain::birth_death(int min_value, int max_value) {
    if (max_value < min_value) throw ConfigError("chain range is empty");
    const std::size_t k = static_cast<std::size_t>(max_value - min_value + 1);
    std::vector<double> m(k * k, 0.0);
    if (k == 1) {
        m[0] = 1.0;
    } else {
        for (std::size_t i = 0; i < k; ++i) {
            m[i * k + i] += 0.5;
            // Moves leaving the range bounce back inside.
            const std::size_t up = i + 1 < k ? i + 1 : i - 1;
            const std::size_t down = i > 0 ? i - 1 : i + 1;
            m[i * k + up] += 0.25;
            m[i * k + down] += 0.25;
        }
    }
    return MarkovChain(min_value, max_value, ChainKind::BirthDeath, std::move(m));
}

MarkovChain MarkovChain::iid_uniform(int min_value, int max_value) {
    if (max_value < min_value) throw ConfigError("chain range is empty");
    const std::size_t k = static_cast<std::size_t>(max_value - min_value + 1);
    std::vector<double> m(k * k, 1.0 / static_cast<double>(k));
    return MarkovChain(min_value, max_value, ChainKind::IidUniform, std::move(m));
}

MarkovChain MarkovChain::make(ChainKind kind, int min_value, int max_value) {
    return kind == ChainKind::BirthDeath ? birth_death(min_value, max_value)
                                         : iid_uniform(min_value, max_value);
}

MarkovChain MarkovChain::custom(int min_value, int max_value, std::vector<double> matrix) {
    if (max_value < min_value) throw ConfigError("chain range is empty");
    return MarkovChain(min_value, max_value, ChainKind::BirthDeath, std::move(matrix));
}

std::size_t MarkovChain::sample_next(std::size_t from, Rng& rng) const {
    const std::size_t k = size();
    if (k == 1) return 0;
    const double u = uniform01(rng);
    double acc = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        acc += matrix_[from * k + j];
        if (u < acc) return j;
    }
    // u landed in the rounding gap at the top of the row
    for (std::size_t j = k; j-- > 0;)
        if (matrix_[from * k + j] > 0.0) return j;
    return from;
}

// ---------------------------------------------------------------------------------------------
// DeviceModel

void DeviceModel::validate() const {
    std::ostringstream err;
    if (aoi_cap < 2) err << "aoi_cap must be >= 2; ";
    if (battery_cap < 1) err << "battery_cap must be >= 1; ";
    if (harvest.min_value() < 0) err << "min_H must be >= 0; ";
    if (harvest.max_value() < harvest.min_value()) err << "max_H must be >= min_H; ";
    if (cost.min_value() < 1) err << "min_C must be >= 1; ";
    if (cost.max_value() < cost.min_value()) err << "max_C must be >= min_C; ";
    if (!(penalty_alpha > 0.0)) err << "alpha must be > 0; ";
    if (!(discount > 0.0 && discount < 1.0)) err << "gamma must lie in (0,1); ";
    const std::string msg = err.str();
    if (!msg.empty()) throw ConfigError("invalid DeviceModel: " + msg);
}

DeviceState initial_state(const DeviceModel& model) {
    return DeviceState{1, model.battery_cap, 0, 0};
}

// ---------------------------------------------------------------------------------------------
// rewards

double penalty(double n, double alpha) {
    if (!(n >= 1.0)) throw DomainError("penalty: n must be >= 1");
    if (n == 1.0) return 0.0;
    return std::pow(n - 1.0, alpha);
}

double penalty_derivative(double n, double alpha) {
    if (!(n >= 1.0)) throw DomainError("penalty_derivative: n must be >= 1");
    if (alpha == 1.0) return 1.0;
    return alpha * std::pow(n - 1.0, alpha - 1.0);
}

double local_utility(const DeviceState& s) {
    return s.battery >= 0 ? static_cast<double>(s.aoi)
                          : static_cast<double>(s.aoi) - static_cast<double>(s.battery);
}

bool admissible(const DeviceState& s, Action a) { return !s.pending() || a == Action::Wait; }

DeviceOutcome device_outcome(const DeviceState& s, Action a, const DeviceModel& model) {
    if (!admissible(s, a))
        throw ContractViolation("action " + to_string(a) + " while a task is pending");
    const int M = model.aoi_cap;
    const int B = model.battery_cap;
    const int H = model.harvest.value(s.harvest_state);
    const int C = model.cost.value(s.cost_state);
    const int aged = std::min(s.aoi + 1, M);

    switch (a) {
    case Action::Offload: return {1, std::min(s.battery + H, B)};
    case Action::LocalProcess: {
        const int e = s.battery + H - C;
        if (e >= 0) return {1, std::min(e, B)};
        return {aged, e};
    }
    case Action::Wait:
        if (s.pending()) {
            const int e = std::min(s.battery + H, B);
            return {e >= 0 ? 1 : aged, e};
        }
        return {aged, std::min(s.battery + H, B)};
    }
    return {s.aoi, s.battery};
}

DeviceState step_device(const DeviceState& s, Action a, const DeviceModel& model, Rng& rng) {
    const DeviceOutcome out = device_outcome(s, a, model);
    DeviceState next;
    next.aoi = out.aoi;
    next.battery = out.battery;
    next.harvest_state = static_cast<std::uint16_t>(model.harvest.sample_next(s.harvest_state, rng));
    next.cost_state = static_cast<std::uint16_t>(model.cost.sample_next(s.cost_state, rng));
    return next;
}

double joint_reward(std::span<const DeviceState> states, std::span<const Action> actions,
                    double alpha) {
    if (states.size() != actions.size())
        throw ContractViolation("joint_reward: states and actions differ in length");
    int crowd = 0;
    for (Action a : actions) crowd += (a == kCrowdAction);
    const double congestion = crowd > 0 ? penalty(static_cast<double>(crowd), alpha) : 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < states.size(); ++i) {
        total += local_utility(states[i]);
        if (actions[i] == kCrowdAction) total += congestion;
    }
    return total;
}

double approx_reward(const DeviceState& s, Action a, double others_rate, double alpha) {
    if (!(others_rate >= 0.0)) throw DomainError("approx_reward: others_rate must be >= 0");
    double r = local_utility(s);
    if (a == kCrowdAction) r += penalty(1.0 + others_rate, alpha);
    return r;
}

// ---------------------------------------------------------------------------------------------
// enumeration

namespace {

struct StateCodec {
    int M, floor, B;
    std::size_t nh, nc;

    explicit StateCodec(const DeviceModel& m)
        : M(m.aoi_cap), floor(m.battery_floor()), B(m.battery_cap), nh(m.harvest.size()),
          nc(m.cost.size()) {}

    std::size_t capacity() const {
        return static_cast<std::size_t>(M) * static_cast<std::size_t>(B - floor + 1) * nh * nc;
    }
    std::size_t encode(const DeviceState& s) const {
        const auto x = static_cast<std::size_t>(s.aoi - 1);
        const auto e = static_cast<std::size_t>(s.battery - floor);
        return ((x * static_cast<std::size_t>(B - floor + 1) + e) * nh + s.harvest_state) * nc +
               s.cost_state;
    }
};

} // namespace

std::vector<DeviceState> reachable_states(const DeviceModel& model, const DeviceState& start) {
    const StateCodec codec(model);
    std::vector<char> seen(codec.capacity(), 0);
    std::vector<DeviceState> order;
    std::deque<DeviceState> frontier{start};
    seen[codec.encode(start)] = 1;
    while (!frontier.empty()) {
        const DeviceState s = frontier.front();
        frontier.pop_front();
        order.push_back(s);
        for (Action a : kAllActions) {
            if (!admissible(s, a)) continue;
            const DeviceOutcome out = device_outcome(s, a, model);
            for (std::size_t h = 0; h < model.harvest.size(); ++h) {
                if (model.harvest.prob(s.harvest_state, h) <= 0.0) continue;
                for (std::size_t c = 0; c < model.cost.size(); ++c) {
                    if (model.cost.prob(s.cost_state, c) <= 0.0) continue;
                    const DeviceState n{out.aoi, out.battery, static_cast<std::uint16_t>(h),
                                        static_cast<std::uint16_t>(c)};
                    char& flag = seen[codec.encode(n)];
                    if (!flag) {
                        flag = 1;
                        frontier.push_back(n);
                    }
                }
            }
        }
    }
    return order;
}

bool check_crowd_incentive(const DeviceModel& model) {
    model.validate();
    bool strict_vs_wait = false;
    bool strict_vs_local = false;
    for (const DeviceState& s : reachable_states(model, initial_state(model))) {
        if (s.pending()) continue;
        const DeviceOutcome off = device_outcome(s, Action::Offload, model);
        for (Action alt : {Action::Wait, Action::LocalProcess}) {
            const DeviceOutcome o = device_outcome(s, alt, model);
            if (off.aoi > o.aoi || off.battery < o.battery) return false;
            if (off != o) (alt == Action::Wait ? strict_vs_wait : strict_vs_local) = true;
        }
    }
    return strict_vs_wait && strict_vs_local;
}

} // namespace dcc
