#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dcc/rng.hpp"

namespace dcc {

enum class Action : std::uint8_t { Wait = 0, LocalProcess = 1, Offload = 2 };

inline constexpr std::size_t kNumActions = 3;
inline constexpr Action kCrowdAction = Action::Offload;
inline constexpr std::array<Action, kNumActions> kAllActions{Action::Wait, Action::LocalProcess,
                                                             Action::Offload};

constexpr std::size_t index_of(Action a) { return static_cast<std::size_t>(a); }
std::string to_string(Action a);

enum class ChainKind { BirthDeath, IidUniform };

std::string to_string(ChainKind k);
ChainKind chain_kind_from_string(const std::string& s);

/// Finite Markov chain over the integer range [min_value, max_value].
///
/// BirthDeath: stay with probability 1/2, move +-1 with probability 1/4 each;
/// a move that would leave the range is reflected back inside.
/// IidUniform: every row is the uniform distribution over the range.
class MarkovChain {
public:
    MarkovChain() = default;

    static MarkovChain birth_death(int min_value, int max_value);
    static MarkovChain iid_uniform(int min_value, int max_value);
    static MarkovChain make(ChainKind kind, int min_value, int max_value);
    /// Arbitrary row-major transition matrix. Throws ConfigError if not row-stochastic.
    static MarkovChain custom(int min_value, int max_value, std::vector<double> matrix);

    std::size_t size() const { return static_cast<std::size_t>(max_value_ - min_value_ + 1); }
    int min_value() const { return min_value_; }
    int max_value() const { return max_value_; }
    ChainKind kind() const { return kind_; }
    int value(std::size_t idx) const { return min_value_ + static_cast<int>(idx); }
    double prob(std::size_t from, std::size_t to) const { return matrix_[from * size() + to]; }

    std::size_t sample_next(std::size_t from, Rng& rng) const;

private:
    MarkovChain(int min_value, int max_value, ChainKind kind, std::vector<double> matrix);

    int min_value_ = 0;
    int max_value_ = 0;
    ChainKind kind_ = ChainKind::BirthDeath;
    std::vector<double> matrix_{1.0};
};

/// One device's MDP parameters.
struct DeviceModel {
    int aoi_cap = 15;     ///< M
    int battery_cap = 15; ///< B
    MarkovChain harvest;  ///< energy harvested per step, H_t
    MarkovChain cost;     ///< energy needed by local processing, C_t
    double penalty_alpha = 1.0;
    double discount = 0.95;

    /// Throws ConfigError when an invariant is broken.
    void validate() const;

    /// Discounted cost of always offloading, 1 / (1 - gamma).
    double theta_max() const { return 1.0 / (1.0 - discount); }
    /// Most negative battery level reachable (one task's worst-case deficit).
    int battery_floor() const { return -cost.max_value(); }
};

struct DeviceState {
    int aoi = 1;
    int battery = 0;
    std::uint16_t harvest_state = 0; ///< index into the harvest chain
    std::uint16_t cost_state = 0;    ///< index into the cost chain

    bool pending() const { return battery < 0; }
    friend bool operator==(const DeviceState&, const DeviceState&) = default;
};

/// (x = 1, e = B, H = min_H, C = min_C).
DeviceState initial_state(const DeviceModel& model);

/// Congestion penalty d(n) = (n - 1)^alpha. Throws DomainError for n < 1.
double penalty(double n, double alpha);
/// d'(n) = alpha (n - 1)^(alpha - 1). Throws DomainError for n < 1.
double penalty_derivative(double n, double alpha);

/// x if e >= 0, else x - e.
double local_utility(const DeviceState& s);

/// Only Wait is admissible while a task is pending.
bool admissible(const DeviceState& s, Action a);

/// AoI and battery after taking `a` with the harvest/cost values held in `s`.
struct DeviceOutcome {
    int aoi;
    int battery;
    friend bool operator==(const DeviceOutcome&, const DeviceOutcome&) = default;
};
DeviceOutcome device_outcome(const DeviceState& s, Action a, const DeviceModel& model);

/// One step of the device dynamics; H and C advance along their chains.
/// Throws ContractViolation for Offload/LocalProcess while pending.
DeviceState step_device(const DeviceState& s, Action a, const DeviceModel& model, Rng& rng);

/// Joint cost: sum_i u_i(s_i) + I[a_i = Offload] d(N(a)).
double joint_reward(std::span<const DeviceState> states, std::span<const Action> actions,
                    double alpha);

/// Decomposed cost u_i(s_i) + I[a_i = Offload] d(1 + others_rate), where others_rate is the
/// expected number of other agents offloading in a step. Throws DomainError if others_rate < 0.
double approx_reward(const DeviceState& s, Action a, double others_rate, double alpha);

/// Every state reachable from `start` under some admissible action sequence, in BFS order
/// (so `start` comes first).
std::vector<DeviceState> reachable_states(const DeviceModel& model, const DeviceState& start);

/// Individual incentive for the crowd action, checked on one-step successors: at every reachable
/// state with e >= 0, Offload's successor has no larger AoI and no smaller battery than any other
/// action's, and for each alternative there is at least one reachable state where it is strictly
/// better. Instances failing this give offloading no individual appeal and are rejected.
bool check_crowd_incentive(const DeviceModel& model);

} // namespace dcc
