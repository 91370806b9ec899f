#include "dcc/qlearning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "dcc/errors.hpp"

namespace dcc {

QTable::QTable(std::size_t num_states, std::vector<std::uint8_t> mask, double lr, double eps,
               double decay, double initial_value)
    : learning_rate(lr), epsilon(eps), epsilon_decay(decay), q_(num_states * kNumActions, initial_value),
      mask_(std::move(mask)) {
    if (mask_.size() != num_states) throw ContractViolation("QTable: mask size mismatch");
    if (!(eps >= 0.0 && eps <= 1.0)) throw ConfigError("exploration rate must lie in [0,1]");
    if (!(lr > 0.0 && lr <= 1.0)) throw ConfigError("learning rate must lie in (0,1]");
}

namespace {

std::vector<std::uint8_t> admissible_mask(const TabularCmdp& cmdp) {
    std::vector<std::uint8_t> mask(cmdp.num_states(), 0);
    for (std::size_t s = 0; s < mask.size(); ++s)
        for (Action a : kAllActions)
            if (cmdp.admissible(s, a)) mask[s] |= static_cast<std::uint8_t>(1U << index_of(a));
    return mask;
}

} // namespace

QTable QTable::for_cmdp(const TabularCmdp& cmdp, double lr, double eps, double decay, double initial_value) {
    if (!std::isfinite(initial_value)) throw ConfigError("initial Q-value must be finite");
    return QTable(cmdp.num_states(), admissible_mask(cmdp), lr, eps, decay, initial_value);
}

void QTable::unmask(const TabularCmdp& cmdp) {
    if (cmdp.num_states() != num_states()) throw ContractViolation("QTable::unmask: state count mismatch");
    std::vector<std::uint8_t> mask = admissible_mask(cmdp);
    for (std::size_t s = 0; s < mask.size(); ++s) {
        const std::uint8_t added = mask[s] & static_cast<std::uint8_t>(~mask_[s]);
        if (!added || !mask_[s]) continue;
        const double v = min_value(s);
        for (Action a : kAllActions)
            if ((added >> index_of(a)) & 1U) at(s, a) = v;
    }
    mask_ = std::move(mask);
}

void QTable::forbid(Action a) {
    for (auto& m : mask_) m &= static_cast<std::uint8_t>(~(1U << index_of(a)));
}

Action QTable::greedy(std::size_t s) const {
    Action best = Action::Wait;
    double v = std::numeric_limits<double>::infinity();
    for (Action a : kAllActions) {
        if (!allowed(s, a)) continue;
        if (at(s, a) < v) {
            v = at(s, a);
            best = a;
        }
    }
    return best;
}

double QTable::min_value(std::size_t s) const { return at(s, greedy(s)); }

Action QTable::epsilon_greedy(std::size_t s, Rng& rng) const {
    // two draws per call, explore or not
    const double u = uniform01(rng);
    const double pick = uniform01(rng);
    if (u < epsilon) {
        Action options[kNumActions];
        std::size_t n = 0;
        for (Action a : kAllActions)
            if (allowed(s, a)) options[n++] = a;
        return options[std::min(n - 1, static_cast<std::size_t>(pick * static_cast<double>(n)))];
    }
    return greedy(s);
}

AgentPolicy QTable::greedy_policy() const {
    std::vector<Action> acts(num_states());
    for (std::size_t s = 0; s < acts.size(); ++s) acts[s] = greedy(s);
    return AgentPolicy::deterministic(acts);
}

double shaped_reward(double r_hat, double c, double lambda) {
    if (!(lambda >= 0.0)) throw DomainError("shaped_reward: lambda must be >= 0");
    return r_hat + lambda * c;
}

void q_update(QTable& qt, std::size_t s, Action a, double r_total, std::size_t s_next, double gamma) {
    double& q = qt.at(s, a);
    q = (1.0 - qt.learning_rate) * q + qt.learning_rate * (r_total + gamma * qt.min_value(s_next));
}

LagrangeState lambda_update(LagrangeState ls, double K_hat, double theta_i) {
    if (!(K_hat >= 0.0)) throw DomainError("lambda_update: K_hat must be >= 0");
    ls.lambda = std::max(0.0, ls.lambda + ls.eta() * (K_hat - theta_i));
    ++ls.k;
    return ls;
}

Evaluation evaluate_policy(const TabularCmdp& cmdp, const AgentPolicy& policy, const SolverConfig& cfg,
                           Rng& rng) {
    if (cmdp.num_states() <= cfg.exact_state_cap) {
        const PolicyValue v = discounted_value(cmdp, policy);
        return {v.J, v.K, true};
    }
    const auto mc = monte_carlo_value(cmdp, policy, cfg.k_rollouts,
                                      truncation_horizon(cmdp.discount(), cfg.truncation), rng);
    return {mc.J, mc.K, false};
}

namespace {

constexpr std::size_t kMaxCandidates = 12;

// Greedy policies are deterministic and a binding budget is generally met only by randomizing.
// Of the candidates, take the best under the final multiplier on each side of theta and mix
// their occupancies so that K = theta. Without both sides, the best feasible candidate.
void mix_bracketing(const TabularCmdp& cmdp, const std::vector<AgentPolicy>& candidates, TrainResult& out) {
    const double theta = cmdp.theta_i();
    struct Scored {
        const AgentPolicy* policy;
        std::vector<double> d;
        double J, K;
    };
    std::optional<Scored> lo, hi;
    auto lagrangian = [&](const Scored& x) { return x.J + out.lambda * x.K; };
    for (const AgentPolicy& p : candidates) {
        Scored x{&p, state_occupancy(cmdp, p), 0.0, 0.0};
        x.J = occupancy_value(p, x.d, cmdp.reward_table());
        x.K = occupancy_value(p, x.d, cmdp.cost_table());
        std::optional<Scored>& side = x.K <= theta ? lo : hi;
        if (!side || lagrangian(x) < lagrangian(*side)) side = std::move(x);
    }
    out.exact = true;
    if (lo && hi) {
        const double w = (hi->K - theta) / (hi->K - lo->K);
        out.policy = mix_occupancies(*lo->policy, lo->d, *hi->policy, hi->d, w);
        out.J = w * lo->J + (1.0 - w) * hi->J;
        out.K = w * lo->K + (1.0 - w) * hi->K;
    } else if (lo) {
        out.policy = *lo->policy;
        out.J = lo->J;
        out.K = lo->K;
    } else {
        const PolicyValue v = discounted_value(cmdp, out.policy);
        out.J = v.J;
        out.K = v.K;
    }
}

} // namespace

TrainResult train_constrained(const TabularCmdp& cmdp, const SolverConfig& cfg, std::uint64_t seed,
                              std::size_t agent_id, const FastState* warm) {
    if (cfg.outer_iters < 1) throw ConfigError("train_constrained: outer_iters must be >= 1");
    const std::size_t T = cfg.steps / static_cast<std::size_t>(cfg.outer_iters);
    if (T == 0) throw ConfigError("train_constrained: budget smaller than one step per outer iteration");
    const double theta_i = cmdp.theta_i();
    const double gamma = cmdp.discount();
    const std::size_t horizon = truncation_horizon(gamma, cfg.truncation);

    Rng learn = make_stream(seed, {agent_id, 1});
    Rng probe = make_stream(seed, {agent_id, 2});

    TrainResult out;
    LagrangeState ls{0.0, cfg.eta0, 0};
    if (warm) {
        out.q = warm->q;
        out.q.unmask(cmdp);
        out.q.learning_rate = cfg.learning_rate;
        out.q.epsilon = cfg.epsilon0;
        out.q.epsilon_decay = cfg.epsilon_decay;
        ls.lambda = warm->lambda;
    } else {
        out.q = QTable::for_cmdp(cmdp, cfg.learning_rate, cfg.epsilon0, cfg.epsilon_decay, cfg.q_init);
    }
    if (theta_i == 0.0) out.q.forbid(kCrowdAction);

    std::vector<AgentPolicy> candidates;
    std::size_t s = sample_initial(cmdp.initial(), learn);
    std::size_t t_episode = 0;
    for (int k = 0; k < cfg.outer_iters; ++k) {
        for (std::size_t t = 0; t < T; ++t) {
            const Action a = out.q.epsilon_greedy(s, learn);
            const double r = shaped_reward(cmdp.reward(s, a), cmdp.cost(s, a), ls.lambda);
            const std::size_t next = cmdp.sample_next(s, a, learn);
            q_update(out.q, s, a, r, next, gamma);
            s = next;
            if (++t_episode == horizon) {
                s = sample_initial(cmdp.initial(), learn);
                t_episode = 0;
            }
        }
        AgentPolicy greedy = out.q.greedy_policy();
        const MonteCarloValue mc = monte_carlo_value(cmdp, greedy, cfg.k_rollouts, horizon, probe);
        ls = lambda_update(ls, mc.K, theta_i);
        out.q.epsilon *= out.q.epsilon_decay;
        out.telemetry.push_back({agent_id, k, ls.lambda, mc.J, mc.K, out.q.epsilon});
        // most recent distinct greedy policies
        auto seen = std::find(candidates.begin(), candidates.end(), greedy);
        if (seen != candidates.end()) candidates.erase(seen);
        else if (candidates.size() == kMaxCandidates) candidates.erase(candidates.begin());
        candidates.push_back(std::move(greedy));
    }

    out.policy = out.q.greedy_policy();
    out.lambda = ls.lambda;
    if (cmdp.num_states() <= cfg.exact_state_cap && theta_i > 0.0) {
        // greedy among the other actions never offloads, so some candidate is feasible
        QTable local = out.q;
        local.forbid(kCrowdAction);
        AgentPolicy fallback = local.greedy_policy();
        if (std::find(candidates.begin(), candidates.end(), fallback) == candidates.end())
            candidates.push_back(std::move(fallback));
        mix_bracketing(cmdp, candidates, out);
    } else {
        const Evaluation ev = evaluate_policy(cmdp, out.policy, cfg, probe);
        out.J = ev.J;
        out.K = ev.K;
        out.exact = ev.exact;
    }
    out.J_tilde = out.J + out.lambda * (out.K - theta_i);
    return out;
}

} // namespace dcc
