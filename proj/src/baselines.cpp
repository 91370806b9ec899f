#include "dcc/baselines.hpp"

#include "dcc/errors.hpp"

namespace dcc {

IqlAgent::IqlAgent(const TabularCmdp& cmdp, const IqlConfig& cfg, std::uint64_t seed)
    : q_(QTable::for_cmdp(cmdp, cfg.learning_rate, cfg.epsilon0, cfg.epsilon_decay, cfg.q_init)), rng_(seed),
      gamma_(cmdp.discount()) {}

Action IqlAgent::act(std::size_t s) { return q_.epsilon_greedy(s, rng_); }

void IqlAgent::learn(std::size_t s, Action a, double reward, std::size_t s_next) {
    q_update(q_, s, a, reward, s_next, gamma_);
}

RunReport train_iql(const ExperimentConfig& cfg, const std::vector<DeviceModel>& devices, std::uint64_t seed,
                    IqlSignal signal) {
    if (devices.empty()) throw ConfigError("train_iql: no devices");
    const std::size_t N = devices.size();
    const std::vector<TabularCmdp> cmdps = build_device_cmdps(devices);
    const double alpha = devices.front().penalty_alpha;
    const std::size_t horizon = truncation_horizon(devices.front().discount, cfg.solver.truncation);
    const std::size_t per_eval = cfg.solver.steps;
    const int iters = cfg.slow.iterations;
    const std::size_t total = static_cast<std::size_t>(3 * iters + 1) * per_eval;
    const std::size_t decay_every =
        cfg.iql.decay_every > 0 ? cfg.iql.decay_every
                                : std::max<std::size_t>(1, per_eval / static_cast<std::size_t>(cfg.solver.outer_iters));

    std::vector<IqlAgent> agents;
    std::vector<Rng> env_rng;
    for (std::size_t i = 0; i < N; ++i) {
        agents.emplace_back(cmdps[i], cfg.iql, derive_seed(seed, {0x10A1, i}));
        env_rng.push_back(make_stream(seed, {0x10E7, i}));
    }

    RunReport report;
    report.method = signal == IqlSignal::Selfish ? "iql" : "iql_common";
    report.seed = seed;
    report.config_hash = hex64(config_hash(cfg));
    report.n_agents = N;

    std::vector<std::size_t> s(N), next(N);
    std::vector<DeviceState> states(N);
    std::vector<Action> acts(N);
    auto reset = [&] {
        for (std::size_t i = 0; i < N; ++i) s[i] = sample_initial(cmdps[i].initial(), env_rng[i]);
    };
    reset();

    // pooled variance of every reward handed to a learner (Welford)
    double count = 0.0, mean = 0.0, m2 = 0.0;
    int checkpoint = 0;
    std::size_t t_episode = 0;
    for (std::size_t t = 0; t <= total; ++t) {
        if (t == static_cast<std::size_t>(3 * checkpoint + 1) * per_eval) {
            std::vector<AgentPolicy> policies;
            for (const auto& ag : agents) policies.push_back(ag.greedy_policy());
            const JointEvaluation ev = evaluate_composed(cmdps, policies, cfg, seed, checkpoint);
            IterationRecord rec;
            rec.iteration = checkpoint;
            rec.steps = t;
            rec.K = ev.K;
            rec.joint_reward = ev.reward;
            rec.joint_reward_se = ev.reward_se;
            rec.offload_frequency = ev.offload_frequency;
            report.iterations.push_back(std::move(rec));
            ++checkpoint;
        }
        if (t == total) break;

        int crowd = 0;
        for (std::size_t i = 0; i < N; ++i) {
            acts[i] = agents[i].act(s[i]);
            states[i] = cmdps[i].state(s[i]);
            crowd += acts[i] == kCrowdAction;
        }
        const double congestion = crowd > 0 ? penalty(crowd, alpha) : 0.0;
        double joint = 0.0;
        if (signal == IqlSignal::Common) joint = joint_reward(states, acts, alpha);
        for (std::size_t i = 0; i < N; ++i) next[i] = cmdps[i].sample_next(s[i], acts[i], env_rng[i]);
        for (std::size_t i = 0; i < N; ++i) {
            const double r = signal == IqlSignal::Common
                                 ? joint
                                 : local_utility(states[i]) + (acts[i] == kCrowdAction ? congestion : 0.0);
            agents[i].learn(s[i], acts[i], r, next[i]);
            count += 1.0;
            const double d = r - mean;
            mean += d / count;
            m2 += d * (r - mean);
        }
        s.swap(next);
        if (++t_episode == horizon) {
            reset();
            t_episode = 0;
        }
        if ((t + 1) % decay_every == 0)
            for (auto& ag : agents) ag.decay_exploration();
    }
    report.signal_variance = count > 1.0 ? m2 / (count - 1.0) : 0.0;
    return report;
}

} // namespace dcc
