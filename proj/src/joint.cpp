#include "dcc/joint.hpp"

#include <algorithm>
#include <cmath>

#include "dcc/errors.hpp"

namespace dcc {

namespace {

void check_agents(const std::vector<ComposedAgent>& agents) {
    if (agents.empty()) throw ContractViolation("composed system has no agents");
    for (const auto& ag : agents) {
        if (!ag.cmdp || !ag.policy) throw ContractViolation("composed agent without CMDP or policy");
        if (ag.policy->size() != ag.cmdp->num_states())
            throw ContractViolation("composed agent: policy size does not match its CMDP");
    }
}

// Row-compressed P_pi(s, s') of one agent.
struct PolicyKernel {
    std::vector<std::size_t> offsets;
    std::vector<std::size_t> cols;
    std::vector<double> vals;
};

PolicyKernel policy_kernel(const TabularCmdp& cmdp, const AgentPolicy& policy) {
    const std::size_t S = cmdp.num_states();
    PolicyKernel k;
    k.offsets.reserve(S + 1);
    k.offsets.push_back(0);
    std::vector<double> row(S, 0.0);
    std::vector<std::size_t> touched;
    for (std::size_t s = 0; s < S; ++s) {
        for (Action a : kAllActions) {
            const double p = policy.prob(s, a);
            if (p == 0.0) continue;
            if (!cmdp.admissible(s, a)) throw ContractViolation("policy puts mass on an inadmissible action");
            for (const Transition& t : cmdp.transitions(s, a)) {
                if (row[t.next] == 0.0) touched.push_back(t.next);
                row[t.next] += p * t.prob;
            }
        }
        std::sort(touched.begin(), touched.end());
        for (std::size_t n : touched) {
            k.cols.push_back(n);
            k.vals.push_back(row[n]);
            row[n] = 0.0;
        }
        touched.clear();
        k.offsets.push_back(k.cols.size());
    }
    return k;
}

double expected_congestion(const std::vector<double>& others, double alpha) {
    const std::vector<double> pb = poisson_binomial(others);
    double e = 0.0;
    for (std::size_t k = 1; k < pb.size(); ++k) e += pb[k] * penalty(1.0 + static_cast<double>(k), alpha);
    return e;
}

} // namespace

JointEstimate simulate_joint(const std::vector<ComposedAgent>& agents, double alpha, int rollouts,
                             std::size_t horizon, std::uint64_t seed) {
    check_agents(agents);
    if (rollouts < 1) throw ContractViolation("simulate_joint needs at least one rollout");
    const std::size_t N = agents.size();
    const double gamma = agents.front().cmdp->discount();
    for (const auto& ag : agents)
        if (ag.cmdp->discount() != gamma) throw ContractViolation("agents disagree on the discount");

    JointEstimate out;
    out.K.assign(N, 0.0);
    double sum = 0.0, sum2 = 0.0, approx = 0.0, offloads = 0.0;
    std::vector<Rng> rng(N);
    std::vector<std::size_t> s(N);
    std::vector<DeviceState> states(N);
    std::vector<Action> acts(N);
    for (int r = 0; r < rollouts; ++r) {
        for (std::size_t i = 0; i < N; ++i) {
            rng[i] = make_stream(seed, {static_cast<std::uint64_t>(r), i});
            s[i] = sample_initial(agents[i].cmdp->initial(), rng[i]);
        }
        double disc = 1.0, j = 0.0;
        for (std::size_t t = 0; t < horizon; ++t) {
            for (std::size_t i = 0; i < N; ++i) {
                acts[i] = agents[i].policy->sample(s[i], rng[i]);
                states[i] = agents[i].cmdp->state(s[i]);
                approx += disc * agents[i].cmdp->reward(s[i], acts[i]);
                if (acts[i] == kCrowdAction) {
                    out.K[i] += disc;
                    offloads += 1.0;
                }
            }
            j += disc * joint_reward(states, acts, alpha);
            for (std::size_t i = 0; i < N; ++i) s[i] = agents[i].cmdp->sample_next(s[i], acts[i], rng[i]);
            disc *= gamma;
        }
        sum += j;
        sum2 += j * j;
    }
    const double n = rollouts;
    out.J = sum / n;
    out.J_se = rollouts > 1 ? std::sqrt(std::max(0.0, (sum2 - n * out.J * out.J) / (n - 1)) / n) : 0.0;
    out.approx_sum = approx / n;
    out.offload_frequency = offloads / (n * static_cast<double>(horizon) * static_cast<double>(N));
    for (double& k : out.K) k /= n;
    return out;
}

std::vector<double> stationary_distribution(const TabularCmdp& cmdp, const AgentPolicy& policy, double tol,
                                            std::size_t max_iter) {
    const PolicyKernel P = policy_kernel(cmdp, policy);
    const std::size_t S = cmdp.num_states();
    std::vector<double> x = cmdp.initial();
    std::vector<double> y(S);
    for (std::size_t it = 0; it < max_iter; ++it) {
        for (std::size_t s = 0; s < S; ++s) y[s] = 0.5 * x[s];
        for (std::size_t s = 0; s < S; ++s) {
            if (x[s] == 0.0) continue;
            const double w = 0.5 * x[s];
            for (std::size_t k = P.offsets[s]; k < P.offsets[s + 1]; ++k) y[P.cols[k]] += w * P.vals[k];
        }
        double diff = 0.0;
        for (std::size_t s = 0; s < S; ++s) diff += std::abs(y[s] - x[s]);
        x.swap(y);
        if (diff < tol) {
            double total = 0.0;
            for (double v : x) total += v;
            for (double& v : x) v /= total;
            return x;
        }
    }
    throw InternalError("stationary_distribution: power iteration did not converge");
}

double offload_rate(const TabularCmdp& cmdp, const AgentPolicy& policy, const std::vector<double>& dist) {
    double f = 0.0;
    for (std::size_t s = 0; s < cmdp.num_states(); ++s) f += dist[s] * policy.prob(s, kCrowdAction);
    return f;
}

std::vector<double> poisson_binomial(const std::vector<double>& p) {
    std::vector<double> pmf{1.0};
    for (double q : p) {
        if (!(q >= 0.0 && q <= 1.0)) throw DomainError("poisson_binomial: probability outside [0,1]");
        std::vector<double> next(pmf.size() + 1, 0.0);
        for (std::size_t k = 0; k < pmf.size(); ++k) {
            next[k] += pmf[k] * (1.0 - q);
            next[k + 1] += pmf[k] * q;
        }
        pmf.swap(next);
    }
    return pmf;
}

double stationary_joint_value(const std::vector<ComposedAgent>& agents,
                              const std::vector<std::vector<double>>& dists, double alpha) {
    check_agents(agents);
    const std::size_t N = agents.size();
    if (dists.size() != N) throw ContractViolation("one stationary distribution per agent expected");
    std::vector<double> util(N, 0.0), f(N, 0.0);
    for (std::size_t i = 0; i < N; ++i) {
        const TabularCmdp& c = *agents[i].cmdp;
        if (dists[i].size() != c.num_states()) throw ContractViolation("distribution size mismatch");
        for (std::size_t s = 0; s < c.num_states(); ++s) util[i] += dists[i][s] * local_utility(c.state(s));
        f[i] = offload_rate(c, *agents[i].policy, dists[i]);
    }
    double per_step = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        std::vector<double> others;
        for (std::size_t j = 0; j < N; ++j)
            if (j != i) others.push_back(f[j]);
        per_step += util[i] + f[i] * expected_congestion(others, alpha);
    }
    return per_step / (1.0 - agents.front().cmdp->discount());
}

double product_chain_value(const std::vector<ComposedAgent>& agents, double alpha, std::size_t max_joint_states,
                           double tol) {
    check_agents(agents);
    const std::size_t N = agents.size();
    const double gamma = agents.front().cmdp->discount();
    std::vector<std::size_t> dims(N);
    std::size_t total = 1;
    for (std::size_t i = 0; i < N; ++i) {
        dims[i] = agents[i].cmdp->num_states();
        if (total > max_joint_states / dims[i]) throw SizeError("product chain too large");
        total *= dims[i];
    }
    std::vector<PolicyKernel> P;
    for (const auto& ag : agents) P.push_back(policy_kernel(*ag.cmdp, *ag.policy));

    // expected one-step reward and start mass of every joint state
    std::vector<double> r(total), beta(total);
    std::vector<std::size_t> idx(N, 0);
    std::vector<double> p_off(N), others;
    for (std::size_t z = 0; z < total; ++z) {
        double u = 0.0, b = 1.0;
        for (std::size_t i = 0; i < N; ++i) {
            const TabularCmdp& c = *agents[i].cmdp;
            u += local_utility(c.state(idx[i]));
            p_off[i] = agents[i].policy->prob(idx[i], kCrowdAction);
            b *= c.initial()[idx[i]];
        }
        for (std::size_t i = 0; i < N; ++i) {
            if (p_off[i] == 0.0) continue;
            others.clear();
            for (std::size_t j = 0; j < N; ++j)
                if (j != i) others.push_back(p_off[j]);
            u += p_off[i] * expected_congestion(others, alpha);
        }
        r[z] = u;
        beta[z] = b;
        for (std::size_t i = N; i-- > 0;) {
            if (++idx[i] < dims[i]) break;
            idx[i] = 0;
        }
    }

    std::vector<double> V(total, 0.0), A(total), B(total);
    const double rmax = *std::max_element(r.begin(), r.end());
    for (std::size_t sweep = 0;; ++sweep) {
        // A = (P_1 x ... x P_N) V, one mode at a time
        A = V;
        std::size_t inner = total;
        for (std::size_t k = 0; k < N; ++k) {
            const std::size_t n = dims[k];
            inner /= n;
            const std::size_t outer = total / (n * inner);
            const PolicyKernel& K = P[k];
            for (std::size_t o = 0; o < outer; ++o) {
                const std::size_t base = o * n * inner;
                for (std::size_t i = 0; i < n; ++i) {
                    double* dst = &B[base + i * inner];
                    std::fill(dst, dst + inner, 0.0);
                    for (std::size_t e = K.offsets[i]; e < K.offsets[i + 1]; ++e) {
                        const double w = K.vals[e];
                        const double* src = &A[base + K.cols[e] * inner];
                        for (std::size_t q = 0; q < inner; ++q) dst[q] += w * src[q];
                    }
                }
            }
            A.swap(B);
        }
        double delta = 0.0;
        for (std::size_t z = 0; z < total; ++z) {
            const double v = r[z] + gamma * A[z];
            delta = std::max(delta, std::abs(v - V[z]));
            V[z] = v;
        }
        if (delta * gamma / (1.0 - gamma) <= tol * std::max(1.0, rmax / (1.0 - gamma))) break;
        if (sweep > 100000) throw InternalError("product_chain_value: value iteration did not converge");
    }
    double J = 0.0;
    for (std::size_t z = 0; z < total; ++z) J += beta[z] * V[z];
    return J;
}

} // namespace dcc
