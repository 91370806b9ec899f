#pragma once

#include <cstdint>
#include <vector>

#include "dcc/cmdp.hpp"

namespace dcc {

/// One agent of a composed system: its CMDP (state space, kernel, start distribution) and the
/// local policy it follows. Only the kernel and start distribution are used; rewards come from
/// the true joint reward.
struct ComposedAgent {
    const TabularCmdp* cmdp = nullptr;
    const AgentPolicy* policy = nullptr;
};

struct JointEstimate {
    double J = 0.0;               ///< discounted true joint reward, mean over rollouts
    double J_se = 0.0;
    double approx_sum = 0.0;      ///< sum_i discounted CMDP reward along the same paths
    double offload_frequency = 0.0; ///< share of (agent, step) pairs that offload
    std::vector<double> K;        ///< per-agent discounted offload count
};

/// Monte Carlo rollouts of the composed policies on the joint environment with the true
/// congestion reward. Agent i's actions and transitions use its own stream derived from
/// (seed, rollout, i), so results do not depend on the stepping order.
JointEstimate simulate_joint(const std::vector<ComposedAgent>& agents, double alpha, int rollouts,
                             std::size_t horizon, std::uint64_t seed);

/// Limit distribution of the lazy chain (P_pi + I)/2 started from beta, by power iteration.
/// Throws InternalError if the l1 residual does not fall below `tol`.
std::vector<double> stationary_distribution(const TabularCmdp& cmdp, const AgentPolicy& policy,
                                            double tol = 1e-13, std::size_t max_iter = 2000000);

/// Per-step offload probability of `policy` under state distribution `dist`.
double offload_rate(const TabularCmdp& cmdp, const AgentPolicy& policy, const std::vector<double>& dist);

/// P(sum of independent Bernoulli(p_j)) = k, k = 0..n.
std::vector<double> poisson_binomial(const std::vector<double>& p);

/// Exact discounted true joint reward when every agent starts in (and hence stays in) a
/// stationary distribution of its own chain: per-step agents are independent, so the congestion
/// term is an expectation over a Poisson-binomial count. `dists[i]` must be stationary for
/// agent i.
double stationary_joint_value(const std::vector<ComposedAgent>& agents,
                              const std::vector<std::vector<double>>& dists, double alpha);

/// Exact discounted true joint reward on the product chain of all agents (value iteration
/// with Kronecker-structured transitions), from the product of the agents' start
/// distributions. Throws SizeError if the product space exceeds `max_joint_states`.
double product_chain_value(const std::vector<ComposedAgent>& agents, double alpha,
                           std::size_t max_joint_states = 2000000, double tol = 1e-12);

} // namespace dcc
