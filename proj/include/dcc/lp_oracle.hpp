#pragma once

#include <optional>
#include <ostream>
#include <vector>

#include "dcc/cmdp.hpp"
#include "dcc/simplex.hpp"

namespace dcc {

/// Optimal discounted state-action occupancy of a CMDP with its duals.
struct OccupancyMeasure {
    std::vector<double> rho;        ///< S * kNumActions, zero on inadmissible pairs
    double objective = 0.0;         ///< sum rho * r
    double cost = 0.0;              ///< sum rho * c
    double theta_i = 0.0;
    double lambda_raw = 0.0;        ///< multiplier of sum rho c <= theta_i (discounted units)
    double lambda = 0.0;            ///< theta_max * lambda_raw: multiplier of the rate-normalized constraint
    std::vector<double> flow_duals; ///< one per state
    std::vector<std::size_t> basis; ///< reusable as a warm start at a nearby theta_i
    std::size_t iterations = 0;
};

/// Builds min sum rho r  s.t.  flow conservation from beta, sum rho c <= theta_i, rho >= 0.
/// Column layout: admissible (s, a) pairs in state-major order, then the cost slack.
LpProblem build_occupancy_lp(const TabularCmdp& cmdp, double theta_i);

/// Solves the occupancy LP. A warm basis from a previous solve is tried first and dropped if it
/// is infeasible at this theta_i. Throws DomainError for theta_i outside [0, theta_max],
/// SizeError above `max_states`, InternalError if the LP is not solved to optimality.
OccupancyMeasure solve_cmdp_lp(const TabularCmdp& cmdp, double theta_i,
                               const std::vector<std::size_t>* warm_basis = nullptr,
                               std::size_t max_states = 2000);

/// pi(a|s) = rho(s,a) / sum_a' rho(s,a'). States without occupancy get the uniform
/// distribution over their admissible non-crowd actions.
AgentPolicy policy_from_occupancy(const TabularCmdp& cmdp, const OccupancyMeasure& occ);

/// LP value at theta_i - eps and theta_i + eps, reusing the basis of `at`.
struct OneSidedSlopes {
    double left = 0.0;
    double right = 0.0;
};
OneSidedSlopes lp_value_slopes(const TabularCmdp& cmdp, const OccupancyMeasure& at, double eps);

/// CPLEX LP text format; variable r_<s>_<a>, slack excluded (written as <=).
void write_lp_format(std::ostream& os, const TabularCmdp& cmdp, double theta_i);

} // namespace dcc
