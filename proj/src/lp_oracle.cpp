#include "dcc/lp_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "dcc/errors.hpp"

namespace dcc {

LpProblem build_occupancy_lp(const TabularCmdp& cmdp, double theta_i) {
    const std::size_t S = cmdp.num_states();
    const double gamma = cmdp.discount();
    LpProblem lp;
    lp.rows = S + 1;
    lp.b.assign(cmdp.initial().begin(), cmdp.initial().end());
    lp.b.push_back(theta_i);
    for (std::size_t s = 0; s < S; ++s) {
        for (Action a : kAllActions) {
            if (!cmdp.admissible(s, a)) continue;
            std::vector<std::pair<std::size_t, double>> col{{s, 1.0}};
            for (const Transition& t : cmdp.transitions(s, a)) {
                auto it = std::find_if(col.begin(), col.end(),
                                       [&](const auto& e) { return e.first == t.next; });
                if (it == col.end())
                    col.emplace_back(t.next, -gamma * t.prob);
                else
                    it->second -= gamma * t.prob;
            }
            if (cmdp.cost(s, a) != 0.0) col.emplace_back(S, cmdp.cost(s, a));
            std::sort(col.begin(), col.end());
            lp.columns.push_back(std::move(col));
            lp.c.push_back(cmdp.reward(s, a));
        }
    }
    lp.columns.push_back({{S, 1.0}});
    lp.c.push_back(0.0);
    return lp;
}

namespace {

// column index of every admissible (s, a), matching build_occupancy_lp's layout
std::vector<long> column_index(const TabularCmdp& cmdp) {
    std::vector<long> idx(cmdp.num_states() * kNumActions, -1);
    long next = 0;
    for (std::size_t s = 0; s < cmdp.num_states(); ++s)
        for (Action a : kAllActions)
            if (cmdp.admissible(s, a)) idx[s * kNumActions + index_of(a)] = next++;
    return idx;
}

} // namespace

OccupancyMeasure solve_cmdp_lp(const TabularCmdp& cmdp, double theta_i,
                               const std::vector<std::size_t>* warm_basis,
                               std::size_t max_states) {
    if (!(theta_i >= 0.0 && theta_i <= cmdp.theta_max()))
        throw DomainError("solve_cmdp_lp: theta_i outside [0, theta_max]");
    const std::size_t S = cmdp.num_states();
    if (S > max_states)
        throw SizeError("LP oracle capped at " + std::to_string(max_states) + " states, got " +
                        std::to_string(S));
    const LpProblem lp = build_occupancy_lp(cmdp, theta_i);
    const std::vector<long> idx = column_index(cmdp);

    SimplexResult res;
    bool solved = false;
    if (warm_basis) {
        try {
            res = solve_simplex(lp, *warm_basis);
            solved = true;
        } catch (const ContractViolation&) {
        }
    }
    if (!solved) {
        // never offload: Wait everywhere plus the cost slack
        std::vector<std::size_t> basis;
        basis.reserve(S + 1);
        for (std::size_t s = 0; s < S; ++s)
            basis.push_back(static_cast<std::size_t>(idx[s * kNumActions + index_of(Action::Wait)]));
        basis.push_back(lp.cols() - 1);
        res = solve_simplex(lp, std::move(basis));
    }
    if (res.status != SimplexStatus::Optimal)
        throw InternalError("occupancy LP not solved: " + to_string(res.status));

    OccupancyMeasure occ;
    occ.rho.assign(S * kNumActions, 0.0);
    for (std::size_t k = 0; k < idx.size(); ++k)
        if (idx[k] >= 0) occ.rho[k] = res.x[static_cast<std::size_t>(idx[k])];
    occ.objective = res.objective;
    double cost = 0.0;
    for (std::size_t k = 0; k < occ.rho.size(); ++k) cost += occ.rho[k] * cmdp.cost_table()[k];
    occ.cost = cost;
    occ.theta_i = theta_i;
    occ.lambda_raw = std::max(0.0, -res.y[S]); // sign round-off on slack constraints
    occ.lambda = cmdp.theta_max() * occ.lambda_raw;
    occ.flow_duals.assign(res.y.begin(), res.y.begin() + static_cast<long>(S));
    occ.basis = std::move(res.basis);
    occ.iterations = res.iterations;
    return occ;
}

AgentPolicy policy_from_occupancy(const TabularCmdp& cmdp, const OccupancyMeasure& occ) {
    const std::size_t S = cmdp.num_states();
    if (occ.rho.size() != S * kNumActions)
        throw ContractViolation("occupancy does not match the CMDP");
    std::vector<AgentPolicy::Row> rows(S, AgentPolicy::Row{0.0, 0.0, 0.0});
    for (std::size_t s = 0; s < S; ++s) {
        AgentPolicy::Row& row = rows[s];
        double total = 0.0;
        for (std::size_t a = 0; a < kNumActions; ++a) {
            row[a] = std::max(occ.rho[s * kNumActions + a], 0.0);
            total += row[a];
        }
        if (total > 1e-14) {
            for (double& p : row) p /= total;
            continue;
        }
        row = {0.0, 0.0, 0.0};
        int n = 0;
        for (Action a : kAllActions)
            if (a != kCrowdAction && cmdp.admissible(s, a)) ++n;
        for (Action a : kAllActions)
            if (a != kCrowdAction && cmdp.admissible(s, a)) row[index_of(a)] = 1.0 / n;
    }
    return AgentPolicy(std::move(rows));
}

OneSidedSlopes lp_value_slopes(const TabularCmdp& cmdp, const OccupancyMeasure& at, double eps) {
    if (!(eps > 0.0)) throw DomainError("lp_value_slopes: eps must be positive");
    const double lo = at.theta_i - eps;
    const double hi = at.theta_i + eps;
    if (lo < 0.0 || hi > cmdp.theta_max()) throw DomainError("lp_value_slopes: theta_i too close to a bound");
    const OccupancyMeasure l = solve_cmdp_lp(cmdp, lo, &at.basis, cmdp.num_states());
    const OccupancyMeasure r = solve_cmdp_lp(cmdp, hi, &at.basis, cmdp.num_states());
    return {(at.objective - l.objective) / eps, (r.objective - at.objective) / eps};
}

void write_lp_format(std::ostream& os, const TabularCmdp& cmdp, double theta_i) {
    const std::size_t S = cmdp.num_states();
    const double gamma = cmdp.discount();
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    auto var = [](std::size_t s, Action a) {
        return "r_" + std::to_string(s) + "_" + std::to_string(index_of(a));
    };
    auto emit = [&](std::vector<std::pair<double, std::string>>& terms) {
        int on_line = 0;
        for (std::size_t k = 0; k < terms.size(); ++k) {
            const double v = terms[k].first;
            os << (v < 0 ? " - " : (k == 0 ? " " : " + ")) << num(std::abs(v)) << ' ' << terms[k].second;
            if (++on_line == 6 && k + 1 < terms.size()) {
                os << "\n   ";
                on_line = 0;
            }
        }
    };

    os << "\\ discounted occupancy LP, " << S << " states, gamma " << num(gamma) << "\n";
    os << "Minimize\n obj:";
    std::vector<std::pair<double, std::string>> terms;
    for (std::size_t s = 0; s < S; ++s)
        for (Action a : kAllActions)
            if (cmdp.admissible(s, a) && cmdp.reward(s, a) != 0.0) terms.emplace_back(cmdp.reward(s, a), var(s, a));
    emit(terms);
    os << "\nSubject To\n";

    // incoming mass per target state
    std::vector<std::vector<std::pair<double, std::string>>> flow(S);
    for (std::size_t s = 0; s < S; ++s)
        for (Action a : kAllActions) {
            if (!cmdp.admissible(s, a)) continue;
            flow[s].emplace_back(1.0, var(s, a));
            for (const Transition& t : cmdp.transitions(s, a)) flow[t.next].emplace_back(-gamma * t.prob, var(s, a));
        }
    for (std::size_t s = 0; s < S; ++s) {
        // merge duplicate variables (self loops)
        std::vector<std::pair<double, std::string>> merged;
        for (auto& [v, name] : flow[s]) {
            auto it = std::find_if(merged.begin(), merged.end(), [&](const auto& e) { return e.second == name; });
            if (it == merged.end())
                merged.emplace_back(v, name);
            else
                it->first += v;
        }
        os << " flow_" << s << ":";
        emit(merged);
        os << " = " << num(cmdp.initial()[s]) << "\n";
    }
    terms.clear();
    for (std::size_t s = 0; s < S; ++s)
        for (Action a : kAllActions)
            if (cmdp.admissible(s, a) && cmdp.cost(s, a) != 0.0) terms.emplace_back(cmdp.cost(s, a), var(s, a));
    os << " budget:";
    if (terms.empty()) os << " 0 r_0_0";
    emit(terms);
    os << " <= " << num(theta_i) << "\nEnd\n";
}

} // namespace dcc
