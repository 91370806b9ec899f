#include "dcc/cmdp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include <Eigen/SparseCore>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseLU>

#include "dcc/config.hpp"
#include "dcc/errors.hpp"

namespace dcc {

// ---------------------------------------------------------------------------------------------
// ConstraintVector

ConstraintVector::ConstraintVector(std::vector<double> theta, double theta_max)
    : theta_(std::move(theta)), theta_max_(theta_max) {
    if (!(theta_max_ > 0.0)) throw DomainError("theta_max must be positive");
    for (double t : theta_)
        if (!(t >= 0.0 && t <= theta_max_))
            throw DomainError("constraint value outside [0, theta_max]");
}

ConstraintVector ConstraintVector::zeros(std::size_t n, double theta_max) {
    return ConstraintVector(std::vector<double>(n, 0.0), theta_max);
}

ConstraintVector ConstraintVector::projected(std::vector<double> theta, double theta_max) {
    for (double& t : theta) t = std::clamp(t, 0.0, theta_max);
    return ConstraintVector(std::move(theta), theta_max);
}

double ConstraintVector::others(std::size_t i) const {
    double sum = 0.0;
    for (std::size_t j = 0; j < theta_.size(); ++j)
        if (j != i) sum += theta_[j];
    return sum;
}

// ---------------------------------------------------------------------------------------------
// AgentPolicy

AgentPolicy::AgentPolicy(std::vector<Row> rows) : rows_(std::move(rows)) {
    for (const Row& r : rows_) {
        double sum = 0.0;
        for (double p : r) {
            if (!(p >= 0.0)) throw ContractViolation("policy has a negative probability");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw ContractViolation("policy row does not sum to 1");
    }
}

AgentPolicy AgentPolicy::deterministic(std::span<const Action> actions) {
    std::vector<Row> rows(actions.size(), Row{0.0, 0.0, 0.0});
    for (std::size_t s = 0; s < actions.size(); ++s) rows[s][index_of(actions[s])] = 1.0;
    return AgentPolicy(std::move(rows));
}

Action AgentPolicy::sample(std::size_t s, Rng& rng) const {
    const Row& r = rows_[s];
    // deterministic rows draw nothing, keeping greedy rollouts on the same random stream
    for (std::size_t a = 0; a < kNumActions; ++a)
        if (r[a] == 1.0) return kAllActions[a];
    const double u = uniform01(rng);
    double acc = 0.0;
    for (std::size_t a = 0; a < kNumActions; ++a) {
        acc += r[a];
        if (u < acc) return kAllActions[a];
    }
    for (std::size_t a = kNumActions; a-- > 0;)
        if (r[a] > 0.0) return kAllActions[a];
    return Action::Wait;
}

Action AgentPolicy::mode(std::size_t s) const {
    const Row& r = rows_[s];
    return kAllActions[static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin())];
}

// ---------------------------------------------------------------------------------------------
// TabularCmdp

std::uint64_t pack_state(const DeviceState& s) {
    const auto x = static_cast<std::uint64_t>(static_cast<std::uint32_t>(s.aoi) & 0xffffU);
    const auto e = static_cast<std::uint64_t>(static_cast<std::uint16_t>(s.battery));
    return (x << 48) | (e << 32) | (static_cast<std::uint64_t>(s.harvest_state) << 16) |
           s.cost_state;
}

TabularCmdp::TabularCmdp(std::shared_ptr<const Structure> structure, std::vector<double> reward,
                         std::vector<double> cost, std::vector<double> initial, double theta_i,
                         double theta_minus_i, double theta_max)
    : s_(std::move(structure)), reward_(std::move(reward)), cost_(std::move(cost)),
      initial_(std::move(initial)), theta_i_(theta_i), theta_minus_i_(theta_minus_i),
      theta_max_(theta_max) {
    const std::size_t S = s_->states.size();
    if (reward_.size() != S * kNumActions || cost_.size() != S * kNumActions ||
        initial_.size() != S || s_->action_mask.size() != S ||
        s_->row_offsets.size() != S * kNumActions + 1)
        throw ContractViolation("TabularCmdp: table sizes do not match the state count");
    const double beta_sum = std::accumulate(initial_.begin(), initial_.end(), 0.0);
    if (std::abs(beta_sum - 1.0) > 1e-12)
        throw ContractViolation("TabularCmdp: initial distribution does not sum to 1");
    if (!(s_->discount > 0.0 && s_->discount < 1.0))
        throw ContractViolation("TabularCmdp: discount outside (0,1)");
}

std::optional<std::size_t> TabularCmdp::find(const DeviceState& st) const {
    const auto it = s_->lookup.find(pack_state(st));
    if (it == s_->lookup.end()) return std::nullopt;
    return it->second;
}

std::span<const Transition> TabularCmdp::transitions(std::size_t s, Action a) const {
    const std::size_t row = s * kNumActions + index_of(a);
    const std::uint32_t begin = s_->row_offsets[row];
    const std::uint32_t end = s_->row_offsets[row + 1];
    return {s_->transitions.data() + begin, s_->transitions.data() + end};
}

std::size_t TabularCmdp::sample_next(std::size_t s, Action a, Rng& rng) const {
    // one draw per step whatever the action, so runs on common random numbers stay in step
    const auto row = transitions(s, a);
    const double u = uniform01(rng);
    double acc = 0.0;
    for (const Transition& t : row) {
        acc += t.prob;
        if (u < acc) return t.next;
    }
    return row.back().next;
}

namespace {

void fill_tables(const TabularCmdp::Structure& st, const DeviceModel& model, double others_rate,
                 std::vector<double>& reward, std::vector<double>& cost) {
    const std::size_t S = st.states.size();
    reward.assign(S * kNumActions, 0.0);
    cost.assign(S * kNumActions, 0.0);
    for (std::size_t s = 0; s < S; ++s) {
        for (Action a : kAllActions) {
            if (!((st.action_mask[s] >> index_of(a)) & 1U)) continue;
            reward[s * kNumActions + index_of(a)] =
                approx_reward(st.states[s], a, others_rate, model.penalty_alpha);
            cost[s * kNumActions + index_of(a)] = a == kCrowdAction ? 1.0 : 0.0;
        }
    }
}

} // namespace

TabularCmdp TabularCmdp::with_theta(double theta_i, double theta_minus_i) const {
    if (!s_->model) throw ContractViolation("with_theta needs a CMDP built from a DeviceModel");
    if (!(theta_minus_i >= 0.0)) throw DomainError("theta_minus_i must be >= 0");
    std::vector<double> reward, cost;
    fill_tables(*s_, *s_->model, theta_minus_i / theta_max_, reward, cost);
    return TabularCmdp(s_, std::move(reward), std::move(cost), initial_, theta_i, theta_minus_i,
                       theta_max_);
}

TabularCmdp TabularCmdp::with_initial(std::vector<double> initial) const {
    return TabularCmdp(s_, reward_, cost_, std::move(initial), theta_i_, theta_minus_i_,
                       theta_max_);
}

TabularCmdp build_cmdp(const DeviceModel& model, double theta_i, double theta_minus_i,
                       const CmdpOptions& options) {
    model.validate();
    if (!(theta_minus_i >= 0.0)) throw DomainError("theta_minus_i must be >= 0");
    const DeviceState start = options.start.value_or(initial_state(model));

    auto st = std::make_shared<TabularCmdp::Structure>();
    st->discount = model.discount;
    st->model = model;
    st->states = reachable_states(model, start);
    const std::size_t S = st->states.size();
    if (S > options.max_states)
        throw SizeError("CMDP has " + std::to_string(S) + " states, cap is " +
                        std::to_string(options.max_states));
    st->lookup.reserve(S);
    for (std::size_t s = 0; s < S; ++s)
        st->lookup.emplace(pack_state(st->states[s]), static_cast<std::uint32_t>(s));

    st->action_mask.assign(S, 0);
    st->row_offsets.assign(S * kNumActions + 1, 0);
    for (std::size_t s = 0; s < S; ++s) {
        const DeviceState& cur = st->states[s];
        for (Action a : kAllActions) {
            const std::size_t row = s * kNumActions + index_of(a);
            if (admissible(cur, a)) {
                st->action_mask[s] |= static_cast<std::uint8_t>(1U << index_of(a));
                const DeviceOutcome out = device_outcome(cur, a, model);
                for (std::size_t h = 0; h < model.harvest.size(); ++h) {
                    const double ph = model.harvest.prob(cur.harvest_state, h);
                    if (ph <= 0.0) continue;
                    for (std::size_t c = 0; c < model.cost.size(); ++c) {
                        const double pc = model.cost.prob(cur.cost_state, c);
                        if (pc <= 0.0) continue;
                        const DeviceState next{out.aoi, out.battery, static_cast<std::uint16_t>(h),
                                               static_cast<std::uint16_t>(c)};
                        st->transitions.push_back({st->lookup.at(pack_state(next)), ph * pc});
                    }
                }
            }
            st->row_offsets[row + 1] = static_cast<std::uint32_t>(st->transitions.size());
        }
    }

    std::vector<double> reward, cost;
    fill_tables(*st, model, theta_minus_i / model.theta_max(), reward, cost);
    std::vector<double> beta(S, 0.0);
    beta[0] = 1.0; // BFS order puts the start state first
    return TabularCmdp(std::move(st), std::move(reward), std::move(cost), std::move(beta),
                       theta_i, theta_minus_i, model.theta_max());
}

// ---------------------------------------------------------------------------------------------
// JSON

nlohmann::json TabularCmdp::to_json() const {
    using nlohmann::json;
    json j;
    j["discount"] = discount();
    j["theta_i"] = theta_i_;
    j["theta_minus_i"] = theta_minus_i_;
    j["theta_max"] = theta_max_;
    json states = json::array();
    json masks = json::array();
    for (std::size_t s = 0; s < num_states(); ++s) {
        const DeviceState& d = state(s);
        states.push_back({d.aoi, d.battery, d.harvest_state, d.cost_state});
        masks.push_back(s_->action_mask[s]);
    }
    j["states"] = std::move(states);
    j["action_mask"] = std::move(masks);
    json kernel = json::array();
    for (std::size_t s = 0; s < num_states(); ++s)
        for (Action a : kAllActions)
            for (const Transition& t : transitions(s, a))
                kernel.push_back({s, index_of(a), t.next, t.prob});
    j["kernel"] = std::move(kernel);
    j["reward"] = reward_;
    j["cost"] = cost_;
    j["initial"] = initial_;
    if (s_->model) j["model"] = device_model_to_json(*s_->model);
    return j;
}

TabularCmdp TabularCmdp::from_json(const nlohmann::json& j) {
    auto st = std::make_shared<Structure>();
    st->discount = j.at("discount").get<double>();
    for (const auto& d : j.at("states")) {
        st->states.push_back(DeviceState{d.at(0).get<int>(), d.at(1).get<int>(),
                                         d.at(2).get<std::uint16_t>(),
                                         d.at(3).get<std::uint16_t>()});
    }
    const std::size_t S = st->states.size();
    for (std::size_t s = 0; s < S; ++s)
        st->lookup.emplace(pack_state(st->states[s]), static_cast<std::uint32_t>(s));
    st->action_mask = j.at("action_mask").get<std::vector<std::uint8_t>>();

    // kernel triplets may come in any order; bucket them by (s, a) row
    std::vector<std::vector<Transition>> rows(S * kNumActions);
    for (const auto& k : j.at("kernel")) {
        const auto s = k.at(0).get<std::size_t>();
        const auto a = k.at(1).get<std::size_t>();
        const auto n = k.at(2).get<std::uint32_t>();
        if (s >= S || a >= kNumActions || n >= S) throw ConfigError("kernel triplet out of range");
        rows[s * kNumActions + a].push_back({n, k.at(3).get<double>()});
    }
    st->row_offsets.assign(S * kNumActions + 1, 0);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        double sum = 0.0;
        for (const Transition& t : rows[r]) {
            st->transitions.push_back(t);
            sum += t.prob;
        }
        const bool allowed = (st->action_mask[r / kNumActions] >> (r % kNumActions)) & 1U;
        if (allowed && std::abs(sum - 1.0) > 1e-12)
            throw ConfigError("kernel row is not stochastic");
        st->row_offsets[r + 1] = static_cast<std::uint32_t>(st->transitions.size());
    }
    if (j.contains("model")) st->model = device_model_from_json(j.at("model"));
    return TabularCmdp(std::move(st), j.at("reward").get<std::vector<double>>(),
                       j.at("cost").get<std::vector<double>>(),
                       j.at("initial").get<std::vector<double>>(), j.at("theta_i").get<double>(),
                       j.at("theta_minus_i").get<double>(), j.at("theta_max").get<double>());
}

// ---------------------------------------------------------------------------------------------
// policy evaluation

namespace {

using SparseMatrix = Eigen::SparseMatrix<double>;

SparseMatrix evaluation_matrix(const TabularCmdp& cmdp, const AgentPolicy& policy) {
    const std::size_t S = cmdp.num_states();
    if (policy.size() != S) throw ContractViolation("policy size does not match the CMDP");
    const double gamma = cmdp.discount();
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(S * 10);
    for (std::size_t s = 0; s < S; ++s) {
        trip.emplace_back(static_cast<int>(s), static_cast<int>(s), 1.0);
        for (Action a : kAllActions) {
            const double p = policy.prob(s, a);
            if (p == 0.0) continue;
            if (!cmdp.admissible(s, a))
                throw ContractViolation("policy puts mass on an inadmissible action");
            for (const Transition& t : cmdp.transitions(s, a))
                trip.emplace_back(static_cast<int>(s), static_cast<int>(t.next),
                                  -gamma * p * t.prob);
        }
    }
    SparseMatrix A(static_cast<int>(S), static_cast<int>(S));
    A.setFromTriplets(trip.begin(), trip.end());
    A.makeCompressed();
    return A;
}

Eigen::VectorXd policy_table(const AgentPolicy& policy, std::span<const double> table) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(policy.size()));
    for (std::size_t s = 0; s < policy.size(); ++s) {
        double acc = 0.0;
        for (std::size_t a = 0; a < kNumActions; ++a) {
            const double p = policy[s][a];
            if (p != 0.0) acc += p * table[s * kNumActions + a];
        }
        v[static_cast<Eigen::Index>(s)] = acc;
    }
    return v;
}

// (I - gamma P) is strictly diagonally dominant, so on large chains BiCGSTAB with a diagonal
// preconditioner converges in a few dozen iterations. Small systems, and any system the
// iteration does not settle, go through a sparse LU.
class Factorized {
public:
    explicit Factorized(const SparseMatrix& A) : A_(A), iterative_(A.rows() > 2000) {
        if (!iterative_) return;
        iter_.setTolerance(1e-14);
        iter_.setMaxIterations(500);
        iter_.compute(A_);
    }
    Eigen::VectorXd solve(const Eigen::VectorXd& rhs) {
        Eigen::VectorXd x;
        if (iterative_) {
            x = iter_.solve(rhs);
            if (iter_.info() == Eigen::Success && x.allFinite()) return x;
        }
        if (!lu_) {
            lu_.emplace();
            lu_->analyzePattern(A_);
            lu_->factorize(A_);
            if (lu_->info() != Eigen::Success) throw InternalError("policy evaluation system is singular");
        }
        x = lu_->solve(rhs);
        if (lu_->info() != Eigen::Success) throw InternalError("policy evaluation solve failed");
        return x;
    }

private:
    const SparseMatrix& A_;
    bool iterative_;
    Eigen::BiCGSTAB<SparseMatrix, Eigen::DiagonalPreconditioner<double>> iter_;
    std::optional<Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>>> lu_;
};

double dot_initial(const std::vector<double>& beta, const Eigen::VectorXd& v) {
    double acc = 0.0;
    for (std::size_t s = 0; s < beta.size(); ++s)
        if (beta[s] != 0.0) acc += beta[s] * v[static_cast<Eigen::Index>(s)];
    return acc;
}

} // namespace

PolicyValue discounted_value(const TabularCmdp& cmdp, const AgentPolicy& policy) {
    const SparseMatrix A = evaluation_matrix(cmdp, policy);
    Factorized f(A);
    const Eigen::VectorXd vr = f.solve(policy_table(policy, cmdp.reward_table()));
    const Eigen::VectorXd vc = f.solve(policy_table(policy, cmdp.cost_table()));
    PolicyValue out;
    out.J = dot_initial(cmdp.initial(), vr);
    out.K = dot_initial(cmdp.initial(), vc);
    out.reward_values.assign(vr.data(), vr.data() + vr.size());
    out.cost_values.assign(vc.data(), vc.data() + vc.size());
    return out;
}

double evaluate_table(const TabularCmdp& cmdp, const AgentPolicy& policy,
                      std::span<const double> table) {
    if (table.size() != cmdp.num_states() * kNumActions)
        throw ContractViolation("evaluate_table: table has the wrong size");
    const SparseMatrix A = evaluation_matrix(cmdp, policy);
    Factorized f(A);
    return dot_initial(cmdp.initial(), f.solve(policy_table(policy, table)));
}

std::vector<double> state_occupancy(const TabularCmdp& cmdp, const AgentPolicy& policy) {
    const SparseMatrix At = evaluation_matrix(cmdp, policy).transpose();
    Factorized f(At);
    Eigen::VectorXd beta(static_cast<Eigen::Index>(cmdp.num_states()));
    for (std::size_t s = 0; s < cmdp.num_states(); ++s) beta[static_cast<Eigen::Index>(s)] = cmdp.initial()[s];
    const Eigen::VectorXd d = f.solve(beta);
    return {d.data(), d.data() + d.size()};
}

AgentPolicy mix_occupancies(const AgentPolicy& a, const std::vector<double>& da, const AgentPolicy& b,
                            const std::vector<double>& db, double w) {
    if (!(w >= 0.0 && w <= 1.0)) throw DomainError("mix_occupancies: weight outside [0, 1]");
    if (a.size() != b.size() || da.size() != a.size() || db.size() != b.size())
        throw ContractViolation("mix_occupancies: size mismatch");
    std::vector<AgentPolicy::Row> rows(a.size());
    for (std::size_t s = 0; s < rows.size(); ++s) {
        const double ma = w * std::max(da[s], 0.0);
        const double mb = (1.0 - w) * std::max(db[s], 0.0);
        if (ma + mb <= 0.0) {
            rows[s] = a[s];
            continue;
        }
        for (std::size_t k = 0; k < kNumActions; ++k) rows[s][k] = (ma * a[s][k] + mb * b[s][k]) / (ma + mb);
    }
    return AgentPolicy(std::move(rows));
}

double occupancy_value(const AgentPolicy& policy, const std::vector<double>& occupancy,
                       std::span<const double> table) {
    if (occupancy.size() != policy.size() || table.size() != policy.size() * kNumActions)
        throw ContractViolation("occupancy_value: size mismatch");
    double acc = 0.0;
    for (std::size_t s = 0; s < policy.size(); ++s)
        for (std::size_t k = 0; k < kNumActions; ++k)
            if (policy[s][k] != 0.0) acc += occupancy[s] * policy[s][k] * table[s * kNumActions + k];
    return acc;
}

std::size_t sample_initial(const std::vector<double>& beta, Rng& rng) {
    if (beta.front() == 1.0) return 0;
    const double u = uniform01(rng);
    double acc = 0.0;
    for (std::size_t s = 0; s < beta.size(); ++s) {
        acc += beta[s];
        if (u < acc) return s;
    }
    for (std::size_t s = beta.size(); s-- > 0;)
        if (beta[s] > 0.0) return s;
    return 0;
}

MonteCarloValue monte_carlo_value(const TabularCmdp& cmdp, const AgentPolicy& policy,
                                  int rollouts, std::size_t horizon, Rng& rng) {
    if (rollouts < 1) throw ContractViolation("monte_carlo_value needs at least one rollout");
    if (policy.size() != cmdp.num_states()) throw ContractViolation("policy size does not match the CMDP");
    const double gamma = cmdp.discount();
    double sj = 0.0, sj2 = 0.0, sk = 0.0, sk2 = 0.0;
    for (int r = 0; r < rollouts; ++r) {
        std::size_t s = sample_initial(cmdp.initial(), rng);
        double disc = 1.0, j = 0.0, k = 0.0;
        for (std::size_t t = 0; t < horizon; ++t) {
            const Action a = policy.sample(s, rng);
            j += disc * cmdp.reward(s, a);
            k += disc * cmdp.cost(s, a);
            s = cmdp.sample_next(s, a, rng);
            disc *= gamma;
        }
        sj += j;
        sj2 += j * j;
        sk += k;
        sk2 += k * k;
    }
    const double n = rollouts;
    MonteCarloValue out;
    out.J = sj / n;
    out.K = sk / n;
    if (rollouts > 1) {
        out.J_se = std::sqrt(std::max(0.0, (sj2 - n * out.J * out.J) / (n - 1)) / n);
        out.K_se = std::sqrt(std::max(0.0, (sk2 - n * out.K * out.K) / (n - 1)) / n);
    }
    return out;
}

std::size_t truncation_horizon(double gamma, double tol) {
    if (!(gamma > 0.0 && gamma < 1.0) || !(tol > 0.0 && tol < 1.0))
        throw DomainError("truncation_horizon: gamma and tol must lie in (0,1)");
    return static_cast<std::size_t>(std::ceil(std::log(tol) / std::log(gamma)));
}

double approximation_bound(std::span<const double> rates, double gamma, double alpha) {
    const std::size_t n = rates.size();
    if (n < 2) throw DomainError("approximation_bound needs at least two agents");
    if (alpha == 1.0) return 0.0;
    const double total = std::accumulate(rates.begin(), rates.end(), 0.0);
    const double dn = penalty(static_cast<double>(n), alpha);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double others = total - rates[i];
        const double gap = others / static_cast<double>(n - 1) * dn - penalty(1.0 + others, alpha);
        sum += rates[i] * std::abs(gap);
    }
    return sum / (1.0 - gamma);
}

} // namespace dcc
