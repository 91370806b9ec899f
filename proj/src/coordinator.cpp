#include "dcc/coordinator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "dcc/errors.hpp"
#include "dcc/joint.hpp"
#include "dcc/lp_oracle.hpp"
#include "dcc/parallel.hpp"

namespace dcc {

AgentSolution QlSolver::solve(const TabularCmdp& cmdp, std::size_t agent, double theta_i,
                              double theta_minus_i, std::uint64_t seed, const FastState* warm) const {
    TrainResult r = train_constrained(cmdp.with_theta(theta_i, theta_minus_i), cfg_, seed, agent,
                                      cfg_.warm_start ? warm : nullptr);
    AgentSolution out{std::move(r.policy), r.J, r.K, r.lambda, r.J_tilde, std::move(r.telemetry), nullptr};
    if (cfg_.warm_start) out.state = std::make_shared<const FastState>(FastState{std::move(r.q), r.lambda});
    return out;
}

AgentSolution LpSolver::solve(const TabularCmdp& cmdp, std::size_t, double theta_i, double theta_minus_i,
                              std::uint64_t, const FastState*) const {
    const TabularCmdp c = cmdp.with_theta(theta_i, theta_minus_i);
    const OccupancyMeasure occ = solve_cmdp_lp(c, theta_i, nullptr, max_states_);
    AgentSolution out;
    out.policy = policy_from_occupancy(c, occ);
    out.J = occ.objective;
    out.K = occ.cost;
    out.lambda = occ.lambda_raw;
    out.J_tilde = occ.objective + occ.lambda_raw * (occ.cost - theta_i);
    return out;
}

// ---------------------------------------------------------------------------------------------
// slow timescale

SlowSchedule SlowSchedule::from(const SlowConfig& cfg) {
    SlowSchedule s;
    s.alpha0 = cfg.alpha0;
    s.c0 = cfg.c0;
    s.constant = cfg.constant_steps;
    return s;
}

double SlowSchedule::alpha(int n) const {
    return constant ? alpha0 : alpha0 / std::pow(n + 1.0, alpha_exponent);
}

double SlowSchedule::c(int n) const { return constant ? c0 : c0 / std::pow(n + 1.0, c_exponent); }

bool SlowSchedule::satisfies_convergence_conditions() const {
    if (constant) return false;
    return alpha_exponent > 0.0 && alpha_exponent <= 1.0 && 2.0 * (alpha_exponent - c_exponent) > 1.0;
}

Triple evaluate_triple(const ConstrainedSolver& solver, const TabularCmdp& cmdp, std::size_t agent,
                       const ConstraintVector& theta, double eps, std::uint64_t seed, AgentSolution* base_out,
                       const FastState* warm) {
    const double ti = theta[agent];
    const double tmi = theta.others(agent);
    if (ti + eps < 0.0 || ti + eps > theta.theta_max())
        throw ContractViolation("evaluate_triple: theta_i + eps leaves [0, theta_max]");
    AgentSolution base = solver.solve(cmdp, agent, ti, tmi, seed, warm);
    Triple t;
    t.eps = eps;
    t.base = base.J_tilde;
    if (eps == 0.0) {
        t.local = t.coupling = t.base;
    } else {
        t.local = solver.solve(cmdp, agent, ti + eps, tmi, seed, warm).J_tilde;
        t.coupling = solver.solve(cmdp, agent, ti, tmi + std::abs(eps), seed, warm).J_tilde;
    }
    if (base_out) *base_out = std::move(base);
    return t;
}

namespace {

GradientEstimate assemble(std::vector<double> local, std::vector<double> coupling) {
    GradientEstimate g;
    double total = 0.0;
    for (double c : coupling) total += c;
    g.g.resize(local.size());
    for (std::size_t i = 0; i < local.size(); ++i) g.g[i] = local[i] + (total - coupling[i]);
    g.local = std::move(local);
    g.coupling = std::move(coupling);
    return g;
}

} // namespace

GradientEstimate assemble_gradient(const std::vector<Triple>& triples) {
    if (triples.empty()) throw ContractViolation("assemble_gradient: no triples");
    const double h = std::abs(triples.front().eps);
    if (h == 0.0) throw ContractViolation("assemble_gradient: eps must be nonzero");
    std::vector<double> local, coupling;
    for (const Triple& t : triples) {
        if (std::abs(t.eps) != h) throw ContractViolation("assemble_gradient: agents used different eps");
        local.push_back((t.local - t.base) / t.eps);
        coupling.push_back((t.coupling - t.base) / h);
    }
    return assemble(std::move(local), std::move(coupling));
}

ConstraintVector theta_step(const ConstraintVector& theta, const GradientEstimate& g, int n,
                            const SlowSchedule& schedule) {
    if (g.g.size() != theta.size()) throw ContractViolation("theta_step: gradient size mismatch");
    std::vector<double> next(theta.values());
    const double a = schedule.alpha(n);
    for (std::size_t i = 0; i < next.size(); ++i) next[i] -= a * g.g[i];
    return ConstraintVector::projected(std::move(next), theta.theta_max());
}

double draw_perturbation(const SlowSchedule& schedule, int n, std::uint64_t seed, double theta_max) {
    Rng rng = make_stream(seed, {0x5107, static_cast<std::uint64_t>(n)});
    const double c = schedule.c(n);
    const double v = std::abs(std::normal_distribution<double>(0.0, c)(rng));
    return theta_max * std::max(v, c / 10.0);
}

// ---------------------------------------------------------------------------------------------
// reports

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string results_csv_header() {
    return "seed,config_hash,method,iteration,steps,agent,theta,J,K,lambda,J_tilde,local,coupling,gradient,"
           "eps,joint_reward,joint_reward_se,offload_frequency";
}

std::string telemetry_csv_header() { return "seed,config_hash,agent_id,outer_iter,lambda,J_hat,K_hat,epsilon"; }

namespace {

std::string cell(const std::vector<double>& v, std::size_t i) { return i < v.size() ? fmt(v[i]) : ""; }

} // namespace

void RunReport::write_csv(std::ostream& os) const {
    os << results_csv_header() << '\n';
    for (const IterationRecord& it : iterations) {
        for (std::size_t i = 0; i < n_agents; ++i) {
            os << seed << ',' << config_hash << ',' << method << ',' << it.iteration << ',' << it.steps << ',' << i
               << ',' << cell(it.theta, i) << ',' << cell(it.J, i) << ',' << cell(it.K, i) << ','
               << cell(it.lambda, i) << ',' << cell(it.J_tilde, i) << ',' << cell(it.local, i) << ','
               << cell(it.coupling, i) << ',' << cell(it.gradient, i) << ',' << fmt(it.eps) << ','
               << fmt(it.joint_reward) << ',' << fmt(it.joint_reward_se) << ',' << fmt(it.offload_frequency)
               << '\n';
        }
    }
}

void RunReport::write_telemetry_csv(std::ostream& os) const {
    os << telemetry_csv_header() << '\n';
    for (const TelemetryRow& r : telemetry)
        os << seed << ',' << config_hash << ',' << r.agent_id << ',' << r.outer_iter << ',' << fmt(r.lambda) << ','
           << fmt(r.J_hat) << ',' << fmt(r.K_hat) << ',' << fmt(r.epsilon) << '\n';
}

nlohmann::json RunReport::to_json() const {
    nlohmann::json j;
    j["method"] = method;
    j["seed"] = seed;
    j["config_hash"] = config_hash;
    j["n_agents"] = n_agents;
    j["signal_variance"] = signal_variance;
    nlohmann::json its = nlohmann::json::array();
    for (const IterationRecord& it : iterations) {
        its.push_back({{"iteration", it.iteration},
                       {"steps", it.steps},
                       {"theta", it.theta},
                       {"J", it.J},
                       {"K", it.K},
                       {"lambda", it.lambda},
                       {"J_tilde", it.J_tilde},
                       {"local", it.local},
                       {"coupling", it.coupling},
                       {"gradient", it.gradient},
                       {"eps", it.eps},
                       {"joint_reward", it.joint_reward},
                       {"joint_reward_se", it.joint_reward_se},
                       {"offload_frequency", it.offload_frequency}});
    }
    j["iterations"] = std::move(its);
    return j;
}

// ---------------------------------------------------------------------------------------------
// run

std::vector<TabularCmdp> build_device_cmdps(const std::vector<DeviceModel>& devices, std::size_t max_states) {
    std::vector<TabularCmdp> out;
    out.reserve(devices.size());
    for (const DeviceModel& m : devices) out.push_back(build_cmdp(m, 0.0, 0.0, {max_states, std::nullopt}));
    return out;
}

JointEvaluation evaluate_composed(const std::vector<TabularCmdp>& cmdps, const std::vector<AgentPolicy>& policies,
                                  const ExperimentConfig& cfg, std::uint64_t seed, int checkpoint) {
    if (cmdps.size() != policies.size()) throw ContractViolation("evaluate_composed: size mismatch");
    std::vector<ComposedAgent> agents;
    for (std::size_t i = 0; i < cmdps.size(); ++i) agents.push_back({&cmdps[i], &policies[i]});
    const double gamma = cmdps.front().discount();
    const std::size_t horizon =
        cfg.eval.horizon > 0 ? cfg.eval.horizon : truncation_horizon(gamma, cfg.solver.truncation);
    const double alpha = cmdps.front().model() ? cmdps.front().model()->penalty_alpha : cfg.env.alpha;
    const JointEstimate est = simulate_joint(agents, alpha, cfg.eval.rollouts, horizon,
                                             derive_seed(seed, {0xE7A1, static_cast<std::uint64_t>(checkpoint)}));
    return {est.J, est.J_se, est.offload_frequency, est.K};
}

RunReport run_dcc(const ExperimentConfig& cfg, const std::vector<DeviceModel>& devices,
                  const ConstrainedSolver& solver, std::uint64_t seed) {
    if (devices.empty()) throw ConfigError("run_dcc: no devices");
    const std::size_t N = devices.size();
    const std::vector<TabularCmdp> cmdps = build_device_cmdps(devices);
    const double theta_max = devices.front().theta_max();
    const SlowSchedule schedule = SlowSchedule::from(cfg.slow);

    ConstraintVector theta = cfg.slow.theta0.empty() ? ConstraintVector::zeros(N, theta_max)
                                                     : ConstraintVector(cfg.slow.theta0, theta_max);
    RunReport report;
    report.method = "dcc";
    report.seed = seed;
    report.config_hash = hex64(config_hash(cfg));
    report.n_agents = N;

    std::vector<std::shared_ptr<const FastState>> fast(N);
    const int iters = cfg.slow.iterations;
    for (int n = 0; n <= iters; ++n) {
        const bool last = n == iters;
        const double eps = last ? 0.0 : draw_perturbation(schedule, n, seed, theta_max);
        std::vector<Triple> triples(N);
        std::vector<AgentSolution> base(N);
        parallel_for(N, [&](std::size_t i) {
            const std::uint64_t s = derive_seed(seed, {static_cast<std::uint64_t>(n), i});
            if (last) {
                base[i] = solver.solve(cmdps[i], i, theta[i], theta.others(i), s, fast[i].get());
            } else {
                const double e = theta[i] + eps > theta_max ? -eps : eps;
                triples[i] = evaluate_triple(solver, cmdps[i], i, theta, e, s, &base[i], fast[i].get());
            }
            fast[i] = std::move(base[i].state);
        });

        IterationRecord rec;
        rec.iteration = n;
        rec.steps = static_cast<std::size_t>(3 * n + 1) * solver.steps_per_call();
        rec.theta = theta.values();
        rec.eps = eps;
        std::vector<AgentPolicy> policies;
        for (std::size_t i = 0; i < N; ++i) {
            rec.J.push_back(base[i].J);
            rec.K.push_back(base[i].K);
            rec.lambda.push_back(base[i].lambda);
            rec.J_tilde.push_back(base[i].J_tilde);
            for (TelemetryRow r : base[i].telemetry) {
                r.outer_iter += n * cfg.solver.outer_iters;
                report.telemetry.push_back(r);
            }
            policies.push_back(std::move(base[i].policy));
        }
        const JointEvaluation ev = evaluate_composed(cmdps, policies, cfg, seed, n);
        rec.joint_reward = ev.reward;
        rec.joint_reward_se = ev.reward_se;
        rec.offload_frequency = ev.offload_frequency;

        if (!last) {
            GradientEstimate g = assemble_gradient(triples);
            if (cfg.slow.lambda_shortcut) {
                std::vector<double> local(N);
                for (std::size_t i = 0; i < N; ++i) local[i] = -rec.lambda[i];
                g = assemble(std::move(local), std::move(g.coupling));
            }
            rec.local = g.local;
            rec.coupling = g.coupling;
            rec.gradient = g.g;
            theta = theta_step(theta, g, n, schedule);
        }
        report.iterations.push_back(std::move(rec));
    }
    return report;
}

} // namespace dcc
