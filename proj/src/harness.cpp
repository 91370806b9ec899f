#include "dcc/harness.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "dcc/baselines.hpp"
#include "dcc/errors.hpp"
#include "dcc/joint.hpp"
#include "dcc/lp_oracle.hpp"
#include "dcc/parallel.hpp"
#include "dcc/stats.hpp"

namespace dcc {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<DeviceModel> sample_instances(const SampleSets& sets, std::size_t n, std::uint64_t seed,
                                          double alpha) {
    if (n == 0) throw ConfigError("sample_instances: n must be positive");
    Rng rng = make_stream(seed, {0x1257});
    auto pick = [&](const std::vector<int>& v) {
        return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
    };
    std::vector<DeviceModel> out;
    for (int attempts = 0; out.size() < n; ++attempts) {
        if (attempts > 100000) throw ConfigError("sample_instances: no valid instance in the sample sets");
        const int min_h = pick(sets.min_H);
        const int max_h = pick(sets.max_H);
        const int min_c = pick(sets.min_C);
        const int max_c = pick(sets.max_C);
        if (max_h < min_h || max_c < min_c) continue;
        DeviceModel m;
        m.aoi_cap = sets.M;
        m.battery_cap = sets.B;
        m.harvest = MarkovChain::make(sets.kind, min_h, max_h);
        m.cost = MarkovChain::make(sets.kind, min_c, max_c);
        m.penalty_alpha = alpha;
        m.discount = sets.gamma;
        if (!check_crowd_incentive(m)) continue;
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<double> normalize_rewards(std::span<const double> raw, double baseline) {
    if (baseline == 0.0) throw DomainError("normalize_rewards: baseline is zero");
    std::vector<double> out;
    out.reserve(raw.size());
    for (double r : raw) out.push_back(r / baseline);
    return out;
}

std::vector<DeviceModel> system_devices(const ExperimentConfig& cfg, std::uint64_t seed) {
    const auto n = static_cast<std::size_t>(cfg.env.n_agents);
    if (cfg.env.sample_devices) {
        SampleSets sets;
        sets.M = cfg.env.M;
        sets.B = cfg.env.B;
        sets.gamma = cfg.env.gamma;
        sets.kind = cfg.env.harvest.kind;
        return sample_instances(sets, n, seed, cfg.env.alpha);
    }
    return std::vector<DeviceModel>(n, cfg.env.device_model());
}

ExperimentConfig fast_config(ExperimentConfig cfg) {
    cfg.solver.steps = std::max<std::size_t>(cfg.solver.steps / 10, static_cast<std::size_t>(cfg.solver.outer_iters));
    return cfg;
}

std::string to_string(Method m) {
    switch (m) {
    case Method::Dcc: return "dcc";
    case Method::Iql: return "iql";
    case Method::IqlCommon: return "iql_common";
    }
    return "?";
}

RunReport run_method(Method m, const ExperimentConfig& cfg, const std::vector<DeviceModel>& devices,
                     std::uint64_t seed) {
    switch (m) {
    case Method::Dcc: return run_dcc(cfg, devices, QlSolver(cfg.solver), seed);
    case Method::Iql: return train_iql(cfg, devices, seed, IqlSignal::Selfish);
    case Method::IqlCommon: return train_iql(cfg, devices, seed, IqlSignal::Common);
    }
    throw ContractViolation("unknown method");
}

std::vector<SeedRuns> run_batch(const ExperimentConfig& cfg, const std::vector<Method>& methods, std::uint64_t seed,
                                int runs) {
    if (runs < 1) throw ConfigError("runs must be >= 1");
    const std::size_t nm = methods.size();
    std::vector<SeedRuns> out(static_cast<std::size_t>(runs));
    for (int r = 0; r < runs; ++r) {
        out[static_cast<std::size_t>(r)].seed = seed + static_cast<std::uint64_t>(r);
        out[static_cast<std::size_t>(r)].reports.resize(nm);
    }
    // one task per (run, method); devices depend on the run seed only
    parallel_for(out.size() * nm, [&](std::size_t k) {
        SeedRuns& sr = out[k / nm];
        const std::vector<DeviceModel> devices = system_devices(cfg, sr.seed);
        sr.reports[k % nm] = run_method(methods[k % nm], cfg, devices, sr.seed);
    });
    return out;
}

double normalized_final_reward(const RunReport& report, const RunReport& dcc_reference) {
    if (report.iterations.empty() || dcc_reference.iterations.empty())
        throw ContractViolation("normalized_final_reward: empty report");
    const double base = dcc_reference.iterations.front().joint_reward;
    const double raw = report.iterations.back().joint_reward;
    return normalize_rewards(std::span<const double>(&raw, 1), base).front();
}

// ---------------------------------------------------------------------------------------------
// verification experiments

DeviceModel small_instance(Rng& rng, double alpha) {
    auto uni = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    for (;;) {
        DeviceModel m;
        m.aoi_cap = uni(3, 5);
        m.battery_cap = uni(2, 4);
        const int min_h = uni(0, 1);
        m.harvest = MarkovChain::birth_death(min_h, min_h + uni(0, 1));
        m.cost = MarkovChain::birth_death(1, uni(2, 3));
        m.penalty_alpha = alpha;
        m.discount = 0.95;
        if (check_crowd_incentive(m)) return m;
    }
}

namespace {

DeviceModel tiny_instance(Rng& rng, double alpha) {
    auto uni = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    for (;;) {
        DeviceModel m;
        m.aoi_cap = uni(2, 3);
        m.battery_cap = uni(1, 2);
        const int min_h = uni(0, 1);
        m.harvest = MarkovChain::birth_death(min_h, min_h + uni(0, 1));
        m.cost = MarkovChain::birth_death(1, 2);
        m.penalty_alpha = alpha;
        m.discount = 0.95;
        if (check_crowd_incentive(m)) return m;
    }
}

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

// Unconstrained discounted offload count of the optimal policy.
double unconstrained_cost(const TabularCmdp& c) { return solve_cmdp_lp(c, c.theta_max(), nullptr, c.num_states()).cost; }

// LP policy of a device at a random budget in its binding region; nullopt if it never offloads.
std::optional<AgentPolicy> random_lp_policy(const TabularCmdp& base, Rng& rng) {
    const double tmi = uniform(rng, 0.0, 3.0) * base.theta_max();
    const TabularCmdp c = base.with_theta(0.0, tmi);
    const double k_unc = unconstrained_cost(c);
    if (k_unc < 1e-6) return std::nullopt;
    const double ti = uniform(rng, 0.05, 0.95) * k_unc;
    return policy_from_occupancy(c, solve_cmdp_lp(c, ti, nullptr, c.num_states()));
}

// Agents restarted in their stationary distributions, with each CMDP's congestion argument set
// to the other agents' realized offload rates.
struct StationarySystem {
    std::vector<TabularCmdp> cmdps;
    std::vector<AgentPolicy> policies;
    std::vector<std::vector<double>> dists;
    std::vector<double> rates;

    std::vector<ComposedAgent> agents() const {
        std::vector<ComposedAgent> a;
        for (std::size_t i = 0; i < cmdps.size(); ++i) a.push_back({&cmdps[i], &policies[i]});
        return a;
    }
    double approx_value() const {
        double total = 0.0;
        for (std::size_t i = 0; i < cmdps.size(); ++i) total += discounted_value(cmdps[i], policies[i]).J;
        return total;
    }
};

StationarySystem stationary_system(Rng& rng, std::size_t n, double alpha, bool tiny) {
    StationarySystem sys;
    std::vector<TabularCmdp> bases;
    while (bases.size() < n) {
        const DeviceModel m = tiny ? tiny_instance(rng, alpha) : small_instance(rng, alpha);
        TabularCmdp base = build_cmdp(m, 0.0, 0.0);
        auto pol = random_lp_policy(base, rng);
        if (!pol) continue;
        sys.dists.push_back(stationary_distribution(base, *pol));
        sys.rates.push_back(offload_rate(base, *pol, sys.dists.back()));
        sys.policies.push_back(std::move(*pol));
        bases.push_back(std::move(base));
    }
    double total = 0.0;
    for (double f : sys.rates) total += f;
    for (std::size_t i = 0; i < n; ++i) {
        const double tm = bases[i].theta_max();
        sys.cmdps.push_back(bases[i].with_theta(tm * sys.rates[i], tm * (total - sys.rates[i])).with_initial(sys.dists[i]));
    }
    return sys;
}

} // namespace

GradientCheck gradient_check(const TabularCmdp& cmdp, double theta_i, double theta_minus_i, double eps) {
    const TabularCmdp c = cmdp.with_theta(theta_i, theta_minus_i);
    const std::size_t cap = c.num_states();
    const OccupancyMeasure at = solve_cmdp_lp(c, theta_i, nullptr, cap);
    const OneSidedSlopes local = lp_value_slopes(c, at, eps);
    const double up = solve_cmdp_lp(cmdp.with_theta(theta_i, theta_minus_i + eps), theta_i, &at.basis, cap).objective;
    const double down = solve_cmdp_lp(cmdp.with_theta(theta_i, theta_minus_i - eps), theta_i, &at.basis, cap).objective;
    const double tm = c.theta_max();
    const double alpha = c.model()->penalty_alpha;

    GradientCheck g;
    g.alpha = alpha;
    g.states = c.num_states();
    g.theta_i = theta_i;
    g.theta_minus_i = theta_minus_i;
    g.K = at.cost;
    g.local_fd = local.right;
    g.local_left = local.left;
    g.neg_lambda_over_theta_max = -at.lambda / tm;
    g.coupling_fd = (up - at.objective) / eps;
    g.coupling_left = (at.objective - down) / eps;
    g.coupling_analytic = theta_i / tm * penalty_derivative(1.0 + theta_minus_i / tm, alpha);
    return g;
}

GradientCheck random_gradient_check(Rng& rng, double alpha, double eps) {
    for (;;) {
        const TabularCmdp base = build_cmdp(small_instance(rng, alpha), 0.0, 0.0);
        // keep theta_-i away from 0 so the coupling difference stays inside the domain
        const double tmi = uniform(rng, 0.1, 3.0) * base.theta_max();
        const double k_unc = unconstrained_cost(base.with_theta(0.0, tmi));
        if (k_unc < 1e-6) continue;
        const double ti = uniform(rng, 0.05, 0.95) * k_unc;
        return gradient_check(base, ti, tmi, eps);
    }
}

BoundCheck random_bound_check(Rng& rng, double alpha, std::size_t n_agents, int rollouts, std::size_t horizon,
                              std::uint64_t sim_seed) {
    const StationarySystem sys = stationary_system(rng, n_agents, alpha, false);
    const auto agents = sys.agents();
    const JointEstimate mc = simulate_joint(agents, alpha, rollouts, horizon, sim_seed);
    BoundCheck b;
    b.alpha = alpha;
    b.n_agents = n_agents;
    b.J_mc = mc.J;
    b.J_se = mc.J_se;
    b.J_exact = stationary_joint_value(agents, sys.dists, alpha);
    b.J_approx = sys.approx_value();
    b.error = std::abs(b.J_mc - b.J_approx);
    b.bound = approximation_bound(sys.rates, sys.cmdps.front().discount(), alpha);
    return b;
}

double ExactnessCheck::rel_error() const { return std::abs(joint - approx) / std::max(std::abs(joint), 1e-300); }

ExactnessCheck random_exactness_check(Rng& rng, std::size_t n_agents) {
    const StationarySystem sys = stationary_system(rng, n_agents, 1.0, true);
    return {product_chain_value(sys.agents(), 1.0), sys.approx_value()};
}

// ---------------------------------------------------------------------------------------------
// CLI experiments

namespace {

fs::path seed_dir(const CliOptions& opt, const std::string& experiment, std::uint64_t seed) {
    fs::path p = opt.out / experiment / std::to_string(seed);
    fs::create_directories(p);
    return p;
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + p.string());
    f << content;
}

json mean_sd(const std::vector<double>& v) {
    return {{"mean", v.empty() ? 0.0 : mean(v)}, {"stdev", stdev(v)}, {"n", v.size()}};
}

ExperimentConfig effective(ExperimentConfig cfg, const CliOptions& opt) {
    if (opt.alpha) cfg.env.alpha = *opt.alpha;
    if (opt.fast) cfg = fast_config(cfg);
    return cfg;
}

} // namespace

void experiment_train(Method m, ExperimentConfig cfg, const CliOptions& opt) {
    cfg = effective(cfg, opt);
    const std::string name = m == Method::Dcc ? "train-dcc" : (m == Method::Iql ? "train-iql" : "train-iql-common");
    const auto runs = run_batch(cfg, {m}, opt.seed, opt.runs);
    std::vector<double> finals, freqs;
    for (const SeedRuns& sr : runs) {
        const RunReport& rep = sr.reports.front();
        const fs::path dir = seed_dir(opt, name, sr.seed);
        std::ostringstream csv, tel;
        rep.write_csv(csv);
        write_file(dir / "results.csv", csv.str());
        if (!rep.telemetry.empty()) {
            rep.write_telemetry_csv(tel);
            write_file(dir / "telemetry.csv", tel.str());
        }
        write_file(dir / "report.json", rep.to_json().dump(2) + "\n");
        finals.push_back(rep.iterations.back().joint_reward);
        freqs.push_back(rep.iterations.back().offload_frequency);
    }
    json s{{"experiment", name},
           {"method", to_string(m)},
           {"config_hash", hex64(config_hash(cfg))},
           {"config", to_json(cfg)},
           {"seeds", {opt.seed, opt.seed + static_cast<std::uint64_t>(opt.runs) - 1}},
           {"final_joint_reward", mean_sd(finals)},
           {"final_offload_frequency", mean_sd(freqs)}};
    if (m == Method::Dcc) {
        std::vector<double> norm;
        for (const SeedRuns& sr : runs) norm.push_back(normalized_final_reward(sr.reports.front(), sr.reports.front()));
        s["final_normalized_reward"] = mean_sd(norm);
    }
    write_file(opt.out / name / "summary.json", s.dump(2) + "\n");
}

void experiment_lp_solve(ExperimentConfig cfg, const CliOptions& opt) {
    cfg = effective(cfg, opt);
    const DeviceModel m = system_devices(cfg, opt.seed).front();
    const TabularCmdp base = build_cmdp(m, 0.0, 0.0);
    const double ti = opt.theta.value_or(0.5 * base.theta_max());
    const TabularCmdp c = base.with_theta(ti, opt.theta_minus);
    const OccupancyMeasure occ = solve_cmdp_lp(c, ti, nullptr, opt.max_states);
    const fs::path dir = seed_dir(opt, "lp-solve", opt.seed);
    std::ostringstream csv;
    csv << "seed,config_hash,states,theta_i,theta_minus_i,objective,cost,lambda,lambda_raw,iterations\n"
        << opt.seed << ',' << hex64(config_hash(cfg)) << ',' << c.num_states() << ',' << fmt(ti) << ','
        << fmt(opt.theta_minus) << ',' << fmt(occ.objective) << ',' << fmt(occ.cost) << ',' << fmt(occ.lambda) << ','
        << fmt(occ.lambda_raw) << ',' << occ.iterations << '\n';
    write_file(dir / "results.csv", csv.str());
    if (opt.lp_dump) {
        std::ofstream f(*opt.lp_dump);
        if (!f) throw ConfigError("cannot write " + *opt.lp_dump);
        write_lp_format(f, c, ti);
    }
    json s{{"experiment", "lp-solve"}, {"config_hash", hex64(config_hash(cfg))}, {"states", c.num_states()},
           {"objective", occ.objective}, {"cost", occ.cost}, {"lambda", occ.lambda}};
    write_file(opt.out / "lp-solve" / "summary.json", s.dump(2) + "\n");
}

void experiment_verify_gradient(ExperimentConfig cfg, const CliOptions& opt) {
    cfg = effective(cfg, opt);
    Rng rng = make_stream(opt.seed, {0x96AD});
    std::ostringstream csv;
    csv << "seed,config_hash,instance,alpha,states,theta_i,theta_minus_i,K,local_fd,local_left,"
           "neg_lambda_over_theta_max,coupling_fd,coupling_left,coupling_analytic\n";
    std::vector<double> local_err, coupling_err;
    for (int k = 0; k < opt.runs; ++k) {
        const GradientCheck g = random_gradient_check(rng, cfg.env.alpha, opt.eps);
        csv << opt.seed << ',' << hex64(config_hash(cfg)) << ',' << k << ',' << fmt(g.alpha) << ',' << g.states << ','
            << fmt(g.theta_i) << ',' << fmt(g.theta_minus_i) << ',' << fmt(g.K) << ',' << fmt(g.local_fd) << ','
            << fmt(g.local_left) << ',' << fmt(g.neg_lambda_over_theta_max) << ',' << fmt(g.coupling_fd) << ','
            << fmt(g.coupling_left) << ',' << fmt(g.coupling_analytic) << '\n';
        local_err.push_back(std::abs(g.local_fd - g.neg_lambda_over_theta_max));
        coupling_err.push_back(std::abs(g.coupling_fd - g.coupling_analytic));
    }
    write_file(seed_dir(opt, "verify-gradient", opt.seed) / "results.csv", csv.str());
    json s{{"experiment", "verify-gradient"}, {"eps", opt.eps}, {"alpha", cfg.env.alpha},
           {"abs_error_local", mean_sd(local_err)}, {"abs_error_coupling", mean_sd(coupling_err)}};
    write_file(opt.out / "verify-gradient" / "summary.json", s.dump(2) + "\n");
}

void experiment_verify_bound(ExperimentConfig cfg, const CliOptions& opt) {
    cfg = effective(cfg, opt);
    Rng rng = make_stream(opt.seed, {0xB0AD});
    std::ostringstream csv;
    csv << "seed,config_hash,instance,alpha,n_agents,empirical_error,standard_error,bound,J_mc,J_exact,J_approx\n";
    int within = 0;
    for (int k = 0; k < opt.runs; ++k) {
        const BoundCheck b = random_bound_check(rng, cfg.env.alpha, static_cast<std::size_t>(cfg.env.n_agents), 200,
                                                400, derive_seed(opt.seed, {0xB0AD, static_cast<std::uint64_t>(k)}));
        within += b.within();
        csv << opt.seed << ',' << hex64(config_hash(cfg)) << ',' << k << ',' << fmt(b.alpha) << ',' << b.n_agents
            << ',' << fmt(b.error) << ',' << fmt(b.J_se) << ',' << fmt(b.bound) << ',' << fmt(b.J_mc) << ','
            << fmt(b.J_exact) << ',' << fmt(b.J_approx) << '\n';
    }
    write_file(seed_dir(opt, "verify-bound", opt.seed) / "results.csv", csv.str());
    json s{{"experiment", "verify-bound"}, {"alpha", cfg.env.alpha}, {"instances", opt.runs}, {"within_bound", within}};
    write_file(opt.out / "verify-bound" / "summary.json", s.dump(2) + "\n");
}

void experiment_scalability(ExperimentConfig cfg, const CliOptions& opt) {
    cfg = effective(cfg, opt);
    const std::vector<Method> methods{Method::Dcc, Method::Iql, Method::IqlCommon};
    std::map<std::uint64_t, std::ostringstream> rows;
    std::map<std::string, std::vector<double>> per_group;
    for (int n : {10, 20, 50}) {
        ExperimentConfig c = cfg;
        c.env.n_agents = n;
        c.slow.theta0.clear();
        const std::string hash = hex64(config_hash(c));
        for (const SeedRuns& sr : run_batch(c, methods, opt.seed, opt.runs)) {
            std::ostringstream& os = rows[sr.seed];
            for (std::size_t k = 0; k < methods.size(); ++k) {
                const RunReport& rep = sr.reports[k];
                const double norm = normalized_final_reward(rep, sr.reports.front());
                os << sr.seed << ',' << hash << ',' << to_string(methods[k]) << ',' << n << ','
                   << fmt(rep.iterations.back().joint_reward) << ',' << fmt(sr.reports.front().iterations.front().joint_reward)
                   << ',' << fmt(norm) << '\n';
                per_group[to_string(methods[k]) + "/" + std::to_string(n)].push_back(norm);
            }
        }
    }
    for (auto& [seed, os] : rows)
        write_file(seed_dir(opt, "scalability", seed) / "results.csv",
                   "seed,config_hash,method,n_agents,final_reward,baseline,normalized_reward\n" + os.str());
    json groups;
    for (const auto& [k, v] : per_group) groups[k] = mean_sd(v);
    json s{{"experiment", "scalability"}, {"normalized_final_reward", groups}};
    write_file(opt.out / "scalability" / "summary.json", s.dump(2) + "\n");
}

void experiment_frequency(ExperimentConfig cfg, const CliOptions& opt) {
    cfg = effective(cfg, opt);
    const std::vector<Method> methods{Method::Dcc, Method::Iql, Method::IqlCommon};
    const std::string hash = hex64(config_hash(cfg));
    std::map<std::string, std::vector<double>> finals;
    for (const SeedRuns& sr : run_batch(cfg, methods, opt.seed, opt.runs)) {
        std::ostringstream os;
        os << "seed,config_hash,method,checkpoint,steps,offload_frequency,joint_reward,normalized_reward\n";
        const double base = sr.reports.front().iterations.front().joint_reward;
        for (std::size_t k = 0; k < methods.size(); ++k) {
            for (const IterationRecord& it : sr.reports[k].iterations)
                os << sr.seed << ',' << hash << ',' << to_string(methods[k]) << ',' << it.iteration << ',' << it.steps
                   << ',' << fmt(it.offload_frequency) << ',' << fmt(it.joint_reward) << ','
                   << fmt(it.joint_reward / base) << '\n';
            finals[to_string(methods[k])].push_back(sr.reports[k].iterations.back().offload_frequency);
        }
        write_file(seed_dir(opt, "frequency", sr.seed) / "results.csv", os.str());
    }
    json groups;
    for (const auto& [k, v] : finals) groups[k] = mean_sd(v);
    json s{{"experiment", "frequency"}, {"config_hash", hash}, {"final_offload_frequency", groups}};
    write_file(opt.out / "frequency" / "summary.json", s.dump(2) + "\n");
}

} // namespace dcc
