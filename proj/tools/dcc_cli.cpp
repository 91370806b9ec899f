#include <CLI11.hpp>

#include <iostream>

#include "dcc/config.hpp"
#include "dcc/errors.hpp"
#include "dcc/harness.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Decentralized constrained coordination for task offloading"};
    app.require_subcommand(1);

    std::string config_path;
    dcc::CliOptions opt;
    std::string out = opt.out.string();
    double alpha = 0.0, theta = 0.0;

    auto common = [&](CLI::App* s) {
        s->add_option("--config", config_path, "JSON config file");
        s->add_option("--seed", opt.seed, "master seed");
        s->add_option("--out", out, "output directory");
        s->add_flag("--fast", opt.fast, "learning budgets divided by 10");
        s->add_option("--alpha", alpha, "penalty exponent override");
    };
    auto with_runs = [&](CLI::App* s) { s->add_option("--runs", opt.runs, "independent runs / instances")->check(CLI::PositiveNumber); };

    CLI::App* train_dcc = app.add_subcommand("train-dcc", "train DCC");
    CLI::App* train_iql = app.add_subcommand("train-iql", "train independent Q-learning, selfish reward");
    CLI::App* train_iqlc = app.add_subcommand("train-iql-common", "train independent Q-learning, common reward");
    CLI::App* lp = app.add_subcommand("lp-solve", "solve one device's CMDP by linear programming");
    CLI::App* vgrad = app.add_subcommand("verify-gradient", "finite differences against the analytic gradient");
    CLI::App* vbound = app.add_subcommand("verify-bound", "approximation error against its bound");
    CLI::App* scal = app.add_subcommand("scalability", "normalized reward for N = 10, 20, 50");
    CLI::App* freq = app.add_subcommand("frequency", "offload frequency over training");

    for (CLI::App* s : {train_dcc, train_iql, train_iqlc, lp, vgrad, vbound, scal, freq}) common(s);
    for (CLI::App* s : {train_dcc, train_iql, train_iqlc, vgrad, vbound, scal, freq}) with_runs(s);
    vgrad->add_option("--eps", opt.eps, "finite-difference step")->check(CLI::PositiveNumber);
    lp->add_option("--theta", theta, "budget theta_i (default theta_max / 2)");
    lp->add_option("--theta-minus", opt.theta_minus, "aggregate theta_-i");
    lp->add_option("--lp-dump", opt.lp_dump, "write the LP in CPLEX LP format");
    lp->add_option("--max-states", opt.max_states, "state-count cap");

    CLI11_PARSE(app, argc, argv);

    try {
        dcc::ExperimentConfig cfg = config_path.empty() ? dcc::ExperimentConfig{} : dcc::load_config(config_path);
        opt.out = out;
        CLI::App* sub = app.get_subcommands().front();
        if (sub->count("--alpha")) opt.alpha = alpha;
        if (sub == lp && lp->count("--theta")) opt.theta = theta;

        if (sub == train_dcc) dcc::experiment_train(dcc::Method::Dcc, cfg, opt);
        else if (sub == train_iql) dcc::experiment_train(dcc::Method::Iql, cfg, opt);
        else if (sub == train_iqlc) dcc::experiment_train(dcc::Method::IqlCommon, cfg, opt);
        else if (sub == lp) dcc::experiment_lp_solve(cfg, opt);
        else if (sub == vgrad) dcc::experiment_verify_gradient(cfg, opt);
        else if (sub == vbound) dcc::experiment_verify_bound(cfg, opt);
        else if (sub == scal) dcc::experiment_scalability(cfg, opt);
        else if (sub == freq) dcc::experiment_frequency(cfg, opt);
    } catch (const dcc::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
