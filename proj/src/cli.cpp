#include "fmc/cli.hpp"

#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "fmc/chainmap.hpp"
#include "fmc/closure.hpp"
#include "fmc/config.hpp"
#include "fmc/csv.hpp"
#include "fmc/errors.hpp"
#include "fmc/experiments.hpp"
#include "fmc/gaussian.hpp"
#include "fmc/specdens.hpp"

namespace fmc {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Common {
    std::string config;
    std::string out = "out";
    std::vector<std::string> overrides;
    unsigned jobs = 1;
};

// Collects everything a run writes so the manifest can list it.
struct Run {
    std::string command;
    Common common;
    json options = json::object();
    json config = nullptr;
    std::vector<std::string> outputs;
    json acceptance = json::object();
    std::vector<std::string> warnings;
    std::ostream* log = nullptr;

    void write(const std::string& name, const std::string& text) {
        write_text(fs::path(common.out) / name, text);
        outputs.push_back(name);
        *log << "wrote " << (fs::path(common.out) / name).string() << "\n";
    }

    void finish() {
        json m;
        m["command"] = command;
        m["version"] = version;
        m["config_path"] = common.config.empty() ? json(nullptr) : json(common.config);
        m["overrides"] = common.overrides;
        m["options"] = options;
        m["config"] = config;
        m["outputs"] = outputs;
        m["acceptance"] = acceptance;
        m["warnings"] = warnings;
        write_text(fs::path(common.out) / "manifest.json", m.dump(2) + "\n");
    }
};

ExperimentConfig need_config(Run& run) {
    if (run.common.config.empty())
        throw ConfigError("--config is required for " + run.command);
    ExperimentConfig cfg = load_config(run.common.config, run.common.overrides);
    run.config = cfg.resolved;
    return cfg;
}

void add_common(CLI::App* sub, Common& c, bool config_required) {
    auto* opt = sub->add_option("-c,--config", c.config, "experiment config (JSON)");
    if (config_required)
        opt->required();
    sub->add_option("-o,--out", c.out, "output directory")->capture_default_str();
    sub->add_option("--set", c.overrides, "config override key.path=value (repeatable)");
    sub->add_option("-j,--jobs", c.jobs, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
}

std::string density_table(const SpectralDensity& j, std::size_t points) {
    std::ostringstream os;
    os << "omega,j\n";
    if (j.is_zero())
        return os.str();
    const Interval h = j.hull();
    for (std::size_t i = 0; i < points; ++i) {
        const double w = h.lo + h.width() * static_cast<double>(i) / static_cast<double>(points - 1);
        os << format_double(w) << "," << format_double(j(w)) << "\n";
    }
    return os.str();
}

const char* side_name(int s) { return s == 0 ? "empty" : "filled"; }

void gate(Run& run, const std::string& key, double value, std::optional<double> limit) {
    run.acceptance[key] = {{"value", value}};
    if (limit) {
        run.acceptance[key]["limit"] = *limit;
        run.acceptance[key]["pass"] = value <= *limit;
    }
}

void cmd_modulate(Run& run, std::size_t points) {
    ExperimentConfig cfg = need_config(run);
    EquivalentEnvironments env = equivalent_environments(cfg.leads);
    run.warnings = env.warnings;
    for (int s = 0; s < 2; ++s) {
        run.write(std::string("environment_") + side_name(s) + ".csv", density_table(env.side(s), points));
        if (!env.side(s).is_zero()) {
            SzegoReport z = szego_diagnostic(env.side(s));
            run.acceptance[std::string("szego_") + side_name(s)] = {{"integral_j", z.integral_j},
                                                                    {"log_integral", z.log_integral},
                                                                    {"pass", z.passed}};
        }
    }
}

void cmd_chain(Run& run) {
    ExperimentConfig cfg = need_config(run);
    if (cfg.chain_source == "density") {
        const LeadSpec& lead = cfg.leads.front();
        SpectralDensity j = lead.density.scaled(lead.kappa.front() * lead.kappa.front());
        ChainCoefficients c = chain_coefficients(j, cfg.n_sites, cfg.quadrature_nodes);
        run.write("chain.csv", chain_csv(c));
        std::vector<double> d = coefficient_deviation(c);
        gate(run, "max_deviation", d.empty() ? 0.0 : *std::max_element(d.begin(), d.end()), cfg.gate);
        return;
    }
    EquivalentEnvironments env = equivalent_environments(cfg.leads);
    run.warnings = env.warnings;
    for (int s = 0; s < 2; ++s) {
        if (env.side(s).is_zero()) {
            run.warnings.push_back(std::string(side_name(s)) + " environment is zero; no chain written");
            continue;
        }
        ChainCoefficients c = chain_coefficients(env.side(s), cfg.n_sites, cfg.quadrature_nodes);
        run.write(std::string("chain_") + side_name(s) + ".csv", chain_csv(c));
    }
}

struct FitArgs {
    std::vector<std::size_t> n_modes;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> starts, refine, hops, n_grid;
    std::optional<double> tolerance, t_max;
};

void cmd_closure_fit(Run& run, const FitArgs& a) {
    ExperimentConfig cfg;
    if (!run.common.config.empty())
        cfg = need_config(run);
    ClosureFitOptions opt = cfg.fit;
    if (a.seed) opt.seed = *a.seed;
    if (a.starts) opt.n_starts = *a.starts;
    if (a.refine) opt.n_refine = *a.refine;
    if (a.hops) opt.n_hops = *a.hops;
    if (a.n_grid) opt.n_grid = *a.n_grid;
    if (a.tolerance) opt.tolerance = *a.tolerance;
    if (a.t_max) opt.t_max = *a.t_max;
    opt.jobs = run.common.jobs;
    std::vector<std::size_t> modes = a.n_modes.empty() ? cfg.n_c : a.n_modes;
    run.options["fit"] = {{"seed", opt.seed},       {"n_starts", opt.n_starts}, {"n_refine", opt.n_refine},
                          {"n_hops", opt.n_hops},   {"n_grid", opt.n_grid},     {"t_max", opt.t_max},
                          {"tolerance", opt.tolerance}, {"n_modes", modes}};
    for (auto n : modes) {
        UniversalClosure u = fit_universal_closure(n, opt);
        const std::string tag = std::to_string(n);
        run.write("closure_" + tag + ".csv", closure_table_csv(u));
        run.write("fit_" + tag + ".csv", fit_report_csv(u, opt.t_max, opt.n_grid));
        gate(run, "fit_residual_" + tag, u.fit_residual,
             opt.tolerance > 0.0 ? opt.tolerance : default_fit_tolerance(n));
    }
}

void cmd_closure_rescale(Run& run, const std::string& table, std::optional<double> omega,
                         std::optional<double> kappa, const std::string& fill) {
    if (omega && kappa) {
        if (table.empty())
            throw ConfigError("--table is required with --omega/--kappa");
        UniversalClosure u = load_closure_table(table);
        Fill f = fill_from_string(fill);
        run.write("closure_params_" + to_string(f) + ".csv", closure_params_csv(rescale_closure(u, *omega, *kappa, f)));
        return;
    }
    if (omega || kappa)
        throw ConfigError("give both --omega and --kappa, or neither");
    ExperimentConfig cfg = need_config(run);
    UniversalClosure u = table.empty() ? closure_table_for(cfg, cfg.n_c.front()) : load_closure_table(table);
    EquivalentEnvironments env = equivalent_environments(cfg.leads);
    run.warnings = env.warnings;
    for (int s = 0; s < 2; ++s) {
        if (env.side(s).is_zero())
            continue;
        Asymptotics a = asymptotics(env.side(s).hull());
        Fill f = s == 0 ? Fill::empty : Fill::filled;
        run.write("closure_params_" + to_string(f) + ".csv", closure_params_csv(rescale_closure(u, a.omega, a.kappa, f)));
    }
}

void cmd_simulate(Run& run) {
    ExperimentConfig cfg = need_config(run);
    EquivalentEnvironments env = equivalent_environments(cfg.leads);
    run.warnings = env.warnings;
    UniversalClosure u = closure_table_for(cfg, cfg.n_c.front());
    SideSpec sides[2];
    double k_max = 0.0;
    for (int s = 0; s < 2; ++s) {
        if (env.side(s).is_zero())
            throw std::invalid_argument(std::string(side_name(s)) + " environment is zero");
        ChainCoefficients c = chain_coefficients(env.side(s), cfg.n_e + 1, cfg.quadrature_nodes);
        k_max = std::max(k_max, c.asym_kappa);
        sides[s] = SideSpec{c, cfg.n_e,
                            rescale_closure(u, c.asym_omega, c.asym_kappa, s == 0 ? Fill::empty : Fill::filled)};
    }
    QuadraticLindbladSystem sys = assemble(cfg.epsilon, sides[0], sides[1]);
    sys.ramp_tau = cfg.ramp_tau;
    EvolveOptions opt;
    opt.record_every = cfg.record_every;
    const double dt = cfg.dt > 0.0 ? cfg.dt : default_time_step(k_max);
    run.options["dt"] = dt;
    Trajectory tr = evolve(sys, initial_correlation(sys, cfg.system_filled), cfg.t_max, dt, opt);
    run.write("trajectory.csv", trajectory_csv(tr));
}

void cmd_reconstruct(Run& run) {
    ExperimentConfig cfg = need_config(run);
    run.warnings = equivalent_environments(cfg.leads).warnings;
    ReconstructionReport rep = run_sd_reconstruction(cfg, run.common.jobs);
    for (int s = 0; s < 2; ++s) {
        const auto& side = rep.sides[s];
        if (side.omega.empty())
            continue;
        run.write(std::string("reconstruction_") + side_name(s) + ".csv", ReconstructionReport::csv(side));
        gate(run, std::string("max_err_outside_kinks_") + side_name(s), side.max_err_outside_kinks, cfg.gate);
    }
}

void cmd_bench(Run& run) {
    ExperimentConfig cfg = need_config(run);
    run.warnings = equivalent_environments(cfg.leads).warnings;
    for (const auto& rep : run_siam_benchmark(cfg, run.common.jobs)) {
        const std::string tag = std::to_string(rep.n_c);
        run.write("comparison_nc" + tag + ".csv", rep.csv());
        gate(run, "max_error_nc" + tag, rep.max_error_after_transient, cfg.gate);
        run.acceptance["max_error_nc" + tag]["transient_cutoff"] = rep.transient_cutoff;
        run.acceptance["max_error_nc" + tag]["horizon"] = rep.horizon;
    }
}

void cmd_equilibrate(Run& run) {
    ExperimentConfig cfg = need_config(run);
    run.warnings = equivalent_environments(cfg.leads).warnings;
    for (const auto& rep : run_adiabatic_equilibration(cfg, run.common.jobs)) {
        const std::string tag = std::to_string(rep.comparison.n_c);
        run.write("equilibration_nc" + tag + ".csv", rep.comparison.csv());
        run.write("final_nc" + tag + ".csv", rep.final_csv());
        gate(run, "max_final_diff_nc" + tag, rep.max_final_diff, cfg.gate);
    }
}

void cmd_convergence(Run& run) {
    ExperimentConfig cfg = need_config(run);
    run.warnings = equivalent_environments(cfg.leads).warnings;
    ConvergenceReport rep = chain_convergence_report(cfg.leads, cfg.n_sites, cfg.quadrature_nodes,
                                                     cfg.truncation_epsilon);
    run.write("convergence.csv", rep.csv());
    for (int s = 0; s < 2; ++s) {
        json t = rep.truncation[s] == std::numeric_limits<std::size_t>::max() ? json(nullptr) : json(rep.truncation[s]);
        run.acceptance[std::string("truncation_") + side_name(s)] = {{"epsilon", cfg.truncation_epsilon}, {"index", t}};
    }
}

} // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Fermionic Markovian-closure toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", version);

    Common common;
    std::size_t points = 2001;
    FitArgs fit;
    std::string table, fill = "empty";
    std::optional<double> omega, kappa;

    auto* modulate = app.add_subcommand("modulate", "tabulate the two equivalent environments");
    add_common(modulate, common, true);
    modulate->add_option("--points", points, "grid points per density")->check(CLI::Range(2, 10000000));
    auto* chain = app.add_subcommand("chain-coeffs", "chain-mapping coefficients");
    add_common(chain, common, true);
    auto* cfit = app.add_subcommand("closure-fit", "fit universal closure tables");
    add_common(cfit, common, false);
    cfit->add_option("-n,--n-modes", fit.n_modes, "closure sizes (repeatable)");
    cfit->add_option("--seed", fit.seed, "random seed");
    cfit->add_option("--starts", fit.starts, "multistart count");
    cfit->add_option("--refine", fit.refine, "starts passed to minimax refinement");
    cfit->add_option("--hops", fit.hops, "basin-hopping perturbations");
    cfit->add_option("--n-grid", fit.n_grid, "fit grid points");
    cfit->add_option("--t-max", fit.t_max, "fit window");
    cfit->add_option("--tolerance", fit.tolerance, "maximum allowed fit error");
    auto* rescale = app.add_subcommand("closure-rescale", "rescale a closure table to a chain");
    add_common(rescale, common, false);
    rescale->add_option("--table", table, "closure table CSV");
    rescale->add_option("--omega", omega, "asymptotic on-site energy");
    rescale->add_option("--kappa", kappa, "asymptotic hopping");
    rescale->add_option("--fill", fill, "empty or filled")->check(CLI::IsMember({"empty", "filled"}));
    auto* simulate = app.add_subcommand("simulate", "evolve the FMC network");
    add_common(simulate, common, true);
    auto* recon = app.add_subcommand("reconstruct-sd", "reconstruct densities from closure correlators");
    add_common(recon, common, true);
    auto* bench = app.add_subcommand("bench-siam", "quench benchmark against a long chain");
    add_common(bench, common, true);
    auto* equil = app.add_subcommand("equilibrate", "ramped benchmark against a long chain");
    add_common(equil, common, true);
    auto* conv = app.add_subcommand("convergence-report", "chain coefficient convergence");
    add_common(conv, common, true);

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    Run run;
    run.command = app.get_subcommands().front()->get_name();
    run.common = common;
    run.log = &out;
    try {
        if (modulate->parsed()) cmd_modulate(run, points);
        else if (chain->parsed()) cmd_chain(run);
        else if (cfit->parsed()) cmd_closure_fit(run, fit);
        else if (rescale->parsed()) cmd_closure_rescale(run, table, omega, kappa, fill);
        else if (simulate->parsed()) cmd_simulate(run);
        else if (recon->parsed()) cmd_reconstruct(run);
        else if (bench->parsed()) cmd_bench(run);
        else if (equil->parsed()) cmd_equilibrate(run);
        else if (conv->parsed()) cmd_convergence(run);
        run.finish();
        for (const auto& w : run.warnings)
            err << "warning: " << w << "\n";
        return 0;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        err << "io error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

int dispatch(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return dispatch(args, std::cout, std::cerr);
}

} // namespace fmc
