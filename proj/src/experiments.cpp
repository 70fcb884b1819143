#include "fmc/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <thread>

#include "fmc/csv.hpp"
#include "fmc/errors.hpp"

namespace fmc {

using Eigen::Index;

namespace {

template <class F>
void run_parallel(std::size_t count, unsigned jobs, F&& body) {
    jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(count)));
    if (jobs == 1) {
        for (std::size_t i = 0; i < count; ++i)
            body(i);
        return;
    }
    std::vector<std::exception_ptr> errors(count);
    std::vector<std::thread> pool;
    for (unsigned j = 0; j < jobs; ++j)
        pool.emplace_back([&, j] {
            for (std::size_t i = j; i < count; i += jobs) {
                try {
                    body(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    for (auto& th : pool)
        th.join();
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
}

Fill side_fill(int s) { return s == 0 ? Fill::empty : Fill::filled; }

} // namespace

EquivalentEnvironments equivalent_environments(std::span<const LeadSpec> leads) {
    if (leads.empty())
        throw std::invalid_argument("need at least one lead");
    std::vector<SpectralDensity> e, f;
    for (const auto& lead : leads) {
        if (lead.kappa.size() != 1)
            throw std::invalid_argument("single-impurity experiments take one coupling scale per lead");
        ModulatedPair p = tcsm_modulate(lead);
        const double k2 = lead.kappa[0] * lead.kappa[0];
        e.push_back(p.empty_side.scaled(k2));
        f.push_back(p.filled_side.scaled(k2));
    }
    EquivalentEnvironments out;
    out.empty = merge_environments(e, &out.warnings);
    out.filled = merge_environments(f, &out.warnings);
    return out;
}

std::vector<double> kinks(const SpectralDensity& j) {
    std::vector<double> k = j.breakpoints();
    for (const auto& iv : j.pieces()) {
        k.push_back(iv.lo);
        k.push_back(iv.hi);
    }
    std::sort(k.begin(), k.end());
    k.erase(std::unique(k.begin(), k.end()), k.end());
    return k;
}

ConvergenceReport chain_convergence_report(std::span<const LeadSpec> leads, std::size_t n_sites,
                                           std::size_t quadrature_nodes, double epsilon) {
    EquivalentEnvironments env = equivalent_environments(leads);
    ConvergenceReport rep;
    for (int s = 0; s < 2; ++s) {
        if (env.side(s).is_zero())
            throw std::invalid_argument(std::string(s == 0 ? "empty" : "filled") +
                                        "-side environment is identically zero");
        rep.chains[s] = chain_coefficients(env.side(s), n_sites, quadrature_nodes);
        try {
            rep.truncation[s] = truncation_index(rep.chains[s], epsilon);
        } catch (const NumericalError&) {
            rep.truncation[s] = std::numeric_limits<std::size_t>::max();
        }
    }
    return rep;
}

std::string ConvergenceReport::csv() const {
    std::ostringstream os;
    os << "# Omega_0=" << format_double(chains[0].asym_omega) << " K_0=" << format_double(chains[0].asym_kappa)
       << " Omega_1=" << format_double(chains[1].asym_omega) << " K_1=" << format_double(chains[1].asym_kappa)
       << "\n";
    os << "n,d_omega_0,d_kappa_0,d_omega_1,d_kappa_1\n";
    const std::size_t n = std::min(chains[0].size(), chains[1].size());
    for (std::size_t i = 0; i < n; ++i) {
        os << i;
        for (const auto& c : chains) {
            os << "," << format_double(std::abs(c.omega[i] - c.asym_omega)) << ",";
            if (i < c.kappa.size())
                os << format_double(std::abs(c.kappa[i] - c.asym_kappa));
        }
        os << "\n";
    }
    return os.str();
}

double window_rate(double t_max, double floor) {
    if (!(t_max > 0.0) || !(floor > 0.0 && floor < 1.0))
        throw std::invalid_argument("window_rate: need t_max > 0 and floor in (0, 1)");
    return -std::log(floor) / (t_max * t_max);
}

std::vector<double> windowed_transform(std::span<const cplx> c, double dt, double a, std::span<const double> omega,
                                       TtcfSign sign) {
    if (c.size() < 2 || !(dt > 0.0))
        throw std::invalid_argument("windowed_transform: need at least two samples and dt > 0");
    const double s = sign == TtcfSign::emission ? 1.0 : -1.0;
    std::vector<cplx> g(c.size());
    for (std::size_t k = 0; k < c.size(); ++k) {
        const double t = static_cast<double>(k) * dt;
        const double q = (k == 0 || k + 1 == c.size()) ? 0.5 : 1.0;
        g[k] = q * dt * std::exp(-a * t * t) * c[k];
    }
    std::vector<double> out(omega.size());
    for (std::size_t i = 0; i < omega.size(); ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < g.size(); ++k) {
            const double ph = s * omega[i] * static_cast<double>(k) * dt;
            acc += g[k].real() * std::cos(ph) - g[k].imag() * std::sin(ph);
        }
        out[i] = acc / std::numbers::pi;
    }
    return out;
}

std::string ReconstructionReport::csv(const ReconstructionSide& s) {
    std::ostringstream os;
    os << "omega,j_expected,j_reconstructed,abs_err\n";
    for (std::size_t i = 0; i < s.omega.size(); ++i)
        os << format_double(s.omega[i]) << "," << format_double(s.expected[i]) << ","
           << format_double(s.reconstructed[i]) << "," << format_double(s.abs_err[i]) << "\n";
    return os.str();
}

UniversalClosure closure_table_for(const ExperimentConfig& cfg, std::size_t n_c) {
    auto path = cfg.table_dir / ("closure_" + std::to_string(n_c) + ".csv");
    if (std::filesystem::exists(path))
        return load_closure_table(path);
    if (!cfg.fit_missing_tables)
        throw IoError("closure table not found: " + path.string() +
                      " (run closure-fit or set closure.fit_missing=true)");
    return fit_universal_closure(n_c, cfg.fit);
}

ReconstructionReport run_sd_reconstruction(const ExperimentConfig& cfg, unsigned jobs) {
    EquivalentEnvironments env = equivalent_environments(cfg.leads);
    const UniversalClosure u = closure_table_for(cfg, cfg.n_c.front());
    const auto n_t = static_cast<std::size_t>(std::llround(cfg.recon_t_max / cfg.recon_dt));
    std::vector<double> times(n_t + 1);
    for (std::size_t k = 0; k <= n_t; ++k)
        times[k] = static_cast<double>(k) * cfg.recon_dt;
    const double a = window_rate(times.back(), cfg.recon_window_floor);

    ReconstructionReport rep;
    run_parallel(2, jobs, [&](std::size_t si) {
        const int s = static_cast<int>(si);
        const SpectralDensity& j = env.side(s);
        ReconstructionSide& out = rep.sides[si];
        if (j.is_zero())
            return;
        const Fill fill = side_fill(s);
        ChainCoefficients chain = chain_coefficients(j, cfg.n_e + 1, cfg.quadrature_nodes);
        SideSpec side{chain, cfg.n_e, rescale_closure(u, chain.asym_omega, chain.asym_kappa, fill)};
        QuadraticLindbladSystem net = assemble_environment(side, fill);
        std::vector<cplx> c = two_time_correlator(net, 0, times, fill);
        for (auto& x : c)
            x *= chain.eta * chain.eta;

        const Interval hull = j.hull();
        const auto n_w = static_cast<std::size_t>(std::floor((hull.width() + 0.2) / cfg.recon_omega_step + 1e-9));
        for (std::size_t i = 0; i <= n_w; ++i)
            out.omega.push_back(hull.lo - 0.1 + static_cast<double>(i) * cfg.recon_omega_step);
        out.reconstructed = windowed_transform(c, cfg.recon_dt, a, out.omega,
                                               fill == Fill::empty ? TtcfSign::emission : TtcfSign::absorption);
        out.kinks = kinks(j);
        for (std::size_t i = 0; i < out.omega.size(); ++i) {
            out.expected.push_back(j(out.omega[i]));
            out.abs_err.push_back(std::abs(out.reconstructed[i] - out.expected[i]));
            // grid points sitting exactly on the exclusion radius count as excluded
            bool near = std::any_of(out.kinks.begin(), out.kinks.end(), [&](double k) {
                return std::abs(out.omega[i] - k) <= cfg.recon_kink_radius * (1.0 + 1e-9);
            });
            if (!near)
                out.max_err_outside_kinks = std::max(out.max_err_outside_kinks, out.abs_err[i]);
        }
    });
    return rep;
}

std::size_t reference_chain_length(double asym_kappa, double t_max) {
    if (!(asym_kappa > 0.0) || !(t_max > 0.0))
        throw std::invalid_argument("reference_chain_length: need K > 0 and t_max > 0");
    return static_cast<std::size_t>(std::ceil(2.0 * asym_kappa * t_max * 1.25));
}

std::string ComparisonReport::csv() const {
    std::ostringstream os;
    os << "# n_c=" << n_c << " transient_cutoff=" << format_double(transient_cutoff)
       << " horizon=" << format_double(horizon) << " max_error_after_transient="
       << format_double(max_error_after_transient) << "\n";
    os << "t";
    for (const auto& l : labels)
        os << ",n_" << l << "_fmc,n_" << l << "_ref,err_" << l;
    os << "\n";
    for (std::size_t i = 0; i < times.size(); ++i) {
        os << format_double(times[i]);
        for (std::size_t k = 0; k < labels.size(); ++k)
            os << "," << format_double(fmc[i][k]) << "," << format_double(reference[i][k]) << ","
               << format_double(abs_error[i][k]);
        os << "\n";
    }
    return os.str();
}

std::string EquilibrationReport::final_csv() const {
    std::ostringstream os;
    os << "site,n_fmc,n_reference,abs_diff\n";
    for (std::size_t k = 0; k < final_labels.size(); ++k)
        os << final_labels[k] << "," << format_double(final_fmc[k]) << "," << format_double(final_reference[k]) << ","
           << format_double(final_diff[k]) << "\n";
    return os.str();
}

namespace {

struct ComparisonRun {
    std::vector<ComparisonReport> reports;
    std::vector<Trajectory> fmc;
    Trajectory reference;
};

ComparisonRun compare_with_reference(const ExperimentConfig& cfg, double ramp_tau, unsigned jobs) {
    EquivalentEnvironments env = equivalent_environments(cfg.leads);
    double k_min = std::numeric_limits<double>::infinity(), k_max = 0.0;
    for (int s = 0; s < 2; ++s) {
        if (env.side(s).is_zero())
            throw std::invalid_argument("both equivalent environments must be non-zero for the benchmark");
        const double K = asymptotics(env.side(s).hull()).kappa;
        k_min = std::min(k_min, K);
        k_max = std::max(k_max, K);
    }
    const std::size_t L = cfg.reference_length ? cfg.reference_length : reference_chain_length(k_max, cfg.t_max);
    if (L < cfg.n_e + 1)
        throw ConfigError("reference chain must be longer than the FMC chain");
    const double dt = cfg.dt > 0.0 ? cfg.dt : default_time_step(k_max);

    std::array<ChainCoefficients, 2> chains;
    run_parallel(2, jobs, [&](std::size_t s) {
        chains[s] = chain_coefficients(env.side(static_cast<int>(s)), L, std::max(cfg.quadrature_nodes, 50 * L));
    });

    std::vector<std::string> labels{"system"};
    for (int s = 0; s < 2; ++s)
        for (std::size_t n = 0; n <= cfg.n_e; ++n)
            labels.push_back(ModeInfo{ModeRole::chain, s, n}.label());

    auto observe = [&](const QuadraticLindbladSystem& sys) {
        EvolveOptions opt;
        opt.record_every = cfg.record_every;
        for (const auto& l : labels)
            opt.observe.push_back(sys.index_of(l));
        return opt;
    };

    // task 0 is the reference, task i > 0 the FMC network with n_c[i - 1] modes
    ComparisonRun run;
    run.fmc.resize(cfg.n_c.size());
    std::vector<UniversalClosure> tables;
    for (auto n : cfg.n_c)
        tables.push_back(closure_table_for(cfg, n));
    run_parallel(cfg.n_c.size() + 1, jobs, [&](std::size_t task) {
        QuadraticLindbladSystem sys;
        if (task == 0) {
            sys = assemble(cfg.epsilon, SideSpec{chains[0], cfg.n_e, std::nullopt},
                           SideSpec{chains[1], cfg.n_e, std::nullopt}, ReferenceMode::long_chain(L));
        } else {
            const UniversalClosure& u = tables[task - 1];
            SideSpec sides[2];
            for (int s = 0; s < 2; ++s)
                sides[s] = SideSpec{chains[s], cfg.n_e,
                                    rescale_closure(u, chains[s].asym_omega, chains[s].asym_kappa, side_fill(s))};
            sys = assemble(cfg.epsilon, sides[0], sides[1]);
        }
        sys.ramp_tau = ramp_tau;
        Trajectory tr = evolve(sys, initial_correlation(sys, cfg.system_filled), cfg.t_max, dt, observe(sys));
        if (task == 0)
            run.reference = std::move(tr);
        else
            run.fmc[task - 1] = std::move(tr);
    });

    const double cutoff = cfg.transient ? *cfg.transient : ramp_tau + 5.0 / k_min;
    const double horizon = static_cast<double>(L) / (2.0 * k_max);
    for (std::size_t i = 0; i < cfg.n_c.size(); ++i) {
        ComparisonReport rep;
        rep.n_c = cfg.n_c[i];
        rep.labels = labels;
        rep.times = run.fmc[i].times;
        rep.fmc = run.fmc[i].populations;
        rep.reference = run.reference.populations;
        rep.transient_cutoff = cutoff;
        rep.horizon = horizon;
        for (std::size_t t = 0; t < rep.times.size(); ++t) {
            std::vector<double> e(labels.size());
            for (std::size_t k = 0; k < labels.size(); ++k)
                e[k] = std::abs(rep.fmc[t][k] - rep.reference[t][k]);
            if (rep.times[t] >= cutoff && rep.times[t] < horizon)
                rep.max_error_after_transient = std::max(rep.max_error_after_transient, e[0]);
            rep.abs_error.push_back(std::move(e));
        }
        run.reports.push_back(std::move(rep));
    }
    return run;
}

} // namespace

std::vector<ComparisonReport> run_siam_benchmark(const ExperimentConfig& cfg, unsigned jobs) {
    return compare_with_reference(cfg, cfg.ramp_tau, jobs).reports;
}

std::vector<EquilibrationReport> run_adiabatic_equilibration(const ExperimentConfig& cfg, unsigned jobs) {
    const double tau = cfg.ramp_tau > 0.0 ? cfg.ramp_tau : 20.0;
    ComparisonRun run = compare_with_reference(cfg, tau, jobs);
    std::vector<EquilibrationReport> out;
    for (auto& rep : run.reports) {
        EquilibrationReport e;
        e.final_labels = rep.labels;
        e.final_fmc = rep.fmc.back();
        e.final_reference = rep.reference.back();
        for (std::size_t k = 0; k < e.final_labels.size(); ++k) {
            e.final_diff.push_back(std::abs(e.final_fmc[k] - e.final_reference[k]));
            e.max_final_diff = std::max(e.max_final_diff, e.final_diff.back());
        }
        e.comparison = std::move(rep);
        out.push_back(std::move(e));
    }
    return out;
}

} // namespace fmc
