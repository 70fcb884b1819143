#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fmc/chainmap.hpp"
#include "fmc/closure.hpp"
#include "fmc/config.hpp"
#include "fmc/gaussian.hpp"
#include "fmc/specdens.hpp"

namespace fmc {

// The two pure-state environments equivalent to a set of thermal leads.
struct EquivalentEnvironments {
    SpectralDensity empty = SpectralDensity::zero();
    SpectralDensity filled = SpectralDensity::zero();
    std::vector<std::string> warnings;

    const SpectralDensity& side(int s) const { return s == 0 ? empty : filled; }
};

EquivalentEnvironments equivalent_environments(std::span<const LeadSpec> leads);

// Non-differentiable points of a density: piece ends and breakpoints.
std::vector<double> kinks(const SpectralDensity& j);

struct ConvergenceReport {
    std::array<ChainCoefficients, 2> chains;
    std::array<std::size_t, 2> truncation{0, 0}; // at the configured epsilon; SIZE_MAX if not reached

    std::string csv() const; // n,d_omega_0,d_kappa_0,d_omega_1,d_kappa_1
};

ConvergenceReport chain_convergence_report(std::span<const LeadSpec> leads, std::size_t n_sites,
                                           std::size_t quadrature_nodes = 20000, double epsilon = 1e-2);

// ln(1/floor) / t_max^2: the Gaussian window reaches `floor` at t_max.
double window_rate(double t_max, double floor = 1e-15);

// (1/pi) Re sum_k q_k e^{s i w t_k} c_k e^{-a t_k^2} on the grid t_k = k dt with
// trapezoid weights; s = +1 inverts an emission correlator, s = -1 an absorption one.
std::vector<double> windowed_transform(std::span<const cplx> c, double dt, double a, std::span<const double> omega,
                                       TtcfSign sign);

struct ReconstructionSide {
    std::vector<double> omega, expected, reconstructed, abs_err;
    std::vector<double> kinks;
    double max_err_outside_kinks = 0.0;
};

struct ReconstructionReport {
    std::array<ReconstructionSide, 2> sides;

    static std::string csv(const ReconstructionSide& s); // omega,j_expected,j_reconstructed,abs_err
};

// Environment-only FMC network per side, probed at chain site 0.
ReconstructionReport run_sd_reconstruction(const ExperimentConfig& cfg, unsigned jobs = 1);

struct ComparisonReport {
    std::size_t n_c = 0;
    std::vector<double> times;
    std::vector<std::string> labels;
    std::vector<std::vector<double>> fmc, reference, abs_error; // [time][observable]
    double transient_cutoff = 0.0;
    double horizon = 0.0;                 // reference trusted for t < horizon
    double max_error_after_transient = 0.0; // system population, t in [cutoff, horizon)

    std::string csv() const;
};

struct EquilibrationReport {
    ComparisonReport comparison;
    std::vector<std::string> final_labels;
    std::vector<double> final_fmc, final_reference, final_diff;
    double max_final_diff = 0.0;

    std::string final_csv() const; // site,n_fmc,n_reference,abs_diff
};

// Closure table for n_c modes: table_dir/closure_<n_c>.csv, fitted when
// missing and fit_missing_tables is set.
UniversalClosure closure_table_for(const ExperimentConfig& cfg, std::size_t n_c);

std::size_t reference_chain_length(double asym_kappa, double t_max);

std::vector<ComparisonReport> run_siam_benchmark(const ExperimentConfig& cfg, unsigned jobs = 1);
std::vector<EquilibrationReport> run_adiabatic_equilibration(const ExperimentConfig& cfg, unsigned jobs = 1);

} // namespace fmc
