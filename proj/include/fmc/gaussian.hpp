#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fmc/chainmap.hpp"
#include "fmc/closure.hpp"

namespace fmc {

enum class ModeRole { system, chain, closure };

struct ModeInfo {
    ModeRole role = ModeRole::system;
    int side = -1;         // 0 empty chain, 1 filled chain, -1 for the system
    std::size_t index = 0; // site or closure-mode index within its side

    std::string label() const; // "system", "chain0_3", "closure1_2"
};

// Quadratic, number-conserving Lindbladian: H = sum h_ij a_i^dag a_j, jump
// operators sqrt(loss_j) a_j and sqrt(gain_j) a_j^dag.
struct QuadraticLindbladSystem {
    Eigen::MatrixXcd h;
    Eigen::VectorXd loss;
    Eigen::VectorXd gain;
    std::vector<ModeInfo> modes;

    // Entries multiplied by r(t) = min(1, t / ramp_tau) when ramp_tau > 0.
    double ramp_tau = 0.0;
    std::vector<std::pair<Eigen::Index, Eigen::Index>> ramped;

    Eigen::Index dim() const { return h.rows(); }
    void validate() const; // throws std::invalid_argument
    double ramp(double t) const;
    Eigen::MatrixXcd hamiltonian_at(double t) const;
    Eigen::Index index_of(const std::string& label) const; // throws std::invalid_argument
    bool has_system() const;
};

struct SideSpec {
    ChainCoefficients chain;
    std::size_t n_e = 0; // sites 0..n_e are kept
    std::optional<ClosureParams> closure;
};

struct ReferenceMode {
    enum class Kind { fmc, long_chain };
    Kind kind = Kind::fmc;
    std::size_t length = 0; // sites per chain for long_chain

    static ReferenceMode fmc_network() { return {}; }
    static ReferenceMode long_chain(std::size_t length) { return {Kind::long_chain, length}; }
};

// Mode order: system, empty chain, empty closure, filled chain, filled closure.
// The system diagonal and the system-chain couplings are registered as ramped
// entries; set ramp_tau on the result to switch the ramp on.
QuadraticLindbladSystem assemble(double system_energy, const SideSpec& empty, const SideSpec& filled,
                                 ReferenceMode mode = {});

// One chain (sites 0..n_e) plus its closure, without a system mode.
QuadraticLindbladSystem assemble_environment(const SideSpec& side, Fill fill);

// System occupation as given; empty side 0, filled side 1.
Eigen::MatrixXcd initial_correlation(const QuadraticLindbladSystem& sys, bool system_filled);

struct EvolveOptions {
    double record_every = 0.0;        // 0 records every step
    bool store_matrices = false;
    std::vector<Eigen::Index> observe; // empty observes every mode
    double pauli_check_every = 1.0;   // in time units, at recorded snapshots
    double pauli_tolerance = 1e-9;
};

struct Trajectory {
    std::vector<double> times;
    std::vector<std::string> labels;
    std::vector<std::vector<double>> populations; // [time][observable]
    std::vector<Eigen::MatrixXcd> snapshots;
    Eigen::MatrixXcd final_state;
};

// Fixed-step RK4 on dC/dt = -X^dag C - C X + diag(gain) with
// X = i conj(h(t)) + (loss + gain) / 2, C_jk = <a_j^dag a_k>.
// dt is shrunk slightly if needed so that t_max is hit exactly.
Trajectory evolve(const QuadraticLindbladSystem& sys, const Eigen::MatrixXcd& c0, double t_max, double dt,
                  const EvolveOptions& opt = {});

double default_time_step(double asym_kappa); // 1e-3 / K

std::string trajectory_csv(const Trajectory& tr);

std::vector<double> populations(const Eigen::MatrixXcd& c, std::span<const Eigen::Index> sites);

// Environment-only correlator probed at a single mode or through a vector of
// amplitudes B = sum_k v_k a_k. Empty: <B(t) B^dag> in the vacuum; filled:
// <B^dag(t) B> in the filled state.
std::vector<cplx> two_time_correlator(const QuadraticLindbladSystem& env, Eigen::Index probe,
                                      std::span<const double> times, Fill fill);
std::vector<cplx> two_time_correlator(const QuadraticLindbladSystem& env, const Eigen::VectorXcd& probe,
                                      std::span<const double> times, Fill fill);

// Brute-force many-body reference for dim <= 4.
struct DenseOracleResult {
    std::vector<double> times;
    std::vector<Eigen::MatrixXcd> correlations;
    double max_trace_error = 0.0;
    double min_eigenvalue = 0.0;
};

Eigen::MatrixXcd fock_state(std::span<const int> occupations);
Eigen::MatrixXcd correlation_from_density(const Eigen::MatrixXcd& rho, Eigen::Index dim);
DenseOracleResult dense_oracle(const QuadraticLindbladSystem& sys, const Eigen::MatrixXcd& rho0, double t_max,
                               double dt, std::size_t record_stride = 1);
// Quantum-regression evaluation of the same correlators as two_time_correlator,
// on the grid k * dt for k = 0..n_steps.
std::vector<cplx> dense_two_time(const QuadraticLindbladSystem& sys, Eigen::Index probe, Fill fill, double dt,
                                 std::size_t n_steps);

} // namespace fmc
