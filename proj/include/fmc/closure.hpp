#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fmc {

using cplx = std::complex<double>;

// J0(x) + J2(x): the transform of the unit-radius semicircle, normalized to 1 at x = 0.
double c_semicircle(double x);

// Coefficients of the damped tridiagonal model <w, e^{tM} w> ~ c_semicircle(t).
struct UniversalClosure {
    std::vector<cplx> alpha; // diagonal of M, real and negative
    std::vector<cplx> beta;  // off-diagonal of M (both sides), purely imaginary
    std::vector<cplx> w;
    double fit_residual = 0.0;

    std::size_t n_modes() const { return alpha.size(); }
    void validate() const; // throws std::invalid_argument
    Eigen::MatrixXcd matrix() const;
    std::vector<cplx> evaluate(std::span<const double> times) const;
};

struct ClosureFitOptions {
    double t_max = 100.0;
    std::size_t n_grid = 1001;
    double tolerance = 0.0;      // <= 0 selects default_fit_tolerance(n_modes)
    std::size_t n_starts = 16;
    std::size_t n_refine = 8;    // best least-squares starts passed to minimax refinement
    std::size_t n_hops = 20;     // random perturbations of the incumbent, each re-refined
    int lawson_rounds = 30;
    std::uint64_t seed = 0x5eed'c105'0001ULL;
    unsigned jobs = 1;
};

double default_fit_tolerance(std::size_t n_modes);

// Multi-start Levenberg-Marquardt in least squares, Lawson reweighting toward
// the minimax fit, then random hops around the best refined point. Throws
// NumericalError if the best residual exceeds the tolerance.
UniversalClosure fit_universal_closure(std::size_t n_modes, const ClosureFitOptions& opt = {});

std::vector<double> fit_grid(double t_max, std::size_t n_grid);
double max_fit_error(const UniversalClosure& u, double t_max = 100.0, std::size_t n_grid = 1001);

std::string closure_table_csv(const UniversalClosure& u);
void save_closure_table(const UniversalClosure& u, const std::filesystem::path& path);
UniversalClosure load_closure_table(const std::filesystem::path& path);

std::string fit_report_csv(const UniversalClosure& u, double t_max = 100.0, std::size_t n_grid = 1001);

enum class Fill { empty, filled };

std::string to_string(Fill f);
Fill fill_from_string(const std::string& s); // throws std::invalid_argument

struct ClosureParams {
    std::vector<double> omega; // pseudomode energies
    std::vector<double> g;     // nearest-neighbour couplings, length n - 1
    std::vector<double> gamma; // damping rates
    std::vector<cplx> zeta;    // couplings to the last chain site
    Fill fill = Fill::empty;

    std::size_t size() const { return omega.size(); }
    void validate() const;
    Eigen::MatrixXd hamiltonian() const; // the real tridiagonal pseudomode Hamiltonian
};

ClosureParams rescale_closure(const UniversalClosure& u, double asym_omega, double asym_kappa, Fill fill);

std::string closure_params_csv(const ClosureParams& p);

// Two-time correlation function of the closure seen from the chain edge:
// empty side <B(t) B^dag>, filled side <B^dag(t) B>, with B = sum_j zeta_j a_j.
std::vector<cplx> closure_ttcf(const ClosureParams& p, std::span<const double> times);

// exp(t G) for a small dense generator: eigendecomposition when it is well
// conditioned, Pade scaling and squaring otherwise.
class GeneratorExponential {
public:
    explicit GeneratorExponential(const Eigen::MatrixXcd& g);
    Eigen::MatrixXcd operator()(double t) const;
    bool uses_eigenbasis() const { return eig_; }
    const Eigen::VectorXcd& eigenvalues() const { return d_; }

private:
    Eigen::MatrixXcd g_;
    Eigen::MatrixXcd v_, vinv_;
    Eigen::VectorXcd d_;
    bool eig_ = false;
};

} // namespace fmc
