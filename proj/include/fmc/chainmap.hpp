#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "fmc/specdens.hpp"

namespace fmc {

struct ChainCoefficients {
    double eta = 0.0;          // system-chain coupling, eta^2 = integral of J
    std::vector<double> omega; // site energies, length N
    std::vector<double> kappa; // hoppings between sites n and n+1, length N-1
    double asym_omega = 0.0;
    double asym_kappa = 0.0;
    Interval source_domain{0.0, 1.0};

    std::size_t size() const { return omega.size(); }
};

struct Asymptotics {
    double omega;
    double kappa;
};

Asymptotics asymptotics(Interval domain);

// Recurrence coefficients of the polynomials orthogonal for J(w)dw. The
// density must pass szego_diagnostic unless skip_szego_check is set.
// Throws NumericalError when n_sites exceeds what the discretization supports.
ChainCoefficients chain_coefficients(const SpectralDensity& j, std::size_t n_sites,
                                     std::size_t quadrature_nodes = 20000, bool skip_szego_check = false);

// Smallest N_E with |omega_n - Omega| < eps and |kappa_n - K| < eps for every
// computed n > N_E. Throws NumericalError if the last computed site still fails.
std::size_t truncation_index(const ChainCoefficients& c, double epsilon);

// max(|omega_n - Omega|, |kappa_n - K|) per site; the kappa term is absent on the last site.
std::vector<double> coefficient_deviation(const ChainCoefficients& c);

SpectralDensity residual_semicircle(double asym_omega, double asym_kappa);

std::string chain_csv(const ChainCoefficients& c);
void write_chain_csv(const std::filesystem::path& path, const ChainCoefficients& c);
ChainCoefficients read_chain_csv(const std::filesystem::path& path);

} // namespace fmc
