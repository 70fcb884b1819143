// Many-body density-matrix reference for the quadratic Lindbladian.
// Mode j is bit j of the Fock index; a_j carries the Jordan-Wigner string
// over modes 0..j-1.

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

#include "fmc/gaussian.hpp"

namespace fmc {

using Eigen::Index;
using Eigen::MatrixXcd;

namespace {

constexpr Index max_oracle_modes = 4;

std::vector<MatrixXcd> annihilators(Index d) {
    const Index N = Index{1} << d;
    std::vector<MatrixXcd> a(static_cast<std::size_t>(d), MatrixXcd::Zero(N, N));
    for (Index j = 0; j < d; ++j)
        for (Index s = 0; s < N; ++s) {
            if (!((s >> j) & 1))
                continue;
            const int parity = std::popcount(static_cast<unsigned>(s & ((Index{1} << j) - 1)));
            a[j](s ^ (Index{1} << j), s) = parity % 2 ? -1.0 : 1.0;
        }
    return a;
}

struct Lindbladian {
    const QuadraticLindbladSystem& sys;
    std::vector<MatrixXcd> a, ad;

    explicit Lindbladian(const QuadraticLindbladSystem& s) : sys(s) {
        if (s.dim() > max_oracle_modes)
            throw std::invalid_argument("dense oracle supports at most 4 modes");
        a = annihilators(s.dim());
        for (const auto& m : a)
            ad.push_back(m.adjoint());
    }

    MatrixXcd hamiltonian(double t) const {
        const MatrixXcd h = sys.hamiltonian_at(t);
        const Index N = a.front().rows();
        MatrixXcd H = MatrixXcd::Zero(N, N);
        for (Index i = 0; i < sys.dim(); ++i)
            for (Index j = 0; j < sys.dim(); ++j)
                if (h(i, j) != cplx(0.0))
                    H += h(i, j) * ad[i] * a[j];
        return H;
    }

    MatrixXcd apply(const MatrixXcd& rho, const MatrixXcd& H) const {
        const cplx I(0.0, 1.0);
        MatrixXcd out = -I * (H * rho - rho * H);
        for (Index j = 0; j < sys.dim(); ++j) {
            if (sys.loss[j] > 0.0) {
                MatrixXcd nj = ad[j] * a[j];
                out += sys.loss[j] * (a[j] * rho * ad[j] - 0.5 * (nj * rho + rho * nj));
            }
            if (sys.gain[j] > 0.0) {
                MatrixXcd mj = a[j] * ad[j];
                out += sys.gain[j] * (ad[j] * rho * a[j] - 0.5 * (mj * rho + rho * mj));
            }
        }
        return out;
    }

    void rk4(MatrixXcd& x, double t, double dt) const {
        const MatrixXcd h0 = hamiltonian(t), h1 = hamiltonian(t + 0.5 * dt), h2 = hamiltonian(t + dt);
        MatrixXcd k1 = apply(x, h0);
        MatrixXcd k2 = apply(x + 0.5 * dt * k1, h1);
        MatrixXcd k3 = apply(x + 0.5 * dt * k2, h1);
        MatrixXcd k4 = apply(x + dt * k3, h2);
        x += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
};

} // namespace

MatrixXcd fock_state(std::span<const int> occupations) {
    const auto d = static_cast<Index>(occupations.size());
    if (d == 0 || d > max_oracle_modes)
        throw std::invalid_argument("fock_state: between 1 and 4 modes supported");
    Index s = 0;
    for (Index j = 0; j < d; ++j) {
        if (occupations[j] != 0 && occupations[j] != 1)
            throw std::invalid_argument("fock_state: occupations must be 0 or 1");
        s |= static_cast<Index>(occupations[j]) << j;
    }
    const Index N = Index{1} << d;
    MatrixXcd rho = MatrixXcd::Zero(N, N);
    rho(s, s) = 1.0;
    return rho;
}

MatrixXcd correlation_from_density(const MatrixXcd& rho, Index dim) {
    if (dim < 1 || dim > max_oracle_modes || rho.rows() != (Index{1} << dim))
        throw std::invalid_argument("correlation_from_density: size mismatch");
    auto a = annihilators(dim);
    MatrixXcd c(dim, dim);
    for (Index j = 0; j < dim; ++j)
        for (Index k = 0; k < dim; ++k)
            c(j, k) = (rho * a[j].adjoint() * a[k]).trace();
    return c;
}

DenseOracleResult dense_oracle(const QuadraticLindbladSystem& sys, const MatrixXcd& rho0, double t_max, double dt,
                               std::size_t record_stride) {
    sys.validate();
    Lindbladian L(sys);
    const Index N = Index{1} << sys.dim();
    if (rho0.rows() != N || rho0.cols() != N)
        throw std::invalid_argument("dense_oracle: rho0 has the wrong size");
    if (!(dt > 0.0) || !(t_max >= 0.0))
        throw std::invalid_argument("dense_oracle: need dt > 0 and t_max >= 0");
    const auto n_steps = static_cast<std::size_t>(std::max(0.0, std::ceil(t_max / dt - 1e-9)));
    const double h = n_steps ? t_max / static_cast<double>(n_steps) : dt;
    record_stride = std::max<std::size_t>(record_stride, 1);

    DenseOracleResult res;
    res.min_eigenvalue = std::numeric_limits<double>::infinity();
    MatrixXcd rho = rho0;
    auto record = [&](std::size_t step) {
        res.times.push_back(static_cast<double>(step) * h);
        res.correlations.push_back(correlation_from_density(rho, sys.dim()));
        res.max_trace_error = std::max(res.max_trace_error, std::abs(rho.trace() - cplx(1.0)));
        MatrixXcd herm = 0.5 * (rho + rho.adjoint());
        Eigen::SelfAdjointEigenSolver<MatrixXcd> es(herm, Eigen::EigenvaluesOnly);
        res.min_eigenvalue = std::min(res.min_eigenvalue, es.eigenvalues().minCoeff());
    };
    record(0);
    for (std::size_t step = 0; step < n_steps; ++step) {
        L.rk4(rho, static_cast<double>(step) * h, h);
        if ((step + 1) % record_stride == 0 || step + 1 == n_steps)
            record(step + 1);
    }
    return res;
}

std::vector<cplx> dense_two_time(const QuadraticLindbladSystem& sys, Index probe, Fill fill, double dt,
                                 std::size_t n_steps) {
    sys.validate();
    Lindbladian L(sys);
    if (probe < 0 || probe >= sys.dim())
        throw std::invalid_argument("dense_two_time: probe out of range");
    std::vector<int> occ(static_cast<std::size_t>(sys.dim()), fill == Fill::empty ? 0 : 1);
    MatrixXcd rho0 = fock_state(occ);
    // <A(t) B> = Tr(A e^{tL}(B rho0)) with (A, B) = (a, a^dag) or (a^dag, a)
    const MatrixXcd& A = fill == Fill::empty ? L.a[probe] : L.ad[probe];
    const MatrixXcd& B = fill == Fill::empty ? L.ad[probe] : L.a[probe];
    MatrixXcd x = B * rho0;
    std::vector<cplx> out;
    out.push_back((A * x).trace());
    for (std::size_t k = 0; k < n_steps; ++k) {
        L.rk4(x, static_cast<double>(k) * dt, dt);
        out.push_back((A * x).trace());
    }
    return out;
}

} // namespace fmc
