#include "fmc/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <Eigen/Sparse>

#include "fmc/csv.hpp"
#include "fmc/errors.hpp"

namespace fmc {

using Eigen::Index;
using Eigen::MatrixXcd;
using Eigen::VectorXcd;

std::string ModeInfo::label() const {
    switch (role) {
    case ModeRole::system:
        return "system";
    case ModeRole::chain:
        return "chain" + std::to_string(side) + "_" + std::to_string(index);
    case ModeRole::closure:
        return "closure" + std::to_string(side) + "_" + std::to_string(index);
    }
    return "?";
}

void QuadraticLindbladSystem::validate() const {
    const Index n = h.rows();
    if (n == 0 || h.cols() != n || loss.size() != n || gain.size() != n ||
        static_cast<Index>(modes.size()) != n)
        throw std::invalid_argument("lindblad system: dimension mismatch");
    if (!h.allFinite() || !loss.allFinite() || !gain.allFinite())
        throw std::invalid_argument("lindblad system: non-finite entries");
    if ((h - h.adjoint()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, h.cwiseAbs().maxCoeff()))
        throw std::invalid_argument("lindblad system: h is not Hermitian");
    for (Index j = 0; j < n; ++j) {
        if (loss[j] < 0.0 || gain[j] < 0.0)
            throw std::invalid_argument("lindblad system: rates must be non-negative");
        if ((loss[j] > 0.0 || gain[j] > 0.0) && modes[j].role != ModeRole::closure)
            throw std::invalid_argument("lindblad system: dissipation only allowed on closure modes");
    }
    if (ramp_tau < 0.0 || !std::isfinite(ramp_tau))
        throw std::invalid_argument("lindblad system: ramp time must be finite and non-negative");
    for (auto [i, j] : ramped)
        if (i < 0 || j < 0 || i >= n || j >= n)
            throw std::invalid_argument("lindblad system: ramped entry out of range");
}

double QuadraticLindbladSystem::ramp(double t) const {
    if (ramp_tau <= 0.0)
        return 1.0;
    return std::clamp(t / ramp_tau, 0.0, 1.0);
}

MatrixXcd QuadraticLindbladSystem::hamiltonian_at(double t) const {
    MatrixXcd ht = h;
    const double r = ramp(t);
    if (r != 1.0)
        for (auto [i, j] : ramped)
            ht(i, j) = r * h(i, j);
    return ht;
}

Index QuadraticLindbladSystem::index_of(const std::string& label) const {
    for (std::size_t k = 0; k < modes.size(); ++k)
        if (modes[k].label() == label)
            return static_cast<Index>(k);
    throw std::invalid_argument("no mode labelled '" + label + "'");
}

bool QuadraticLindbladSystem::has_system() const {
    return std::any_of(modes.begin(), modes.end(), [](const ModeInfo& m) { return m.role == ModeRole::system; });
}

namespace {

// Appends a chain (and optionally its closure) starting at `offset`.
// Returns the index of site 0.
Index place_side(QuadraticLindbladSystem& s, Index offset, int side, const ChainCoefficients& c, std::size_t n_sites,
                 const ClosureParams* closure, Fill fill) {
    for (std::size_t n = 0; n < n_sites; ++n) {
        const Index i = offset + static_cast<Index>(n);
        s.h(i, i) = c.omega[n];
        if (n + 1 < n_sites)
            s.h(i, i + 1) = s.h(i + 1, i) = c.kappa[n];
        s.modes[i] = {ModeRole::chain, side, n};
    }
    if (closure) {
        const Index edge = offset + static_cast<Index>(n_sites) - 1;
        const Index base = offset + static_cast<Index>(n_sites);
        Eigen::MatrixXd lam = closure->hamiltonian();
        for (std::size_t j = 0; j < closure->size(); ++j) {
            const Index k = base + static_cast<Index>(j);
            // c^dag B + B^dag c with B = sum_j zeta_j a_j
            s.h(edge, k) = closure->zeta[j];
            s.h(k, edge) = std::conj(closure->zeta[j]);
            for (std::size_t l = 0; l < closure->size(); ++l)
                s.h(k, base + static_cast<Index>(l)) = lam(j, l);
            (fill == Fill::empty ? s.loss : s.gain)[k] = closure->gamma[j];
            s.modes[k] = {ModeRole::closure, side, j};
        }
    }
    return offset;
}

void check_side(const SideSpec& side, Fill fill, const char* name) {
    if (side.chain.size() < side.n_e + 1)
        throw std::invalid_argument(std::string(name) + " chain has fewer than n_e + 1 sites");
    if (side.closure) {
        side.closure->validate();
        if (side.closure->fill != fill)
            throw std::invalid_argument(std::string(name) + " closure has the wrong fill");
    }
}

} // namespace

QuadraticLindbladSystem assemble(double system_energy, const SideSpec& empty, const SideSpec& filled,
                                 ReferenceMode mode) {
    if (!std::isfinite(system_energy))
        throw std::invalid_argument("assemble: system energy must be finite");
    const bool ref = mode.kind == ReferenceMode::Kind::long_chain;
    std::size_t sites[2], nclos[2] = {0, 0};
    const SideSpec* sides[2] = {&empty, &filled};
    for (int s = 0; s < 2; ++s) {
        if (ref) {
            if (mode.length == 0 || sides[s]->chain.size() < mode.length)
                throw std::invalid_argument("assemble: reference chain needs `length` computed coefficients");
            sites[s] = mode.length;
        } else {
            check_side(*sides[s], s == 0 ? Fill::empty : Fill::filled, s == 0 ? "empty" : "filled");
            sites[s] = sides[s]->n_e + 1;
            if (sides[s]->closure)
                nclos[s] = sides[s]->closure->size();
        }
    }
    const Index dim = 1 + static_cast<Index>(sites[0] + nclos[0] + sites[1] + nclos[1]);
    QuadraticLindbladSystem sys;
    sys.h = MatrixXcd::Zero(dim, dim);
    sys.loss = Eigen::VectorXd::Zero(dim);
    sys.gain = Eigen::VectorXd::Zero(dim);
    sys.modes.assign(dim, ModeInfo{});
    sys.h(0, 0) = system_energy;
    sys.ramped.emplace_back(0, 0);
    Index offset = 1;
    for (int s = 0; s < 2; ++s) {
        const Fill fill = s == 0 ? Fill::empty : Fill::filled;
        const ClosureParams* cl = (!ref && sides[s]->closure) ? &*sides[s]->closure : nullptr;
        Index first = place_side(sys, offset, s, sides[s]->chain, sites[s], cl, fill);
        sys.h(0, first) = sys.h(first, 0) = sides[s]->chain.eta;
        sys.ramped.emplace_back(0, first);
        sys.ramped.emplace_back(first, 0);
        offset += static_cast<Index>(sites[s] + nclos[s]);
    }
    sys.validate();
    return sys;
}

QuadraticLindbladSystem assemble_environment(const SideSpec& side, Fill fill) {
    check_side(side, fill, fill == Fill::empty ? "empty" : "filled");
    const std::size_t sites = side.n_e + 1;
    const std::size_t nc = side.closure ? side.closure->size() : 0;
    const Index dim = static_cast<Index>(sites + nc);
    QuadraticLindbladSystem sys;
    sys.h = MatrixXcd::Zero(dim, dim);
    sys.loss = Eigen::VectorXd::Zero(dim);
    sys.gain = Eigen::VectorXd::Zero(dim);
    sys.modes.assign(dim, ModeInfo{});
    place_side(sys, 0, fill == Fill::empty ? 0 : 1, side.chain, sites, side.closure ? &*side.closure : nullptr, fill);
    sys.validate();
    return sys;
}

MatrixXcd initial_correlation(const QuadraticLindbladSystem& sys, bool system_filled) {
    const Index n = sys.dim();
    MatrixXcd c = MatrixXcd::Zero(n, n);
    for (Index j = 0; j < n; ++j) {
        const auto& m = sys.modes[j];
        bool occ = m.role == ModeRole::system ? system_filled : m.side == 1;
        c(j, j) = occ ? 1.0 : 0.0;
    }
    return c;
}

double default_time_step(double asym_kappa) {
    if (!(asym_kappa > 0.0))
        throw std::invalid_argument("default_time_step: K must be positive");
    return 1e-3 / asym_kappa;
}

namespace {

using SpMat = Eigen::SparseMatrix<cplx>;

void pauli_check(const MatrixXcd& c, double t, double tol) {
    Eigen::SelfAdjointEigenSolver<MatrixXcd> es(c, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
    if (lo < -tol || hi > 1.0 + tol)
        throw NumericalError("Pauli constraint violated at t = " + format_double(t) + ": eigenvalues in [" +
                             format_double(lo) + ", " + format_double(hi) + "]; reduce dt");
}

} // namespace

Trajectory evolve(const QuadraticLindbladSystem& sys, const MatrixXcd& c0, double t_max, double dt,
                  const EvolveOptions& opt) {
    sys.validate();
    const Index n = sys.dim();
    if (!(dt > 0.0) || !std::isfinite(dt) || !(t_max >= 0.0) || !std::isfinite(t_max))
        throw std::invalid_argument("evolve: need dt > 0 and finite t_max >= 0");
    if (c0.rows() != n || c0.cols() != n)
        throw std::invalid_argument("evolve: initial correlation matrix has the wrong size");
    if ((c0 - c0.adjoint()).cwiseAbs().maxCoeff() > 1e-10)
        throw std::invalid_argument("evolve: initial correlation matrix is not Hermitian");
    for (Index k : opt.observe)
        if (k < 0 || k >= n)
            throw std::invalid_argument("evolve: observed index out of range");

    const auto n_steps = static_cast<std::size_t>(std::max(0.0, std::ceil(t_max / dt - 1e-9)));
    const double h_dt = n_steps ? t_max / static_cast<double>(n_steps) : dt;
    const bool ramped = sys.ramp_tau > 0.0 && !sys.ramped.empty();

    // X = X_fixed + r(t) X_ramp
    std::vector<char> is_ramped(static_cast<std::size_t>(n * n), 0);
    if (ramped)
        for (auto [i, j] : sys.ramped)
            is_ramped[static_cast<std::size_t>(i * n + j)] = 1;
    std::vector<Eigen::Triplet<cplx>> tf, tr;
    const cplx I(0.0, 1.0);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) {
            const cplx v = I * std::conj(sys.h(i, j));
            if (v != cplx(0.0))
                (is_ramped[static_cast<std::size_t>(i * n + j)] ? tr : tf).emplace_back(i, j, v);
            // rates are never ramped
            if (i == j && sys.loss[i] + sys.gain[i] != 0.0)
                tf.emplace_back(i, i, 0.5 * (sys.loss[i] + sys.gain[i]));
        }
    SpMat xf(n, n), xr(n, n);
    xf.setFromTriplets(tf.begin(), tf.end());
    xr.setFromTriplets(tr.begin(), tr.end());
    const SpMat xf_adj = xf.adjoint(), xr_adj = xr.adjoint();
    const Eigen::VectorXd gain = sys.gain;

    auto rhs = [&](const MatrixXcd& c, double r) {
        // C stays Hermitian, so C X = (X^dag C)^dag and one sparse product suffices
        MatrixXcd a = xf_adj * c;
        if (ramped && r != 0.0)
            a += r * (xr_adj * c);
        MatrixXcd d = -(a + a.adjoint());
        d.diagonal() += gain.cast<cplx>();
        return d;
    };

    std::vector<Index> obs = opt.observe;
    if (obs.empty())
        for (Index k = 0; k < n; ++k)
            obs.push_back(k);
    Trajectory tr_out;
    for (Index k : obs)
        tr_out.labels.push_back(sys.modes[k].label());

    const std::size_t stride =
        opt.record_every > 0.0 ? std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(opt.record_every / h_dt)))
                               : 1;
    double next_check = 0.0;
    auto record = [&](const MatrixXcd& c, std::size_t step, bool final) {
        const double t = static_cast<double>(step) * h_dt;
        tr_out.times.push_back(t);
        std::vector<double> row;
        row.reserve(obs.size());
        for (Index k : obs)
            row.push_back(c(k, k).real());
        tr_out.populations.push_back(std::move(row));
        if (opt.store_matrices)
            tr_out.snapshots.push_back(c);
        if (t >= next_check || final) {
            pauli_check(c, t, opt.pauli_tolerance);
            next_check = t + opt.pauli_check_every;
        }
    };

    MatrixXcd c = 0.5 * (c0 + c0.adjoint());
    record(c, 0, n_steps == 0);
    for (std::size_t step = 0; step < n_steps; ++step) {
        const double t = static_cast<double>(step) * h_dt;
        const double r0 = sys.ramp(t), r1 = sys.ramp(t + 0.5 * h_dt), r2 = sys.ramp(t + h_dt);
        MatrixXcd k1 = rhs(c, r0);
        MatrixXcd k2 = rhs(c + (0.5 * h_dt) * k1, r1);
        MatrixXcd k3 = rhs(c + (0.5 * h_dt) * k2, r1);
        MatrixXcd k4 = rhs(c + h_dt * k3, r2);
        c += (h_dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        c = 0.5 * (c + c.adjoint()).eval();
        if (!c.allFinite())
            throw NumericalError("evolve: state became non-finite at t = " + format_double(t + h_dt));
        const bool final = step + 1 == n_steps;
        if ((step + 1) % stride == 0 || final)
            record(c, step + 1, final);
    }
    tr_out.final_state = c;
    return tr_out;
}

std::string trajectory_csv(const Trajectory& tr) {
    std::ostringstream os;
    os << "t";
    for (const auto& l : tr.labels)
        os << ",n_" << l;
    os << "\n";
    for (std::size_t i = 0; i < tr.times.size(); ++i) {
        os << format_double(tr.times[i]);
        for (double v : tr.populations[i])
            os << "," << format_double(v);
        os << "\n";
    }
    return os.str();
}

std::vector<double> populations(const MatrixXcd& c, std::span<const Index> sites) {
    std::vector<double> out;
    out.reserve(sites.size());
    for (Index k : sites) {
        if (k < 0 || k >= c.rows())
            throw std::invalid_argument("populations: index out of range");
        out.push_back(c(k, k).real());
    }
    return out;
}

std::vector<cplx> two_time_correlator(const QuadraticLindbladSystem& env, Index probe, std::span<const double> times,
                                      Fill fill) {
    if (probe < 0 || probe >= env.dim())
        throw std::invalid_argument("two_time_correlator: probe out of range");
    VectorXcd v = VectorXcd::Zero(env.dim());
    v[probe] = 1.0;
    return two_time_correlator(env, v, times, fill);
}

std::vector<cplx> two_time_correlator(const QuadraticLindbladSystem& env, const VectorXcd& probe,
                                      std::span<const double> times, Fill fill) {
    env.validate();
    if (env.has_system())
        throw std::invalid_argument("two_time_correlator: environment must not contain the system mode");
    if (probe.size() != env.dim())
        throw std::invalid_argument("two_time_correlator: probe vector has the wrong size");
    const cplx I(0.0, 1.0);
    MatrixXcd half_rates = (0.5 * (env.loss + env.gain)).cast<cplx>().asDiagonal();
    // empty: v^T e^{tG} conj(v), G = -i h - rates/2
    // filled: v^H e^{tG} v, G = i h^T - rates/2 (particle-hole picture)
    MatrixXcd g = fill == Fill::empty ? MatrixXcd(-I * env.h - half_rates)
                                      : MatrixXcd(I * env.h.transpose() - half_rates);
    VectorXcd right = fill == Fill::empty ? VectorXcd(probe.conjugate()) : probe;
    VectorXcd left = fill == Fill::empty ? probe : VectorXcd(probe.conjugate());

    std::vector<cplx> out(times.size());
    if (times.empty())
        return out;
    bool uniform = times.size() > 2;
    const double step = times.size() > 1 ? times[1] - times[0] : 0.0;
    for (std::size_t k = 2; uniform && k < times.size(); ++k)
        uniform = std::abs((times[k] - times[k - 1]) - step) <= 1e-12 * std::max(1.0, std::abs(times[k]));
    if (uniform && step > 0.0) {
        // propagate y = e^{tG} right with one cached step matrix
        GeneratorExponential ex(g);
        const MatrixXcd u = ex(step);
        VectorXcd y = ex(times[0]) * right;
        for (std::size_t k = 0; k < times.size(); ++k) {
            if (k > 0)
                y = u * y;
            out[k] = left.transpose() * y;
        }
        return out;
    }
    GeneratorExponential ex(g);
    for (std::size_t k = 0; k < times.size(); ++k)
        out[k] = left.transpose() * (ex(times[k]) * right);
    return out;
}

} // namespace fmc
