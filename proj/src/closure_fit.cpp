// Least-squares and minimax fitting of the universal closure coefficients.
//
// Parameters (4n - 1 reals): log(-alpha_k), Im beta_k, Re v_k, Im v_k with
// w = v / |v|. The Jacobian of <w, e^{tM} w> with respect to the entries of M
// comes from the eigendecomposition M = V D V^-1 and the divided differences
// of exp(t d).

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <thread>

#include "fmc/closure.hpp"
#include "fmc/csv.hpp"
#include "fmc/errors.hpp"

namespace fmc {
namespace {

using Eigen::Index;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

constexpr double log_rate_min = -12.0;
constexpr double log_rate_max = 3.0;

struct Problem {
    Index n = 0;
    std::vector<double> t;
    std::vector<double> target;
    std::vector<double> weight; // empty means uniform
};

double weight_at(const Problem& P, std::size_t i) { return P.weight.empty() ? 1.0 : P.weight[i]; }

// Residuals are stacked [Re; Im]. Returns false if the decomposition failed.
bool residuals(const Problem& P, const VectorXd& p, VectorXd& r, MatrixXd* jac) {
    const Index n = P.n, nt = static_cast<Index>(P.t.size());
    const cplx I(0.0, 1.0);
    MatrixXcd M = MatrixXcd::Zero(n, n);
    for (Index k = 0; k < n; ++k)
        M(k, k) = -std::exp(p[k]);
    for (Index k = 0; k + 1 < n; ++k)
        M(k, k + 1) = M(k + 1, k) = I * p[n + k];
    VectorXcd v(n);
    for (Index k = 0; k < n; ++k)
        v[k] = cplx(p[2 * n - 1 + k], p[3 * n - 1 + k]);
    const double nv2 = v.squaredNorm();
    if (!(nv2 > 0.0))
        return false;
    const VectorXcd w = v / std::sqrt(nv2);

    Eigen::ComplexEigenSolver<MatrixXcd> es(M);
    if (es.info() != Eigen::Success)
        return false;
    const MatrixXcd& V = es.eigenvectors();
    const VectorXcd& d = es.eigenvalues();
    Eigen::PartialPivLU<MatrixXcd> lu(V);
    const MatrixXcd Vi = lu.inverse();
    const VectorXcd L = (w.adjoint() * V).transpose();
    const VectorXcd R = Vi * w;
    const VectorXcd Vi_v = Vi * v;
    const VectorXcd vH_V = (v.adjoint() * V).transpose();

    r.resize(2 * nt);
    if (jac)
        jac->resize(2 * nt, 4 * n - 1);
    MatrixXcd F(n, n);
    for (Index it = 0; it < nt; ++it) {
        const double t = P.t[it], sw = weight_at(P, it);
        const VectorXcd e = (d * t).array().exp();
        const cplx f = (L.array() * e.array() * R.array()).sum();
        const cplx res = sw * (f - P.target[it]);
        r[it] = res.real();
        r[nt + it] = res.imag();
        if (!jac)
            continue;
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < n; ++j) {
                cplx dd = d[i] - d[j];
                F(i, j) = std::abs(dd) < 1e-10 * (1.0 + std::abs(d[i])) ? t * e[i] : (e[i] - e[j]) / dd;
            }
        // df/dM_ab = (Vi^T (L o F o R) V^T)_ab
        const MatrixXcd H = sw * (Vi.transpose() * (L.asDiagonal() * F * R.asDiagonal()) * V.transpose());
        const VectorXcd Av = sw * (V * (e.asDiagonal() * Vi_v));
        const VectorXcd vA = sw * (Vi.transpose() * (e.asDiagonal() * vH_V));
        const cplx fw = sw * f;
        auto put = [&](Index col, cplx g) {
            (*jac)(it, col) = g.real();
            (*jac)(nt + it, col) = g.imag();
        };
        for (Index k = 0; k < n; ++k)
            put(k, H(k, k) * (-std::exp(p[k])));
        for (Index k = 0; k + 1 < n; ++k)
            put(n + k, I * (H(k, k + 1) + H(k + 1, k)));
        for (Index k = 0; k < n; ++k) {
            const cplx dre = (Av[k] + vA[k]) / nv2 - fw * 2.0 * v[k].real() / nv2;
            const cplx dim = (-I * Av[k] + I * vA[k]) / nv2 - fw * 2.0 * v[k].imag() / nv2;
            put(2 * n - 1 + k, dre);
            put(3 * n - 1 + k, dim);
        }
    }
    return r.allFinite() && (!jac || jac->allFinite());
}

double cost_of(const Problem& P, const VectorXd& p) {
    VectorXd r;
    if (!residuals(P, p, r, nullptr))
        return std::numeric_limits<double>::infinity();
    return r.squaredNorm();
}

// Levenberg-Marquardt with Marquardt diagonal scaling.
void levenberg_marquardt(const Problem& P, VectorXd& p, int max_iter) {
    VectorXd r;
    MatrixXd J;
    if (!residuals(P, p, r, &J))
        return;
    double cost = r.squaredNorm();
    double lambda = 1e-3;
    for (int iter = 0; iter < max_iter; ++iter) {
        const MatrixXd A = J.transpose() * J;
        const VectorXd g = J.transpose() * r;
        const VectorXd D = A.diagonal().cwiseMax(1e-12);
        bool accepted = false;
        double rel = 1.0;
        for (int tries = 0; tries < 20; ++tries) {
            MatrixXd B = A;
            B.diagonal() += lambda * D;
            VectorXd pn = p + B.ldlt().solve(-g);
            for (Index k = 0; k < P.n; ++k)
                pn[k] = std::clamp(pn[k], log_rate_min, log_rate_max);
            double cn = cost_of(P, pn);
            if (std::isfinite(cn) && cn < cost) {
                rel = (cost - cn) / cost;
                p = pn;
                cost = cn;
                lambda = std::max(lambda / 3.0, 1e-12);
                accepted = true;
                break;
            }
            lambda *= 4.0;
        }
        if (!accepted || rel < 1e-10)
            break;
        if (!residuals(P, p, r, &J))
            break;
    }
}

std::vector<double> abs_errors(const Problem& P, const VectorXd& p) {
    Problem U = P;
    U.weight.clear();
    VectorXd r;
    const std::size_t nt = P.t.size();
    if (!residuals(U, p, r, nullptr))
        return std::vector<double>(nt, std::numeric_limits<double>::infinity());
    std::vector<double> e(nt);
    for (std::size_t i = 0; i < nt; ++i)
        e[i] = std::hypot(r[i], r[nt + i]);
    return e;
}

double max_error(const Problem& P, const VectorXd& p) {
    auto e = abs_errors(P, p);
    return *std::max_element(e.begin(), e.end());
}

// Lawson's iteratively reweighted least squares toward the minimax solution.
double lawson_refine(const Problem& P0, VectorXd& p, int rounds) {
    Problem P = P0;
    P.weight.assign(P.t.size(), 1.0);
    double best = max_error(P0, p);
    VectorXd best_p = p;
    for (int round = 0; round < rounds; ++round) {
        auto e = abs_errors(P0, p);
        double s = 0.0;
        for (std::size_t i = 0; i < e.size(); ++i) {
            P.weight[i] *= std::sqrt(e[i] + 1e-6 * best);
            s += P.weight[i];
        }
        for (auto& x : P.weight)
            x *= static_cast<double>(P.weight.size()) / s;
        levenberg_marquardt(P, p, 100);
        double m = max_error(P0, p);
        if (m < best) {
            best = m;
            best_p = p;
        }
    }
    p = best_p;
    return best;
}

// Starts alternate between a damping profile concentrated at the far end of
// the chain (the shape good fits end up with) and broad random draws.
VectorXd initial_guess(Index n, std::size_t start, std::uint64_t seed) {
    std::seed_seq ss{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                     static_cast<std::uint32_t>(start)};
    std::mt19937_64 rng(ss);
    std::normal_distribution<double> N01;
    const bool structured = start % 2 == 0;
    VectorXd p(4 * n - 1);
    for (Index k = 0; k < n; ++k) {
        if (structured) {
            const Index m = n - 1 - k;
            const double base = m == 0 ? 1.3 : m == 1 ? 0.33 : m == 2 ? 0.15 : m == 3 ? 0.05 : 1e-3;
            p[k] = std::log(base) + 0.4 * N01(rng);
        } else {
            const double base = k < n - 2 ? 0.02 : (k == n - 2 ? 0.2 : 0.6);
            p[k] = std::log(base) + N01(rng);
        }
        p[k] = std::clamp(p[k], log_rate_min, log_rate_max);
    }
    for (Index k = 0; k + 1 < n; ++k)
        p[n + k] = 0.5 * (1.0 + (structured ? 0.1 : 0.2) * N01(rng));
    const double spread = structured ? 0.1 : 0.3;
    for (Index k = 0; k < n; ++k) {
        p[2 * n - 1 + k] = (k == 0 ? 1.0 : 0.0) + spread * N01(rng);
        p[3 * n - 1 + k] = spread * N01(rng);
    }
    return p;
}

UniversalClosure to_closure(Index n, const VectorXd& p) {
    UniversalClosure u;
    VectorXcd v(n);
    for (Index k = 0; k < n; ++k)
        v[k] = cplx(p[2 * n - 1 + k], p[3 * n - 1 + k]);
    // Gauge: flipping the sign of a basis vector flips adjacent betas, and a
    // global phase on w is invisible. Fix both for a canonical table.
    std::vector<double> b(p.data() + n, p.data() + 2 * n - 1);
    for (Index k = 0; k + 1 < n; ++k)
        if (b[k] < 0.0) {
            b[k] = -b[k]; // negating the whole tail k+1.. touches only this coupling
            for (Index j = k + 1; j < n; ++j)
                v[j] = -v[j];
        }
    v /= v.norm();
    if (std::abs(v[0]) > 0.0) {
        v *= std::conj(v[0]) / std::abs(v[0]);
        v[0] = v[0].real();
    }
    for (Index k = 0; k < n; ++k) {
        u.alpha.emplace_back(-std::exp(p[k]), 0.0);
        u.w.push_back(v[k]);
    }
    for (Index k = 0; k + 1 < n; ++k)
        u.beta.emplace_back(0.0, b[k]);
    return u;
}

template <class F>
void parallel_for(std::size_t count, unsigned jobs, F&& body) {
    jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(count)));
    if (jobs == 1) {
        for (std::size_t i = 0; i < count; ++i)
            body(i);
        return;
    }
    std::vector<std::thread> pool;
    for (unsigned j = 0; j < jobs; ++j)
        pool.emplace_back([&, j] {
            for (std::size_t i = j; i < count; i += jobs)
                body(i);
        });
    for (auto& th : pool)
        th.join();
}

} // namespace

UniversalClosure fit_universal_closure(std::size_t n_modes, const ClosureFitOptions& opt) {
    if (n_modes < 1)
        throw std::invalid_argument("fit_universal_closure: need at least one mode");
    if (opt.n_starts == 0)
        throw std::invalid_argument("fit_universal_closure: need at least one start");
    const double tol = opt.tolerance > 0.0 ? opt.tolerance : default_fit_tolerance(n_modes);
    const Index n = static_cast<Index>(n_modes);

    Problem P;
    P.n = n;
    P.t = fit_grid(opt.t_max, opt.n_grid);
    for (double t : P.t)
        P.target.push_back(c_semicircle(t));

    std::vector<VectorXd> params(opt.n_starts);
    std::vector<double> ls_error(opt.n_starts);
    parallel_for(opt.n_starts, opt.jobs, [&](std::size_t s) {
        VectorXd p = initial_guess(n, s, opt.seed);
        levenberg_marquardt(P, p, 400);
        params[s] = p;
        ls_error[s] = max_error(P, p);
    });

    std::vector<std::size_t> order(opt.n_starts);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return ls_error[a] < ls_error[b]; });
    order.resize(std::min(order.size(), std::max<std::size_t>(opt.n_refine, 1)));

    std::vector<double> refined(order.size());
    parallel_for(order.size(), opt.jobs, [&](std::size_t i) {
        refined[i] = lawson_refine(P, params[order[i]], opt.lawson_rounds);
    });
    std::size_t best = 0;
    for (std::size_t i = 1; i < order.size(); ++i)
        if (refined[i] < refined[best])
            best = i;
    VectorXd best_p = params[order[best]];
    double best_err = refined[best];

    // Hops run in fixed-size batches from the incumbent so the outcome does
    // not depend on the thread count.
    constexpr std::size_t batch = 4;
    for (std::size_t h0 = 0; h0 < opt.n_hops; h0 += batch) {
        const std::size_t nb = std::min(batch, opt.n_hops - h0);
        std::vector<VectorXd> hop(nb);
        std::vector<double> err(nb);
        parallel_for(nb, opt.jobs, [&](std::size_t i) {
            std::seed_seq ss{static_cast<std::uint32_t>(opt.seed), static_cast<std::uint32_t>(opt.seed >> 32),
                             static_cast<std::uint32_t>(0x40000000u + h0 + i)};
            std::mt19937_64 rng(ss);
            std::normal_distribution<double> N01;
            VectorXd p = best_p;
            for (Index k = 0; k < p.size(); ++k)
                p[k] += 0.05 * N01(rng);
            for (Index k = 0; k < n; ++k)
                p[k] = std::clamp(p[k], log_rate_min, log_rate_max);
            levenberg_marquardt(P, p, 200);
            err[i] = lawson_refine(P, p, opt.lawson_rounds);
            hop[i] = std::move(p);
        });
        for (std::size_t i = 0; i < nb; ++i)
            if (err[i] < best_err) {
                best_err = err[i];
                best_p = hop[i];
            }
    }

    UniversalClosure u = to_closure(n, best_p);
    u.fit_residual = max_fit_error(u, opt.t_max, opt.n_grid);
    if (!(u.fit_residual <= tol))
        throw NumericalError("closure fit with " + std::to_string(n_modes) + " modes reached max error " +
                             format_double(u.fit_residual) + ", above tolerance " + format_double(tol));
    return u;
}

} // namespace fmc
