#include "fmc/closure.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <unsupported/Eigen/MatrixFunctions>

#include "fmc/csv.hpp"
#include "fmc/errors.hpp"

namespace fmc {

double c_semicircle(double x) {
    if (!std::isfinite(x))
        throw std::invalid_argument("c_semicircle: non-finite argument");
    double ax = std::abs(x); // even function
    return std::cyl_bessel_j(0.0, ax) + std::cyl_bessel_j(2.0, ax);
}

void UniversalClosure::validate() const {
    const std::size_t n = alpha.size();
    if (n == 0)
        throw std::invalid_argument("closure: no modes");
    if (beta.size() + 1 != n || w.size() != n)
        throw std::invalid_argument("closure: need n alphas, n-1 betas and n weights");
    for (const auto& a : alpha)
        if (!std::isfinite(a.real()) || !(a.real() < 0.0) || a.imag() != 0.0)
            throw std::invalid_argument("closure: alpha must be real and negative");
    for (const auto& b : beta)
        if (!std::isfinite(b.imag()) || b.real() != 0.0)
            throw std::invalid_argument("closure: beta must be purely imaginary");
    double nw = 0.0;
    for (const auto& x : w) {
        if (!std::isfinite(x.real()) || !std::isfinite(x.imag()))
            throw std::invalid_argument("closure: non-finite weight");
        nw += std::norm(x);
    }
    if (std::abs(nw - 1.0) > 1e-6)
        throw std::invalid_argument("closure: weights must have unit norm, got " + format_double(nw));
}

Eigen::MatrixXcd UniversalClosure::matrix() const {
    const auto n = static_cast<Eigen::Index>(alpha.size());
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(n, n);
    for (Eigen::Index k = 0; k < n; ++k)
        m(k, k) = alpha[k];
    for (Eigen::Index k = 0; k + 1 < n; ++k)
        m(k, k + 1) = m(k + 1, k) = beta[k];
    return m;
}

std::vector<cplx> UniversalClosure::evaluate(std::span<const double> times) const {
    GeneratorExponential ex(matrix());
    Eigen::Map<const Eigen::VectorXcd> wv(w.data(), static_cast<Eigen::Index>(w.size()));
    std::vector<cplx> out;
    out.reserve(times.size());
    for (double t : times)
        out.push_back(wv.dot(ex(t) * wv)); // Eigen's dot conjugates the left side
    return out;
}

double default_fit_tolerance(std::size_t n_modes) { return n_modes <= 6 ? 5e-3 : 2e-3; }

std::vector<double> fit_grid(double t_max, std::size_t n_grid) {
    if (!(t_max > 0.0) || n_grid < 2)
        throw std::invalid_argument("fit grid needs t_max > 0 and at least two points");
    std::vector<double> t(n_grid);
    for (std::size_t k = 0; k < n_grid; ++k)
        t[k] = t_max * static_cast<double>(k) / static_cast<double>(n_grid - 1);
    return t;
}

double max_fit_error(const UniversalClosure& u, double t_max, std::size_t n_grid) {
    auto t = fit_grid(t_max, n_grid);
    auto f = u.evaluate(t);
    double m = 0.0;
    for (std::size_t k = 0; k < t.size(); ++k)
        m = std::max(m, std::abs(f[k] - c_semicircle(t[k])));
    return m;
}

std::string closure_table_csv(const UniversalClosure& u) {
    std::ostringstream os;
    os << "# fit_residual=" << format_double(u.fit_residual) << "\n";
    os << "n,alpha-re,beta-im,w-re,w-im\n";
    for (std::size_t k = 0; k < u.n_modes(); ++k) {
        os << k + 1 << "," << format_double(u.alpha[k].real()) << ",";
        if (k < u.beta.size())
            os << format_double(u.beta[k].imag());
        os << "," << format_double(u.w[k].real()) << "," << format_double(u.w[k].imag()) << "\n";
    }
    return os.str();
}

void save_closure_table(const UniversalClosure& u, const std::filesystem::path& path) {
    write_text(path, closure_table_csv(u));
}

UniversalClosure load_closure_table(const std::filesystem::path& path) {
    CsvTable t = read_csv(path);
    const std::vector<std::string> expected{"n", "alpha-re", "beta-im", "w-re", "w-im"};
    if (t.header != expected)
        throw IoError(path.string() + ": closure table columns must be n,alpha-re,beta-im,w-re,w-im");
    UniversalClosure u;
    bool have_residual = false;
    for (const auto& c : t.comments) {
        auto pos = c.find("fit_residual=");
        if (pos != std::string::npos) {
            std::string v = c.substr(pos + 13);
            v = v.substr(0, v.find_first_of(" \t"));
            u.fit_residual = parse_double(v, path.string() + " fit_residual");
            have_residual = true;
        }
    }
    const std::size_t n = t.rows.size();
    if (n == 0)
        throw IoError(path.string() + ": empty closure table");
    for (std::size_t r = 0; r < n; ++r) {
        const auto& row = t.rows[r];
        std::string ctx = path.string() + " row " + std::to_string(r + 1);
        if (row.size() != 5)
            throw IoError(ctx + ": expected 5 fields");
        if (parse_double(row[0], ctx) != static_cast<double>(r + 1))
            throw IoError(ctx + ": mode index out of sequence");
        u.alpha.emplace_back(parse_double(row[1], ctx), 0.0);
        if (r + 1 < n) {
            if (row[2].empty())
                throw IoError(ctx + ": missing beta-im (need one fewer beta than modes)");
            u.beta.emplace_back(0.0, parse_double(row[2], ctx));
        } else if (!row[2].empty()) {
            throw IoError(ctx + ": beta-im must be blank on the last row");
        }
        u.w.emplace_back(parse_double(row[3], ctx), parse_double(row[4], ctx));
    }
    try {
        u.validate();
    } catch (const std::invalid_argument& e) {
        throw IoError(path.string() + ": " + e.what());
    }
    if (!have_residual)
        u.fit_residual = max_fit_error(u);
    return u;
}

std::string fit_report_csv(const UniversalClosure& u, double t_max, std::size_t n_grid) {
    auto t = fit_grid(t_max, n_grid);
    auto f = u.evaluate(t);
    std::ostringstream os;
    os << "t,c_fit_re,c_fit_im,c_exact,abs_err\n";
    for (std::size_t k = 0; k < t.size(); ++k) {
        double ex = c_semicircle(t[k]);
        os << format_double(t[k]) << "," << format_double(f[k].real()) << "," << format_double(f[k].imag()) << ","
           << format_double(ex) << "," << format_double(std::abs(f[k] - ex)) << "\n";
    }
    return os.str();
}

std::string to_string(Fill f) { return f == Fill::empty ? "empty" : "filled"; }

Fill fill_from_string(const std::string& s) {
    if (s == "empty")
        return Fill::empty;
    if (s == "filled")
        return Fill::filled;
    throw std::invalid_argument("fill must be 'empty' or 'filled', got '" + s + "'");
}

void ClosureParams::validate() const {
    const std::size_t n = omega.size();
    if (n == 0 || g.size() + 1 != n || gamma.size() != n || zeta.size() != n)
        throw std::invalid_argument("closure params: inconsistent lengths");
    for (std::size_t j = 0; j < n; ++j)
        if (!std::isfinite(omega[j]) || !(gamma[j] > 0.0) || !std::isfinite(gamma[j]) ||
            !std::isfinite(std::abs(zeta[j])))
            throw std::invalid_argument("closure params: need finite omega, zeta and gamma > 0");
    for (double x : g)
        if (!std::isfinite(x))
            throw std::invalid_argument("closure params: non-finite coupling");
}

Eigen::MatrixXd ClosureParams::hamiltonian() const {
    const auto n = static_cast<Eigen::Index>(omega.size());
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j)
        h(j, j) = omega[j];
    for (Eigen::Index j = 0; j + 1 < n; ++j)
        h(j, j + 1) = h(j + 1, j) = g[j];
    return h;
}

ClosureParams rescale_closure(const UniversalClosure& u, double asym_omega, double asym_kappa, Fill fill) {
    u.validate();
    if (!std::isfinite(asym_omega) || !(asym_kappa > 0.0) || !std::isfinite(asym_kappa))
        throw std::invalid_argument("rescale_closure: need finite Omega and K > 0");
    const double K = asym_kappa;
    ClosureParams p;
    p.fill = fill;
    // The filled side keeps the same network: with a real Hamiltonian its
    // correlation function is then exactly the conjugate of the empty one.
    for (std::size_t j = 0; j < u.n_modes(); ++j) {
        p.omega.push_back(asym_omega - 2 * K * u.alpha[j].imag());
        p.gamma.push_back(-4 * K * u.alpha[j].real());
        p.zeta.push_back(K * u.w[j]);
    }
    for (const auto& b : u.beta)
        p.g.push_back(-2 * K * b.imag());
    return p;
}

std::string closure_params_csv(const ClosureParams& p) {
    std::ostringstream os;
    os << "# fill=" << to_string(p.fill) << "\n";
    os << "j,omega,g,gamma,zeta_re,zeta_im\n";
    for (std::size_t j = 0; j < p.size(); ++j) {
        os << j + 1 << "," << format_double(p.omega[j]) << ",";
        if (j < p.g.size())
            os << format_double(p.g[j]);
        os << "," << format_double(p.gamma[j]) << "," << format_double(p.zeta[j].real()) << ","
           << format_double(p.zeta[j].imag()) << "\n";
    }
    return os.str();
}

std::vector<cplx> closure_ttcf(const ClosureParams& p, std::span<const double> times) {
    p.validate();
    const auto n = static_cast<Eigen::Index>(p.size());
    const cplx I(0.0, 1.0);
    Eigen::MatrixXcd lam = p.hamiltonian().cast<cplx>();
    Eigen::MatrixXcd half_gamma = Eigen::MatrixXcd::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j)
        half_gamma(j, j) = 0.5 * p.gamma[j];
    Eigen::Map<const Eigen::VectorXcd> z(p.zeta.data(), n);
    std::vector<cplx> out;
    out.reserve(times.size());
    if (p.fill == Fill::empty) {
        GeneratorExponential ex(-I * lam - half_gamma);
        for (double t : times)
            out.push_back((z.transpose() * ex(t) * z.conjugate())(0, 0));
    } else {
        GeneratorExponential ex(I * lam.transpose() - half_gamma);
        for (double t : times)
            out.push_back((z.adjoint() * ex(t) * z)(0, 0));
    }
    return out;
}

GeneratorExponential::GeneratorExponential(const Eigen::MatrixXcd& g) : g_(g) {
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(g);
    if (es.info() == Eigen::Success) {
        v_ = es.eigenvectors();
        d_ = es.eigenvalues();
        Eigen::FullPivLU<Eigen::MatrixXcd> lu(v_);
        if (lu.isInvertible()) {
            vinv_ = lu.inverse();
            double cond = v_.cwiseAbs().colwise().sum().maxCoeff() * vinv_.cwiseAbs().colwise().sum().maxCoeff();
            eig_ = std::isfinite(cond) && cond < 1e8;
        }
    }
}

Eigen::MatrixXcd GeneratorExponential::operator()(double t) const {
    if (eig_)
        return v_ * (d_ * t).array().exp().matrix().asDiagonal() * vinv_;
    return (g_ * t).exp();
}

} // namespace fmc
