#include "fmc/chainmap.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

#include "fmc/csv.hpp"
#include "fmc/errors.hpp"
#include "fmc/quadrature.hpp"

namespace fmc {

Asymptotics asymptotics(Interval domain) { return {domain.center(), 0.25 * domain.width()}; }

ChainCoefficients chain_coefficients(const SpectralDensity& j, std::size_t n_sites, std::size_t quadrature_nodes,
                                     bool skip_szego_check) {
    if (n_sites == 0)
        throw std::invalid_argument("chain_coefficients: n_sites must be at least 1");
    if (quadrature_nodes < 50 * n_sites)
        throw std::invalid_argument("chain_coefficients: need at least 50 quadrature nodes per site");
    if (j.is_zero())
        throw std::invalid_argument("chain_coefficients: density is identically zero");
    if (!skip_szego_check) {
        SzegoReport rep = szego_diagnostic(j);
        if (!rep.passed) {
            std::string why = rep.notes.empty() ? std::string("diagnostic failed") : rep.notes.front();
            throw NumericalError("density fails the Szego check: " + why);
        }
    }

    QuadratureRule q = discretize_measure(j, quadrature_nodes);
    const auto m = static_cast<Eigen::Index>(q.size());
    if (static_cast<std::size_t>(m) < 2 * n_sites)
        throw NumericalError("chain_coefficients: discretized measure has too few nodes");
    Eigen::Map<const Eigen::VectorXd> x(q.nodes.data(), m);
    Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(q.weights.data(), m);

    ChainCoefficients c;
    c.source_domain = j.hull();
    auto as = asymptotics(c.source_domain);
    c.asym_omega = as.omega;
    c.asym_kappa = as.kappa;
    c.eta = std::sqrt(w.sum());

    const auto n = static_cast<Eigen::Index>(n_sites);
    Eigen::MatrixXd Q(m, n);
    Q.col(0) = w.cwiseSqrt() / c.eta;
    c.omega.resize(n_sites);
    c.kappa.resize(n_sites - 1);
    double kappa_scale = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
        Eigen::VectorXd v = x.cwiseProduct(Q.col(k));
        c.omega[k] = Q.col(k).dot(v);
        if (k + 1 == n)
            break;
        v -= c.omega[k] * Q.col(k);
        if (k > 0)
            v -= c.kappa[k - 1] * Q.col(k - 1);
        // two passes of classical Gram-Schmidt against everything so far
        for (int pass = 0; pass < 2; ++pass) {
            auto Qk = Q.leftCols(k + 1);
            v -= Qk * (Qk.transpose() * v);
        }
        double b = v.norm();
        kappa_scale = std::max(kappa_scale, b);
        if (!(b > 1e-12 * std::max(kappa_scale, c.source_domain.width())))
            throw NumericalError("chain_coefficients: hopping underflow at site " + std::to_string(k) +
                                 "; increase quadrature_nodes or reduce n_sites");
        c.kappa[k] = b;
        Q.col(k + 1) = v / b;
    }
    double loss = (Q.transpose() * Q - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff();
    if (loss > 1e-8)
        throw NumericalError("chain_coefficients: loss of orthogonality " + format_double(loss) +
                             " at depth " + std::to_string(n_sites));
    return c;
}

std::vector<double> coefficient_deviation(const ChainCoefficients& c) {
    std::vector<double> d(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
        d[i] = std::abs(c.omega[i] - c.asym_omega);
        if (i < c.kappa.size())
            d[i] = std::max(d[i], std::abs(c.kappa[i] - c.asym_kappa));
    }
    return d;
}

std::size_t truncation_index(const ChainCoefficients& c, double epsilon) {
    if (!(epsilon > 0.0))
        throw std::invalid_argument("truncation_index: epsilon must be positive");
    auto d = coefficient_deviation(c);
    if (d.empty())
        throw std::invalid_argument("truncation_index: empty chain");
    std::size_t last_bad = 0;
    for (std::size_t i = 0; i < d.size(); ++i)
        if (!(d[i] < epsilon))
            last_bad = i;
    if (last_bad + 1 == d.size() && d.size() > 1)
        throw NumericalError("truncation_index: coefficients not within " + format_double(epsilon) +
                             " of their limits over the computed range");
    return last_bad;
}

SpectralDensity residual_semicircle(double asym_omega, double asym_kappa) {
    if (!(asym_kappa > 0.0))
        throw std::invalid_argument("residual_semicircle: K must be positive");
    return SpectralDensity::semicircle({asym_omega - 2 * asym_kappa, asym_omega + 2 * asym_kappa},
                                       0.5 / std::numbers::pi);
}

std::string chain_csv(const ChainCoefficients& c) {
    std::ostringstream os;
    os << "# eta=" << format_double(c.eta) << " Omega=" << format_double(c.asym_omega)
       << " K=" << format_double(c.asym_kappa) << " lo=" << format_double(c.source_domain.lo)
       << " hi=" << format_double(c.source_domain.hi) << "\n";
    os << "n,omega,kappa\n";
    for (std::size_t i = 0; i < c.size(); ++i) {
        os << i << "," << format_double(c.omega[i]) << ",";
        if (i < c.kappa.size())
            os << format_double(c.kappa[i]);
        os << "\n";
    }
    return os.str();
}

void write_chain_csv(const std::filesystem::path& path, const ChainCoefficients& c) {
    write_text(path, chain_csv(c));
}

ChainCoefficients read_chain_csv(const std::filesystem::path& path) {
    CsvTable t = read_csv(path);
    ChainCoefficients c;
    double lo = 0.0, hi = 0.0;
    bool have[5] = {};
    for (const auto& line : t.comments) {
        std::istringstream is(line);
        std::string tok;
        while (is >> tok) {
            auto eq = tok.find('=');
            if (eq == std::string::npos)
                continue;
            std::string key = tok.substr(0, eq);
            double v = parse_double(tok.substr(eq + 1), path.string() + " metadata");
            if (key == "eta") c.eta = v, have[0] = true;
            else if (key == "Omega") c.asym_omega = v, have[1] = true;
            else if (key == "K") c.asym_kappa = v, have[2] = true;
            else if (key == "lo") lo = v, have[3] = true;
            else if (key == "hi") hi = v, have[4] = true;
        }
    }
    if (!have[0] || !have[1] || !have[2])
        throw IoError(path.string() + ": metadata line must carry eta, Omega and K");
    if (have[3] && have[4])
        c.source_domain = Interval(lo, hi);
    else
        c.source_domain = Interval(c.asym_omega - 2 * c.asym_kappa, c.asym_omega + 2 * c.asym_kappa);
    std::size_t cn = t.column("n"), cw = t.column("omega"), ck = t.column("kappa");
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        std::string ctx = path.string() + " row " + std::to_string(r + 1);
        if (row.size() <= std::max(cn, cw))
            throw IoError(ctx + ": too few fields");
        if (parse_double(row[cn], ctx) != static_cast<double>(r))
            throw IoError(ctx + ": site index out of sequence");
        c.omega.push_back(parse_double(row[cw], ctx));
        bool last = r + 1 == t.rows.size();
        std::string k = ck < row.size() ? row[ck] : std::string();
        if (last) {
            if (!k.empty())
                throw IoError(ctx + ": last row must leave kappa empty");
        } else {
            c.kappa.push_back(parse_double(k, ctx));
        }
    }
    if (c.omega.empty())
        throw IoError(path.string() + ": no chain sites");
    return c;
}

} // namespace fmc
