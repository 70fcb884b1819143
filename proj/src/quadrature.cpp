#include "fmc/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>

#include "fmc/errors.hpp"

namespace fmc {

void QuadratureRule::append(const QuadratureRule& other) {
    nodes.insert(nodes.end(), other.nodes.begin(), other.nodes.end());
    weights.insert(weights.end(), other.weights.begin(), other.weights.end());
}

namespace {

// (P_n(x), P_n'(x)) by the three-term recurrence
std::pair<double, double> legendre(std::size_t n, double x) {
    double p0 = 1.0, p1 = x;
    for (std::size_t k = 2; k <= n; ++k) {
        double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    return {p1, n * (x * p1 - p0) / (x * x - 1.0)};
}

} // namespace

QuadratureRule gauss_legendre(std::size_t n) {
    if (n == 0)
        throw std::invalid_argument("gauss_legendre: n must be positive");
    QuadratureRule r;
    r.nodes.resize(n);
    r.weights.resize(n);
    for (std::size_t i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        for (int it = 0; it < 100; ++it) {
            auto [p, dp] = legendre(n, x);
            double dx = p / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16)
                break;
        }
        double dp = legendre(n, x).second;
        double w = 2.0 / ((1.0 - x * x) * dp * dp);
        r.nodes[i] = -x;
        r.nodes[n - 1 - i] = x;
        r.weights[i] = r.weights[n - 1 - i] = w;
    }
    if (n % 2 == 1)
        r.nodes[n / 2] = 0.0;
    return r;
}

namespace {

constexpr std::size_t panel_order = 16;

const QuadratureRule& panel_rule(std::size_t n) {
    static const QuadratureRule g12 = gauss_legendre(12), g16 = gauss_legendre(16), g20 = gauss_legendre(20);
    if (n == 12)
        return g12;
    if (n == 16)
        return g16;
    if (n == 20)
        return g20;
    throw std::invalid_argument("unsupported panel order");
}

void map_panel(QuadratureRule& out, const QuadratureRule& g, double a, double b) {
    double c = 0.5 * (a + b), h = 0.5 * (b - a);
    for (std::size_t k = 0; k < g.size(); ++k) {
        out.nodes.push_back(c + h * g.nodes[k]);
        out.weights.push_back(h * g.weights[k]);
    }
}

} // namespace

QuadratureRule angular_rule(Interval iv, std::size_t n_nodes) {
    const QuadratureRule& g = panel_rule(panel_order);
    std::size_t panels = std::max<std::size_t>(1, (n_nodes + panel_order - 1) / panel_order);
    double c = iv.center(), h = 0.5 * iv.width();
    double dth = std::numbers::pi / panels;
    QuadratureRule r;
    r.nodes.reserve(panels * panel_order);
    r.weights.reserve(panels * panel_order);
    for (std::size_t p = 0; p < panels; ++p) {
        double t0 = p * dth, tc = t0 + 0.5 * dth;
        for (std::size_t k = 0; k < g.size(); ++k) {
            double th = tc + 0.5 * dth * g.nodes[k];
            r.nodes.push_back(c + h * std::cos(th));
            r.weights.push_back(0.5 * dth * g.weights[k] * h * std::sin(th));
        }
    }
    return r;
}

QuadratureRule graded_rule(Interval iv, int levels, std::size_t per_panel) {
    const QuadratureRule& g = panel_rule(per_panel);
    QuadratureRule r;
    double half = 0.5 * iv.width();
    for (int side = 0; side < 2; ++side) {
        double end = side == 0 ? iv.lo : iv.hi;
        double dir = side == 0 ? 1.0 : -1.0;
        double d = half;
        for (int k = 0; k < levels; ++k) {
            double a = end + dir * 0.5 * d, b = end + dir * d;
            map_panel(r, g, std::min(a, b), std::max(a, b));
            d *= 0.5;
        }
        double a = end, b = end + dir * d;
        map_panel(r, g, std::min(a, b), std::max(a, b));
    }
    return r;
}

std::vector<Interval> smooth_segments(const SpectralDensity& j) {
    std::vector<Interval> out;
    for (const auto& piece : j.pieces()) {
        double a = piece.lo;
        for (double b : j.breakpoints())
            if (b > a && b < piece.hi) {
                out.emplace_back(a, b);
                a = b;
            }
        out.emplace_back(a, piece.hi);
    }
    return out;
}

QuadratureRule discretize_measure(const SpectralDensity& j, std::size_t nodes_per_piece) {
    QuadratureRule out;
    for (const auto& piece : j.pieces()) {
        for (const auto& seg : smooth_segments(j)) {
            if (seg.lo < piece.lo || seg.hi > piece.hi)
                continue;
            auto n = static_cast<std::size_t>(std::llround(nodes_per_piece * seg.width() / piece.width()));
            QuadratureRule r = angular_rule(seg, std::max<std::size_t>(n, 64));
            for (std::size_t k = 0; k < r.size(); ++k) {
                double w = r.weights[k] * j(r.nodes[k]);
                if (!std::isfinite(w))
                    throw NumericalError("density is not finite at omega = " + std::to_string(r.nodes[k]));
                if (w > 0.0) {
                    out.nodes.push_back(r.nodes[k]);
                    out.weights.push_back(w);
                }
            }
        }
    }
    return out;
}

} // namespace fmc
