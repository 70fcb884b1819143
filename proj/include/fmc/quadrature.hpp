#pragma once

#include <cstddef>
#include <vector>

#include "fmc/specdens.hpp"

namespace fmc {

struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;

    void append(const QuadratureRule& other);
    std::size_t size() const { return nodes.size(); }
};

// n-point Gauss-Legendre on [-1, 1].
QuadratureRule gauss_legendre(std::size_t n);

// Composite Gauss-Legendre in the angle: x = c + h cos(theta). Square-root
// endpoint behaviour becomes smooth in theta, which is what the weights we
// care about look like at their band edges.
QuadratureRule angular_rule(Interval iv, std::size_t n_nodes);

// Gauss-Legendre panels shrinking geometrically toward both ends, for
// integrands with integrable endpoint singularities.
QuadratureRule graded_rule(Interval iv, int levels, std::size_t per_panel);

// Maximal smooth sub-intervals of the support: pieces split at breakpoints.
std::vector<Interval> smooth_segments(const SpectralDensity& j);

// Nodes and weights w_k = q_k J(x_k) of the measure J(x)dx, zero weights dropped.
QuadratureRule discretize_measure(const SpectralDensity& j, std::size_t nodes_per_piece);

} // namespace fmc
