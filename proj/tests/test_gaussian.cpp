#include "doctest.h"

#include <cmath>
#include <random>

#include "fmc/errors.hpp"
#include "fmc/gaussian.hpp"

using namespace fmc;
using Eigen::Index;
using Eigen::MatrixXcd;

namespace {

QuadraticLindbladSystem random_system(std::mt19937_64& rng, Index dim, bool ramp) {
    std::normal_distribution<double> N;
    std::uniform_real_distribution<double> U(0.0, 0.6);
    QuadraticLindbladSystem s;
    MatrixXcd a(dim, dim);
    for (Index i = 0; i < dim; ++i)
        for (Index j = 0; j < dim; ++j)
            a(i, j) = cplx(N(rng), N(rng));
    s.h = 0.5 * (a + a.adjoint());
    s.loss.resize(dim);
    s.gain.resize(dim);
    for (Index j = 0; j < dim; ++j) {
        s.loss[j] = (j % 2 == 0) ? U(rng) : 0.0;
        s.gain[j] = (j % 3 == 1) ? U(rng) : 0.0;
        s.modes.push_back({ModeRole::closure, 0, static_cast<std::size_t>(j)});
    }
    if (ramp && dim > 1) {
        s.ramp_tau = 3.0;
        s.ramped = {{0, 0}, {0, 1}, {1, 0}};
    }
    return s;
}

MatrixXcd random_density(std::mt19937_64& rng, Index dim) {
    std::normal_distribution<double> N;
    const Index d = Index{1} << dim;
    MatrixXcd a(d, d);
    for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j)
            a(i, j) = cplx(N(rng), N(rng));
    MatrixXcd rho = a * a.adjoint();
    return rho / rho.trace();
}

ChainCoefficients uniform_chain(std::size_t n, double eta, double omega, double kappa) {
    ChainCoefficients c;
    c.eta = eta;
    c.omega.assign(n, omega);
    c.kappa.assign(n - 1, kappa);
    c.asym_omega = omega;
    c.asym_kappa = kappa;
    c.source_domain = Interval(omega - 2 * kappa, omega + 2 * kappa);
    return c;
}

UniversalClosure toy_closure() {
    UniversalClosure u;
    u.alpha = {cplx(-0.02, 0.0), cplx(-0.3, 0.0), cplx(-1.1, 0.0)};
    u.beta = {cplx(0.0, 0.45), cplx(0.0, 0.2)};
    u.w = {cplx(0.8, 0.0), cplx(0.36, 0.48), cplx(0.0, 0.0)};
    return u;
}

} // namespace

TEST_CASE("correlation-matrix evolution agrees with the dense master equation") {
    std::mt19937_64 rng(20240601);
    int instances = 0;
    for (int trial = 0; trial < 24; ++trial) {
        const Index dim = 1 + trial % 3;
        QuadraticLindbladSystem sys = random_system(rng, dim, trial % 2 == 1);
        MatrixXcd rho0 = random_density(rng, dim);
        const double dt = 1e-3;
        DenseOracleResult ref = dense_oracle(sys, rho0, 10.0, dt, 500);
        EvolveOptions opt;
        opt.record_every = 0.5;
        opt.store_matrices = true;
        Trajectory tr = evolve(sys, correlation_from_density(rho0, dim), 10.0, dt, opt);
        REQUIRE(tr.snapshots.size() == ref.correlations.size());
        double worst = 0.0;
        for (std::size_t k = 0; k < tr.snapshots.size(); ++k) {
            CHECK(tr.times[k] == doctest::Approx(ref.times[k]));
            worst = std::max(worst, (tr.snapshots[k] - ref.correlations[k]).cwiseAbs().maxCoeff());
        }
        INFO("trial " << trial << " dim " << dim);
        CHECK(worst < 1e-8);
        CHECK(ref.max_trace_error < 1e-10);
        CHECK(ref.min_eigenvalue > -1e-10);
        ++instances;
    }
    CHECK(instances >= 20);
}

TEST_CASE("two-time correlator agrees with quantum regression on a small environment") {
    ChainCoefficients chain = uniform_chain(1, 0.3, 0.2, 0.5);
    for (Fill fill : {Fill::empty, Fill::filled}) {
        UniversalClosure u = toy_closure();
        u.alpha.pop_back();
        u.beta.pop_back();
        u.w = {cplx(0.6, 0.0), cplx(0.0, 0.8)};
        SideSpec side{chain, 0, rescale_closure(u, 0.2, 0.5, fill)};
        QuadraticLindbladSystem env = assemble_environment(side, fill);
        REQUIRE(env.dim() == 3);
        const double dt = 1e-3;
        const std::size_t steps = 8000;
        auto dense = dense_two_time(env, 0, fill, dt, steps);
        std::vector<double> ts;
        for (std::size_t k = 0; k <= steps; k += 400)
            ts.push_back(k * dt);
        auto c = two_time_correlator(env, 0, ts, fill);
        for (std::size_t i = 0; i < ts.size(); ++i)
            CHECK(std::abs(c[i] - dense[i * 400]) < 1e-9);
    }
}

TEST_CASE("empty and filled environments are stationary") {
    ChainCoefficients chain = uniform_chain(5, 0.2, 0.1, 0.4);
    for (Fill fill : {Fill::empty, Fill::filled}) {
        SideSpec side{chain, 4, rescale_closure(toy_closure(), 0.1, 0.4, fill)};
        QuadraticLindbladSystem env = assemble_environment(side, fill);
        const Index n = env.dim();
        MatrixXcd c0 = fill == Fill::empty ? MatrixXcd(MatrixXcd::Zero(n, n)) : MatrixXcd(MatrixXcd::Identity(n, n));
        EvolveOptions opt;
        opt.store_matrices = true;
        Trajectory tr = evolve(env, c0, 0.5, 0.01, opt);
        for (const auto& c : tr.snapshots)
            CHECK((c - c0).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("filled-side correlator is the conjugate of the empty-side one") {
    ChainCoefficients chain = uniform_chain(4, 0.25, -0.3, 0.45);
    std::vector<double> ts;
    for (int i = 0; i <= 300; ++i)
        ts.push_back(0.1 * i);
    auto env0 = assemble_environment({chain, 3, rescale_closure(toy_closure(), -0.3, 0.45, Fill::empty)}, Fill::empty);
    auto env1 = assemble_environment({chain, 3, rescale_closure(toy_closure(), -0.3, 0.45, Fill::filled)}, Fill::filled);
    auto c0 = two_time_correlator(env0, 0, ts, Fill::empty);
    auto c1 = two_time_correlator(env1, 0, ts, Fill::filled);
    for (std::size_t i = 0; i < ts.size(); ++i)
        CHECK(std::abs(c1[i] - std::conj(c0[i])) < 1e-12);
    // the closure alone, probed through its coupling vector, gives the closure correlator
    ClosureParams p = rescale_closure(toy_closure(), -0.3, 0.45, Fill::empty);
    auto env = assemble_environment({chain, 0, p}, Fill::empty);
    Eigen::VectorXcd probe = Eigen::VectorXcd::Zero(env.dim());
    for (std::size_t j = 0; j < p.size(); ++j)
        probe[1 + static_cast<Index>(j)] = p.zeta[j];
    QuadraticLindbladSystem only = env;
    only.h.row(0).setZero();
    only.h.col(0).setZero();
    auto direct = two_time_correlator(only, probe, ts, Fill::empty);
    auto ref = closure_ttcf(p, ts);
    for (std::size_t i = 0; i < ts.size(); ++i)
        CHECK(std::abs(direct[i] - ref[i]) < 1e-12);
}

TEST_CASE("network assembly layout") {
    ChainCoefficients e = uniform_chain(10, 0.3, 0.5, 0.5), f = uniform_chain(10, 0.4, -0.5, 0.5);
    ClosureParams ce = rescale_closure(toy_closure(), 0.5, 0.5, Fill::empty);
    ClosureParams cf = rescale_closure(toy_closure(), -0.5, 0.5, Fill::filled);
    QuadraticLindbladSystem s = assemble(-0.3, {e, 2, ce}, {f, 4, cf});
    REQUIRE(s.dim() == 1 + 3 + 3 + 5 + 3);
    CHECK(s.modes[0].label() == "system");
    CHECK(s.index_of("chain0_0") == 1);
    CHECK(s.index_of("closure0_0") == 4);
    CHECK(s.index_of("chain1_0") == 7);
    CHECK(s.index_of("closure1_2") == 14);
    CHECK_THROWS_AS(s.index_of("chain0_9"), std::invalid_argument);
    CHECK(s.h(0, 0) == cplx(-0.3));
    CHECK(s.h(0, 1) == cplx(0.3));
    CHECK(s.h(0, 7) == cplx(0.4));
    CHECK(s.h(3, 4) == ce.zeta[0]);
    CHECK(s.h(4, 3) == std::conj(ce.zeta[0]));
    CHECK(s.h(11, 13) == cf.zeta[1]);
    CHECK(s.loss[5] == ce.gamma[1]);
    CHECK(s.gain[5] == 0.0);
    CHECK(s.gain[13] == cf.gamma[1]);
    CHECK(s.loss[13] == 0.0);
    CHECK(s.has_system());
    // wrong fill on a side is rejected
    CHECK_THROWS_AS(assemble(0.0, {e, 2, cf}, {f, 4, cf}), std::invalid_argument);
    CHECK_THROWS_AS(assemble(0.0, {e, 20, ce}, {f, 4, cf}), std::invalid_argument);

    QuadraticLindbladSystem r = assemble(-0.3, {e, 2, std::nullopt}, {f, 2, std::nullopt}, ReferenceMode::long_chain(10));
    CHECK(r.dim() == 21);
    CHECK(r.loss.sum() == 0.0);
    CHECK(r.index_of("chain1_9") == 20);
    CHECK_THROWS_AS(assemble(0.0, {e, 2, {}}, {f, 2, {}}, ReferenceMode::long_chain(11)), std::invalid_argument);

    MatrixXcd c0 = initial_correlation(s, true);
    CHECK(c0(0, 0) == 1.0);
    CHECK(c0(1, 1) == 0.0);
    CHECK(c0(14, 14) == 1.0);
}

TEST_CASE("ramp scales only the system entries") {
    ChainCoefficients e = uniform_chain(3, 0.3, 0.5, 0.5), f = uniform_chain(3, 0.4, -0.5, 0.5);
    QuadraticLindbladSystem s = assemble(-0.4, {e, 2, {}}, {f, 2, {}});
    s.ramp_tau = 10.0;
    MatrixXcd h = s.hamiltonian_at(2.5);
    CHECK(h(0, 0) == cplx(-0.1));
    CHECK(h(0, 1) == cplx(0.075));
    CHECK(h(4, 0) == cplx(0.1));
    CHECK(h(1, 2) == cplx(0.5));
    CHECK(s.hamiltonian_at(50.0) == s.h);
    CHECK(s.hamiltonian_at(0.0)(0, 1) == cplx(0.0));

    // a zero ramp time is the quench
    EvolveOptions opt;
    QuadraticLindbladSystem q = s;
    q.ramp_tau = 0.0;
    Trajectory a = evolve(q, initial_correlation(q, true), 5.0, 0.01, opt);
    q.ramped.clear();
    Trajectory b = evolve(q, initial_correlation(q, true), 5.0, 0.01, opt);
    CHECK(a.populations.back() == b.populations.back());
}

TEST_CASE("decoupled system stays put") {
    ChainCoefficients e = uniform_chain(4, 0.0, 0.5, 0.5), f = uniform_chain(4, 0.0, -0.5, 0.5);
    QuadraticLindbladSystem s = assemble(-0.39, {e, 3, rescale_closure(toy_closure(), 0.5, 0.5, Fill::empty)},
                                         {f, 3, rescale_closure(toy_closure(), -0.5, 0.5, Fill::filled)});
    EvolveOptions opt;
    opt.observe = {0};
    Trajectory tr = evolve(s, initial_correlation(s, true), 20.0, 0.01, opt);
    for (const auto& row : tr.populations)
        CHECK(row[0] == 1.0);
}

TEST_CASE("step halving at dt = 0.01") {
    ChainCoefficients e = uniform_chain(8, 0.2236, 0.5, 0.5), f = uniform_chain(8, 0.2236, -0.5, 0.5);
    QuadraticLindbladSystem s = assemble(-0.3927, {e, 6, rescale_closure(toy_closure(), 0.5, 0.5, Fill::empty)},
                                         {f, 6, rescale_closure(toy_closure(), -0.5, 0.5, Fill::filled)});
    EvolveOptions opt;
    opt.record_every = 1.0;
    Trajectory a = evolve(s, initial_correlation(s, true), 30.0, 0.01, opt);
    Trajectory b = evolve(s, initial_correlation(s, true), 30.0, 0.005, opt);
    REQUIRE(a.times.size() == b.times.size());
    double worst = 0.0;
    for (std::size_t k = 0; k < a.times.size(); ++k)
        for (std::size_t j = 0; j < a.labels.size(); ++j)
            worst = std::max(worst, std::abs(a.populations[k][j] - b.populations[k][j]));
    CHECK(worst < 1e-9);
}

TEST_CASE("evolve rejects unphysical input") {
    ChainCoefficients e = uniform_chain(2, 0.3, 0.5, 0.5), f = uniform_chain(2, 0.3, -0.5, 0.5);
    QuadraticLindbladSystem s = assemble(0.0, {e, 1, {}}, {f, 1, {}});
    MatrixXcd c = initial_correlation(s, true);
    c(0, 0) = 1.5;
    CHECK_THROWS_AS(evolve(s, c, 1.0, 0.01), NumericalError);
    CHECK_THROWS_AS(evolve(s, initial_correlation(s, true), 1.0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(evolve(s, MatrixXcd::Zero(2, 2), 1.0, 0.01), std::invalid_argument);
    QuadraticLindbladSystem bad = s;
    bad.loss[0] = 0.1;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    CHECK_THROWS_AS(two_time_correlator(s, 0, std::vector<double>{0.0}, Fill::empty), std::invalid_argument);
}

TEST_CASE("time grid hits t_max and the csv lists observed modes") {
    ChainCoefficients e = uniform_chain(2, 0.3, 0.5, 0.5), f = uniform_chain(2, 0.3, -0.5, 0.5);
    QuadraticLindbladSystem s = assemble(0.0, {e, 1, {}}, {f, 1, {}});
    EvolveOptions opt;
    opt.record_every = 0.25;
    opt.observe = {0, 3};
    Trajectory tr = evolve(s, initial_correlation(s, true), 1.0, 0.007, opt);
    CHECK(tr.times.back() == doctest::Approx(1.0).epsilon(1e-14));
    std::string csv = trajectory_csv(tr);
    CHECK(csv.rfind("t,n_system,n_chain1_0\n", 0) == 0);
    CHECK(default_time_step(0.5) == doctest::Approx(2e-3));
}
