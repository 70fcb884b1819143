#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include <unsupported/Eigen/MatrixFunctions>

#include "fmc/closure.hpp"
#include "fmc/errors.hpp"
#include "oracles.hpp"

using namespace fmc;

namespace {

ClosureFitOptions quick_fit() {
    ClosureFitOptions o;
    o.n_starts = 4;
    o.n_refine = 2;
    o.n_hops = 2;
    o.lawson_rounds = 5;
    o.tolerance = 1.0;
    return o;
}

const UniversalClosure& small_fit() {
    static const UniversalClosure u = fit_universal_closure(3, quick_fit());
    return u;
}

void check_constraints(const UniversalClosure& u) {
    double norm = 0.0;
    for (std::size_t j = 0; j < u.n_modes(); ++j) {
        CHECK(u.alpha[j].imag() == 0.0);
        CHECK(u.alpha[j].real() < 0.0);
        norm += std::norm(u.w[j]);
    }
    for (const auto& b : u.beta)
        CHECK(b.real() == 0.0);
    CHECK(std::abs(norm - 1.0) < 1e-6);
}

} // namespace

TEST_CASE("semicircle transform equals the angular integral of the unit semicircle") {
    for (int i = 0; i <= 400; ++i) {
        const double t = 0.25 * i;
        oracle::cplx ref = (2.0 / std::numbers::pi) *
                           oracle::angular<oracle::cplx>(-1.0, 1.0, [t](double x) {
                               return std::sqrt(1.0 - x * x) * std::exp(oracle::cplx(0.0, -x * t));
                           }, 256);
        CHECK(std::abs(c_semicircle(t) - ref.real()) < 1e-12);
        CHECK(std::abs(ref.imag()) < 1e-12);
    }
    CHECK(c_semicircle(0.0) == 1.0);
    CHECK(c_semicircle(-3.0) == c_semicircle(3.0));
}

TEST_CASE("closure validation rejects constraint violations") {
    UniversalClosure u;
    u.alpha = {cplx(-0.5, 0.0), cplx(-0.1, 0.0)};
    u.beta = {cplx(0.0, 0.4)};
    u.w = {cplx(0.6, 0.0), cplx(0.0, 0.8)};
    CHECK_NOTHROW(u.validate());
    auto bad = u;
    bad.alpha[0] = cplx(0.1, 0.0);
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = u;
    bad.alpha[1] = cplx(-0.1, 0.2);
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = u;
    bad.beta[0] = cplx(0.1, 0.4);
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = u;
    bad.w[0] = 1.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = u;
    bad.beta.push_back(cplx(0.0, 1.0));
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("closure model evaluates w^H exp(tM) w") {
    UniversalClosure u;
    u.alpha = {cplx(-0.5, 0.0), cplx(-0.1, 0.0), cplx(-0.9, 0.0)};
    u.beta = {cplx(0.0, 0.4), cplx(0.0, -0.3)};
    u.w = {cplx(0.6, 0.0), cplx(0.0, 0.64), cplx(0.48, 0.0)};
    Eigen::MatrixXcd M = Eigen::MatrixXcd::Zero(3, 3);
    for (int j = 0; j < 3; ++j)
        M(j, j) = u.alpha[j];
    for (int j = 0; j < 2; ++j)
        M(j, j + 1) = M(j + 1, j) = u.beta[j];
    Eigen::VectorXcd w(3);
    w << u.w[0], u.w[1], u.w[2];
    std::vector<double> ts{0.0, 0.5, 3.0, 17.0};
    auto v = u.evaluate(ts);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        Eigen::MatrixXcd E = (ts[i] * M).exp();
        CHECK(std::abs(v[i] - (w.adjoint() * E * w)(0, 0)) < 1e-13);
    }
}

TEST_CASE("generator exponential matches a Pade reference on random generators") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> N;
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 2 + trial % 5;
        Eigen::MatrixXcd g(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                g(i, j) = cplx(N(rng), N(rng)) * 0.5;
        GeneratorExponential ex(g);
        for (double t : {0.0, 0.3, 2.0}) {
            Eigen::MatrixXcd ref = (t * g).exp();
            CHECK((ex(t) - ref).norm() < 1e-10 * std::max(1.0, ref.norm()));
        }
    }
    // a defective generator takes the fallback path
    Eigen::MatrixXcd jordan(2, 2);
    jordan << -1.0, 1.0, 0.0, -1.0;
    GeneratorExponential ex(jordan);
    CHECK(!ex.uses_eigenbasis());
    Eigen::MatrixXcd expect(2, 2);
    expect << std::exp(-2.0), 2.0 * std::exp(-2.0), 0.0, std::exp(-2.0);
    CHECK((ex(2.0) - expect).norm() < 1e-13);
}

TEST_CASE("small fit is deterministic and satisfies the table constraints") {
    const UniversalClosure& u = small_fit();
    check_constraints(u);
    CHECK(u.n_modes() == 3);
    CHECK(u.fit_residual == doctest::Approx(max_fit_error(u)).epsilon(1e-12));
    CHECK(u.w[0].imag() == 0.0);
    CHECK(u.w[0].real() > 0.0);
    for (const auto& b : u.beta)
        CHECK(b.imag() >= 0.0);
    UniversalClosure again = fit_universal_closure(3, quick_fit());
    CHECK(closure_table_csv(again) == closure_table_csv(u));
    ClosureFitOptions threaded = quick_fit();
    threaded.jobs = 3;
    CHECK(closure_table_csv(fit_universal_closure(3, threaded)) == closure_table_csv(u));
}

TEST_CASE("fit reports failure above tolerance") {
    ClosureFitOptions o = quick_fit();
    o.tolerance = 1e-6;
    CHECK_THROWS_AS(fit_universal_closure(2, o), NumericalError);
    CHECK_THROWS_AS(fit_universal_closure(0, o), std::invalid_argument);
}

TEST_CASE("closure table round trip") {
    const UniversalClosure& u = small_fit();
    auto dir = std::filesystem::temp_directory_path() / "fmc_test_closure";
    save_closure_table(u, dir / "closure_3.csv");
    UniversalClosure r = load_closure_table(dir / "closure_3.csv");
    CHECK(r.alpha == u.alpha);
    CHECK(r.beta == u.beta);
    CHECK(r.w == u.w);
    CHECK(r.fit_residual == u.fit_residual);
    std::ifstream in(dir / "closure_3.csv");
    std::string comment, header;
    std::getline(in, comment);
    std::getline(in, header);
    CHECK(header == "n,alpha-re,beta-im,w-re,w-im");

    {
        std::ofstream f(dir / "bad.csv");
        f << "n,alpha,beta\n1,2,3\n";
    }
    CHECK_THROWS_AS(load_closure_table(dir / "bad.csv"), IoError);
    {
        std::ofstream f(dir / "positive.csv");
        f << "n,alpha-re,beta-im,w-re,w-im\n1,0.5,,1,0\n";
    }
    CHECK_THROWS_AS(load_closure_table(dir / "positive.csv"), IoError);
    CHECK_THROWS_AS(load_closure_table(dir / "absent.csv"), IoError);
}

TEST_CASE("rescaled closure reproduces the residual-environment correlator") {
    const UniversalClosure& u = small_fit();
    const double Omega = 0.375, K = 0.6875;
    ClosureParams p = rescale_closure(u, Omega, K, Fill::empty);
    CHECK(p.size() == 3);
    CHECK(p.g.size() == 2);
    std::vector<double> ts, scaled;
    for (int i = 0; i <= 500; ++i) {
        ts.push_back(0.2 * i * (50.0 / (2 * K)) / 100.0);
        scaled.push_back(2 * K * ts.back());
    }
    auto c = closure_ttcf(p, ts);
    auto model = u.evaluate(scaled);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const cplx phase = std::exp(cplx(0.0, -Omega * ts[i]));
        CHECK(std::abs(c[i] - K * K * phase * model[i]) < 1e-12);
        const oracle::cplx tail = oracle::semicircle_ttcf(ts[i], Omega - 2 * K, Omega + 2 * K, 1.0 / (2 * std::numbers::pi));
        CHECK(std::abs(c[i] - tail) <= K * K * u.fit_residual * (1 + 1e-9) + 1e-12);
    }
}

TEST_CASE("filled closure correlator is the conjugate of the empty one") {
    const UniversalClosure& u = small_fit();
    for (auto [Om, K] : {std::pair{0.375, 0.6875}, std::pair{-0.4, 0.5}, std::pair{1.0, 0.25}}) {
        ClosureParams e = rescale_closure(u, Om, K, Fill::empty);
        ClosureParams f = rescale_closure(u, Om, K, Fill::filled);
        std::vector<double> ts;
        for (int i = 0; i <= 200; ++i)
            ts.push_back(0.5 * i);
        auto ce = closure_ttcf(e, ts), cf = closure_ttcf(f, ts);
        for (std::size_t i = 0; i < ts.size(); ++i)
            CHECK(std::abs(cf[i] - std::conj(ce[i])) < 1e-12);
    }
}

TEST_CASE("rescale and fill parsing validate their inputs") {
    const UniversalClosure& u = small_fit();
    CHECK_THROWS_AS(rescale_closure(u, 0.0, 0.0, Fill::empty), std::invalid_argument);
    CHECK_THROWS_AS(rescale_closure(u, NAN, 1.0, Fill::empty), std::invalid_argument);
    CHECK(fill_from_string("filled") == Fill::filled);
    CHECK(to_string(Fill::empty) == "empty");
    CHECK_THROWS_AS(fill_from_string("half"), std::invalid_argument);
    ClosureParams p = rescale_closure(u, 0.2, 0.5, Fill::filled);
    for (double g : p.gamma)
        CHECK(g > 0.0);
    auto csv = closure_params_csv(p);
    CHECK(csv.rfind("# fill=filled\nj,omega,g,gamma,zeta_re,zeta_im\n", 0) == 0);
}
