#include "doctest.h"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "fmc/chainmap.hpp"
#include "fmc/errors.hpp"
#include "oracles.hpp"

using namespace fmc;

namespace {

constexpr double pi = std::numbers::pi;

struct Recurrence {
    double eta;
    std::vector<double> a, b;
};

// Discretized Stieltjes procedure on an oracle quadrature of the density.
Recurrence stieltjes(const std::function<double(double)>& j, double lo, double hi, int n) {
    std::vector<double> x, w;
    const double c = 0.5 * (lo + hi), h = 0.5 * (hi - lo);
    const auto g = oracle::legendre(20);
    const int panels = 400;
    for (int p = 0; p < panels; ++p) {
        const double ta = pi * p / panels, tb = pi * (p + 1) / panels;
        for (int k = 0; k < 20; ++k) {
            const double th = 0.5 * (ta + tb) + 0.5 * (tb - ta) * g.x[k];
            x.push_back(c - h * std::cos(th));
            w.push_back(0.5 * (tb - ta) * g.w[k] * h * std::sin(th) * j(x.back()));
        }
    }
    Recurrence r;
    double mass = 0.0;
    for (double v : w)
        mass += v;
    r.eta = std::sqrt(mass);
    std::vector<double> p0(x.size(), 0.0), p1(x.size(), 1.0);
    double norm1 = mass;
    for (int k = 0; k < n; ++k) {
        double num = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i)
            num += w[i] * x[i] * p1[i] * p1[i];
        const double ak = num / norm1;
        r.a.push_back(ak);
        std::vector<double> p2(x.size());
        const double bk2 = k == 0 ? 0.0 : r.b.back() * r.b.back();
        for (std::size_t i = 0; i < x.size(); ++i)
            p2[i] = (x[i] - ak) * p1[i] - bk2 * p0[i];
        double norm2 = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i)
            norm2 += w[i] * p2[i] * p2[i];
        r.b.push_back(std::sqrt(norm2 / norm1));
        p0 = std::move(p1);
        p1 = std::move(p2);
        norm1 = norm2;
    }
    return r;
}

} // namespace

TEST_CASE("semicircle maps to a uniform chain") {
    auto t0 = std::chrono::steady_clock::now();
    ChainCoefficients c = chain_coefficients(residual_semicircle(1.0, 0.5), 101);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(secs < 5.0);
    CHECK(c.asym_omega == 1.0);
    CHECK(c.asym_kappa == 0.5);
    REQUIRE(c.kappa.size() == 100);
    for (std::size_t n = 0; n < 101; ++n) {
        CHECK(std::abs(c.omega[n] - 1.0) < 1e-10);
        if (n < 100)
            CHECK(std::abs(c.kappa[n] - 0.5) < 1e-10);
    }
    // residual semicircle carries unit mass
    CHECK(c.eta == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("scaled semicircle on (0,2) gives eta^2 = 1/20") {
    ChainCoefficients c = chain_coefficients(SpectralDensity::semicircle(Interval(0.0, 2.0), 1.0 / (10.0 * pi)), 30);
    CHECK(c.eta == doctest::Approx(std::sqrt(0.05)).epsilon(1e-13));
    for (double d : coefficient_deviation(c))
        CHECK(d < 1e-10);
    CHECK(truncation_index(c, 1e-8) == 0);
}

TEST_CASE("constant weight reproduces the Legendre recurrence") {
    auto j = SpectralDensity::from_function(Interval(-1.0, 1.0), [](double) { return 1.0; }, "flat");
    ChainCoefficients c = chain_coefficients(j, 40);
    CHECK(c.eta == doctest::Approx(std::sqrt(2.0)).epsilon(1e-13));
    for (std::size_t n = 0; n < 40; ++n) {
        CHECK(std::abs(c.omega[n]) < 1e-11);
        if (n < 39) {
            const double k = n + 1.0;
            CHECK(c.kappa[n] == doctest::Approx(k / std::sqrt(4 * k * k - 1)).epsilon(1e-11));
        }
    }
}

TEST_CASE("thermal modulated semicircle against an independent Stieltjes run") {
    LeadSpec lead{SpectralDensity::semicircle(Interval(0.0, 2.0), 1.0 / (2.0 * pi)), InverseTemperature(5.0), 1.0};
    ModulatedPair p = tcsm_modulate(lead);
    ChainCoefficients c = chain_coefficients(p.empty_side, 16);
    auto ref = stieltjes([](double w) { return (1.0 - oracle::fermi(w, 0.2, 0.0)) *
                                               oracle::semicircle(w + 1.0, 0.0, 2.0, 1.0 / (2.0 * pi)); },
                         -1.0, 1.0, 16);
    CHECK(c.eta == doctest::Approx(ref.eta).epsilon(1e-12));
    for (int n = 0; n < 16; ++n) {
        CHECK(c.omega[n] == doctest::Approx(ref.a[n]).epsilon(1e-9));
        if (n < 15)
            CHECK(c.kappa[n] == doctest::Approx(ref.b[n]).epsilon(1e-9));
    }
}

TEST_CASE("asymptotics follow the support hull") {
    Asymptotics a = asymptotics(Interval(-0.25, 1.75));
    CHECK(a.omega == 0.75);
    CHECK(a.kappa == 0.5);
}

TEST_CASE("truncation index for the two-lead empty environment") {
    LeadSpec a{SpectralDensity::semicircle(Interval(0.0, 2.0), 1.0 / (2.0 * pi)), InverseTemperature::from_temperature(0.2),
               1.0};
    LeadSpec b{SpectralDensity::semicircle(Interval(0.0, 2.0), 1.0 / (4.0 * pi)), InverseTemperature::from_temperature(1.0),
               0.25};
    std::vector<SpectralDensity> parts{tcsm_modulate(a).empty_side, tcsm_modulate(b).empty_side};
    ChainCoefficients c = chain_coefficients(merge_environments(parts), 60);
    CHECK(c.asym_omega == 0.375);
    CHECK(c.asym_kappa == 0.6875);
    CHECK(truncation_index(c, 1e-2) == 13);
    // the deviation hovers near 5e-3 around n = 20 and settles below it after n = 23
    CHECK(truncation_index(c, 5e-3) == 23);
    auto d = coefficient_deviation(c);
    for (std::size_t n = 24; n < d.size(); ++n)
        CHECK(d[n] < 5e-3);
    CHECK(d[23] >= 5e-3);
}

TEST_CASE("truncation index fails when the chain never settles") {
    // Jacobi weight x on (0,1): site energies approach 1/2 only algebraically
    auto j = SpectralDensity::from_function(Interval(0.0, 1.0), [](double w) { return w; }, "linear");
    ChainCoefficients c = chain_coefficients(j, 10);
    CHECK_THROWS_AS(truncation_index(c, 1e-6), NumericalError);
}

TEST_CASE("chain needs enough quadrature nodes and a Szego-class density") {
    auto j = SpectralDensity::semicircle(Interval(0.0, 2.0), 1.0);
    CHECK_THROWS_AS(chain_coefficients(j, 100, 1000), std::invalid_argument);
    auto gap = SpectralDensity::from_function(Interval(-1.0, 1.0), [](double w) { return w > 0.0 ? w : 0.0; }, "ramp",
                                              {0.0});
    CHECK_THROWS_AS(chain_coefficients(gap, 10), NumericalError);
    CHECK_THROWS_AS(chain_coefficients(SpectralDensity::zero(), 10), std::invalid_argument);
}

TEST_CASE("chain csv round trip is exact") {
    ChainCoefficients c = chain_coefficients(SpectralDensity::semicircle(Interval(-0.2, 1.8), 0.7), 12);
    auto path = std::filesystem::temp_directory_path() / "fmc_test_chain" / "chain.csv";
    write_chain_csv(path, c);
    ChainCoefficients r = read_chain_csv(path);
    CHECK(r.eta == c.eta);
    CHECK(r.omega == c.omega);
    CHECK(r.kappa == c.kappa);
    CHECK(r.asym_omega == c.asym_omega);
    CHECK(r.asym_kappa == c.asym_kappa);
    CHECK(r.source_domain == c.source_domain);
    CHECK_THROWS_AS(read_chain_csv(path.parent_path() / "nope.csv"), IoError);
}
