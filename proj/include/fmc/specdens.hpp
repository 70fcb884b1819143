#pragma once

#include <complex>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fmc {

struct Interval {
    double lo;
    double hi;

    Interval(double lo, double hi); // throws std::invalid_argument unless lo < hi, both finite

    double width() const { return hi - lo; }
    double center() const { return 0.5 * (lo + hi); }
    bool contains(double x) const { return x >= lo && x <= hi; }
    Interval shifted(double by) const { return {lo + by, hi + by}; }
    Interval mirrored() const { return {-hi, -lo}; }

    friend bool operator==(const Interval&, const Interval&) = default;
};

// Inverse temperature. The zero-temperature sentinel makes the occupation an
// exact step function instead of relying on a huge finite beta.
class InverseTemperature {
public:
    explicit InverseTemperature(double beta);
    static InverseTemperature zero_temperature();
    static InverseTemperature from_temperature(double T); // T == 0 gives the sentinel

    bool is_zero_temperature() const { return zero_t_; }
    double value() const; // +inf for the sentinel

private:
    InverseTemperature(double beta, bool zero_t) : beta_(beta), zero_t_(zero_t) {}
    double beta_;
    bool zero_t_;
};

double fermi_occupation(double omega, InverseTemperature beta, double mu);

// Nonnegative density on a finite union of intervals. Composite densities
// (modulated, merged, extended) keep a handle to their parents and evaluate
// lazily, so nothing is interpolated before quadrature.
class SpectralDensity {
public:
    using Evaluator = std::function<double(double)>;

    static SpectralDensity semicircle(Interval support, double scale);
    // scale * sqrt((w - lo)(hi - w)) on `support`
    static SpectralDensity tabulated(std::vector<double> omega, std::vector<double> j);
    static SpectralDensity load_csv(const std::filesystem::path& path);
    // `f` is called only inside `support`; `breakpoints` are interior points
    // where f is not smooth (quadrature splits there).
    static SpectralDensity from_function(Interval support, Evaluator f, std::string label,
                                         std::vector<double> breakpoints = {});
    static SpectralDensity zero();

    double operator()(double omega) const;

    // Maximal disjoint intervals carrying the density, sorted.
    const std::vector<Interval>& pieces() const { return pieces_; }
    // Interior non-smooth points (piece ends excluded), sorted and unique.
    const std::vector<double>& breakpoints() const { return breakpoints_; }
    bool is_zero() const { return pieces_.empty(); }
    Interval hull() const; // throws std::invalid_argument for the zero density
    const std::string& label() const { return label_; }

    // Composition helpers used by the transforms below.
    SpectralDensity shifted(double by) const;   // omega -> J(omega + by) on support - by
    SpectralDensity mirrored() const;           // omega -> J(-omega)
    SpectralDensity weighted(Evaluator weight, std::string label,
                             std::vector<double> extra_breakpoints = {}) const;
    SpectralDensity scaled(double factor) const;
    SpectralDensity restricted(double lo, double hi) const; // bounds may be infinite

    friend SpectralDensity operator+(const SpectralDensity& a, const SpectralDensity& b);

private:
    SpectralDensity(std::vector<Interval> pieces, std::vector<double> breakpoints,
                    std::shared_ptr<const Evaluator> eval, std::string label);

    std::vector<Interval> pieces_;
    std::vector<double> breakpoints_;
    std::shared_ptr<const Evaluator> eval_;
    std::string label_;
};

struct LeadSpec {
    SpectralDensity density;
    InverseTemperature beta;
    double mu = 0.0;
    std::vector<double> kappa{1.0};

    void validate() const;
};

struct ModulatedPair {
    SpectralDensity empty_side;
    SpectralDensity filled_side;
    Interval shifted_domain;
};

ModulatedPair tcsm_modulate(const LeadSpec& lead);

// Pointwise sum. A disjoint set of supports is legal but suspicious; a note is
// appended to `warnings` when given.
SpectralDensity merge_environments(std::span<const SpectralDensity> parts,
                                   std::vector<std::string>* warnings = nullptr);

SpectralDensity majorana_extend(const LeadSpec& lead);
SpectralDensity majorana_extend(std::span<const LeadSpec> leads);

struct ThermofieldCouplings {
    SpectralDensity::Evaluator h1; // couples the vacuum-like branch
    SpectralDensity::Evaluator h2; // couples the filled branch
};

ThermofieldCouplings thermofield_couplings(const LeadSpec& lead);

struct SzegoReport {
    double integral_j = 0.0;
    double log_integral = 0.0; // of |log J| in x in [-1, 1] with weight 1/sqrt(1 - x^2)
    bool log_divergent = false;
    bool passed = false;
    std::vector<std::string> notes;
};

SzegoReport szego_diagnostic(const SpectralDensity& j);

enum class TtcfSign { emission, absorption }; // e^{-iwt} and e^{+iwt}

struct TtcfResult {
    std::vector<std::complex<double>> values;
    double error_estimate = 0.0;
};

// Throws NumericalError when the estimate exceeds `tolerance`.
TtcfResult analytic_ttcf(const SpectralDensity& j, std::span<const double> times, TtcfSign sign,
                         double tolerance = 1e-9);

} // namespace fmc
