#include "fmc/specdens.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "fmc/csv.hpp"
#include "fmc/errors.hpp"
#include "fmc/quadrature.hpp"

namespace fmc {

Interval::Interval(double lo_, double hi_) : lo(lo_), hi(hi_) {
    if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi))
        throw std::invalid_argument("interval needs finite lo < hi, got (" + format_double(lo) + ", " +
                                    format_double(hi) + ")");
}

InverseTemperature::InverseTemperature(double beta) : beta_(beta), zero_t_(false) {
    if (!std::isfinite(beta) || beta <= 0.0)
        throw std::invalid_argument("inverse temperature must be finite and positive");
}

InverseTemperature InverseTemperature::zero_temperature() {
    return {std::numeric_limits<double>::infinity(), true};
}

InverseTemperature InverseTemperature::from_temperature(double T) {
    if (!std::isfinite(T) || T < 0.0)
        throw std::invalid_argument("temperature must be finite and non-negative");
    return T == 0.0 ? zero_temperature() : InverseTemperature(1.0 / T);
}

double InverseTemperature::value() const {
    return zero_t_ ? std::numeric_limits<double>::infinity() : beta_;
}

double fermi_occupation(double omega, InverseTemperature beta, double mu) {
    if (!std::isfinite(omega) || !std::isfinite(mu))
        throw std::invalid_argument("fermi_occupation: non-finite input");
    double d = omega - mu;
    if (beta.is_zero_temperature())
        return d < 0.0 ? 1.0 : (d > 0.0 ? 0.0 : 0.5);
    double x = beta.value() * d;
    if (x > 0.0) {
        double e = std::exp(-x);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(x));
}

namespace {

// Merge overlapping or touching intervals. Touch points become breakpoints.
std::vector<Interval> union_of(std::vector<Interval> ivs, std::vector<double>& touch) {
    std::sort(ivs.begin(), ivs.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
    std::vector<Interval> out;
    for (const auto& iv : ivs) {
        if (!out.empty() && iv.lo <= out.back().hi) {
            if (iv.lo == out.back().hi)
                touch.push_back(iv.lo);
            out.back().hi = std::max(out.back().hi, iv.hi);
        } else {
            out.push_back(iv);
        }
    }
    return out;
}

std::vector<double> interior_points(const std::vector<Interval>& pieces, std::vector<double> pts) {
    std::vector<double> out;
    for (double p : pts)
        for (const auto& iv : pieces)
            if (p > iv.lo && p < iv.hi) {
                out.push_back(p);
                break;
            }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

} // namespace

SpectralDensity::SpectralDensity(std::vector<Interval> pieces, std::vector<double> breakpoints,
                                 std::shared_ptr<const Evaluator> eval, std::string label)
    : pieces_(std::move(pieces)), breakpoints_(std::move(breakpoints)), eval_(std::move(eval)),
      label_(std::move(label)) {}

SpectralDensity SpectralDensity::semicircle(Interval support, double scale) {
    if (!std::isfinite(scale) || scale <= 0.0)
        throw std::invalid_argument("semicircle scale must be positive");
    double lo = support.lo, hi = support.hi;
    auto f = std::make_shared<const Evaluator>([=](double w) {
        if (w <= lo || w >= hi)
            return 0.0;
        return scale * std::sqrt((w - lo) * (hi - w));
    });
    return {{support}, {}, f, "semicircle"};
}

SpectralDensity SpectralDensity::tabulated(std::vector<double> omega, std::vector<double> j) {
    const std::size_t n = omega.size();
    if (n < 2 || j.size() != n)
        throw std::invalid_argument("tabulated density needs at least two (omega, j) samples");
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(omega[i]) || !std::isfinite(j[i]) || j[i] < 0.0)
            throw std::invalid_argument("tabulated density: samples must be finite with j >= 0");
        if (i > 0 && !(omega[i] > omega[i - 1]))
            throw std::invalid_argument("tabulated density: omega must be strictly increasing");
    }
    // Fritsch-Carlson slopes keep each cubic inside the range of its endpoints.
    std::vector<double> h(n - 1), del(n - 1), m(n);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        h[i] = omega[i + 1] - omega[i];
        del[i] = (j[i + 1] - j[i]) / h[i];
    }
    if (n == 2) {
        m[0] = m[1] = del[0];
    } else {
        for (std::size_t i = 1; i + 1 < n; ++i) {
            if (del[i - 1] * del[i] <= 0.0) {
                m[i] = 0.0;
            } else {
                double w1 = 2 * h[i] + h[i - 1], w2 = h[i] + 2 * h[i - 1];
                m[i] = (w1 + w2) / (w1 / del[i - 1] + w2 / del[i]);
            }
        }
        auto end_slope = [](double h0, double h1, double d0, double d1) {
            double s = ((2 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
            if (s * d0 <= 0.0)
                return 0.0;
            if (d0 * d1 <= 0.0 && std::abs(s) > 3 * std::abs(d0))
                return 3 * d0;
            return s;
        };
        m[0] = end_slope(h[0], h[1], del[0], del[1]);
        m[n - 1] = end_slope(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
    }
    Interval support(omega.front(), omega.back());
    auto f = std::make_shared<const Evaluator>(
        [omega = std::move(omega), j = std::move(j), m = std::move(m)](double w) {
            if (w < omega.front() || w > omega.back())
                return 0.0;
            auto it = std::upper_bound(omega.begin(), omega.end(), w);
            std::size_t k = std::min<std::size_t>(it - omega.begin(), omega.size() - 1) - 1;
            double hk = omega[k + 1] - omega[k];
            double s = (w - omega[k]) / hk;
            double s2 = s * s, s3 = s2 * s;
            double v = (2 * s3 - 3 * s2 + 1) * j[k] + (s3 - 2 * s2 + s) * hk * m[k] +
                       (-2 * s3 + 3 * s2) * j[k + 1] + (s3 - s2) * hk * m[k + 1];
            return std::max(v, 0.0);
        });
    return {{support}, {}, f, "tabulated"};
}

SpectralDensity SpectralDensity::load_csv(const std::filesystem::path& path) {
    CsvTable t = read_csv(path);
    std::size_t cw = t.column("omega"), cj = t.column("j");
    std::vector<double> w, j;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        std::string ctx = path.string() + " row " + std::to_string(r + 1);
        if (row.size() <= std::max(cw, cj))
            throw IoError(ctx + ": too few fields");
        w.push_back(parse_double(row[cw], ctx));
        j.push_back(parse_double(row[cj], ctx));
    }
    try {
        return tabulated(std::move(w), std::move(j));
    } catch (const std::invalid_argument& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

SpectralDensity SpectralDensity::from_function(Interval support, Evaluator f, std::string label,
                                               std::vector<double> breakpoints) {
    if (!f)
        throw std::invalid_argument("from_function: empty evaluator");
    double lo = support.lo, hi = support.hi;
    auto g = std::make_shared<const Evaluator>([=, f = std::move(f)](double w) {
        if (w < lo || w > hi)
            return 0.0;
        return f(w);
    });
    std::vector<Interval> pieces{support};
    auto bp = interior_points(pieces, std::move(breakpoints));
    return {std::move(pieces), std::move(bp), g, std::move(label)};
}

SpectralDensity SpectralDensity::zero() {
    static const auto f = std::make_shared<const Evaluator>([](double) { return 0.0; });
    return {{}, {}, f, "zero"};
}

double SpectralDensity::operator()(double omega) const { return (*eval_)(omega); }

Interval SpectralDensity::hull() const {
    if (pieces_.empty())
        throw std::invalid_argument("zero density has no support");
    return {pieces_.front().lo, pieces_.back().hi};
}

SpectralDensity SpectralDensity::shifted(double by) const {
    if (is_zero() || by == 0.0)
        return *this;
    std::vector<Interval> p;
    for (const auto& iv : pieces_)
        p.push_back(iv.shifted(-by));
    std::vector<double> bp;
    for (double b : breakpoints_)
        bp.push_back(b - by);
    auto e = eval_;
    auto f = std::make_shared<const Evaluator>([e, by](double w) { return (*e)(w + by); });
    return {std::move(p), std::move(bp), f, label_};
}

SpectralDensity SpectralDensity::mirrored() const {
    if (is_zero())
        return *this;
    std::vector<Interval> p;
    for (auto it = pieces_.rbegin(); it != pieces_.rend(); ++it)
        p.push_back(it->mirrored());
    std::vector<double> bp;
    for (auto it = breakpoints_.rbegin(); it != breakpoints_.rend(); ++it)
        bp.push_back(-*it);
    auto e = eval_;
    auto f = std::make_shared<const Evaluator>([e](double w) { return (*e)(-w); });
    return {std::move(p), std::move(bp), f, "mirror(" + label_ + ")"};
}

SpectralDensity SpectralDensity::weighted(Evaluator weight, std::string label,
                                          std::vector<double> extra_breakpoints) const {
    if (is_zero())
        return *this;
    auto e = eval_;
    auto f = std::make_shared<const Evaluator>([e, weight = std::move(weight)](double w) {
        double v = (*e)(w);
        return v == 0.0 ? 0.0 : weight(w) * v;
    });
    std::vector<double> bp = breakpoints_;
    bp.insert(bp.end(), extra_breakpoints.begin(), extra_breakpoints.end());
    return {pieces_, interior_points(pieces_, std::move(bp)), f, std::move(label)};
}

SpectralDensity SpectralDensity::scaled(double factor) const {
    if (!std::isfinite(factor) || factor < 0.0)
        throw std::invalid_argument("scale factor must be finite and non-negative");
    if (factor == 0.0)
        return zero();
    if (factor == 1.0)
        return *this;
    return weighted([factor](double) { return factor; }, label_);
}

SpectralDensity SpectralDensity::restricted(double lo, double hi) const {
    if (!(lo < hi))
        throw std::invalid_argument("restricted: need lo < hi");
    std::vector<Interval> p;
    for (const auto& iv : pieces_) {
        double a = std::max(iv.lo, lo), b = std::min(iv.hi, hi);
        if (a < b)
            p.emplace_back(a, b);
    }
    if (p.empty())
        return zero();
    auto e = eval_;
    auto f = std::make_shared<const Evaluator>([e, lo, hi](double w) {
        if (w < lo || w > hi)
            return 0.0;
        return (*e)(w);
    });
    auto bp = interior_points(p, breakpoints_);
    return {std::move(p), std::move(bp), f, label_};
}

SpectralDensity operator+(const SpectralDensity& a, const SpectralDensity& b) {
    if (a.is_zero())
        return b;
    if (b.is_zero())
        return a;
    std::vector<Interval> all = a.pieces_;
    all.insert(all.end(), b.pieces_.begin(), b.pieces_.end());
    std::vector<double> pts = a.breakpoints_;
    pts.insert(pts.end(), b.breakpoints_.begin(), b.breakpoints_.end());
    for (const auto& iv : all) {
        pts.push_back(iv.lo);
        pts.push_back(iv.hi);
    }
    auto pieces = union_of(all, pts);
    auto bp = interior_points(pieces, std::move(pts));
    auto ea = a.eval_, eb = b.eval_;
    auto f = std::make_shared<const SpectralDensity::Evaluator>([ea, eb](double w) { return (*ea)(w) + (*eb)(w); });
    return {std::move(pieces), std::move(bp), f, a.label_ + "+" + b.label_};
}

void LeadSpec::validate() const {
    if (density.is_zero())
        throw std::invalid_argument("lead density is identically zero");
    if (!std::isfinite(mu))
        throw std::invalid_argument("lead chemical potential must be finite");
    if (kappa.empty())
        throw std::invalid_argument("lead needs at least one coupling scale");
    for (double k : kappa)
        if (!std::isfinite(k))
            throw std::invalid_argument("lead coupling scale must be finite");
}

ModulatedPair tcsm_modulate(const LeadSpec& lead) {
    lead.validate();
    SpectralDensity base = lead.density.shifted(lead.mu);
    const InverseTemperature beta = lead.beta;
    // 1 - n(w) is evaluated as n(-w) so neither side loses digits in its tail.
    // at T = 0 the weights jump at w = 0, otherwise they are smooth there
    std::vector<double> step;
    if (beta.is_zero_temperature())
        step.push_back(0.0);
    SpectralDensity j0 = base.weighted([beta](double w) { return fermi_occupation(-w, beta, 0.0); },
                                       "tcsm0(" + base.label() + ")", step);
    SpectralDensity j1 = base.weighted([beta](double w) { return fermi_occupation(w, beta, 0.0); },
                                       "tcsm1(" + base.label() + ")", step);
    if (beta.is_zero_temperature()) {
        const double inf = std::numeric_limits<double>::infinity();
        j0 = j0.restricted(0.0, inf);
        j1 = j1.restricted(-inf, 0.0);
    }
    return {std::move(j0), std::move(j1), base.hull()};
}

SpectralDensity merge_environments(std::span<const SpectralDensity> parts, std::vector<std::string>* warnings) {
    SpectralDensity out = SpectralDensity::zero();
    std::size_t nonzero = 0;
    for (const auto& p : parts) {
        if (!p.is_zero())
            ++nonzero;
        out = out + p;
    }
    if (warnings && nonzero > 1 && out.pieces().size() > 1)
        warnings->push_back("merged supports are disjoint (" + std::to_string(out.pieces().size()) +
                            " pieces); a single orthogonal-polynomial chain may be ill-conditioned");
    return out;
}

SpectralDensity majorana_extend(const LeadSpec& lead) {
    lead.validate();
    SpectralDensity base = lead.density.shifted(lead.mu);
    SpectralDensity both = base + base.mirrored();
    const InverseTemperature beta = lead.beta;
    // (1 + tanh(beta w / 2)) / 2 == n(-w)
    SpectralDensity ext = both.weighted([beta](double w) { return fermi_occupation(-w, beta, 0.0); },
                                        "majorana(" + lead.density.label() + ")",
                                        beta.is_zero_temperature() ? std::vector<double>{0.0} : std::vector<double>{});
    if (beta.is_zero_temperature())
        ext = ext.restricted(0.0, std::numeric_limits<double>::infinity());
    return ext;
}

SpectralDensity majorana_extend(std::span<const LeadSpec> leads) {
    std::vector<SpectralDensity> parts;
    for (const auto& l : leads)
        parts.push_back(majorana_extend(l));
    return merge_environments(parts);
}

ThermofieldCouplings thermofield_couplings(const LeadSpec& lead) {
    lead.validate();
    SpectralDensity j = lead.density;
    const InverseTemperature beta = lead.beta;
    const double mu = lead.mu;
    auto h1 = [j, beta, mu](double w) { return std::sqrt(fermi_occupation(mu - w, beta, 0.0) * j(w)); };
    auto h2 = [j, beta, mu](double w) { return std::sqrt(fermi_occupation(w, beta, mu) * j(w)); };
    return {h1, h2};
}

namespace {

struct SzegoLevel {
    double integral_j = 0.0;
    double log_integral = 0.0;
};

SzegoLevel szego_level(const SpectralDensity& j, const std::vector<Interval>& segments, Interval hull,
                       int levels, std::size_t per_panel) {
    SzegoLevel out;
    for (const auto& seg : segments) {
        QuadratureRule r = graded_rule(seg, levels, per_panel);
        for (std::size_t k = 0; k < r.size(); ++k) {
            double w = r.nodes[k];
            double v = j(w);
            out.integral_j += r.weights[k] * v;
            // dx / sqrt(1 - x^2) on the rescaled hull equals dw / sqrt((w - lo)(hi - w))
            double den = std::sqrt((w - hull.lo) * (hull.hi - w));
            out.log_integral += r.weights[k] * std::abs(std::log(v)) / den;
        }
    }
    return out;
}

} // namespace

SzegoReport szego_diagnostic(const SpectralDensity& j) {
    Interval hull = j.hull();
    SzegoReport rep;
    if (j.pieces().size() > 1)
        rep.notes.push_back("support has gaps; log J is -inf on a set of positive measure");

    // Split the hull at every piece end and breakpoint; each segment is graded at both ends.
    std::vector<double> cuts{hull.lo, hull.hi};
    for (const auto& iv : j.pieces()) {
        cuts.push_back(iv.lo);
        cuts.push_back(iv.hi);
    }
    cuts.insert(cuts.end(), j.breakpoints().begin(), j.breakpoints().end());
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    std::vector<Interval> segments;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
        segments.emplace_back(cuts[i], cuts[i + 1]);

    const int levels[3] = {20, 28, 36}; // deeper grading hits the endpoint in double precision
    const std::size_t per_panel[3] = {12, 16, 20};
    SzegoLevel lv[3];
    for (int i = 0; i < 3; ++i)
        lv[i] = szego_level(j, segments, hull, levels[i], per_panel[i]);

    constexpr double rel_tol = 1e-3;
    auto converged = [&](double a, double b) {
        return std::isfinite(a) && std::isfinite(b) && std::abs(b - a) <= rel_tol * std::max(1.0, std::abs(b));
    };
    rep.integral_j = lv[2].integral_j;
    rep.log_integral = lv[2].log_integral;
    bool j_ok = converged(lv[1].integral_j, lv[2].integral_j) && rep.integral_j > 0.0;
    rep.log_divergent = !converged(lv[1].log_integral, lv[2].log_integral);
    if (!j_ok)
        rep.notes.push_back("integral of J did not converge under refinement");
    if (rep.log_divergent) {
        rep.notes.push_back("log integral grows under endpoint refinement (" + format_double(lv[0].log_integral) +
                            ", " + format_double(lv[1].log_integral) + ", " + format_double(lv[2].log_integral) +
                            ")");
    }
    rep.passed = j_ok && !rep.log_divergent;
    return rep;
}

TtcfResult analytic_ttcf(const SpectralDensity& j, std::span<const double> times, TtcfSign sign,
                         double tolerance) {
    TtcfResult res;
    res.values.assign(times.size(), {0.0, 0.0});
    if (j.is_zero() || times.empty())
        return res;
    double tmax = 0.0;
    for (double t : times) {
        if (!std::isfinite(t))
            throw std::invalid_argument("analytic_ttcf: non-finite time");
        tmax = std::max(tmax, std::abs(t));
    }
    const double s = sign == TtcfSign::emission ? -1.0 : 1.0;
    std::vector<std::complex<double>> coarse(times.size(), {0.0, 0.0});
    for (const auto& seg : smooth_segments(j)) {
        std::size_t n = 256 + static_cast<std::size_t>(std::ceil(2.0 * seg.width() * tmax));
        for (int pass = 0; pass < 2; ++pass) {
            QuadratureRule r = angular_rule(seg, pass == 0 ? n : 2 * n);
            std::vector<double> wj(r.size());
            for (std::size_t k = 0; k < r.size(); ++k)
                wj[k] = r.weights[k] * j(r.nodes[k]);
            auto& target = pass == 0 ? coarse : res.values;
            for (std::size_t i = 0; i < times.size(); ++i) {
                double re = 0.0, im = 0.0;
                for (std::size_t k = 0; k < r.size(); ++k) {
                    double ph = s * r.nodes[k] * times[i];
                    re += wj[k] * std::cos(ph);
                    im += wj[k] * std::sin(ph);
                }
                target[i] += std::complex<double>(re, im);
            }
        }
    }
    for (std::size_t i = 0; i < times.size(); ++i)
        res.error_estimate = std::max(res.error_estimate, std::abs(res.values[i] - coarse[i]));
    if (!(res.error_estimate <= tolerance))
        throw NumericalError("analytic_ttcf: quadrature did not converge, error estimate " +
                             format_double(res.error_estimate));
    return res;
}

} // namespace fmc
