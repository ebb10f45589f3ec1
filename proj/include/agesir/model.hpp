/*
* Copyright (C) 2026 agesir contributors
*
* Licensed under the Apache License, Version 2.0 (the "License");
* you may not use this file except in compliance with the License.
* You may obtain a copy of the License at
*
*     http://www.apache.org/licenses/LICENSE-2.0
*
* Unless required by applicable law or agreed to in writing, software
* distributed under the License is distributed on an "AS IS" BASIS,
* WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
* See the License for the specific language governing permissions and
* limitations under the License.
*/
#ifndef AGESIR_MODEL_HPP
#define AGESIR_MODEL_HPP

#include "agesir/common.hpp"

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/lognormal.hpp>

#include <memory>
#include <optional>
#include <utility>
#include <variant>

namespace agesir {

// ===========================================================================
// Infectious-period distribution F, with density f, survival Fc = 1 - F and
// hazard h = f / Fc. Built-in families: exponential, gamma (shape >= 1),
// log-normal, near-deterministic (smoothstep cdf around a point), and a
// piecewise-linear cdf.
// ===========================================================================
class DurationDistribution
{
public:
    struct Exponential {
        double rate;
    };
    struct Gamma {
        double shape; // >= 1 so the hazard stays bounded on compacts
        double scale;
    };
    struct LogNormal {
        double mu;
        double sigma;
    };
    // cdf ramps from 0 to 1 over [value - width, value + width] with a cubic
    // smoothstep, so f is continuous
    struct Deterministic {
        double value;
        double width;
    };
    struct PiecewiseLinearCdf {
        std::vector<double> knots;  // strictly increasing, knots.front() >= 0
        std::vector<double> values; // cdf at knots; 0 at front, 1 at back
    };

    using Family = std::variant<Exponential, Gamma, LogNormal, Deterministic, PiecewiseLinearCdf>;

    DurationDistribution() : DurationDistribution(Exponential{1.0}) {}
    explicit DurationDistribution(Family family, std::optional<double> hazard_bound = std::nullopt)
        : m_family(std::move(family))
        , m_hazard_bound(hazard_bound)
    {
        validate();
    }

    static DurationDistribution exponential(double rate) { return DurationDistribution(Exponential{rate}); }
    static DurationDistribution gamma(double shape, double scale)
    {
        return DurationDistribution(Gamma{shape, scale});
    }
    static DurationDistribution lognormal(double mu, double sigma)
    {
        return DurationDistribution(LogNormal{mu, sigma});
    }
    static DurationDistribution deterministic(double value, double width)
    {
        return DurationDistribution(Deterministic{value, width});
    }
    static DurationDistribution piecewise_linear(std::vector<double> knots, std::vector<double> values)
    {
        return DurationDistribution(PiecewiseLinearCdf{std::move(knots), std::move(values)});
    }

    double cdf(double t) const
    {
        if (t <= 0.0) return 0.0;
        return std::visit(
            [t](const auto& d) -> double {
                using T = std::decay_t<decltype(d)>;
                if constexpr (std::is_same_v<T, Exponential>) {
                    return -std::expm1(-d.rate * t);
                }
                else if constexpr (std::is_same_v<T, Gamma>) {
                    return boost::math::cdf(boost::math::gamma_distribution<>(d.shape, d.scale), t);
                }
                else if constexpr (std::is_same_v<T, LogNormal>) {
                    return boost::math::cdf(boost::math::lognormal_distribution<>(d.mu, d.sigma), t);
                }
                else if constexpr (std::is_same_v<T, Deterministic>) {
                    double lo = d.value - d.width;
                    if (t <= lo) return 0.0;
                    if (t >= d.value + d.width) return 1.0;
                    double x = (t - lo) / (2.0 * d.width);
                    return x * x * (3.0 - 2.0 * x);
                }
                else {
                    const auto& k = d.knots;
                    const auto& v = d.values;
                    if (t <= k.front()) return 0.0;
                    if (t >= k.back()) return 1.0;
                    auto it = std::upper_bound(k.begin(), k.end(), t);
                    size_t j = static_cast<size_t>(it - k.begin());
                    double w = (t - k[j - 1]) / (k[j] - k[j - 1]);
                    return v[j - 1] + w * (v[j] - v[j - 1]);
                }
            },
            m_family);
    }

    double sf(double t) const { return t <= 0.0 ? 1.0 : std::max(0.0, 1.0 - cdf(t)); }

    double log_sf(double t) const
    {
        if (t <= 0.0) return 0.0;
        if (const auto* e = std::get_if<Exponential>(&m_family)) {
            return -e->rate * t;
        }
        double s = sf(t);
        return s > 0.0 ? std::log(s) : -kInf;
    }

    // survival ratio Fc(a + t) / Fc(a), evaluated in log space so long
    // horizons do not underflow
    double sf_ratio(double a_plus_t, double a) const
    {
        assert(a_plus_t >= a);
        double num = log_sf(a_plus_t);
        if (num == -kInf) return 0.0;
        double den = log_sf(a);
        if (den == -kInf) {
            throw std::domain_error("survival ratio: Fc(a) = 0 inside the support of the age law");
        }
        return std::exp(num - den);
    }

    double pdf(double t) const
    {
        if (t < 0.0) return 0.0;
        return std::visit(
            [t](const auto& d) -> double {
                using T = std::decay_t<decltype(d)>;
                if constexpr (std::is_same_v<T, Exponential>) {
                    return d.rate * std::exp(-d.rate * t);
                }
                else if constexpr (std::is_same_v<T, Gamma>) {
                    return t == 0.0 && d.shape < 1.0 + 1e-14
                               ? (d.shape == 1.0 ? 1.0 / d.scale : 0.0)
                               : boost::math::pdf(boost::math::gamma_distribution<>(d.shape, d.scale), t);
                }
                else if constexpr (std::is_same_v<T, LogNormal>) {
                    return t == 0.0 ? 0.0
                                    : boost::math::pdf(boost::math::lognormal_distribution<>(d.mu, d.sigma), t);
                }
                else if constexpr (std::is_same_v<T, Deterministic>) {
                    double lo = d.value - d.width;
                    if (t <= lo || t >= d.value + d.width) return 0.0;
                    double x = (t - lo) / (2.0 * d.width);
                    return 6.0 * x * (1.0 - x) / (2.0 * d.width);
                }
                else {
                    const auto& k = d.knots;
                    const auto& v = d.values;
                    if (t < k.front() || t >= k.back()) return 0.0;
                    auto it = std::upper_bound(k.begin(), k.end(), t);
                    size_t j = static_cast<size_t>(it - k.begin());
                    if (j == 0) j = 1;
                    return (v[j] - v[j - 1]) / (k[j] - k[j - 1]);
                }
            },
            m_family);
    }

    double hazard(double t) const
    {
        double s = sf(t);
        if (s <= 0.0) return 0.0; // past the support; never queried by valid callers
        return pdf(t) / s;
    }

    double quantile(double p) const
    {
        assert(p >= 0.0 && p < 1.0);
        if (const auto* e = std::get_if<Exponential>(&m_family)) {
            return -std::log1p(-p) / e->rate;
        }
        if (const auto* g = std::get_if<Gamma>(&m_family)) {
            return boost::math::quantile(boost::math::gamma_distribution<>(g->shape, g->scale), p);
        }
        if (const auto* l = std::get_if<LogNormal>(&m_family)) {
            return p == 0.0 ? 0.0 : boost::math::quantile(boost::math::lognormal_distribution<>(l->mu, l->sigma), p);
        }
        double hi = upper_support();
        return solve_quantile([this](double x) { return cdf(x); }, p, 0.0, hi);
    }

    // draw eta ~ F
    double sample(RngStream& rng) const { return quantile(rng.uniform()); }

    // draw eta ~ F conditioned on eta > a, by inverse cdf on the truncated
    // distribution (no rejection loop)
    double sample_conditional_exceeding(double a, RngStream& rng) const
    {
        if (a <= 0.0) return sample(rng);
        double Fa = cdf(a);
        if (Fa >= 1.0) {
            throw std::domain_error("conditional duration sample: Fc(a) = 0, conditioning impossible");
        }
        double u = rng.uniform();
        double eta = quantile(Fa + u * (1.0 - Fa));
        return std::max(eta, std::nextafter(a, kInf));
    }

    double mean() const
    {
        if (const auto* e = std::get_if<Exponential>(&m_family)) return 1.0 / e->rate;
        if (const auto* g = std::get_if<Gamma>(&m_family)) return g->shape * g->scale;
        if (const auto* l = std::get_if<LogNormal>(&m_family)) return std::exp(l->mu + 0.5 * l->sigma * l->sigma);
        if (const auto* d = std::get_if<Deterministic>(&m_family)) return d->value;
        // piecewise-linear: integrate the survival function exactly
        const auto& pl = std::get<PiecewiseLinearCdf>(m_family);
        double m = pl.knots.front();
        for (size_t j = 1; j < pl.knots.size(); ++j) {
            m += (pl.knots[j] - pl.knots[j - 1]) * (1.0 - 0.5 * (pl.values[j] + pl.values[j - 1]));
        }
        return m;
    }

    // an (approximate) upper end of the support, used for numeric quantile
    // brackets and hazard-bound scans
    double upper_support() const
    {
        if (const auto* d = std::get_if<Deterministic>(&m_family)) return d->value + d->width;
        if (const auto* p = std::get_if<PiecewiseLinearCdf>(&m_family)) return p->knots.back();
        double hi = mean();
        while (sf(hi) > 1e-15 && hi < 1e9) hi *= 2.0;
        return hi;
    }

    std::optional<double> hazard_bound() const { return m_hazard_bound; }
    void set_hazard_bound(double b) { m_hazard_bound = b; }

    // sup of h over [0, t_max], from a scan when no user bound is supplied;
    // only meaningful below the upper support
    double hazard_bound_on(double t_max, int scan_points = 4096) const
    {
        if (m_hazard_bound) return *m_hazard_bound;
        double cap = std::min(t_max, upper_support() * (1.0 - 1e-12));
        double hmax = 0.0;
        for (int i = 0; i <= scan_points; ++i) {
            double t = cap * i / scan_points;
            if (sf(t) <= 1e-12) break;
            hmax = std::max(hmax, hazard(t));
        }
        return hmax * 1.0000001; // scan resolution slack
    }

    const Family& family() const { return m_family; }

    bool is_exponential() const { return std::holds_alternative<Exponential>(m_family); }

    std::string name() const
    {
        if (std::holds_alternative<Exponential>(m_family)) return "exponential";
        if (std::holds_alternative<Gamma>(m_family)) return "gamma";
        if (std::holds_alternative<LogNormal>(m_family)) return "lognormal";
        if (std::holds_alternative<Deterministic>(m_family)) return "deterministic";
        return "piecewise";
    }

private:
    void validate() const
    {
        if (const auto* e = std::get_if<Exponential>(&m_family)) {
            if (!(e->rate > 0.0)) throw std::invalid_argument("exponential duration: rate must be > 0");
        }
        else if (const auto* g = std::get_if<Gamma>(&m_family)) {
            if (!(g->shape >= 1.0) || !(g->scale > 0.0))
                throw std::invalid_argument("gamma duration: need shape >= 1 and scale > 0");
        }
        else if (const auto* l = std::get_if<LogNormal>(&m_family)) {
            if (!(l->sigma > 0.0)) throw std::invalid_argument("lognormal duration: sigma must be > 0");
        }
        else if (const auto* d = std::get_if<Deterministic>(&m_family)) {
            if (!(d->width > 0.0) || !(d->value > d->width))
                throw std::invalid_argument("deterministic duration: need 0 < width < value");
        }
        else {
            const auto& p = std::get<PiecewiseLinearCdf>(m_family);
            if (p.knots.size() < 2 || p.knots.size() != p.values.size())
                throw std::invalid_argument("piecewise duration: need matching knot/value lists");
            if (p.values.front() != 0.0 || std::abs(p.values.back() - 1.0) > 1e-12 || p.knots.front() < 0.0)
                throw std::invalid_argument("piecewise duration: cdf must run from 0 to 1");
            for (size_t j = 1; j < p.knots.size(); ++j) {
                if (!(p.knots[j] > p.knots[j - 1]) || p.values[j] < p.values[j - 1])
                    throw std::invalid_argument("piecewise duration: cdf must be nondecreasing on increasing knots");
            }
        }
    }

    Family m_family;
    std::optional<double> m_hazard_bound;
};

// ===========================================================================
// One drawn infectivity path: a piecewise description lambda(t) for t < eta,
// identically zero from eta on. `age_offset` shifts evaluation for initially
// infected individuals, whose path started `age_offset` before time zero.
// ===========================================================================
struct InfectivityRealization {
    enum class Kind : std::uint8_t {
        constant,     // lambda(t) = level * 1{t <= eta}
        ramp_plateau, // lambda(t) = level * min(t / ramp, 1) * 1{t <= eta}
        open_ended,   // hazard-mode: level profile, duration decided by removal
        zero,
    };

    Kind kind = Kind::zero;
    double level = 0.0;
    double ramp = 0.0;
    double eta = 0.0; // infectious period; kInf for open_ended

    double eval(double age) const
    {
        if (age < 0.0) return 0.0;
        switch (kind) {
        case Kind::constant:
            return age < eta ? level : 0.0;
        case Kind::ramp_plateau:
            if (age >= eta) return 0.0;
            return level * (age < ramp ? age / ramp : 1.0);
        case Kind::open_ended:
            return ramp > 0.0 && age < ramp ? level * age / ramp : level;
        case Kind::zero:
        default:
            return 0.0;
        }
    }
};

// breakpoints 0 = z0 <= z1 <= ... <= zk = eta of a realization, exposed for
// tests of the piecewise structure
inline std::vector<double> realization_breakpoints(const InfectivityRealization& r)
{
    switch (r.kind) {
    case InfectivityRealization::Kind::constant:
        return {0.0, r.eta};
    case InfectivityRealization::Kind::ramp_plateau:
        return {0.0, std::min(r.ramp, r.eta), r.eta};
    default:
        return {0.0, r.eta};
    }
}

// ===========================================================================
// The law of the random infectivity function lambda(.). Each realization is
// bounded by sup_bound() and vanishes from its infectious period eta on; eta
// is distributed per the attached DurationDistribution.
//
// Built-ins (all with closed-form mean and covariance):
//   constant:      lambda(t) = beta * 1{t <= eta}
//   ramp_plateau:  lambda(t) = B * min(t/ramp, 1) * 1{t <= eta},
//                  B uniform on [level_lo, level_hi], independent of eta
//   zero:          lambda = 0
//
// mean_at(t)   = E[lambda(t)]
// cov_at(t,t') = Cov(lambda(t), lambda(t'))
// cross_moment(t,t') = E[lambda(t) lambda(t')]
//
// A Monte Carlo grid cache (build_mc_cache) provides the same surface for
// laws without closed forms and doubles as an independent oracle in tests.
// ===========================================================================
class InfectivityLaw
{
public:
    enum class Kind : std::uint8_t { constant, ramp_plateau, zero };

    static InfectivityLaw constant(double beta, DurationDistribution duration)
    {
        InfectivityLaw law;
        law.m_kind = Kind::constant;
        law.m_level_lo = law.m_level_hi = beta;
        law.m_duration = std::move(duration);
        if (!(beta >= 0.0)) throw std::invalid_argument("constant infectivity: beta must be >= 0");
        return law;
    }

    static InfectivityLaw ramp_plateau(double level_lo, double level_hi, double ramp,
                                       DurationDistribution duration)
    {
        InfectivityLaw law;
        law.m_kind = Kind::ramp_plateau;
        law.m_level_lo = level_lo;
        law.m_level_hi = level_hi;
        law.m_ramp = ramp;
        law.m_duration = std::move(duration);
        if (!(level_lo >= 0.0) || !(level_hi >= level_lo) || !(ramp > 0.0))
            throw std::invalid_argument("ramp infectivity: need 0 <= lo <= hi and ramp > 0");
        return law;
    }

    static InfectivityLaw zero(DurationDistribution duration)
    {
        InfectivityLaw law;
        law.m_kind = Kind::zero;
        law.m_duration = std::move(duration);
        return law;
    }

    Kind kind() const { return m_kind; }
    const DurationDistribution& duration() const { return m_duration; }

    double sup_bound() const { return m_kind == Kind::zero ? 0.0 : m_level_hi; }

    int piece_count() const { return m_kind == Kind::ramp_plateau ? 2 : 1; }

    // the deterministic profile lambda~ of a separable law; only valid when
    // is_separable_deterministic()
    bool is_separable_deterministic() const
    {
        return m_kind == Kind::zero || m_kind == Kind::constant ||
               (m_kind == Kind::ramp_plateau && m_level_lo == m_level_hi);
    }

    double profile(double age) const
    {
        switch (m_kind) {
        case Kind::constant:
            return m_level_lo;
        case Kind::ramp_plateau:
            return m_level_lo * std::min(age / m_ramp, 1.0);
        default:
            return 0.0;
        }
    }

    // lambda(t) = 0 identically for every realization
    bool is_zero() const { return m_kind == Kind::zero || m_level_hi == 0.0; }

    // aggregate infectivity of a set of infected individuals is
    // sup_bound * count; lets simulators skip the per-individual sum
    bool has_constant_level() const { return m_kind == Kind::constant || is_zero(); }

    double mean_at(double t) const
    {
        if (t < 0.0) return 0.0;
        switch (m_kind) {
        case Kind::constant:
            return m_level_lo * m_duration.sf(t);
        case Kind::ramp_plateau:
            return mean_level() * profile_shape(t) * m_duration.sf(t);
        default:
            return 0.0;
        }
    }

    double cross_moment(double t, double s) const
    {
        if (t < 0.0 || s < 0.0) return 0.0;
        switch (m_kind) {
        case Kind::constant: {
            double b = m_level_lo;
            return b * b * m_duration.sf(std::max(t, s));
        }
        case Kind::ramp_plateau: {
            return mean_level_sq() * profile_shape(t) * profile_shape(s) * m_duration.sf(std::max(t, s));
        }
        default:
            return 0.0;
        }
    }

    double cov_at(double t, double s) const { return cross_moment(t, s) - mean_at(t) * mean_at(s); }

    // E[lambda(t) lambda(s)] / Fc(t v s): the smooth factor of the cross
    // moment, with the survival of the later time divided out. Lets grid
    // caches reuse tabulated survival values without re-evaluating F.
    double cross_moment_given_survival(double t, double s) const
    {
        switch (m_kind) {
        case Kind::constant:
            return m_level_lo * m_level_lo;
        case Kind::ramp_plateau:
            return mean_level_sq() * profile_shape(t) * profile_shape(s);
        default:
            return 0.0;
        }
    }

    // survival-conditioned moments of the path at ages a+t given that the
    // individual is still infectious at age a; exact because lambda vanishes
    // beyond eta, so E[lambda(a+t) 1{eta > a}] = E[lambda(a+t)]
    double mean_residual(double a, double t) const
    {
        double s = m_duration.sf(a);
        return s > 0.0 ? mean_at(a + t) / s : 0.0;
    }

    double cov_residual(double a, double t, double tp) const
    {
        double s = m_duration.sf(a);
        if (s <= 0.0) return 0.0;
        double m2 = cross_moment(a + t, a + tp) / s;
        return m2 - mean_residual(a, t) * mean_residual(a, tp);
    }

    // Draw a full realization (breakpoints, pieces, eta). `eta_cap` guards
    // against mis-specified duration laws.
    InfectivityRealization sample(RngStream& rng, double eta_cap = kInf) const
    {
        double eta = m_duration.sample(rng);
        if (eta > eta_cap) {
            throw std::runtime_error("sampled infectious period exceeds the configured horizon cap");
        }
        return make_realization(eta, rng);
    }

    // realization with a given eta (already drawn, e.g. conditioned)
    InfectivityRealization make_realization(double eta, RngStream& rng) const
    {
        InfectivityRealization r;
        r.eta = eta;
        switch (m_kind) {
        case Kind::constant:
            r.kind = InfectivityRealization::Kind::constant;
            r.level = m_level_lo;
            break;
        case Kind::ramp_plateau:
            r.kind = InfectivityRealization::Kind::ramp_plateau;
            r.level = m_level_lo == m_level_hi ? m_level_lo : rng.uniform(m_level_lo, m_level_hi);
            r.ramp = m_ramp;
            break;
        default:
            r.kind = InfectivityRealization::Kind::zero;
            break;
        }
        return r;
    }

    // open-ended realization for hazard-driven recoveries (separable laws
    // with a deterministic profile only)
    InfectivityRealization make_open_ended() const
    {
        if (!is_separable_deterministic()) {
            throw std::invalid_argument(
                "hazard-mode simulation requires a separable law with deterministic profile");
        }
        InfectivityRealization r;
        r.kind = InfectivityRealization::Kind::open_ended;
        r.level = m_level_lo;
        r.ramp = m_kind == Kind::ramp_plateau ? m_ramp : 0.0;
        r.eta = kInf;
        return r;
    }

    double mean_level() const { return 0.5 * (m_level_lo + m_level_hi); }

    // --- Monte Carlo cache -------------------------------------------------
    // mean on a dense grid, covariance on a coarser subgrid with bilinear
    // interpolation in between
    struct McCache {
        double dt = 0.0;
        std::vector<double> mean;   // at k*dt/2 (half-lattice)
        double cov_dt = 0.0;
        std::vector<double> cov;    // row-major on the coarse lattice
        int cov_n = 0;
        int samples = 0;

        double mean_at(double t) const
        {
            if (t < 0.0) return 0.0;
            double x = 2.0 * t / dt;
            int k = static_cast<int>(x);
            if (k + 1 >= static_cast<int>(mean.size())) return mean.empty() ? 0.0 : mean.back();
            double w = x - k;
            return (1.0 - w) * mean[k] + w * mean[k + 1];
        }
        double cov_at(double t, double s) const
        {
            auto clampi = [this](double u) { return std::min(std::max(u, 0.0), (cov_n - 1) * cov_dt); };
            double x = clampi(t) / cov_dt, y = clampi(s) / cov_dt;
            int i = std::min(static_cast<int>(x), cov_n - 2);
            int j = std::min(static_cast<int>(y), cov_n - 2);
            double wx = x - i, wy = y - j;
            auto at = [this](int a, int b) { return cov[static_cast<size_t>(a) * cov_n + b]; };
            return (1.0 - wx) * (1.0 - wy) * at(i, j) + wx * (1.0 - wy) * at(i + 1, j) +
                   (1.0 - wx) * wy * at(i, j + 1) + wx * wy * at(i + 1, j + 1);
        }
    };

    McCache build_mc_cache(double t_max, double dt, int samples, RngStream& rng, int cov_max_nodes = 128) const
    {
        McCache c;
        c.dt = dt;
        c.samples = samples;
        int n_half = 2 * static_cast<int>(std::ceil(t_max / dt)) + 1;
        c.mean.assign(n_half, 0.0);
        c.cov_n = std::min(cov_max_nodes, n_half / 2 + 1);
        c.cov_dt = t_max / (c.cov_n - 1);
        std::vector<double> sums(n_half, 0.0);
        std::vector<double> cvals(c.cov_n);
        std::vector<double> csum(static_cast<size_t>(c.cov_n) * c.cov_n, 0.0);
        std::vector<double> cmean(c.cov_n, 0.0);
        for (int s = 0; s < samples; ++s) {
            auto r = sample(rng);
            for (int k = 0; k < n_half; ++k) sums[k] += r.eval(0.5 * k * dt);
            for (int i = 0; i < c.cov_n; ++i) cvals[i] = r.eval(i * c.cov_dt);
            for (int i = 0; i < c.cov_n; ++i) {
                cmean[i] += cvals[i];
                for (int j = i; j < c.cov_n; ++j) csum[static_cast<size_t>(i) * c.cov_n + j] += cvals[i] * cvals[j];
            }
        }
        for (int k = 0; k < n_half; ++k) c.mean[k] = sums[k] / samples;
        c.cov.assign(csum.size(), 0.0);
        for (int i = 0; i < c.cov_n; ++i) {
            for (int j = i; j < c.cov_n; ++j) {
                double m2 = csum[static_cast<size_t>(i) * c.cov_n + j] / samples;
                double cc = m2 - (cmean[i] / samples) * (cmean[j] / samples);
                c.cov[static_cast<size_t>(i) * c.cov_n + j] = cc;
                c.cov[static_cast<size_t>(j) * c.cov_n + i] = cc;
            }
        }
        return c;
    }

private:
    double profile_shape(double age) const { return std::min(age / m_ramp, 1.0); }
    double mean_level_sq() const
    {
        if (m_level_lo == m_level_hi) return m_level_lo * m_level_lo;
        // uniform level on [lo, hi]
        return (m_level_hi * m_level_hi * m_level_hi - m_level_lo * m_level_lo * m_level_lo) /
               (3.0 * (m_level_hi - m_level_lo));
    }

    Kind m_kind = Kind::zero;
    double m_level_lo = 0.0;
    double m_level_hi = 0.0;
    double m_ramp = 1.0;
    DurationDistribution m_duration;
};

// ===========================================================================
// Age law of the initially infected: a probability measure on [0, a_max]
// with no atom at 0, represented by its cdf (piecewise-linear between knots,
// so atoms are steep ramps of zero width are not representable; use a knot
// pair with equal abscissa treated as a jump).
// ===========================================================================
class InitialAgeLaw
{
public:
    InitialAgeLaw() = default;

    static InitialAgeLaw uniform(double a_max)
    {
        InitialAgeLaw law;
        law.m_knots = {0.0, a_max};
        law.m_cdf = {0.0, 1.0};
        law.m_a_max = a_max;
        return law;
    }

    // piecewise-linear cdf; jumps allowed via repeated knots
    static InitialAgeLaw piecewise(std::vector<double> knots, std::vector<double> cdf)
    {
        if (knots.size() != cdf.size() || knots.size() < 2 || cdf.front() != 0.0 ||
            std::abs(cdf.back() - 1.0) > 1e-12 || knots.front() < 0.0) {
            throw std::invalid_argument("initial age law: cdf must run from 0 to 1 on nonnegative knots");
        }
        for (size_t j = 1; j < knots.size(); ++j) {
            if (knots[j] < knots[j - 1] || cdf[j] < cdf[j - 1]) {
                throw std::invalid_argument("initial age law: cdf must be nondecreasing");
            }
        }
        if (knots.front() == 0.0 && knots.size() > 1 && knots[1] == 0.0) {
            throw std::invalid_argument("initial age law: no atom at age 0 allowed");
        }
        InitialAgeLaw law;
        law.m_a_max = knots.back();
        law.m_knots = std::move(knots);
        law.m_cdf = std::move(cdf);
        return law;
    }

    // narrow triangular spike of half-width w around a0 (clipped to [0, a_max])
    static InitialAgeLaw near_atom(double a0, double w, double a_max)
    {
        double lo = std::max(0.0, a0 - w), hi = std::min(a_max, a0 + w);
        return piecewise({0.0, lo, 0.5 * (lo + hi), hi, a_max}, {0.0, 0.0, 0.5, 1.0, 1.0});
    }

    double a_max() const { return m_a_max; }

    double cdf(double a) const
    {
        if (a <= m_knots.front()) return 0.0;
        if (a >= m_knots.back()) return 1.0;
        auto it = std::upper_bound(m_knots.begin(), m_knots.end(), a);
        size_t j = static_cast<size_t>(it - m_knots.begin());
        if (m_knots[j] == m_knots[j - 1]) return m_cdf[j];
        double w = (a - m_knots[j - 1]) / (m_knots[j] - m_knots[j - 1]);
        return m_cdf[j - 1] + w * (m_cdf[j] - m_cdf[j - 1]);
    }

    double quantile(double p) const
    {
        assert(p >= 0.0 && p <= 1.0);
        auto it = std::lower_bound(m_cdf.begin(), m_cdf.end(), p);
        if (it == m_cdf.begin()) return m_knots.front();
        if (it == m_cdf.end()) return m_knots.back();
        size_t j = static_cast<size_t>(it - m_cdf.begin());
        if (m_cdf[j] == m_cdf[j - 1]) return m_knots[j];
        double w = (p - m_cdf[j - 1]) / (m_cdf[j] - m_cdf[j - 1]);
        return m_knots[j - 1] + w * (m_knots[j] - m_knots[j - 1]);
    }

    double sample(RngStream& rng) const { return quantile(rng.uniform()); }

private:
    std::vector<double> m_knots;
    std::vector<double> m_cdf;
    double m_a_max = 0.0;
};

// how the initial infection age couples to the residual infectious period
enum class InitialCoupling : std::uint8_t {
    residual,      // age ~ age law, eta ~ F conditioned on eta > age
    paper_uniform, // age = (U * eta) ^ a_max with U uniform, eta ~ F
};

// ===========================================================================
// Fractions at time zero plus the age law of the initially infected.
// ===========================================================================
struct InitialCondition {
    double s0 = 0.0;
    double i0 = 0.0;
    double r0 = 0.0;
    InitialAgeLaw age_law;
    double a_max = 0.0;
    InitialCoupling coupling = InitialCoupling::residual;

    // `for_limit` additionally enforces i0 < 1, required by the limit theory
    void validate(bool for_limit = true) const
    {
        if (std::abs(s0 + i0 + r0 - 1.0) > 1e-12) {
            throw std::invalid_argument("initial condition: fractions must sum to 1");
        }
        if (!(i0 > 0.0) || s0 < 0.0 || r0 < 0.0) {
            throw std::invalid_argument("initial condition: need i0 > 0 and nonnegative fractions");
        }
        if (for_limit && !(i0 < 1.0)) {
            throw std::invalid_argument("initial condition: limit solvers require i0 < 1");
        }
        if (!(a_max > 0.0) || age_law.a_max() > a_max + 1e-12) {
            throw std::invalid_argument("initial condition: age law support must lie in [0, a_max]");
        }
    }
};

// one sampled initially-infected individual
struct InitialIndividual {
    double age;                  // infection age at time zero
    double remaining;            // remaining infectious period eta0 > 0
    InfectivityRealization path; // full path; evaluate at age + t for time t
};

// Draw (age, remaining period, path). In residual mode the remaining period
// has the survival law Fc(age + .) / Fc(age); in paper_uniform mode the age
// is (U eta) ^ a_max from the realization's own eta.
inline InitialIndividual sample_initial_individual(RngStream& rng, const InitialCondition& init,
                                                   const InfectivityLaw& law)
{
    const auto& dur = law.duration();
    InitialIndividual out;
    if (init.coupling == InitialCoupling::residual) {
        if (dur.sf(init.a_max) <= 0.0) {
            throw std::domain_error("residual initial coupling: Fc(a_max) = 0, conditioning impossible");
        }
        out.age = init.age_law.sample(rng);
        double eta = dur.sample_conditional_exceeding(out.age, rng);
        out.remaining = eta - out.age;
        out.path = law.make_realization(eta, rng);
    }
    else {
        out.path = law.sample(rng);
        double u = rng.uniform();
        out.age = std::min(u * out.path.eta, init.a_max);
        out.remaining = out.path.eta - out.age;
    }
    assert(out.remaining > 0.0);
    return out;
}

} // namespace agesir

#endif // AGESIR_MODEL_HPP
