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
#ifndef AGESIR_LLN_HPP
#define AGESIR_LLN_HPP

#include "agesir/abm.hpp"
#include "agesir/common.hpp"
#include "agesir/model.hpp"

namespace agesir {

// Kernel used for the initially infected cohort in the limit equations.
//
// `residual` conditions the path moments on survival to the sampled age
// (E[lambda(a+t) | eta > a] = mean(a+t)/Fc(a)); this is the kernel under
// which the closed forms for I, R and the age measure are exact when the
// simulator uses the residual initial coupling, and it reproduces the
// classical SIR system for indicator laws. `unconditional` uses the raw
// mean path, kept for side-by-side comparison of the two conventions.
enum class InitKernel : std::uint8_t { residual, unconditional };

// ===========================================================================
// Grid caches of the survival/hazard/mean-infectivity functions at all
// half-step lattice points k * dt/2 on [0, horizon + age_max]. Quadratures
// below only ever evaluate at lattice points, so everything is an exact
// array lookup.
// ===========================================================================
struct ModelCaches {
    Grid grid;
    InfectivityLaw law;
    std::vector<double> Fc;     // survival at k*dt/2
    std::vector<double> f;      // density
    std::vector<double> h;      // hazard
    std::vector<double> log_Fc; // log survival
    std::vector<double> lam;    // mean infectivity
    std::optional<InfectivityLaw::McCache> mc; // backs `lam`/moments when set

    int half_points() const { return static_cast<int>(Fc.size()); }

    double sf_ratio_idx(int num, int den) const
    {
        // Fc(num)/Fc(den) in log space
        if (log_Fc[num] == -kInf) return 0.0;
        return std::exp(log_Fc[num] - log_Fc[den]);
    }

    // E[lambda(u) lambda(u')] at lattice points u = i*dt/2, u' = j*dt/2
    double cross_moment_idx(int i, int j) const
    {
        if (mc) {
            double u = 0.5 * i * grid.dt(), v = 0.5 * j * grid.dt();
            return mc->cov_at(u, v) + mc->mean_at(u) * mc->mean_at(v);
        }
        if (law.is_zero()) return 0.0;
        double u = 0.5 * i * grid.dt(), v = 0.5 * j * grid.dt();
        return law.cross_moment_given_survival(u, v) * Fc[std::max(i, j)];
    }

    double cov_idx(int i, int j) const { return cross_moment_idx(i, j) - lam[i] * lam[j]; }
};

inline ModelCaches build_model_caches(const InfectivityLaw& law, const Grid& grid,
                                      std::optional<InfectivityLaw::McCache> mc = std::nullopt)
{
    ModelCaches c;
    c.grid = grid;
    c.law = law;
    c.mc = std::move(mc);
    int n = 2 * grid.num_ext_steps() + 1;
    c.Fc.resize(n);
    c.f.resize(n);
    c.h.resize(n);
    c.log_Fc.resize(n);
    c.lam.resize(n);
    const auto& dur = law.duration();
    for (int k = 0; k < n; ++k) {
        double u = 0.5 * k * grid.dt();
        c.Fc[k] = dur.sf(u);
        c.f[k] = dur.pdf(u);
        c.h[k] = c.Fc[k] > 0.0 ? c.f[k] / c.Fc[k] : 0.0;
        c.log_Fc[k] = dur.log_sf(u);
        c.lam[k] = c.mc ? c.mc->mean_at(u) : law.mean_at(u);
    }
    return c;
}

// ===========================================================================
// Deterministic limit paths on the grid, plus evaluators for the limit age
// measure. The measure at time t_n decomposes into a density part
// Fc(a) Upsilon(t_n - a) da on ages a < t_n and the transported initial
// cohort on a >= t_n; cell masses of both parts feed the recovery-noise
// field of the fluctuation engine.
// ===========================================================================
class LlnPaths
{
public:
    Grid grid;
    InitKernel kernel = InitKernel::residual;
    double s0 = 0.0, i0 = 0.0, r0 = 0.0;
    std::vector<double> S, F, Ups, I, R;
    std::vector<double> mass0; // initial-age cell masses (total = i0)
    ModelCaches caches;

    int num_init_cells() const { return static_cast<int>(mass0.size()); }

    // survival ratio Fc(rep_m + t_n) / Fc(rep_m) of initial cell m at node n
    double init_cell_ratio(int m, int n) const
    {
        return caches.sf_ratio_idx(2 * (m + n) + 1, 2 * m + 1);
    }

    // mu_t(phi) at grid node n by the closed-form solution
    template <class Fn>
    double measure_apply(Fn&& phi, int n) const
    {
        double dt = grid.dt();
        double acc = 0.0;
        for (int m = 0; m < num_init_cells(); ++m) {
            if (mass0[m] == 0.0) continue;
            double rep = (m + 0.5) * dt;
            acc += phi(rep + n * dt) * init_cell_ratio(m, n) * mass0[m];
        }
        if (n > 0) {
            for (int k = 0; k <= n; ++k) {
                double a = (n - k) * dt;
                acc += dt * trapezoid_weight(k, n) * phi(a) * caches.Fc[2 * (n - k)] * Ups[k];
            }
        }
        return acc;
    }

    // cell mass of the limit measure at time node n, age cell [m dt, (m+1) dt)
    double mu_cell_mass(int n, int m) const
    {
        double dt = grid.dt();
        if (m < n) {
            // density part: Fc(a) Upsilon(t_n - a), midpoint in a
            double ups = 0.5 * (Ups[n - m] + Ups[n - m - 1]); // Upsilon at t_n - rep_m
            return dt * caches.Fc[2 * m + 1] * ups;
        }
        int m0 = m - n;
        if (m0 >= num_init_cells()) return 0.0;
        return mass0[m0] * init_cell_ratio(m0, n);
    }

    // last age cell (exclusive) that can carry mass at node n
    int num_age_cells(int n) const { return n + num_init_cells(); }

    // integral of a function of age against the initial measure, kernel-aware
    template <class Fn>
    double init_integral(Fn&& fn_of_cell) const
    {
        double acc = 0.0;
        for (int m = 0; m < num_init_cells(); ++m) {
            if (mass0[m] != 0.0) acc += fn_of_cell(m) * mass0[m];
        }
        return acc;
    }
};

namespace detail {

inline std::vector<double> initial_cell_masses(const InitialCondition& init, const Grid& grid)
{
    int cells = static_cast<int>(std::ceil(init.a_max / grid.dt() - 1e-12));
    std::vector<double> mass(cells);
    for (int m = 0; m < cells; ++m) {
        double lo = m * grid.dt();
        double hi = std::min((m + 1) * grid.dt(), init.a_max);
        mass[m] = init.i0 * (init.age_law.cdf(hi) - init.age_law.cdf(lo));
    }
    return mass;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Forward time-stepping of the limit system
//
//   S(t)   = S(0) - int_0^t Upsilon
//   F(t)   = force0(t) + int_0^t mean_lambda(t-s) Upsilon(s) ds
//   Upsilon = S * F
//
// with trapezoidal quadrature. The trapezoid endpoint Upsilon(t_n) appears
// in both S(t_n) and F(t_n), so the per-node equation
//   y = (A - w y)(B + w lam0 y)
// is a scalar quadratic; it is solved exactly in the cancellation-stable
// form. I and R then follow by direct quadrature of their closed forms.
// ---------------------------------------------------------------------------
inline LlnPaths solve_lln(const InfectivityLaw& law, const InitialCondition& init, const Grid& grid,
                          InitKernel kernel = InitKernel::residual,
                          std::optional<InfectivityLaw::McCache> mc = std::nullopt)
{
    init.validate(true);
    LlnPaths out;
    out.grid = grid;
    out.kernel = kernel;
    out.s0 = init.s0;
    out.i0 = init.i0;
    out.r0 = init.r0;
    out.caches = build_model_caches(law, grid, std::move(mc));
    out.mass0 = detail::initial_cell_masses(init, grid);

    const auto& C = out.caches;
    const double dt = grid.dt();
    const int nn = grid.num_nodes();
    const int cells = out.num_init_cells();
    const double lam0 = C.lam[0];

    out.S.resize(nn);
    out.F.resize(nn);
    out.Ups.resize(nn);
    out.I.resize(nn);
    out.R.resize(nn);

    // initial force of infection at each node
    std::vector<double> force0(nn, 0.0);
    for (int n = 0; n < nn; ++n) {
        double acc = 0.0;
        for (int m = 0; m < cells; ++m) {
            if (out.mass0[m] == 0.0) continue;
            double k = C.lam[2 * (m + n) + 1];
            if (kernel == InitKernel::residual) k /= C.Fc[2 * m + 1];
            acc += k * out.mass0[m];
        }
        force0[n] = acc;
    }

    // n = 0
    out.F[0] = force0[0];
    out.S[0] = init.s0;
    out.Ups[0] = out.S[0] * out.F[0];

    for (int n = 1; n < nn; ++n) {
        double w = 0.5 * dt; // trapezoid endpoint weight of the unknown node
        double b_known = force0[n];
        double s_int = 0.0;
        for (int k = 0; k < n; ++k) {
            double wk = dt * trapezoid_weight(k, n);
            b_known += wk * C.lam[2 * (n - k)] * out.Ups[k];
            s_int += wk * out.Ups[k];
        }
        double a_known = init.s0 - s_int;

        double q = 1.0 + w * b_known - w * lam0 * a_known;
        if (!(q > 0.0)) {
            throw std::runtime_error("lln solve: per-node coefficient not positive; decrease dt");
        }
        double ab = a_known * b_known;
        double disc = q * q + 4.0 * w * w * lam0 * ab;
        if (disc < 0.0) {
            throw std::runtime_error("lln solve: negative discriminant; decrease dt");
        }
        double y = (lam0 == 0.0) ? ab / q : 2.0 * ab / (q + std::sqrt(disc));
        if (!std::isfinite(y) || y < -1e-9 * (1.0 + std::abs(ab))) {
            throw std::runtime_error("lln solve: negative infection intensity; decrease dt");
        }
        out.Ups[n] = y;
        out.S[n] = a_known - w * y;
        out.F[n] = b_known + w * lam0 * y;
    }

    // I and R by direct quadrature of the closed forms
    for (int n = 0; n < nn; ++n) {
        double init_i = 0.0, init_r = 0.0;
        for (int m = 0; m < cells; ++m) {
            if (out.mass0[m] == 0.0) continue;
            double ratio = out.init_cell_ratio(m, n);
            init_i += ratio * out.mass0[m];
            init_r += (1.0 - ratio) * out.mass0[m];
        }
        double conv_i = 0.0, conv_r = 0.0;
        if (n > 0) {
            for (int k = 0; k <= n; ++k) {
                double wk = dt * trapezoid_weight(k, n);
                double fc = C.Fc[2 * (n - k)];
                conv_i += wk * fc * out.Ups[k];
                conv_r += wk * (1.0 - fc) * out.Ups[k];
            }
        }
        out.I[n] = init_i + conv_i;
        out.R[n] = init.r0 + init_r + conv_r;
    }
    return out;
}

// mu_t(phi) at a grid node
template <class Fn>
double lln_measure_apply(const LlnPaths& paths, int n, Fn&& phi)
{
    return paths.measure_apply(std::forward<Fn>(phi), n);
}

// |d/dt mu_t(phi) - phi(0) Upsilon(t) - mu_t(phi' - h phi)| at node n by a
// centered difference; n must be interior
template <class Fn, class FnD>
double weak_form_residual(const LlnPaths& paths, int n, Fn&& phi, FnD&& dphi)
{
    if (n <= 0 || n >= paths.grid.num_steps()) {
        throw std::invalid_argument("weak-form residual needs an interior grid node");
    }
    double dt = paths.grid.dt();
    double ddt = (paths.measure_apply(phi, n + 1) - paths.measure_apply(phi, n - 1)) / (2.0 * dt);
    const auto& dur = paths.caches.law.duration();
    auto transported = [&](double a) { return dphi(a) - dur.hazard(a) * phi(a); };
    double rhs = phi(0.0) * paths.Ups[n] + paths.measure_apply(transported, n);
    return std::abs(ddt - rhs);
}

// ---------------------------------------------------------------------------
// Generic linear transport PDE with hazard decay: explicit solution
// evaluator and weak-form residual, for manufactured-solution checks.
//   d/dt <u_t, phi> = <u_t, phi' - h phi> + phi(0) k(t) + <g_t, phi>
// ---------------------------------------------------------------------------
struct GenericPde {
    DurationDistribution dur;
    std::function<double(double)> u0;         // initial density on [0, a0_max]
    double a0_max = 0.0;
    std::function<double(double)> k;          // boundary inflow
    std::function<double(double, double)> g;  // source g(s, r), r in [0, r_max]
    double r_max = 0.0;
};

// <u_t, phi> by the explicit formula, midpoint quadrature with step dt
template <class Fn>
double generic_pde_apply(const GenericPde& p, double t, double dt, Fn&& phi)
{
    int na = static_cast<int>(std::ceil(p.a0_max / dt - 1e-12));
    double acc = 0.0;
    for (int m = 0; m < na; ++m) {
        double a = (m + 0.5) * dt;
        acc += dt * phi(a + t) * p.dur.sf_ratio(t + a, a) * p.u0(a);
    }
    int nt = static_cast<int>(std::llround(t / dt));
    for (int j = 0; j < nt; ++j) {
        double a = (j + 0.5) * dt;
        acc += dt * phi(t - a) * p.dur.sf(t - a) * p.k(a);
    }
    int nr = static_cast<int>(std::ceil(p.r_max / dt - 1e-12));
    for (int j = 0; j < nt; ++j) {
        double s = (j + 0.5) * dt;
        for (int m = 0; m < nr; ++m) {
            double r = (m + 0.5) * dt;
            acc += dt * dt * phi(t - s + r) * p.dur.sf_ratio(t - s + r, r) * p.g(s, r);
        }
    }
    return acc;
}

template <class Fn, class FnD>
double generic_pde_weak_residual(const GenericPde& p, double t, double dt, Fn&& phi, FnD&& dphi)
{
    double ddt = (generic_pde_apply(p, t + dt, dt, phi) - generic_pde_apply(p, t - dt, dt, phi)) / (2.0 * dt);
    auto transported = [&](double a) { return dphi(a) - p.dur.hazard(a) * phi(a); };
    double grhs = 0.0;
    int nr = static_cast<int>(std::ceil(p.r_max / dt - 1e-12));
    for (int m = 0; m < nr; ++m) {
        double r = (m + 0.5) * dt;
        grhs += dt * phi(r) * p.g(t, r);
    }
    double rhs = generic_pde_apply(p, t, dt, transported) + phi(0.0) * p.k(t) + grhs;
    return std::abs(ddt - rhs);
}

// ---------------------------------------------------------------------------
// Classical SIR by RK4 at a refined step, sampled back onto the grid. The
// independent oracle for indicator laws with exponential durations.
// ---------------------------------------------------------------------------
struct OdePaths {
    std::vector<double> S, I, R;
};

inline OdePaths markovian_ode_oracle(double beta, double gamma_rate, double s0, double i0, double r0,
                                     const Grid& grid, int refine = 10)
{
    OdePaths out;
    int nn = grid.num_nodes();
    out.S.resize(nn);
    out.I.resize(nn);
    out.R.resize(nn);
    double h = grid.dt() / refine;
    double s = s0, i = i0, r = r0;
    auto fS = [&](double S, double I) { return -beta * S * I; };
    auto fI = [&](double S, double I) { return beta * S * I - gamma_rate * I; };
    out.S[0] = s;
    out.I[0] = i;
    out.R[0] = r;
    for (int n = 1; n < nn; ++n) {
        for (int sub = 0; sub < refine; ++sub) {
            double k1s = fS(s, i), k1i = fI(s, i);
            double k2s = fS(s + 0.5 * h * k1s, i + 0.5 * h * k1i), k2i = fI(s + 0.5 * h * k1s, i + 0.5 * h * k1i);
            double k3s = fS(s + 0.5 * h * k2s, i + 0.5 * h * k2i), k3i = fI(s + 0.5 * h * k2s, i + 0.5 * h * k2i);
            double k4s = fS(s + h * k3s, i + h * k3i), k4i = fI(s + h * k3s, i + h * k3i);
            s += h / 6.0 * (k1s + 2.0 * k2s + 2.0 * k3s + k4s);
            i += h / 6.0 * (k1i + 2.0 * k2i + 2.0 * k3i + k4i);
            r = (s0 + i0 + r0) - s - i;
        }
        out.S[n] = s;
        out.I[n] = i;
        out.R[n] = r;
    }
    return out;
}

// ---------------------------------------------------------------------------
// CLT-scaled fluctuation paths sqrt(N) (X^N/N - X) on the trajectory grid
// ---------------------------------------------------------------------------
struct FluctuationPaths {
    std::vector<double> S, I, R, F;
};

inline FluctuationPaths fluctuation_paths(const Trajectory& traj, const LlnPaths& lln)
{
    if (traj.grid.num_nodes() != lln.grid.num_nodes() ||
        std::abs(traj.grid.dt() - lln.grid.dt()) > 1e-12) {
        throw std::invalid_argument("fluctuation paths: trajectory and limit grids differ");
    }
    double n = static_cast<double>(traj.population);
    double rt = std::sqrt(n);
    FluctuationPaths out;
    int nn = traj.grid.num_nodes();
    out.S.resize(nn);
    out.I.resize(nn);
    out.R.resize(nn);
    out.F.resize(nn);
    for (int k = 0; k < nn; ++k) {
        out.S[k] = rt * (traj.S[k] / n - lln.S[k]);
        out.I[k] = rt * (traj.I[k] / n - lln.I[k]);
        out.R[k] = rt * (traj.R[k] / n - lln.R[k]);
        out.F[k] = rt * (traj.F[k] / n - lln.F[k]);
    }
    return out;
}

// subsample limit paths solved on a refined grid back onto a coarse grid
inline LlnPaths subsample_lln(const LlnPaths& fine, const Grid& coarse)
{
    int factor = static_cast<int>(std::llround(fine.grid.num_steps() / static_cast<double>(coarse.num_steps())));
    if (factor < 1 || fine.grid.num_steps() != factor * coarse.num_steps()) {
        throw std::invalid_argument("subsample: incompatible grids");
    }
    LlnPaths out;
    out.grid = coarse;
    out.kernel = fine.kernel;
    out.s0 = fine.s0;
    out.i0 = fine.i0;
    out.r0 = fine.r0;
    out.caches = build_model_caches(fine.caches.law, coarse, fine.caches.mc);
    int nn = coarse.num_nodes();
    out.S.resize(nn);
    out.F.resize(nn);
    out.Ups.resize(nn);
    out.I.resize(nn);
    out.R.resize(nn);
    for (int n = 0; n < nn; ++n) {
        out.S[n] = fine.S[n * factor];
        out.F[n] = fine.F[n * factor];
        out.Ups[n] = fine.Ups[n * factor];
        out.I[n] = fine.I[n * factor];
        out.R[n] = fine.R[n * factor];
    }
    // re-bin the initial cells onto the coarse lattice
    int cells = (static_cast<int>(fine.mass0.size()) + factor - 1) / factor;
    out.mass0.assign(cells, 0.0);
    for (size_t m = 0; m < fine.mass0.size(); ++m) {
        out.mass0[m / factor] += fine.mass0[m];
    }
    return out;
}

inline void write_lln_csv(const LlnPaths& p, const std::string& path)
{
    CsvWriter csv(path);
    csv.header({"t", "Sbar", "Fbar", "Upsbar", "Ibar", "Rbar"});
    for (int n = 0; n < p.grid.num_nodes(); ++n) {
        csv.row({p.grid.node(n), p.S[n], p.F[n], p.Ups[n], p.I[n], p.R[n]});
    }
}

} // namespace agesir

#endif // AGESIR_LLN_HPP
