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
#ifndef AGESIR_CLT_HPP
#define AGESIR_CLT_HPP

#include "agesir/common.hpp"
#include "agesir/lln.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

namespace agesir {

struct TestFunction {
    std::string name;
    std::function<double(double)> phi;
};

// ===========================================================================
// Analytic covariance blocks of the Gaussian drivers on the grid.
//
// Index convention: entry (i, j) refers to grid times t_i, t_j.
//   s1      Cov(S1, S1)            = int_0^{ti ^ tj} Ups
//   s1_f1   Cov(S1(ti), F1(tj))    = int_0^{ti ^ tj} lam(tj - s) Ups(s) ds
//   f1      Cov(F1, F1)            = int lam(ti-s) lam(tj-s) Ups(s) ds
//   f01     init mean-path term    = bridge covariance of the kernel
//   f02     init path-noise term   = int v_a(a+ti, a+tj) mu0(da)
//   f2      new path-noise term    = int_0^{ti^tj} v(ti-s, tj-s) Ups(s) ds
//   i0/i1   infected-count driver pieces
//   r0/r1   recovered-count driver pieces
//
// The f01 block follows the bridge construction of the initial fluctuation
// (the kernel integrated against the centered empirical age measure), so the
// product term is normalized by the initial mass. f01/f02 use the same
// initial-cohort kernel mode as the limit solver.
// ===========================================================================
struct DriverCovariances {
    Eigen::MatrixXd s1, s1_f1, f1, f01, f02, f2, i0, i1, r0, r1;
};

namespace detail {

// kernel value of the initial cohort mean path at (age cell m, time node i)
inline double init_mean_kernel(const LlnPaths& lln, int m, int i)
{
    const auto& C = lln.caches;
    double lam = C.lam[2 * (m + i) + 1];
    if (lln.kernel == InitKernel::residual) lam /= C.Fc[2 * m + 1];
    return lam;
}

// conditional path covariance of the initial cohort at (cell m; nodes i, j)
inline double init_cov_kernel(const LlnPaths& lln, int m, int i, int j)
{
    const auto& C = lln.caches;
    int ai = 2 * (m + i) + 1, aj = 2 * (m + j) + 1, am = 2 * m + 1;
    if (lln.kernel == InitKernel::unconditional) {
        return C.cross_moment_idx(ai, aj) - C.lam[ai] * C.lam[aj];
    }
    double fc = C.Fc[am];
    double m2 = C.cross_moment_idx(ai, aj) / fc;
    return m2 - (C.lam[ai] / fc) * (C.lam[aj] / fc);
}

} // namespace detail

inline DriverCovariances driver_covariances(const LlnPaths& lln)
{
    const auto& C = lln.caches;
    const Grid& g = lln.grid;
    const int n = g.num_nodes();
    const int cells = lln.num_init_cells();
    const double dt = g.dt();

    DriverCovariances B;
    B.s1.setZero(n, n);
    B.s1_f1.setZero(n, n);
    B.f1.setZero(n, n);
    B.f01.setZero(n, n);
    B.f02.setZero(n, n);
    B.f2.setZero(n, n);
    B.i0.setZero(n, n);
    B.i1.setZero(n, n);
    B.r0.setZero(n, n);
    B.r1.setZero(n, n);

    // cumulative trapezoid of Upsilon
    std::vector<double> cum(n, 0.0);
    for (int i = 1; i < n; ++i) cum[i] = cum[i - 1] + 0.5 * dt * (lln.Ups[i - 1] + lln.Ups[i]);

    // time-convolution blocks
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            int mn = std::min(i, j), mx = std::max(i, j);
            B.s1(i, j) = cum[mn];
            if (mn > 0) {
                double acc_sf = 0.0, acc_ff = 0.0, acc_vv = 0.0, acc_i1 = 0.0, acc_r1 = 0.0;
                for (int k = 0; k <= mn; ++k) {
                    double w = dt * trapezoid_weight(k, mn) * lln.Ups[k];
                    double li = C.lam[2 * (i - k)];
                    double lj = C.lam[2 * (j - k)];
                    acc_sf += w * lj;
                    acc_ff += w * li * lj;
                    acc_vv += w * C.cov_idx(2 * (i - k), 2 * (j - k));
                    acc_i1 += w * C.Fc[2 * (mx - k)];
                    acc_r1 += w * (1.0 - C.Fc[2 * (mn - k)]);
                }
                B.s1_f1(i, j) = acc_sf;
                B.f1(i, j) = acc_ff;
                B.f2(i, j) = acc_vv;
                B.i1(i, j) = acc_i1;
                B.r1(i, j) = acc_r1;
            }
        }
    }

    // initial-cohort blocks
    if (lln.i0 > 0.0) {
        std::vector<double> mean_k(static_cast<size_t>(n) * cells);
        for (int i = 0; i < n; ++i)
            for (int m = 0; m < cells; ++m)
                mean_k[static_cast<size_t>(i) * cells + m] = detail::init_mean_kernel(lln, m, i);

        std::vector<double> mean_int(n, 0.0); // int kernel dmu0
        for (int i = 0; i < n; ++i) {
            double acc = 0.0;
            for (int m = 0; m < cells; ++m) acc += mean_k[static_cast<size_t>(i) * cells + m] * lln.mass0[m];
            mean_int[i] = acc;
        }
        for (int i = 0; i < n; ++i) {
            for (int j = i; j < n; ++j) {
                double acc01 = 0.0, acc02 = 0.0, acc_i0 = 0.0, acc_r0 = 0.0;
                for (int m = 0; m < cells; ++m) {
                    double w = lln.mass0[m];
                    if (w == 0.0) continue;
                    acc01 += mean_k[static_cast<size_t>(i) * cells + m] *
                             mean_k[static_cast<size_t>(j) * cells + m] * w;
                    acc02 += detail::init_cov_kernel(lln, m, i, j) * w;
                    // j >= i here, so the later time is j and the earlier is i
                    double ri = lln.init_cell_ratio(m, i);
                    double rj = lln.init_cell_ratio(m, j);
                    acc_i0 += (rj - ri * rj) * w;
                    acc_r0 += ((1.0 - ri) - (1.0 - ri) * (1.0 - rj)) * w;
                }
                double b01 = acc01 - mean_int[i] * mean_int[j] / lln.i0;
                B.f01(i, j) = B.f01(j, i) = b01;
                B.f02(i, j) = B.f02(j, i) = acc02;
                B.i0(i, j) = B.i0(j, i) = acc_i0;
                B.r0(i, j) = B.r0(j, i) = acc_r0;
            }
        }
    }
    return B;
}

// Cholesky with escalating diagonal jitter (1e-12 to 1e-8 of the mean
// diagonal); throws if the block stays indefinite.
inline Eigen::MatrixXd cholesky_with_jitter(const Eigen::MatrixXd& block, const std::string& label)
{
    double mean_diag = block.diagonal().cwiseAbs().mean();
    if (mean_diag == 0.0) return Eigen::MatrixXd::Zero(block.rows(), block.cols());
    for (double eps = 1e-12; eps <= 1.01e-8; eps *= 100.0) {
        Eigen::MatrixXd jittered =
            block + eps * mean_diag * Eigen::MatrixXd::Identity(block.rows(), block.cols());
        Eigen::LLT<Eigen::MatrixXd> llt(jittered);
        if (llt.info() == Eigen::Success) return llt.matrixL();
    }
    throw std::runtime_error("covariance block '" + label + "' is not positive semidefinite after jitter");
}

// ===========================================================================
// One sampled joint driver realization.
//
// binf[k]   : infection-noise increment on [t_k, t_{k+1}); its variance is
//             the trapezoid cell integral of Upsilon, so partial sums
//             reproduce the analytic blocks exactly.
// bridge[m] : increment of the initial fluctuation over age cell m, built
//             from a Brownian bridge on the cdf scale of the age law;
//             increments sum to 0 (the bridge pins at both ends).
// f01/f02/f2: driver paths at the grid nodes; f01 is assembled from the
//             bridge increments (exact coupling with the mu0 terms), f02 and
//             f2 are drawn independently via Cholesky of their blocks.
// The recovery field is not stored: it is re-streamed slice by slice from
// rec_seed whenever a functional of it is evaluated.
// ===========================================================================
struct DriverPath {
    std::vector<double> binf;
    std::vector<double> bridge;
    std::vector<double> f01, f02, f2;
    std::uint64_t rec_seed = 0;
    double rec_scale = 1.0;
};

// per-path outputs on the grid
struct CltPathBundle {
    std::vector<double> S1, F1;          // integrated infection-noise drivers
    std::vector<double> Shat, Fhat, Upshat;
    std::vector<double> Ihat, Rhat;
    std::vector<double> mu0_surv;        // mu0 integrated against Fc(t+.)/Fc(.)
    std::vector<double> check_inf;       // infection part of the measure noise, phi = 1
    std::vector<double> check_rec;       // recovery part, phi = 1
    std::vector<double> check_rec_new;   // recovery noise from post-0 infections
    std::vector<double> check_rec_init;  // recovery noise from the initial cohort
    std::vector<std::vector<double>> mu_hat; // [registered phi][node]
};

class CltEngine
{
public:
    CltEngine(const LlnPaths& lln, std::vector<TestFunction> phis = {}, std::uint64_t seed = 1)
        : m_lln(lln)
        , m_phis(std::move(phis))
        , m_seed(seed)
        , m_blocks(driver_covariances(lln))
    {
        const Grid& g = lln.grid;
        int n = g.num_nodes();
        m_l02 = cholesky_with_jitter(m_blocks.f02, "F02");
        m_l2 = cholesky_with_jitter(m_blocks.f2, "F2");
        // infection-noise cell variances (trapezoid cells of Upsilon)
        m_binf_var.resize(n - 1);
        for (int k = 0; k + 1 < n; ++k) {
            m_binf_var[k] = std::max(0.0, 0.5 * g.dt() * (lln.Ups[k] + lln.Ups[k + 1]));
        }
        // cdf values of the age law at cell boundaries
        int cells = lln.num_init_cells();
        m_cell_u.resize(cells + 1);
        double total = 0.0;
        m_cell_u[0] = 0.0;
        for (int m = 0; m < cells; ++m) {
            total += (lln.i0 > 0.0 ? lln.mass0[m] / lln.i0 : 0.0);
            m_cell_u[m + 1] = std::min(total, 1.0);
        }
    }

    const DriverCovariances& blocks() const { return m_blocks; }
    const LlnPaths& lln() const { return m_lln; }
    const std::vector<TestFunction>& test_functions() const { return m_phis; }

    // --- driver sampling --------------------------------------------------
    DriverPath sample_drivers(std::uint64_t path_id) const
    {
        const Grid& g = m_lln.grid;
        int n = g.num_nodes();
        int cells = m_lln.num_init_cells();
        RngStream rng(m_seed, path_id * 4 + 0);
        DriverPath d;
        d.rec_seed = splitmix64(m_seed ^ splitmix64(path_id * 4 + 3));

        d.binf.resize(n - 1);
        for (int k = 0; k + 1 < n; ++k) d.binf[k] = std::sqrt(m_binf_var[k]) * rng.normal();

        // Brownian bridge on the cdf scale: W0(u) = W(u) - u W(1)
        d.bridge.assign(cells, 0.0);
        std::vector<double> dw(cells);
        double w1 = 0.0;
        for (int m = 0; m < cells; ++m) {
            double du = m_cell_u[m + 1] - m_cell_u[m];
            dw[m] = du > 0.0 ? std::sqrt(du) * rng.normal() : 0.0;
            w1 += dw[m];
        }
        double scale = std::sqrt(m_lln.i0);
        for (int m = 0; m < cells; ++m) {
            double du = m_cell_u[m + 1] - m_cell_u[m];
            d.bridge[m] = scale * (dw[m] - du * w1);
        }

        // F01 from the same bridge increments (exact joint law with mu0)
        d.f01.assign(n, 0.0);
        for (int i = 0; i < n; ++i) {
            double acc = 0.0;
            for (int m = 0; m < cells; ++m) acc += detail::init_mean_kernel(m_lln, m, i) * d.bridge[m];
            d.f01[i] = acc;
        }

        // F02 and F2 independent Gaussian paths from their blocks
        Eigen::VectorXd z02(n), z2(n);
        for (int i = 0; i < n; ++i) z02[i] = rng.normal();
        for (int i = 0; i < n; ++i) z2[i] = rng.normal();
        Eigen::VectorXd p02 = m_l02 * z02;
        Eigen::VectorXd p2 = m_l2 * z2;
        d.f02.assign(p02.data(), p02.data() + n);
        d.f2.assign(p2.data(), p2.data() + n);
        return d;
    }

    // --- linear Volterra solve for one path --------------------------------
    // Fhat(t) = int lam(t-s) Upshat(s) ds + F01 + F02 + F1 + F2
    // Shat(t) = -S1(t) - int Upshat
    // Upshat  = Shat Fbar + Sbar Fhat
    // The trapezoid endpoint makes the node equation linear in Upshat(t_n).
    CltPathBundle evaluate(const DriverPath& d) const
    {
        const Grid& g = m_lln.grid;
        const auto& C = m_lln.caches;
        const int n = g.num_nodes();
        const double dt = g.dt();
        const double lam0 = C.lam[0];

        CltPathBundle out;
        out.S1.assign(n, 0.0);
        out.F1.assign(n, 0.0);
        out.check_inf.assign(n, 0.0);
        for (int i = 1; i < n; ++i) {
            double s1 = 0.0, f1 = 0.0, ci = 0.0;
            for (int k = 0; k < i; ++k) {
                double b = d.binf[k];
                if (b == 0.0) continue;
                s1 += b;
                f1 += C.lam[2 * (i - k) - 1] * b;    // lam at t_i - midpoint of cell k
                ci += C.Fc[2 * (i - k) - 1] * b;     // Fc at the same shifted midpoint
            }
            out.S1[i] = s1;
            out.F1[i] = f1;
            out.check_inf[i] = ci;
        }

        out.Shat.assign(n, 0.0);
        out.Fhat.assign(n, 0.0);
        out.Upshat.assign(n, 0.0);
        out.Fhat[0] = d.f01[0] + d.f02[0];
        out.Upshat[0] = out.Shat[0] * m_lln.F[0] + m_lln.S[0] * out.Fhat[0];
        for (int i = 1; i < n; ++i) {
            double w = 0.5 * dt;
            double conv_f = 0.0, conv_u = 0.0;
            for (int k = 0; k < i; ++k) {
                double wk = dt * trapezoid_weight(k, i) * out.Upshat[k];
                conv_f += wk * C.lam[2 * (i - k)];
                conv_u += wk;
            }
            double drivers = d.f01[i] + d.f02[i] + out.F1[i] + d.f2[i];
            double q = 1.0 + w * m_lln.F[i] - w * lam0 * m_lln.S[i];
            if (std::abs(q) < 1e-12) {
                throw std::runtime_error("clt solve: singular node coefficient; decrease dt");
            }
            double rhs = (-out.S1[i] - conv_u) * m_lln.F[i] + m_lln.S[i] * (conv_f + drivers);
            double y = rhs / q;
            out.Upshat[i] = y;
            out.Shat[i] = -out.S1[i] - conv_u - w * y;
            out.Fhat[i] = conv_f + w * lam0 * y + drivers;
        }

        // mu0 acted on the survival kernel
        int cells = m_lln.num_init_cells();
        out.mu0_surv.assign(n, 0.0);
        for (int i = 0; i < n; ++i) {
            double acc = 0.0;
            for (int m = 0; m < cells; ++m) acc += m_lln.init_cell_ratio(m, i) * d.bridge[m];
            out.mu0_surv[i] = acc;
        }

        // recovery-field functionals (streamed) and the I/R assembly
        stream_recovery_field(d, out);

        out.Ihat.assign(n, 0.0);
        out.Rhat.assign(n, 0.0);
        for (int i = 0; i < n; ++i) {
            double conv_fc = 0.0, conv_f = 0.0;
            for (int k = 0; k <= i && i > 0; ++k) {
                double wk = dt * trapezoid_weight(k, i) * out.Upshat[k];
                conv_fc += wk * C.Fc[2 * (i - k)];
                conv_f += wk * (1.0 - C.Fc[2 * (i - k)]);
            }
            out.Ihat[i] = out.mu0_surv[i] + conv_fc + out.check_inf[i] + out.check_rec[i];
            double mu0_r = 0.0;
            for (int m = 0; m < cells; ++m) {
                mu0_r += (1.0 - m_lln.init_cell_ratio(m, i)) * d.bridge[m];
            }
            double r_inf = out.S1[i] - out.check_inf[i];
            out.Rhat[i] = mu0_r + conv_f + r_inf - out.check_rec[i];
        }

        finish_mu_hat(d, out);
        return out;
    }

    CltPathBundle sample_path(std::uint64_t path_id) const { return evaluate(sample_drivers(path_id)); }

    // discrete-law variance of the sampled recovery-noise functional
    // (phi = 1), matching the streaming construction cell for cell
    double discrete_check_rec_variance(int node) const
    {
        const auto& C = m_lln.caches;
        const Grid& g = m_lln.grid;
        double dt = g.dt();
        double acc = 0.0;
        for (int k = 0; k < node; ++k) {
            int mmax = m_lln.num_age_cells(k);
            for (int m = 0; m < mmax; ++m) {
                double mass = m_lln.mu_cell_mass(k, m);
                if (mass <= 0.0) continue;
                double cellvar = C.h[2 * m + 1] * mass * dt;
                double ratio = C.sf_ratio_idx(2 * (node - k + m) + 1, 2 * m + 1);
                acc += ratio * ratio * cellvar;
            }
        }
        return acc;
    }

    double discrete_check_inf_variance(int node) const
    {
        const auto& C = m_lln.caches;
        double acc = 0.0;
        for (int k = 0; k < node; ++k) {
            double w = C.Fc[2 * (node - k) - 1];
            acc += w * w * m_binf_var[k];
        }
        return acc;
    }

private:
    // Stream the recovery white-noise field slice by slice. Cell (k, m) has
    // variance h(a_m) mu_{t_k}(cell m) dt; its weight toward node i >= k+1
    // for a test function phi is phi(x) Fc(x) / Fc(rep_m) with
    // x = t_i - t_k + rep_m. Since x depends on (i, k - m) only, increments
    // are folded into per-diagonal accumulators C[d], d = k - m, and each
    // node evaluation is a single sweep over diagonals.
    void stream_recovery_field(const DriverPath& d, CltPathBundle& out) const
    {
        const auto& C = m_lln.caches;
        const Grid& g = m_lln.grid;
        const int n = g.num_nodes();
        const int cells = m_lln.num_init_cells();
        const double dt = g.dt();
        const size_t nphi = m_phis.size();

        out.check_rec.assign(n, 0.0);
        out.check_rec_new.assign(n, 0.0);
        out.check_rec_init.assign(n, 0.0);
        out.mu_hat.assign(nphi, std::vector<double>(n, 0.0));

        RngStream rng(d.rec_seed, 0);
        const int off = cells; // diagonal index offset: d = k - m in [-cells, n-2]
        std::vector<double> diag_all(static_cast<size_t>(n) + cells, 0.0);
        std::vector<double> diag_new(static_cast<size_t>(n) + cells, 0.0);

        for (int i = 1; i < n; ++i) {
            // absorb slice k = i - 1
            int k = i - 1;
            int mmax = m_lln.num_age_cells(k);
            for (int m = 0; m < mmax; ++m) {
                double mass = m_lln.mu_cell_mass(k, m);
                if (mass <= 0.0) continue;
                double cellvar = C.h[2 * m + 1] * mass * dt;
                if (cellvar <= 0.0) continue;
                double dw = d.rec_scale * std::sqrt(cellvar) * rng.normal();
                double fc_den = C.Fc[2 * m + 1];
                if (fc_den < 1e-250) continue;
                double val = dw / fc_den;
                diag_all[static_cast<size_t>(k - m + off)] += val;
                if (m < k) diag_new[static_cast<size_t>(k - m + off)] += val;
            }
            // evaluate at node i: diagonals d = k - m range in [-cells, i-1]
            double acc_all = 0.0, acc_new = 0.0;
            for (int dd = -cells; dd < i; ++dd) {
                double c_all = diag_all[static_cast<size_t>(dd + off)];
                if (c_all == 0.0) continue;
                double fc_num = C.Fc[2 * (i - dd) + 1];
                acc_all += fc_num * c_all;
                acc_new += fc_num * diag_new[static_cast<size_t>(dd + off)];
            }
            out.check_rec[i] = acc_all;
            out.check_rec_new[i] = acc_new;
            out.check_rec_init[i] = acc_all - acc_new;

            for (size_t p = 0; p < nphi; ++p) {
                double acc = 0.0;
                for (int dd = -cells; dd < i; ++dd) {
                    double c_all = diag_all[static_cast<size_t>(dd + off)];
                    if (c_all == 0.0) continue;
                    double x = (i - dd) * dt + 0.5 * dt;
                    acc += m_phis[p].phi(x) * C.Fc[2 * (i - dd) + 1] * c_all;
                }
                out.mu_hat[p][i] = acc; // recovery part; the rest is added in finish_mu_hat
            }
        }
    }

    // complete mu_t(phi) with the mu0 transport, the Upsilon-hat inflow and
    // the infection noise (the explicit solution formula of the fluctuation
    // measure); requires the solved Upshat
    void finish_mu_hat(const DriverPath& d, CltPathBundle& out) const
    {
        const auto& C = m_lln.caches;
        const Grid& g = m_lln.grid;
        const int n = g.num_nodes();
        const int cells = m_lln.num_init_cells();
        const double dt = g.dt();
        for (size_t p = 0; p < m_phis.size(); ++p) {
            const auto& phi = m_phis[p].phi;
            for (int i = 0; i < n; ++i) {
                double acc = out.mu_hat[p][i];
                for (int m = 0; m < cells; ++m) {
                    double rep = (m + 0.5) * dt;
                    acc += phi(rep + i * dt) * m_lln.init_cell_ratio(m, i) * d.bridge[m];
                }
                if (i > 0) {
                    for (int k = 0; k <= i; ++k) {
                        double wk = dt * trapezoid_weight(k, i) * out.Upshat[k];
                        acc += wk * phi((i - k) * dt) * C.Fc[2 * (i - k)];
                    }
                    for (int k = 0; k < i; ++k) {
                        double x = (i - k) * dt - 0.5 * dt;
                        acc += phi(x) * C.Fc[2 * (i - k) - 1] * d.binf[k];
                    }
                }
                out.mu_hat[p][i] = acc;
            }
        }
    }

private:
    const LlnPaths& m_lln;
    std::vector<TestFunction> m_phis;
    std::uint64_t m_seed;
    DriverCovariances m_blocks;
    Eigen::MatrixXd m_l02, m_l2;
    std::vector<double> m_binf_var;
    std::vector<double> m_cell_u;
};

// ===========================================================================
// Variance identity of the measure noise: the white-noise route
//   Var(check_inf_t(phi)) + Var(check_rec_t(phi))
// equals the direct-decomposition route
//   Var(mu0_t(phi)) + Var(mu1_t(phi)),
// both evaluated by quadrature on the limit paths. The gap shrinks at the
// quadrature rate as dt -> 0.
// ===========================================================================
struct VarianceIdentityResult {
    double check_inf = 0.0;
    double check_rec = 0.0;
    double mu0 = 0.0;
    double mu1 = 0.0;
    double lhs() const { return check_inf + check_rec; }
    double rhs() const { return mu0 + mu1; }
    double rel_gap() const
    {
        double scale = std::max(std::abs(lhs()), std::abs(rhs()));
        return scale > 0.0 ? std::abs(lhs() - rhs()) / scale : 0.0;
    }
};

template <class Fn>
VarianceIdentityResult variance_identity_check(const LlnPaths& lln, int node, Fn&& phi)
{
    const auto& C = lln.caches;
    const Grid& g = lln.grid;
    const double dt = g.dt();
    VarianceIdentityResult r;

    // Var(check_inf) = int_0^t phi(t-a)^2 Fc(t-a)^2 Ups(a) da
    // Var(mu1)       = int_0^t phi(t-s)^2 Fc(t-s)   Ups(s) ds
    for (int k = 0; k <= node && node > 0; ++k) {
        double w = dt * trapezoid_weight(k, node) * lln.Ups[k];
        double fc = C.Fc[2 * (node - k)];
        double ph = phi((node - k) * dt);
        r.check_inf += w * ph * ph * fc * fc;
        r.mu1 += w * ph * ph * fc;
    }

    // Var(mu0) = int (ratio - ratio^2) phi(a+t)^2 dmu0(a)
    for (int m = 0; m < lln.num_init_cells(); ++m) {
        double mass = lln.mass0[m];
        if (mass == 0.0) continue;
        double ratio = lln.init_cell_ratio(m, node);
        double ph = phi((m + 0.5) * dt + node * dt);
        r.mu0 += (ratio - ratio * ratio) * ph * ph * mass;
    }

    // Var(check_rec) = int_0^t sum_cells phi(x)^2 (Fc(x)/Fc(a))^2 h(a)
    //                  mu_s(da) ds with x = t - s + a, trapezoid in s and
    //                  cell masses in a
    for (int k = 0; k <= node && node > 0; ++k) {
        double w = dt * trapezoid_weight(k, node);
        double inner = 0.0;
        int mmax = lln.num_age_cells(k);
        for (int m = 0; m < mmax; ++m) {
            double mass = lln.mu_cell_mass(k, m);
            if (mass <= 0.0) continue;
            double ratio = C.sf_ratio_idx(2 * (node - k + m) + 1, 2 * m + 1);
            double ph = phi((node - k + m) * dt + 0.5 * dt);
            inner += ph * ph * ratio * ratio * C.h[2 * m + 1] * mass;
        }
        r.check_rec += w * inner;
    }
    return r;
}

// ===========================================================================
// Accumulators for empirical moments over sampled paths
// ===========================================================================
struct PathMomentAccumulator {
    std::vector<RunningStats> stats;
    explicit PathMomentAccumulator(int n) : stats(n) {}
    void add(const std::vector<double>& path)
    {
        for (size_t i = 0; i < path.size(); ++i) stats[i].add(path[i]);
    }
};

// CSV of per-time analytic variance tables
inline void write_variance_table_csv(const CltEngine& engine, const std::string& path)
{
    const auto& B = engine.blocks();
    const auto& lln = engine.lln();
    CsvWriter csv(path);
    csv.header({"t", "var_S1", "var_F1", "var_F01", "var_F02", "var_F2", "var_I0", "var_I1", "var_R0",
                "var_R1"});
    for (int i = 0; i < lln.grid.num_nodes(); ++i) {
        csv.row({lln.grid.node(i), B.s1(i, i), B.f1(i, i), B.f01(i, i), B.f02(i, i), B.f2(i, i), B.i0(i, i),
                 B.i1(i, i), B.r0(i, i), B.r1(i, i)});
    }
}

} // namespace agesir

#endif // AGESIR_CLT_HPP
