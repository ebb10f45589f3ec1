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
#include "agesir/clt.hpp"

#include <gtest/gtest.h>

using namespace agesir;

namespace {

InitialCondition markov_init(double a_max = 1.0)
{
    InitialCondition init;
    init.s0 = 0.9;
    init.i0 = 0.1;
    init.r0 = 0.0;
    init.a_max = a_max;
    init.age_law = InitialAgeLaw::uniform(a_max);
    init.coupling = InitialCoupling::residual;
    return init;
}

InfectivityLaw markov_law(double beta = 0.4, double gamma = 0.25)
{
    return InfectivityLaw::constant(beta, DurationDistribution::exponential(gamma));
}

LlnPaths markov_lln(double horizon, double dt, double a_max = 1.0)
{
    return solve_lln(markov_law(), markov_init(a_max), Grid(horizon, dt, a_max));
}

double var_band(double variance, int paths)
{
    return 3.0 * variance * std::sqrt(2.0 / (paths - 1));
}

} // namespace

TEST(CltBlocks, BrownianBridgeCovarianceFromSampledIncrements)
{
    // uniform age law: partial sums of the bridge increments up to the cdf
    // point u give sqrt(i0) W0(u); Cov(W0(0.25), W0(0.5)) = 0.25 (1 - 0.5)
    auto lln = markov_lln(1.0, 0.05);
    CltEngine engine(lln, {}, 99);
    int m1 = 5, m2 = 10; // cdf boundaries 0.25 and 0.5 for a_max = 1, dt = 0.05
    const int P = 40000;
    std::vector<double> x(P), y(P);
    for (int p = 0; p < P; ++p) {
        auto d = engine.sample_drivers(static_cast<std::uint64_t>(p));
        double sx = 0.0, sy = 0.0;
        for (int m = 0; m < m1; ++m) sx += d.bridge[m];
        for (int m = 0; m < m2; ++m) sy += d.bridge[m];
        x[p] = sx;
        y[p] = sy;
    }
    double expect = lln.i0 * 0.25 * (1.0 - 0.5);
    double got = sample_covariance(x, y);
    EXPECT_NEAR(got, expect, 4.0 * expect / std::sqrt(double(P)) + 3e-4 * expect);
    // every path: mu0 acting on the constant 1 vanishes
    for (int p = 0; p < 200; ++p) {
        auto d = engine.sample_drivers(static_cast<std::uint64_t>(p));
        double total = 0.0;
        for (double b : d.bridge) total += b;
        EXPECT_NEAR(total, 0.0, 1e-12);
    }
}

TEST(CltBlocks, InfectionNoiseIsometry)
{
    // Var(S1(T)) = int_0^T Upsilon
    auto lln = markov_lln(8.0, 0.05);
    CltEngine engine(lln, {}, 7);
    int last = lln.grid.num_steps();
    const int P = 10000;
    std::vector<double> s1(P), f1(P);
    for (int p = 0; p < P; ++p) {
        auto bundle = engine.sample_path(static_cast<std::uint64_t>(p));
        s1[p] = bundle.S1[last];
        f1[p] = bundle.F1[last];
    }
    double expect = engine.blocks().s1(last, last);
    EXPECT_NEAR(sample_variance(s1), expect, var_band(expect, P));
    // cross covariance against the analytic block
    double cross = engine.blocks().s1_f1(last, last);
    EXPECT_NEAR(sample_covariance(s1, f1), cross,
                3.0 * std::sqrt(engine.blocks().s1(last, last) * engine.blocks().f1(last, last) / P) +
                    0.01 * std::abs(cross));
}

TEST(CltBlocks, InitMeanPathDriverMatchesBridgeBlock)
{
    // F01 is sampled through the bridge; its block is the bridge-consistent
    // covariance, so the two routes must agree. Use a gamma duration so the
    // conditioned kernel actually depends on the age.
    auto init = markov_init();
    auto law = InfectivityLaw::constant(0.4, DurationDistribution::gamma(2.0, 2.0));
    auto lln = solve_lln(law, init, Grid(6.0, 0.05, init.a_max));
    CltEngine engine(lln, {}, 21);
    const int P = 20000;
    int node = lln.grid.index_of(2.0);
    std::vector<double> v(P);
    for (int p = 0; p < P; ++p) {
        auto d = engine.sample_drivers(static_cast<std::uint64_t>(p));
        v[p] = d.f01[node];
    }
    double expect = engine.blocks().f01(node, node);
    ASSERT_GT(expect, 0.0);
    EXPECT_NEAR(sample_variance(v), expect, var_band(expect, P) + 1e-12);
}

TEST(CltBlocks, ResidualKernelKillsInitDriversForExponential)
{
    // memoryless durations + constant-level law: the survival-conditioned
    // mean path of the initial cohort does not depend on the age, so the
    // bridge integral of the kernel vanishes identically
    auto lln = markov_lln(4.0, 0.1);
    CltEngine engine(lln, {}, 3);
    EXPECT_LE(engine.blocks().f01.cwiseAbs().maxCoeff(), 1e-14);
    auto d = engine.sample_drivers(11);
    for (double v : d.f01) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(CltBlocks, NearDeterministicPathNoiseVanishes)
{
    // (almost) deterministic infectivity path: v = 0 away from the tiny
    // smoothing window, so the path-noise blocks are numerically zero; the
    // jump point is kept off the evaluation lattice
    InitialCondition init = markov_init();
    auto law = InfectivityLaw::constant(0.4, DurationDistribution::deterministic(2.0305, 1e-7));
    auto lln = solve_lln(law, init, Grid(4.0, 0.1, init.a_max));
    auto blocks = driver_covariances(lln);
    EXPECT_LE(blocks.f02.cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LE(blocks.f2.cwiseAbs().maxCoeff(), 1e-9);
}

TEST(CltSolve, ZeroDriversGiveZeroPaths)
{
    auto lln = markov_lln(5.0, 0.1);
    CltEngine engine(lln, {{"one", [](double) { return 1.0; }}}, 5);
    auto d = engine.sample_drivers(0);
    std::fill(d.binf.begin(), d.binf.end(), 0.0);
    std::fill(d.bridge.begin(), d.bridge.end(), 0.0);
    std::fill(d.f01.begin(), d.f01.end(), 0.0);
    std::fill(d.f02.begin(), d.f02.end(), 0.0);
    std::fill(d.f2.begin(), d.f2.end(), 0.0);
    d.rec_scale = 0.0;
    auto bundle = engine.evaluate(d);
    for (int i = 0; i < lln.grid.num_nodes(); ++i) {
        EXPECT_DOUBLE_EQ(bundle.Shat[i], 0.0);
        EXPECT_DOUBLE_EQ(bundle.Fhat[i], 0.0);
        EXPECT_DOUBLE_EQ(bundle.Upshat[i], 0.0);
        EXPECT_DOUBLE_EQ(bundle.Ihat[i], 0.0);
        EXPECT_DOUBLE_EQ(bundle.Rhat[i], 0.0);
        EXPECT_DOUBLE_EQ(bundle.mu_hat[0][i], 0.0);
    }
}

TEST(CltSolve, PipelineIsLinearInTheDrivers)
{
    auto lln = markov_lln(6.0, 0.1);
    CltEngine engine(lln, {{"one", [](double) { return 1.0; }}}, 17);
    auto d = engine.sample_drivers(123);
    auto base = engine.evaluate(d);
    DriverPath scaled = d;
    const double c = 2.0;
    for (auto* arr : {&scaled.binf, &scaled.bridge, &scaled.f01, &scaled.f02, &scaled.f2}) {
        for (double& v : *arr) v *= c;
    }
    scaled.rec_scale = d.rec_scale * c;
    auto twice = engine.evaluate(scaled);
    for (int i = 0; i < lln.grid.num_nodes(); ++i) {
        EXPECT_NEAR(twice.Shat[i], c * base.Shat[i], 1e-10);
        EXPECT_NEAR(twice.Fhat[i], c * base.Fhat[i], 1e-10);
        EXPECT_NEAR(twice.Upshat[i], c * base.Upshat[i], 1e-10);
        EXPECT_NEAR(twice.Ihat[i], c * base.Ihat[i], 1e-10);
        EXPECT_NEAR(twice.Rhat[i], c * base.Rhat[i], 1e-10);
        EXPECT_NEAR(twice.mu_hat[0][i], c * base.mu_hat[0][i], 1e-10);
    }
}

TEST(CltSolve, InitialInstantValues)
{
    auto lln = markov_lln(5.0, 0.1);
    CltEngine engine(lln, {}, 29);
    for (int p = 0; p < 50; ++p) {
        auto d = engine.sample_drivers(static_cast<std::uint64_t>(p));
        auto bundle = engine.evaluate(d);
        EXPECT_DOUBLE_EQ(bundle.Shat[0], 0.0);
        EXPECT_NEAR(bundle.Fhat[0], d.f01[0] + d.f02[0], 1e-14);
        EXPECT_NEAR(bundle.Ihat[0], 0.0, 1e-12);
        EXPECT_NEAR(bundle.Rhat[0], 0.0, 1e-12);
    }
}

TEST(CltSolve, MeasureAtOneEqualsInfectedPathwise)
{
    auto lln = markov_lln(8.0, 0.1);
    CltEngine engine(lln, {{"one", [](double) { return 1.0; }}}, 31);
    for (int p = 0; p < 100; ++p) {
        auto bundle = engine.sample_path(static_cast<std::uint64_t>(p));
        double scale = 0.0;
        for (int i = 0; i < lln.grid.num_nodes(); ++i)
            scale = std::max(scale, std::abs(bundle.Ihat[i]));
        for (int i = 0; i < lln.grid.num_nodes(); ++i) {
            EXPECT_LE(std::abs(bundle.mu_hat[0][i] - bundle.Ihat[i]), 1e-8 * std::max(scale, 1.0));
        }
    }
}

TEST(CltSolve, ConservationHoldsPathwise)
{
    auto lln = markov_lln(8.0, 0.1);
    CltEngine engine(lln, {}, 37);
    for (int p = 0; p < 100; ++p) {
        auto bundle = engine.sample_path(static_cast<std::uint64_t>(p));
        for (int i = 0; i < lln.grid.num_nodes(); ++i) {
            double sum = bundle.Shat[i] + bundle.Ihat[i] + bundle.Rhat[i];
            EXPECT_NEAR(sum, 0.0, 1e-10);
        }
    }
}

TEST(CltSolve, RecoveryNoiseVarianceMatchesDiscreteLaw)
{
    auto lln = markov_lln(6.0, 0.1);
    CltEngine engine(lln, {}, 41);
    int node = lln.grid.index_of(4.0);
    const int P = 8000;
    std::vector<double> rec(P), inf(P);
    for (int p = 0; p < P; ++p) {
        auto bundle = engine.sample_path(static_cast<std::uint64_t>(p));
        rec[p] = bundle.check_rec[node];
        inf[p] = bundle.check_inf[node];
    }
    double expect_rec = engine.discrete_check_rec_variance(node);
    double expect_inf = engine.discrete_check_inf_variance(node);
    EXPECT_NEAR(sample_variance(rec), expect_rec, var_band(expect_rec, P));
    EXPECT_NEAR(sample_variance(inf), expect_inf, var_band(expect_inf, P));
}

TEST(CltSolve, RecoveredDriverVariancesMatchAnalyticBlocks)
{
    // R1-analog: S1 - check_inf - check_rec_new has the variance
    // int F(t-s) Ups(s) ds; R0-analog: -check_rec_init has the variance of
    // the initial-cohort recovery fluctuation; check_inf + check_rec has the
    // law of I0 + I1
    auto lln = markov_lln(6.0, 0.05);
    CltEngine engine(lln, {}, 43);
    int node = lln.grid.index_of(4.0);
    const int P = 6000;
    std::vector<double> r1(P), r0(P), isum(P);
    for (int p = 0; p < P; ++p) {
        auto b = engine.sample_path(static_cast<std::uint64_t>(p));
        r1[p] = b.S1[node] - b.check_inf[node] - b.check_rec_new[node];
        r0[p] = -b.check_rec_init[node];
        isum[p] = b.check_inf[node] + b.check_rec[node];
    }
    const auto& B = engine.blocks();
    double tol1 = var_band(B.r1(node, node), P) + 0.02 * B.r1(node, node);
    double tol0 = var_band(B.r0(node, node), P) + 0.02 * B.r0(node, node);
    EXPECT_NEAR(sample_variance(r1), B.r1(node, node), tol1);
    EXPECT_NEAR(sample_variance(r0), B.r0(node, node), tol0);
    double itarget = B.i0(node, node) + B.i1(node, node);
    EXPECT_NEAR(sample_variance(isum), itarget, var_band(itarget, P) + 0.02 * itarget);
}

TEST(CltSolve, GaussianMarginals)
{
    auto lln = markov_lln(6.0, 0.1);
    CltEngine engine(lln, {}, 47);
    int node = lln.grid.index_of(3.0);
    const int P = 6000;
    std::vector<double> s(P);
    for (int p = 0; p < P; ++p) {
        auto bundle = engine.sample_path(static_cast<std::uint64_t>(p));
        s[p] = bundle.Shat[node];
    }
    auto [skew, kurt] = sample_skew_kurtosis(s);
    EXPECT_LE(std::abs(skew), 3.0 * std::sqrt(6.0 / P));
    EXPECT_LE(std::abs(kurt), 3.0 * std::sqrt(24.0 / P));
}

TEST(CltIdentity, VarianceIdentityMarkovian)
{
    auto one = [](double) { return 1.0; };
    auto bump = [](double a) {
        double x = (a - 1.0) / 1.5;
        return std::abs(x) < 1.0 ? std::exp(-1.0 / (1.0 - x * x)) : 0.0;
    };
    auto init = markov_init();
    auto law = markov_law();
    double t_query = 2.0;
    std::vector<double> gap_one, gap_bump;
    for (double dt : {0.004, 0.002}) {
        auto lln = solve_lln(law, init, Grid(2.0, dt, init.a_max));
        int node = lln.grid.index_of(t_query);
        auto r1 = variance_identity_check(lln, node, one);
        auto rb = variance_identity_check(lln, node, bump);
        gap_one.push_back(r1.rel_gap());
        gap_bump.push_back(rb.rel_gap());
    }
    EXPECT_LE(gap_one[0], 2e-4);
    EXPECT_LE(gap_bump[0], 2e-4);
    // halving dt shrinks the gap at roughly second order
    EXPECT_GT(gap_one[0] / gap_one[1], 2.5);
    EXPECT_LT(gap_one[0] / gap_one[1], 6.5);
}

TEST(CltIdentity, NoEpidemicReducesToInitialTerms)
{
    auto init = markov_init();
    auto law = InfectivityLaw::zero(DurationDistribution::exponential(0.25));
    auto lln = solve_lln(law, init, Grid(2.0, 0.002, init.a_max));
    int node = lln.grid.index_of(1.5);
    auto r = variance_identity_check(lln, node, [](double) { return 1.0; });
    EXPECT_DOUBLE_EQ(r.check_inf, 0.0);
    EXPECT_DOUBLE_EQ(r.mu1, 0.0);
    EXPECT_GT(r.mu0, 0.0);
    EXPECT_LE(r.rel_gap(), 2e-4);
}

TEST(CltBlocks, JitterFailureReported)
{
    Eigen::MatrixXd bad(2, 2);
    bad << 1.0, 2.0, 2.0, 1.0; // indefinite
    EXPECT_THROW(cholesky_with_jitter(bad, "bad"), std::runtime_error);
    Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(3, 3);
    EXPECT_EQ(cholesky_with_jitter(zero, "zero").norm(), 0.0);
}

TEST(CltBlocks, VarianceTableCsv)
{
    auto lln = markov_lln(2.0, 0.1);
    CltEngine engine(lln, {}, 1);
    write_variance_table_csv(engine, "variances.csv");
    std::ifstream in("variances.csv");
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line.substr(0, 9), "t,var_S1,");
    size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, static_cast<size_t>(lln.grid.num_nodes()));
}
