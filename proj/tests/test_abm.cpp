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
#include "agesir/abm.hpp"
#include "agesir/lln.hpp"

#include <gtest/gtest.h>

using namespace agesir;

namespace {

SimulationConfig markov_config(std::int64_t n, double horizon = 20.0, double dt = 0.05)
{
    SimulationConfig cfg;
    cfg.population = n;
    cfg.init.s0 = 0.9;
    cfg.init.i0 = 0.1;
    cfg.init.r0 = 0.0;
    cfg.init.a_max = 1.0;
    cfg.init.age_law = InitialAgeLaw::uniform(1.0);
    cfg.init.coupling = InitialCoupling::residual;
    cfg.law = InfectivityLaw::constant(0.4, DurationDistribution::exponential(0.25));
    cfg.horizon = horizon;
    cfg.dt = dt;
    cfg.seed = 20260810;
    return cfg;
}

} // namespace

TEST(Abm, SingleInfectedNoSusceptibles)
{
    SimulationConfig cfg = markov_config(1, 30.0);
    cfg.init.s0 = 0.0;
    cfg.init.i0 = 1.0;
    cfg.init.a_max = 1e-6;
    cfg.init.age_law = InitialAgeLaw::uniform(1e-6);
    auto traj = simulate(cfg);
    EXPECT_EQ(traj.total_infections, 0);
    EXPECT_EQ(traj.initial_infected, 1);
    // for a horizon beyond the remaining period, everyone has recovered
    EXPECT_EQ(traj.final_recovered, 1);
    EXPECT_EQ(traj.final_infected, 0);
    ASSERT_EQ(traj.events.size(), 1u);
    EXPECT_EQ(traj.events[0].kind, EventKind::recovery);
}

TEST(Abm, ZeroInfectivityLawNeverInfects)
{
    SimulationConfig cfg = markov_config(500);
    cfg.law = InfectivityLaw::zero(DurationDistribution::exponential(0.25));
    auto traj = simulate(cfg);
    EXPECT_EQ(traj.total_infections, 0);
    for (int k = 0; k < traj.grid.num_nodes(); ++k) {
        EXPECT_DOUBLE_EQ(traj.S[k], traj.S[0]);
        EXPECT_DOUBLE_EQ(traj.F[k], 0.0);
    }
}

TEST(Abm, InitialCountsUseIntegerParts)
{
    SimulationConfig cfg = markov_config(1234);
    auto traj = simulate(cfg);
    EXPECT_DOUBLE_EQ(traj.S[0], std::floor(1234 * 0.9));
    EXPECT_DOUBLE_EQ(traj.I[0], std::floor(1234 * 0.1));
    EXPECT_DOUBLE_EQ(traj.R[0], 1234 - traj.S[0] - traj.I[0]);
    auto scaled = scaled_paths(traj);
    EXPECT_DOUBLE_EQ(scaled.S[0], std::floor(1234 * 0.9) / 1234.0);
}

TEST(Abm, ConservationMonotonicityAndThinningBound)
{
    SimulationConfig cfg = markov_config(2000);
    auto traj = simulate(cfg); // internal per-event balance checks ran
    EXPECT_LE(traj.max_thinning_ratio, 1.0 + 1e-12);
    for (int k = 0; k < traj.grid.num_nodes(); ++k) {
        EXPECT_DOUBLE_EQ(traj.S[k] + traj.I[k] + traj.R[k], 2000.0);
        EXPECT_LE(traj.F[k], cfg.law.sup_bound() * traj.I[k] + 1e-9);
        if (k > 0) {
            EXPECT_LE(traj.S[k], traj.S[k - 1]);
            EXPECT_GE(traj.R[k], traj.R[k - 1]);
        }
    }
}

TEST(Abm, EventTimesStrictlyOrdered)
{
    SimulationConfig cfg = markov_config(800);
    auto traj = simulate(cfg);
    for (size_t i = 1; i < traj.events.size(); ++i) {
        EXPECT_LE(traj.events[i - 1].time, traj.events[i].time);
        EXPECT_LT(traj.events[i - 1].seq, traj.events[i].seq);
    }
}

TEST(Abm, IdenticalSeedsGiveIdenticalEventLogs)
{
    SimulationConfig cfg = markov_config(600);
    auto a = simulate(cfg);
    auto b = simulate(cfg);
    ASSERT_EQ(a.events.size(), b.events.size());
    for (size_t i = 0; i < a.events.size(); ++i) {
        EXPECT_EQ(a.events[i].time, b.events[i].time); // bit-identical
        EXPECT_EQ(a.events[i].kind, b.events[i].kind);
        EXPECT_EQ(a.events[i].id, b.events[i].id);
    }
    cfg.stream_id = 1;
    auto c = simulate(cfg);
    EXPECT_NE(a.events.size(), c.events.size()); // different stream differs
}

TEST(Abm, GridInfectedRederivedFromEventLog)
{
    SimulationConfig cfg = markov_config(400);
    auto traj = simulate(cfg);
    size_t max_id = static_cast<size_t>(traj.initial_infected + traj.total_infections);
    std::vector<double> rec_time(max_id, kInf);
    std::vector<double> inf_time(max_id, 0.0);
    for (const auto& e : traj.events) {
        if (e.kind == EventKind::infection) {
            inf_time[e.id] = e.time;
        }
        else {
            rec_time[e.id] = e.time;
        }
    }
    for (int k = 0; k < traj.grid.num_nodes(); ++k) {
        double t = traj.grid.node(k);
        double count = 0.0;
        for (size_t id = 0; id < max_id; ++id) {
            // left-limit convention: infections strictly before t, recoveries
            // at or after t
            bool infected_by_t = static_cast<std::int64_t>(id) < traj.initial_infected || inf_time[id] < t;
            if (infected_by_t && rec_time[id] >= t) count += 1.0;
        }
        EXPECT_DOUBLE_EQ(traj.I[k], count) << "node " << k;
    }
}

TEST(Abm, MeanPathTracksOdeOracle)
{
    // desk-scale check of the classical-SIR reduction; the harness runs the
    // full-size version
    const std::int64_t N = 2000;
    const int R = 60;
    SimulationConfig cfg = markov_config(N, 16.0, 0.2);
    Grid grid(16.0, 0.2, cfg.init.a_max);
    auto ode = markovian_ode_oracle(0.4, 0.25, 0.9, 0.1, 0.0, grid);
    std::vector<RunningStats> stats(grid.num_nodes());
    for (int r = 0; r < R; ++r) {
        cfg.stream_id = static_cast<std::uint64_t>(r);
        cfg.collect_event_log = false;
        auto traj = simulate(cfg);
        for (int k = 0; k < grid.num_nodes(); ++k) stats[k].add(traj.I[k] / double(N));
    }
    int violations = 0;
    for (int k = 0; k < grid.num_nodes(); ++k) {
        double band = 4.0 * stats[k].stddev() / std::sqrt(double(R)) + 2.0 / double(N);
        if (std::abs(stats[k].mean - ode.I[k]) > band) ++violations;
    }
    // allow a few 4-sigma excursions across 81 correlated grid points
    EXPECT_LE(violations, 2);
}

TEST(Abm, HazardModeMatchesScheduledInDistribution)
{
    const std::int64_t N = 800;
    const int R = 80;
    SimulationConfig cfg = markov_config(N, 12.0, 0.25);
    cfg.collect_event_log = false;
    Grid grid(12.0, 0.25, cfg.init.a_max);
    std::vector<RunningStats> sched(grid.num_nodes()), haz(grid.num_nodes());
    for (int r = 0; r < R; ++r) {
        cfg.stream_id = static_cast<std::uint64_t>(r);
        cfg.mode = RecoveryMode::scheduled;
        auto a = simulate(cfg);
        cfg.mode = RecoveryMode::hazard;
        cfg.stream_id = static_cast<std::uint64_t>(r) + 1000;
        auto b = simulate(cfg);
        for (int k = 0; k < grid.num_nodes(); ++k) {
            sched[k].add(a.I[k] / double(N));
            haz[k].add(b.I[k] / double(N));
        }
    }
    int violations = 0;
    for (int k = 0; k < grid.num_nodes(); ++k) {
        double band = 3.0 * std::sqrt(sched[k].variance() / R + haz[k].variance() / R);
        if (std::abs(sched[k].mean - haz[k].mean) > band) ++violations;
    }
    EXPECT_LE(violations, 2);
}

TEST(Abm, HazardModeRecoveryTimesFollowDuration)
{
    // single individual of age ~0 with a sharply peaked lognormal duration:
    // empirical recovery-time cdf vs F by Kolmogorov-Smirnov at the 1% level
    auto dur = DurationDistribution::lognormal(std::log(2.0), 0.15);
    SimulationConfig cfg;
    cfg.population = 1;
    cfg.init.s0 = 0.0;
    cfg.init.i0 = 1.0;
    cfg.init.r0 = 0.0;
    cfg.init.a_max = 1e-9;
    cfg.init.age_law = InitialAgeLaw::uniform(1e-9);
    cfg.init.coupling = InitialCoupling::residual;
    cfg.law = InfectivityLaw::constant(0.0, dur);
    cfg.horizon = 8.0;
    cfg.dt = 1.0;
    cfg.mode = RecoveryMode::hazard;
    cfg.seed = 77;
    const int M = 20000;
    std::vector<double> times;
    times.reserve(M);
    for (int r = 0; r < M; ++r) {
        cfg.stream_id = static_cast<std::uint64_t>(r);
        auto traj = simulate(cfg);
        ASSERT_EQ(traj.events.size(), 1u);
        times.push_back(traj.events[0].time);
    }
    std::sort(times.begin(), times.end());
    double d_stat = 0.0;
    for (int i = 0; i < M; ++i) {
        double fe = dur.cdf(times[i]);
        d_stat = std::max(d_stat, std::max(std::abs(fe - double(i) / M), std::abs(fe - double(i + 1) / M)));
    }
    EXPECT_LE(d_stat, 1.628 / std::sqrt(double(M))); // KS 1% critical value
}

TEST(Abm, HazardModeRejectsNonSeparableLaw)
{
    SimulationConfig cfg = markov_config(100);
    cfg.mode = RecoveryMode::hazard;
    cfg.law = InfectivityLaw::ramp_plateau(0.1, 0.5, 1.0, DurationDistribution::exponential(0.25));
    EXPECT_THROW(simulate(cfg), std::invalid_argument);
    // deterministic-profile ramp is fine
    cfg.law = InfectivityLaw::ramp_plateau(0.3, 0.3, 1.0, DurationDistribution::exponential(0.25));
    EXPECT_NO_THROW(simulate(cfg));
}

TEST(Abm, EtaCapAborts)
{
    SimulationConfig cfg = markov_config(300);
    cfg.eta_cap = 1e-3; // nearly every sampled period exceeds the cap
    EXPECT_THROW(simulate(cfg), std::runtime_error);
}

TEST(Abm, FluctuationPathsScaleAsSqrtN)
{
    SimulationConfig cfg = markov_config(500, 10.0, 0.1);
    Grid grid(10.0, 0.1, cfg.init.a_max);
    auto lln = solve_lln(cfg.law, cfg.init, grid);
    auto traj = simulate(cfg);
    auto fluct = fluctuation_paths(traj, lln);
    double n = 500.0;
    for (int k : {0, 37, 100}) {
        EXPECT_NEAR(fluct.S[k], std::sqrt(n) * (traj.S[k] / n - lln.S[k]), 1e-12);
        EXPECT_NEAR(fluct.I[k], std::sqrt(n) * (traj.I[k] / n - lln.I[k]), 1e-12);
    }
    // equal paths give an identically zero fluctuation
    LlnPaths mirror = lln;
    for (int k = 0; k < grid.num_nodes(); ++k) {
        mirror.S[k] = traj.S[k] / n;
        mirror.I[k] = traj.I[k] / n;
        mirror.R[k] = traj.R[k] / n;
        mirror.F[k] = traj.F[k] / n;
    }
    auto self = fluctuation_paths(traj, mirror);
    for (double v : self.S) EXPECT_DOUBLE_EQ(v, 0.0);
    // grid mismatch is rejected
    Grid other(10.0, 0.2, cfg.init.a_max);
    auto lln2 = solve_lln(cfg.law, cfg.init, other);
    EXPECT_THROW(fluctuation_paths(traj, lln2), std::invalid_argument);
}

TEST(Abm, GeneralLawAggregateInfectivityConsistent)
{
    // random-level ramp law exercises the per-individual evaluation path;
    // F(t) <= lambda* I(t) and Upsilon = (S/N) F on the grid
    SimulationConfig cfg = markov_config(400, 10.0, 0.1);
    cfg.law = InfectivityLaw::ramp_plateau(0.2, 0.6, 0.8, DurationDistribution::gamma(2.0, 2.0));
    auto traj = simulate(cfg);
    EXPECT_GT(traj.total_infections, 0);
    for (int k = 0; k < traj.grid.num_nodes(); ++k) {
        EXPECT_LE(traj.F[k], cfg.law.sup_bound() * traj.I[k] + 1e-9);
        EXPECT_NEAR(traj.Upsilon[k], traj.F[k] * traj.S[k] / 400.0, 1e-9);
    }
    EXPECT_LE(traj.max_thinning_ratio, 1.0 + 1e-12);
}

TEST(Abm, CsvExportsHaveExpectedShape)
{
    SimulationConfig cfg = markov_config(200, 5.0, 0.5);
    auto traj = simulate(cfg);
    write_event_log_csv(traj, "test_events.csv");
    write_grid_csv(traj, "test_grid.csv");
    std::ifstream ev("test_events.csv");
    std::string line;
    std::getline(ev, line);
    EXPECT_EQ(line, "time,kind,id");
    size_t rows = 0;
    while (std::getline(ev, line)) ++rows;
    EXPECT_EQ(rows, traj.events.size());
    std::ifstream gr("test_grid.csv");
    std::getline(gr, line);
    EXPECT_EQ(line, "t,S,I,R,F,Upsilon");
}
