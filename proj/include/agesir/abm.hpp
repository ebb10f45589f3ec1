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
#ifndef AGESIR_ABM_HPP
#define AGESIR_ABM_HPP

#include "agesir/agepop.hpp"
#include "agesir/common.hpp"
#include "agesir/model.hpp"

#include <queue>

namespace agesir {

enum class RecoveryMode : std::uint8_t {
    scheduled, // each individual gets its recovery time at infection
    hazard,    // recoveries from the total hazard clock + h-biased selection
};

struct SimulationConfig {
    std::int64_t population = 0;
    InitialCondition init;
    InfectivityLaw law;
    double horizon = 0.0;
    double dt = 0.0;
    RecoveryMode mode = RecoveryMode::scheduled;
    std::uint64_t seed = 0;
    std::uint64_t stream_id = 0;
    double eta_cap = 1e6;          // hard cap on sampled infectious periods
    bool collect_event_log = true;

    void validate() const
    {
        if (population < 1) throw std::invalid_argument("simulation: population must be >= 1");
        if (!(horizon > 0.0) || !(dt > 0.0)) throw std::invalid_argument("simulation: need horizon, dt > 0");
        init.validate(/*for_limit=*/false);
        if (mode == RecoveryMode::hazard) {
            if (!law.is_separable_deterministic()) {
                throw std::invalid_argument(
                    "hazard mode requires a separable infectivity law with deterministic profile");
            }
            if (init.coupling != InitialCoupling::residual) {
                throw std::invalid_argument("hazard mode requires the residual initial coupling");
            }
        }
    }
};

enum class EventKind : std::uint8_t { infection, recovery };

struct Event {
    double time;
    EventKind kind;
    std::uint32_t id;
    std::uint64_t seq; // tie-breaking sub-order
};

struct Trajectory {
    Grid grid;
    std::int64_t population = 0;
    std::int64_t initial_infected = 0;
    std::vector<Event> events;
    // grid samples (left limits at event times)
    std::vector<double> S, I, R, F, Upsilon;
    // final state at the horizon
    std::int64_t final_susceptible = 0;
    std::int64_t final_infected = 0;
    std::int64_t final_recovered = 0;
    std::int64_t total_infections = 0;
    std::int64_t total_events = 0;
    double max_thinning_ratio = 0.0;
};

// LLN-scaled grid paths X / N
struct ScaledPaths {
    std::vector<double> S, I, R, F, Upsilon;
};

inline ScaledPaths scaled_paths(const Trajectory& traj)
{
    double n = static_cast<double>(traj.population);
    ScaledPaths p;
    auto scale = [n](const std::vector<double>& x) {
        std::vector<double> y(x.size());
        for (size_t i = 0; i < x.size(); ++i) y[i] = x[i] / n;
        return y;
    };
    p.S = scale(traj.S);
    p.I = scale(traj.I);
    p.R = scale(traj.R);
    p.F = scale(traj.F);
    p.Upsilon = scale(traj.Upsilon);
    return p;
}

namespace detail {

class Simulator
{
public:
    Simulator(const SimulationConfig& cfg)
        : m_cfg(cfg)
        , m_rng(cfg.seed, cfg.stream_id)
        , m_lambda_star(cfg.law.sup_bound())
    {
        cfg.validate();
    }

    Trajectory run()
    {
        init_population();
        if (m_cfg.mode == RecoveryMode::hazard) {
            m_hazard_star = m_cfg.law.duration().hazard_bound_on(m_cfg.horizon + m_cfg.init.a_max);
        }
        event_loop();
        finalize();
        return std::move(m_traj);
    }

private:
    void init_population()
    {
        const auto N = m_cfg.population;
        std::int64_t i0 = static_cast<std::int64_t>(std::floor(N * m_cfg.init.i0 + 1e-9));
        std::int64_t s0 = static_cast<std::int64_t>(std::floor(N * m_cfg.init.s0 + 1e-9));
        std::int64_t r0 = N - i0 - s0;
        if (i0 < 0 || s0 < 0 || r0 < 0) throw std::invalid_argument("simulation: inconsistent initial counts");

        m_state.population = N;
        m_state.num_susceptible = s0;
        m_state.num_recovered = r0;
        m_state.clock = 0.0;

        m_traj.grid = Grid(m_cfg.horizon, m_cfg.dt, m_cfg.init.a_max);
        m_traj.population = N;
        m_traj.initial_infected = i0;
        int nn = m_traj.grid.num_nodes();
        m_traj.S.reserve(nn);
        m_traj.I.reserve(nn);
        m_traj.R.reserve(nn);
        m_traj.F.reserve(nn);
        m_traj.Upsilon.reserve(nn);

        m_paths.resize(static_cast<size_t>(i0));
        for (std::int64_t j = 0; j < i0; ++j) {
            auto idx = static_cast<std::uint32_t>(j);
            if (m_cfg.mode == RecoveryMode::scheduled) {
                auto ind = sample_initial_individual(m_rng, m_cfg.init, m_cfg.law);
                m_paths[idx] = ind.path;
                m_state.ages.insert(idx, ind.age);
                m_recovery_queue.push({ind.remaining, idx});
            }
            else {
                // duration emerges from the hazard clock
                m_paths[idx] = m_cfg.law.make_open_ended();
                m_state.ages.insert(idx, m_cfg.init.age_law.sample(m_rng));
            }
        }
        m_next_id = static_cast<std::uint32_t>(i0);
        m_state.check_balance();
    }

    double aggregate_infectivity() const
    {
        if (m_cfg.law.has_constant_level()) {
            return m_cfg.law.sup_bound() * static_cast<double>(m_state.ages.size());
        }
        return sum_infectivity();
    }

    double sum_infectivity() const
    {
        double s = 0.0;
        for (size_t i = 0; i < m_state.ages.size(); ++i) {
            double v = m_paths[m_state.ages.id(i)].eval(m_state.ages.age(i));
            assert(v <= m_lambda_star * (1.0 + 1e-12));
            s += v;
        }
        return s;
    }

    double infection_bound() const
    {
        return m_lambda_star * static_cast<double>(m_state.num_susceptible) /
               static_cast<double>(m_state.population) * static_cast<double>(m_state.ages.size());
    }

    // record grid nodes in (last recorded, up_to] with left-limit state
    void record_grid_until(double up_to)
    {
        const auto& g = m_traj.grid;
        while (m_next_grid_node < g.num_nodes() && g.node(m_next_grid_node) <= up_to + 1e-15) {
            double tg = g.node(m_next_grid_node);
            m_state.ages.advance(std::max(0.0, tg - m_state.clock));
            m_state.clock = std::max(m_state.clock, tg);
            double f = aggregate_infectivity();
            m_traj.S.push_back(static_cast<double>(m_state.num_susceptible));
            m_traj.I.push_back(static_cast<double>(m_state.num_infected()));
            m_traj.R.push_back(static_cast<double>(m_state.num_recovered));
            m_traj.F.push_back(f);
            m_traj.Upsilon.push_back(f * static_cast<double>(m_state.num_susceptible) /
                                     static_cast<double>(m_state.population));
            ++m_next_grid_node;
        }
    }

    void advance_to(double t)
    {
        record_grid_until(t);
        if (t > m_state.clock) {
            m_state.ages.advance(t - m_state.clock);
            m_state.clock = t;
        }
    }

    void log_event(double t, EventKind kind, std::uint32_t id)
    {
        ++m_traj.total_events;
        if (m_cfg.collect_event_log) {
            m_traj.events.push_back({t, kind, id, m_traj.total_events});
        }
    }

    void apply_recovery(std::uint32_t id, size_t atom_index)
    {
        m_state.ages.remove_at(atom_index);
        ++m_state.num_recovered;
        log_event(m_state.clock, EventKind::recovery, id);
        m_state.check_balance();
    }

    void try_infection(double bound)
    {
        double f = aggregate_infectivity();
        double intensity =
            f * static_cast<double>(m_state.num_susceptible) / static_cast<double>(m_state.population);
        double ratio = bound > 0.0 ? intensity / bound : 0.0;
        m_traj.max_thinning_ratio = std::max(m_traj.max_thinning_ratio, ratio);
        if (ratio > 1.0 + 1e-9) {
            std::ostringstream os;
            os << "thinning bound breached at t=" << m_state.clock << ": intensity " << intensity << " > bound "
               << bound;
            throw std::logic_error(os.str());
        }
        double u = m_rng.uniform();
        if (u > ratio) return; // rejected proposal

        std::uint32_t id = m_next_id++;
        if (m_cfg.mode == RecoveryMode::scheduled) {
            auto real = m_cfg.law.sample(m_rng, m_cfg.eta_cap);
            m_paths.push_back(real);
            m_recovery_queue.push({m_state.clock + real.eta, id});
        }
        else {
            m_paths.push_back(m_cfg.law.make_open_ended());
        }
        --m_state.num_susceptible;
        m_state.ages.insert(id, 0.0);
        log_event(m_state.clock, EventKind::infection, id);
        m_state.check_balance();
    }

    void event_loop()
    {
        const double T = m_cfg.horizon;
        while (true) {
            double b_inf = infection_bound();
            double b_rec = 0.0;
            double next_scheduled = kInf;
            if (m_cfg.mode == RecoveryMode::scheduled) {
                if (!m_recovery_queue.empty()) next_scheduled = m_recovery_queue.top().first;
            }
            else {
                b_rec = m_hazard_star * static_cast<double>(m_state.ages.size());
            }
            double total_rate = b_inf + b_rec;
            double t_prop = total_rate > 0.0 ? m_state.clock + m_rng.exponential(total_rate) : kInf;

            // infection-before-recovery on exact ties
            bool do_scheduled = next_scheduled < t_prop || (next_scheduled == t_prop && t_prop == kInf);
            double t_next = std::min(t_prop, next_scheduled);
            if (t_next > T) {
                record_grid_until(T);
                break;
            }
            advance_to(t_next);

            if (m_cfg.mode == RecoveryMode::scheduled && do_scheduled) {
                auto [tr, id] = m_recovery_queue.top();
                m_recovery_queue.pop();
                size_t idx = find_atom(id);
                apply_recovery(id, idx);
                continue;
            }

            if (m_cfg.mode == RecoveryMode::scheduled) {
                try_infection(b_inf);
            }
            else {
                double split = m_rng.uniform() * total_rate;
                if (split < b_inf) {
                    try_infection(b_inf);
                }
                else {
                    // recovery proposal: accept with nu(h) / (I h*), then select
                    // the individual through the h-biased inverse
                    double nu_h = m_state.ages.total_hazard(m_cfg.law.duration());
                    double ratio = nu_h / b_rec;
                    if (ratio > 1.0 + 1e-9) {
                        throw std::logic_error("hazard bound breached: nu(h) > I h*");
                    }
                    double u = m_rng.uniform();
                    if (u <= ratio && nu_h > 0.0) {
                        double w = m_rng.uniform();
                        size_t idx = m_state.ages.h_biased_inverse_index(m_cfg.law.duration(), w);
                        apply_recovery(m_state.ages.id(idx), idx);
                    }
                }
            }
        }
    }

    size_t find_atom(std::uint32_t id) const
    {
        for (size_t i = 0; i < m_state.ages.size(); ++i) {
            if (m_state.ages.id(i) == id) return i;
        }
        throw std::logic_error("scheduled recovery for an unknown individual");
    }

    void finalize()
    {
        m_traj.final_susceptible = m_state.num_susceptible;
        m_traj.final_infected = m_state.num_infected();
        m_traj.final_recovered = m_state.num_recovered;
        m_traj.total_infections = static_cast<std::int64_t>(m_next_id) - m_traj.initial_infected;
    }

    SimulationConfig m_cfg;
    RngStream m_rng;
    double m_lambda_star;
    double m_hazard_star = 0.0;
    PopulationState m_state;
    Trajectory m_traj;
    std::vector<InfectivityRealization> m_paths; // indexed by individual id
    using QEntry = std::pair<double, std::uint32_t>;
    std::priority_queue<QEntry, std::vector<QEntry>, std::greater<QEntry>> m_recovery_queue;
    std::uint32_t m_next_id = 0;
    int m_next_grid_node = 0;
};

} // namespace detail

// Exact event-driven simulation. Infections arrive by thinning an
// upper-bound Poisson clock at rate (S/N) lambda* I, refreshed at events
// (valid in between because S and I are constant and lambda <= lambda*).
// Recoveries either fire at their pre-drawn times (scheduled mode) or by
// thinning a rate-(I h*) clock with h-biased selection (hazard mode).
inline Trajectory simulate(const SimulationConfig& cfg)
{
    detail::Simulator sim(cfg);
    return sim.run();
}

inline Trajectory simulate_hazard(SimulationConfig cfg)
{
    cfg.mode = RecoveryMode::hazard;
    detail::Simulator sim(cfg);
    return sim.run();
}

// CSV export of the event log: columns (time, kind, id)
inline void write_event_log_csv(const Trajectory& traj, const std::string& path)
{
    CsvWriter csv(path);
    csv.header({"time", "kind", "id"});
    for (const auto& e : traj.events) {
        std::ostringstream os;
        os.precision(12);
        os << e.time << ',' << (e.kind == EventKind::infection ? "infection" : "recovery") << ',' << e.id;
        csv.raw_row(os.str());
    }
}

// CSV export of grid samples: columns (t, S, I, R, F, Upsilon)
inline void write_grid_csv(const Trajectory& traj, const std::string& path)
{
    CsvWriter csv(path);
    csv.header({"t", "S", "I", "R", "F", "Upsilon"});
    for (int n = 0; n < traj.grid.num_nodes(); ++n) {
        csv.row({traj.grid.node(n), traj.S[n], traj.I[n], traj.R[n], traj.F[n], traj.Upsilon[n]});
    }
}

} // namespace agesir

#endif // AGESIR_ABM_HPP
