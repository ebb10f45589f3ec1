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
#ifndef AGESIR_COMMON_HPP
#define AGESIR_COMMON_HPP

#include <algorithm>
#include <atomic>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace agesir {

using std::size_t;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Uniform time grid. Nodes t_n = n*dt for n = 0..num_steps(); the age axis
// extends to horizon + age_max so that every shifted evaluation a + t stays
// in range.
// ---------------------------------------------------------------------------
class Grid
{
public:
    Grid() = default;
    Grid(double horizon, double dt, double age_max)
        : m_horizon(horizon)
        , m_dt(dt)
        , m_age_max(age_max)
    {
        if (!(horizon > 0.0) || !(dt > 0.0)) {
            throw std::invalid_argument("Grid: horizon and dt must be positive");
        }
        m_num_steps = static_cast<int>(std::llround(horizon / dt));
        if (m_num_steps < 1 || std::abs(m_num_steps * dt - horizon) > 1e-9 * std::max(1.0, horizon)) {
            throw std::invalid_argument("Grid: horizon must be an integer multiple of dt");
        }
        m_num_ext_steps = static_cast<int>(std::ceil((horizon + age_max) / dt - 1e-12));
    }

    double horizon() const { return m_horizon; }
    double dt() const { return m_dt; }
    double age_max() const { return m_age_max; }
    int num_steps() const { return m_num_steps; }
    int num_nodes() const { return m_num_steps + 1; }
    // steps covering [0, horizon + age_max]
    int num_ext_steps() const { return m_num_ext_steps; }
    int num_ext_nodes() const { return m_num_ext_steps + 1; }
    double node(int n) const { return n * m_dt; }
    int index_of(double t) const
    {
        int n = static_cast<int>(std::llround(t / m_dt));
        assert(std::abs(n * m_dt - t) <= 1e-9 * std::max(1.0, m_horizon));
        return n;
    }
    Grid refined(int factor) const { return Grid(m_horizon, m_dt / factor, m_age_max); }

private:
    double m_horizon = 0.0;
    double m_dt = 0.0;
    double m_age_max = 0.0;
    int m_num_steps = 0;
    int m_num_ext_steps = 0;
};

// ---------------------------------------------------------------------------
// Seeding and random streams.
//
// A root seed plus a stream id give an independent, reproducible generator.
// Replica k of a sweep uses stream id k; results are therefore identical for
// any number of worker threads. All variate transforms are implemented here
// (not via std distributions) so that the draw sequence is fixed by this
// code alone.
// ---------------------------------------------------------------------------
inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

class RngStream
{
public:
    RngStream() : RngStream(0, 0) {}
    RngStream(std::uint64_t root_seed, std::uint64_t stream_id)
    {
        // Two rounds of splitmix decorrelate (root, stream) pairs before
        // feeding the engine.
        std::uint64_t s = splitmix64(root_seed ^ splitmix64(0x51a2b3c4d5e6f708ull + stream_id));
        m_engine.seed(s);
    }

    std::uint64_t next_u64() { return m_engine(); }

    // uniform on (0,1); never returns 0 or 1
    double uniform()
    {
        double u = (next_u64() >> 11) * 0x1.0p-53;
        return u > 0.0 ? u : 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double exponential(double rate)
    {
        assert(rate > 0.0);
        return -std::log(uniform()) / rate;
    }

    double normal()
    {
        if (m_has_spare) {
            m_has_spare = false;
            return m_spare;
        }
        // Marsaglia polar method
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        double m = std::sqrt(-2.0 * std::log(s) / s);
        m_spare = v * m;
        m_has_spare = true;
        return u * m;
    }

    // Marsaglia-Tsang; requires shape >= 1
    double gamma(double shape, double scale)
    {
        assert(shape >= 1.0);
        double d = shape - 1.0 / 3.0;
        double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            double u = uniform();
            if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) {
                return d * v * scale;
            }
        }
    }

private:
    std::mt19937_64 m_engine;
    bool m_has_spare = false;
    double m_spare = 0.0;
};

// ---------------------------------------------------------------------------
// Small numerics helpers
// ---------------------------------------------------------------------------

// Monotone root solve for cdf(x) = p on [lo, hi]; bisection with a secant
// polish. Used for quantiles of laws without a closed-form inverse.
inline double solve_quantile(const std::function<double(double)>& cdf, double p, double lo, double hi,
                             double tol = 1e-12)
{
    double flo = cdf(lo) - p;
    double fhi = cdf(hi) - p;
    if (flo > 0.0) return lo;
    if (fhi < 0.0) return hi;
    for (int it = 0; it < 200 && hi - lo > tol * std::max(1.0, std::abs(hi)); ++it) {
        double mid = 0.5 * (lo + hi);
        double fm = cdf(mid) - p;
        if (fm <= 0.0) {
            lo = mid;
            flo = fm;
        }
        else {
            hi = mid;
            fhi = fm;
        }
    }
    return 0.5 * (lo + hi);
}

// trapezoid weight of node k in a sum over nodes 0..n
inline double trapezoid_weight(int k, int n)
{
    return (k == 0 || k == n) ? 0.5 : 1.0;
}

struct RunningStats {
    std::int64_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x)
    {
        ++n;
        double d = x - mean;
        mean += d / static_cast<double>(n);
        m2 += d * (x - mean);
    }
    double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
    double stddev() const { return std::sqrt(variance()); }
    // standard error of the sample variance for approximately normal data
    double variance_stderr() const
    {
        return n > 1 ? variance() * std::sqrt(2.0 / static_cast<double>(n - 1)) : 0.0;
    }
};

inline double sample_mean(const std::vector<double>& x)
{
    double s = 0.0;
    for (double v : x) s += v;
    return x.empty() ? 0.0 : s / static_cast<double>(x.size());
}

inline double sample_variance(const std::vector<double>& x)
{
    if (x.size() < 2) return 0.0;
    double m = sample_mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size() - 1);
}

inline double sample_covariance(const std::vector<double>& x, const std::vector<double>& y)
{
    assert(x.size() == y.size());
    if (x.size() < 2) return 0.0;
    double mx = sample_mean(x), my = sample_mean(y);
    double s = 0.0;
    for (size_t i = 0; i < x.size(); ++i) s += (x[i] - mx) * (y[i] - my);
    return s / static_cast<double>(x.size() - 1);
}

// sample skewness and excess kurtosis, for quick normality checks
inline std::pair<double, double> sample_skew_kurtosis(const std::vector<double>& x)
{
    double m = sample_mean(x);
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double v : x) {
        double d = v - m;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    double n = static_cast<double>(x.size());
    m2 /= n;
    m3 /= n;
    m4 /= n;
    double skew = m3 / std::pow(m2, 1.5);
    double kurt = m4 / (m2 * m2) - 3.0;
    return {skew, kurt};
}

// least-squares slope of y against x
inline double regression_slope(const std::vector<double>& x, const std::vector<double>& y)
{
    assert(x.size() == y.size() && x.size() >= 2);
    double mx = sample_mean(x), my = sample_mean(y);
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        num += (x[i] - mx) * (y[i] - my);
        den += (x[i] - mx) * (x[i] - mx);
    }
    return num / den;
}

// ---------------------------------------------------------------------------
// Index-based parallel dispatch with deterministic result placement. Worker
// threads claim task indices from a shared counter; outputs are written by
// index, so reductions done afterwards are order-stable regardless of the
// thread count.
// ---------------------------------------------------------------------------
inline void parallel_for(int num_tasks, int num_threads, const std::function<void(int)>& task)
{
    if (num_threads <= 1 || num_tasks <= 1) {
        for (int i = 0; i < num_tasks; ++i) task(i);
        return;
    }
    std::atomic<int> next{0};
    auto worker = [&]() {
        for (;;) {
            int i = next.fetch_add(1);
            if (i >= num_tasks) break;
            task(i);
        }
    };
    std::vector<std::thread> pool;
    int spawn = std::min(num_threads, num_tasks) - 1;
    pool.reserve(spawn);
    for (int i = 0; i < spawn; ++i) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
}

inline int default_thread_count()
{
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// ---------------------------------------------------------------------------
// CSV output: UTF-8, comma separated, one header row. Numeric formatting is
// fixed so identical inputs give byte-identical files.
// ---------------------------------------------------------------------------
class CsvWriter
{
public:
    explicit CsvWriter(const std::string& path)
        : m_out(path)
    {
        if (!m_out) {
            throw std::runtime_error("cannot open output file: " + path);
        }
        m_out.precision(12);
    }

    void header(const std::vector<std::string>& cols)
    {
        for (size_t i = 0; i < cols.size(); ++i) {
            if (i) m_out << ',';
            m_out << cols[i];
        }
        m_out << '\n';
    }

    void row(const std::vector<double>& vals)
    {
        for (size_t i = 0; i < vals.size(); ++i) {
            if (i) m_out << ',';
            m_out << vals[i];
        }
        m_out << '\n';
    }

    void raw_row(const std::string& line) { m_out << line << '\n'; }

private:
    std::ofstream m_out;
};

} // namespace agesir

#endif // AGESIR_COMMON_HPP
