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
#ifndef AGESIR_AGEPOP_HPP
#define AGESIR_AGEPOP_HPP

#include "agesir/common.hpp"
#include "agesir/model.hpp"

namespace agesir {

// ===========================================================================
// Finite point measure of infection ages, one unit atom per infected
// individual. Atoms are kept sorted by age (ties by id); advancing all ages
// is O(1) via a shared offset. Hazard prefix sums are refreshed lazily: any
// mutation or advance invalidates them, the next hazard query rebuilds in
// O(n) and subsequent queries bisect in O(log n).
// ===========================================================================
class AgeMeasure
{
public:
    struct Atom {
        std::uint32_t id;
        double base_age; // true age = base_age + m_offset
    };

    AgeMeasure() = default;

    size_t size() const { return m_atoms.size(); }
    bool empty() const { return m_atoms.empty(); }

    double age(size_t i) const { return m_atoms[i].base_age + m_offset; }
    std::uint32_t id(size_t i) const { return m_atoms[i].id; }

    void clear()
    {
        m_atoms.clear();
        m_offset = 0.0;
        m_prefix_valid = false;
    }

    // advance every age by dt >= 0
    void advance(double dt)
    {
        assert(dt >= 0.0);
        m_offset += dt;
        m_prefix_valid = false;
    }

    // insert an atom with the given current age, keeping the age order
    void insert(std::uint32_t id, double current_age)
    {
        Atom a{id, current_age - m_offset};
        auto pos = std::lower_bound(m_atoms.begin(), m_atoms.end(), a, [](const Atom& x, const Atom& y) {
            return x.base_age != y.base_age ? x.base_age < y.base_age : x.id < y.id;
        });
        m_atoms.insert(pos, a);
        m_prefix_valid = false;
    }

    void remove_at(size_t i)
    {
        m_atoms.erase(m_atoms.begin() + static_cast<std::ptrdiff_t>(i));
        m_prefix_valid = false;
    }

    bool remove_id(std::uint32_t id)
    {
        for (size_t i = 0; i < m_atoms.size(); ++i) {
            if (m_atoms[i].id == id) {
                remove_at(i);
                return true;
            }
        }
        return false;
    }

    // <nu, phi> = sum over atoms of phi(age); exact, no quadrature
    template <class Fn>
    double apply(Fn&& phi) const
    {
        double s = 0.0;
        for (const auto& a : m_atoms) s += phi(a.base_age + m_offset);
        return s;
    }

    // total hazard mass nu(h)
    double total_hazard(const DurationDistribution& dur) const
    {
        refresh_prefix(dur);
        return m_prefix.empty() ? 0.0 : m_prefix.back();
    }

    // Right-continuous generalized inverse of the normalized h-biased cdf:
    // the first atom (in age order) whose normalized cumulative hazard
    // reaches w. With w uniform on (0,1), atom i is selected with
    // probability h(age_i) / nu(h).
    size_t h_biased_inverse_index(const DurationDistribution& dur, double w) const
    {
        if (m_atoms.empty()) {
            throw std::logic_error("h-biased inverse on an empty measure");
        }
        refresh_prefix(dur);
        double total = m_prefix.back();
        if (!(total > 0.0)) {
            throw std::logic_error("h-biased inverse: nu(h) = 0, no individual can recover");
        }
        // tiny slack keeps w <= prefix/total decisions stable under the
        // double rounding of w * total, so H(nu, G(a)) = a holds exactly
        double target = w * total - 8.0 * std::numeric_limits<double>::epsilon() * total;
        auto it = std::lower_bound(m_prefix.begin(), m_prefix.end(), target);
        if (it == m_prefix.end()) --it;
        return static_cast<size_t>(it - m_prefix.begin());
    }

    double h_biased_inverse(const DurationDistribution& dur, double w) const
    {
        return age(h_biased_inverse_index(dur, w));
    }

private:
    void refresh_prefix(const DurationDistribution& dur) const
    {
        if (m_prefix_valid) return;
        m_prefix.resize(m_atoms.size());
        double acc = 0.0;
        for (size_t i = 0; i < m_atoms.size(); ++i) {
            acc += dur.hazard(m_atoms[i].base_age + m_offset);
            m_prefix[i] = acc;
        }
        m_prefix_valid = true;
    }

    std::vector<Atom> m_atoms;
    double m_offset = 0.0;
    mutable std::vector<double> m_prefix;
    mutable bool m_prefix_valid = false;
};

// counts plus the age measure of the infected; the balance S + I + R = N
// holds at every event boundary
struct PopulationState {
    std::int64_t num_susceptible = 0;
    std::int64_t num_recovered = 0;
    std::int64_t population = 0;
    AgeMeasure ages;
    double clock = 0.0;

    std::int64_t num_infected() const { return static_cast<std::int64_t>(ages.size()); }

    void check_balance() const
    {
        if (num_susceptible + num_infected() + num_recovered != population) {
            throw std::logic_error("population balance violated: S + I + R != N");
        }
    }
};

} // namespace agesir

#endif // AGESIR_AGEPOP_HPP
