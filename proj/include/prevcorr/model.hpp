#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "prevcorr/errors.hpp"

namespace prevcorr {

inline constexpr double kSimplexTolerance = 1e-12;

namespace detail {

inline void check_category(int num_categories, int category) {
    if (category < 1 || category > num_categories)
        throw std::out_of_range("category " + std::to_string(category) + " out of range [1, " +
                                std::to_string(num_categories) + "]");
}

inline std::size_t cell_index(int num_categories, int category, int infected) {
    check_category(num_categories, category);
    if (infected != 0 && infected != 1)
        throw std::out_of_range("infection status must be 0 or 1, got " + std::to_string(infected));
    return static_cast<std::size_t>(2 * (category - 1) + infected);
}

} // namespace detail

/// Ground-truth population over 2M cells: symptom category s in 1..M crossed
/// with infection status i in {0,1}. Holds the census size, the cell
/// proportions (a point in the standard (2M-1)-simplex) and the probability
/// that an individual in each cell gets tested. Immutable once created.
class PopulationSpec {
public:
    /// Validates and builds a spec. `cell_props` and `test_probs` are flat
    /// length-2M vectors laid out as (s=1,i=0), (s=1,i=1), (s=2,i=0), ...
    /// Throws ValidationError when the proportions do not sum to 1 within
    /// `simplex_tolerance`, any entry is outside [0,1], or M < 2.
    static PopulationSpec create(std::int64_t census, std::vector<double> cell_props,
                                 std::vector<double> test_probs,
                                 double simplex_tolerance = kSimplexTolerance) {
        if (census < 1) throw ValidationError("census population size must be positive");
        if (cell_props.size() != test_probs.size())
            throw ValidationError("cell proportions and test probabilities must have equal length");
        if (cell_props.size() % 2 != 0 || cell_props.size() < 4)
            throw ValidationError("expected 2*M values with M >= 2, got " +
                                  std::to_string(cell_props.size()));
        double sum = 0.0;
        for (double v : cell_props) {
            if (!(v >= 0.0 && v <= 1.0))
                throw ValidationError("cell proportion " + std::to_string(v) + " outside [0, 1]");
            sum += v;
        }
        if (std::abs(sum - 1.0) > simplex_tolerance)
            throw ValidationError("cell proportions sum to " + std::to_string(sum) +
                                  ", off from 1 by " + std::to_string(sum - 1.0));
        for (double v : test_probs) {
            if (!(v >= 0.0 && v <= 1.0))
                throw ValidationError("test probability " + std::to_string(v) + " outside [0, 1]");
        }
        return PopulationSpec(census, std::move(cell_props), std::move(test_probs));
    }

    int num_categories() const noexcept { return m_; }
    std::int64_t census() const noexcept { return census_; }

    /// Proportion of the population in cell (s, i).
    double cell_prop(int category, int infected) const {
        return cell_props_[detail::cell_index(m_, category, infected)];
    }

    /// Probability that an individual in cell (s, i) gets tested.
    double cell_test_prob(int category, int infected) const {
        return test_probs_[detail::cell_index(m_, category, infected)];
    }

    std::span<const double> cell_props() const noexcept { return cell_props_; }
    std::span<const double> cell_test_probs() const noexcept { return test_probs_; }

private:
    PopulationSpec(std::int64_t census, std::vector<double> cell_props,
                   std::vector<double> test_probs)
        : m_(static_cast<int>(cell_props.size() / 2)),
          census_(census),
          cell_props_(std::move(cell_props)),
          test_probs_(std::move(test_probs)) {}

    int m_;
    std::int64_t census_;
    std::vector<double> cell_props_;
    std::vector<double> test_probs_;
};

/// Observed biased sample: per-category tested-positive and tested-negative
/// counts, plus the census size N. The total tested N_T may be zero here
/// (a simulated draw can come back empty); estimators reject that case.
class TestedCounts {
public:
    static TestedCounts create(std::int64_t census, std::vector<std::int64_t> positive,
                               std::vector<std::int64_t> negative) {
        if (positive.size() != negative.size())
            throw ValidationError("positive and negative count vectors must have equal length");
        if (positive.empty()) throw ValidationError("counts must cover at least one category");
        if (census < 1) throw ValidationError("census population size must be positive");
        std::int64_t total = 0;
        for (std::size_t j = 0; j < positive.size(); ++j) {
            if (positive[j] < 0 || negative[j] < 0)
                throw ValidationError("counts must be non-negative (category " +
                                      std::to_string(j + 1) + ")");
            total += positive[j] + negative[j];
        }
        if (total > census)
            throw ValidationError("tested total " + std::to_string(total) +
                                  " exceeds census population " + std::to_string(census));
        return TestedCounts(census, std::move(positive), std::move(negative), total);
    }

    int num_categories() const noexcept { return static_cast<int>(positive_.size()); }
    std::int64_t census() const noexcept { return census_; }

    std::int64_t positive(int category) const {
        detail::check_category(num_categories(), category);
        return positive_[static_cast<std::size_t>(category - 1)];
    }
    std::int64_t negative(int category) const {
        detail::check_category(num_categories(), category);
        return negative_[static_cast<std::size_t>(category - 1)];
    }
    std::int64_t tested(int category) const { return positive(category) + negative(category); }

    /// N_T, the sample size.
    std::int64_t total_tested() const noexcept { return total_tested_; }

    std::span<const std::int64_t> positives() const noexcept { return positive_; }
    std::span<const std::int64_t> negatives() const noexcept { return negative_; }

    friend bool operator==(const TestedCounts& a, const TestedCounts& b) {
        return a.census_ == b.census_ && a.positive_ == b.positive_ && a.negative_ == b.negative_;
    }

private:
    TestedCounts(std::int64_t census, std::vector<std::int64_t> positive,
                 std::vector<std::int64_t> negative, std::int64_t total)
        : census_(census),
          positive_(std::move(positive)),
          negative_(std::move(negative)),
          total_tested_(total) {}

    std::int64_t census_;
    std::vector<std::int64_t> positive_;
    std::vector<std::int64_t> negative_;
    std::int64_t total_tested_;
};

/// p_s: proportion of the population in category s, infected or not.
inline double symptom_marginal(const PopulationSpec& spec, int category) {
    return spec.cell_prop(category, 0) + spec.cell_prop(category, 1);
}

/// p(s): probability of being tested for an individual in category s. When
/// the two cells of the category share a testing probability this is that
/// common value; otherwise it is the proportion-weighted mean, which keeps
/// P[T=1] = sum_s p(s) p_s intact. Zero when the category has no mass.
inline double test_marginal(const PopulationSpec& spec, int category) {
    const double p0 = spec.cell_prop(category, 0);
    const double p1 = spec.cell_prop(category, 1);
    const double q0 = spec.cell_test_prob(category, 0);
    const double q1 = spec.cell_test_prob(category, 1);
    if (q0 == q1) return q0;
    const double mass = p0 + p1;
    if (mass == 0.0) return 0.0;
    return (q0 * p0 + q1 * p1) / mass;
}

/// P[T = 1]: overall probability that a random individual gets tested.
inline double testing_rate(const PopulationSpec& spec) {
    double rate = 0.0;
    for (int s = 1; s <= spec.num_categories(); ++s) {
        rate += spec.cell_test_prob(s, 0) * spec.cell_prop(s, 0) +
                spec.cell_test_prob(s, 1) * spec.cell_prop(s, 1);
    }
    return rate;
}

/// Distribution of categories among tested individuals. `cell` has the 2M
/// per-cell entries in PopulationSpec layout; `category` the M per-category
/// entries (each the sum of its two cells). Both sum to 1.
struct BiasedDensity {
    std::vector<double> cell;
    std::vector<double> category;

    double category_share(int s) const {
        detail::check_category(static_cast<int>(category.size()), s);
        return category[static_cast<std::size_t>(s - 1)];
    }
    double infected_share(int s) const {
        return cell[detail::cell_index(static_cast<int>(category.size()), s, 1)];
    }
};

/// Density of the tested subpopulation implied by the ground truth:
/// f(s^(i)) = p(s^(i)) p_s^(i) / P[T=1]. Throws EstimationError when the
/// testing rate is zero (no one is tested).
inline BiasedDensity theoretical_biased_density(const PopulationSpec& spec) {
    const double rate = testing_rate(spec);
    if (rate <= 0.0) throw EstimationError("no one is tested: overall testing rate is zero");
    const int m = spec.num_categories();
    BiasedDensity out;
    out.cell.resize(static_cast<std::size_t>(2 * m));
    out.category.resize(static_cast<std::size_t>(m));
    for (int s = 1; s <= m; ++s) {
        const double f0 = spec.cell_test_prob(s, 0) * spec.cell_prop(s, 0) / rate;
        const double f1 = spec.cell_test_prob(s, 1) * spec.cell_prop(s, 1) / rate;
        out.cell[static_cast<std::size_t>(2 * (s - 1))] = f0;
        out.cell[static_cast<std::size_t>(2 * (s - 1) + 1)] = f1;
        out.category[static_cast<std::size_t>(s - 1)] = f0 + f1;
    }
    return out;
}

/// Sample analog of the biased density: per-category tested shares and
/// per-cell positive/negative shares of N_T. Throws EstimationError on an
/// empty sample.
inline BiasedDensity empirical_density(const TestedCounts& counts) {
    const std::int64_t n_t = counts.total_tested();
    if (n_t == 0) throw EstimationError("empty sample: no tested individuals");
    const int m = counts.num_categories();
    BiasedDensity out;
    out.cell.resize(static_cast<std::size_t>(2 * m));
    out.category.resize(static_cast<std::size_t>(m));
    for (int s = 1; s <= m; ++s) {
        const double f0 = static_cast<double>(counts.negative(s)) / static_cast<double>(n_t);
        const double f1 = static_cast<double>(counts.positive(s)) / static_cast<double>(n_t);
        out.cell[static_cast<std::size_t>(2 * (s - 1))] = f0;
        out.cell[static_cast<std::size_t>(2 * (s - 1) + 1)] = f1;
        out.category[static_cast<std::size_t>(s - 1)] = f0 + f1;
    }
    return out;
}

/// Sample proportion of positives among tested, uncorrected for selection.
inline double naive_prevalence(const TestedCounts& counts) {
    const std::int64_t n_t = counts.total_tested();
    if (n_t == 0) throw EstimationError("empty sample: no tested individuals");
    std::int64_t pos = 0;
    for (int s = 1; s <= counts.num_categories(); ++s) pos += counts.positive(s);
    return static_cast<double>(pos) / static_cast<double>(n_t);
}

// Identifiers for the four monotonicity chains a severity ordering implies.
inline constexpr int kOrderingTestProb = 2;          // p(s) non-decreasing
inline constexpr int kOrderingInfectedTestProb = 3;  // p(s^(1)) non-decreasing
inline constexpr int kOrderingInfectedShare = 4;     // p_s^(1)/p_s non-decreasing
inline constexpr int kOrderingCategorySize = 5;      // p_s non-increasing

struct OrderingViolation {
    int ordering_id;
    int lower_category;
    int upper_category;
    double lower_value;
    double upper_value;
};

struct OrderingReport {
    std::vector<OrderingViolation> violations;
    bool ok() const noexcept { return violations.empty(); }
};

inline std::string describe(const OrderingViolation& v) {
    const char* what = "";
    switch (v.ordering_id) {
        case kOrderingTestProb: what = "testing probability p(s) decreases"; break;
        case kOrderingInfectedTestProb: what = "infected testing probability p(s,1) decreases"; break;
        case kOrderingInfectedShare: what = "within-category infected share decreases"; break;
        case kOrderingCategorySize: what = "category proportion p_s increases"; break;
        default: what = "ordering violated"; break;
    }
    return std::string(what) + " between categories " + std::to_string(v.lower_category) +
           " and " + std::to_string(v.upper_category) + " (" + std::to_string(v.lower_value) +
           " vs " + std::to_string(v.upper_value) + ")";
}

/// Checks the four monotonicity chains that severity ordering suggests.
/// Violations are reported, never rejected: real data may break them.
/// Categories with p_s = 0 are skipped in the infected-share chain.
inline OrderingReport validate_orderings(const PopulationSpec& spec) {
    OrderingReport report;
    const int m = spec.num_categories();

    auto check_chain = [&](int id, auto value, bool increasing) {
        bool have_prev = false;
        int prev_s = 0;
        double prev_v = 0.0;
        for (int s = 1; s <= m; ++s) {
            const auto v = value(s);
            if (!v.second) continue;  // undefined entry, skip
            if (have_prev) {
                const bool bad = increasing ? v.first < prev_v : v.first > prev_v;
                if (bad) report.violations.push_back({id, prev_s, s, prev_v, v.first});
            }
            have_prev = true;
            prev_s = s;
            prev_v = v.first;
        }
    };

    check_chain(kOrderingTestProb,
                [&](int s) { return std::pair{test_marginal(spec, s), true}; }, true);
    check_chain(kOrderingInfectedTestProb,
                [&](int s) { return std::pair{spec.cell_test_prob(s, 1), true}; }, true);
    check_chain(kOrderingInfectedShare,
                [&](int s) {
                    const double mass = symptom_marginal(spec, s);
                    if (mass == 0.0) return std::pair{0.0, false};
                    return std::pair{spec.cell_prop(s, 1) / mass, true};
                },
                true);
    check_chain(kOrderingCategorySize,
                [&](int s) { return std::pair{symptom_marginal(spec, s), true}; }, false);
    return report;
}

} // namespace prevcorr
