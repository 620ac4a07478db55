#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "prevcorr/errors.hpp"
#include "prevcorr/model.hpp"
#include "prevcorr/random.hpp"

namespace prevcorr {

// ---------------------------------------------------------------------------
// u policies: how to pick the infected share u of a redistributed category.
// ---------------------------------------------------------------------------

namespace upolicy {

/// Deterministic u at a fixed midpoint (default 1/2, the centre of (0,1)).
struct Mean {
    double midpoint = 0.5;
};

/// u drawn uniformly from (lo, hi), one independent draw per category.
struct UniformRandom {
    double lo = 0.0;
    double hi = 1.0;
};

/// Constant user-chosen u.
struct Fixed {
    double value = 0.5;
};

using Fallback = std::variant<Mean, UniformRandom, Fixed>;

/// u = tested-positive share of the category's own sample; falls back to the
/// configured alternative when the category has no tested individuals.
struct PlugIn {
    Fallback fallback = Mean{};
};

} // namespace upolicy

using UPolicy = std::variant<upolicy::PlugIn, upolicy::Mean, upolicy::UniformRandom, upolicy::Fixed>;

/// Sample-first policy: plug-in u with Mean(0.5) when the sample is silent.
inline UPolicy default_u_policy() { return upolicy::PlugIn{upolicy::Mean{0.5}}; }

inline void validate(const upolicy::Mean& p) {
    if (!(p.midpoint >= 0.0 && p.midpoint <= 1.0))
        throw ValidationError("u midpoint " + std::to_string(p.midpoint) + " outside [0, 1]");
}
inline void validate(const upolicy::UniformRandom& p) {
    if (!(p.lo >= 0.0 && p.lo < p.hi && p.hi <= 1.0))
        throw ValidationError("u range [" + std::to_string(p.lo) + ", " + std::to_string(p.hi) +
                              ") must satisfy 0 <= lo < hi <= 1");
}
inline void validate(const upolicy::Fixed& p) {
    if (!(p.value >= 0.0 && p.value <= 1.0))
        throw ValidationError("fixed u " + std::to_string(p.value) + " outside [0, 1]");
}
inline void validate(const upolicy::PlugIn& p) {
    std::visit([](const auto& fb) { validate(fb); }, p.fallback);
}
inline void validate(const UPolicy& policy) {
    std::visit([](const auto& p) { validate(p); }, policy);
}

// ---------------------------------------------------------------------------
// Severity partition: which categories are corrected directly and which share
// the redistributed remainder.
// ---------------------------------------------------------------------------

/// Splits {1..M} into low / middle / high severity groups. High categories are
/// estimated directly from the sample; low and middle ones share the leftover
/// probability mass evenly (the middle group only matters for collapse()).
class SeverityPartition {
public:
    static SeverityPartition create(int num_categories, std::vector<int> low,
                                    std::vector<int> middle, std::vector<int> high) {
        if (num_categories < 2) throw ValidationError("partition needs at least 2 categories");
        if (high.empty()) throw ValidationError("high-severity group must be non-empty");
        std::set<int> seen;
        auto absorb = [&](const std::vector<int>& group, const char* name) {
            for (int s : group) {
                if (s < 1 || s > num_categories)
                    throw ValidationError(std::string(name) + " group contains category " +
                                          std::to_string(s) + ", valid range is 1.." +
                                          std::to_string(num_categories));
                if (!seen.insert(s).second)
                    throw ValidationError("category " + std::to_string(s) +
                                          " appears in more than one group");
            }
        };
        absorb(low, "low");
        absorb(middle, "middle");
        absorb(high, "high");
        if (static_cast<int>(seen.size()) != num_categories)
            throw ValidationError("partition covers " + std::to_string(seen.size()) + " of " +
                                  std::to_string(num_categories) + " categories");
        std::sort(low.begin(), low.end());
        std::sort(middle.begin(), middle.end());
        std::sort(high.begin(), high.end());
        return SeverityPartition(num_categories, std::move(low), std::move(middle),
                                 std::move(high));
    }

    /// Default split: only the top category counts as high severity.
    static SeverityPartition default_for(int num_categories) {
        std::vector<int> low(static_cast<std::size_t>(num_categories - 1));
        for (int s = 1; s < num_categories; ++s) low[static_cast<std::size_t>(s - 1)] = s;
        return create(num_categories, std::move(low), {}, {num_categories});
    }

    int num_categories() const noexcept { return m_; }
    const std::vector<int>& low() const noexcept { return low_; }
    const std::vector<int>& middle() const noexcept { return middle_; }
    const std::vector<int>& high() const noexcept { return high_; }

    bool is_high(int category) const {
        return std::binary_search(high_.begin(), high_.end(), category);
    }

    /// Sorted union of low and middle: the categories that share the
    /// redistributed mass.
    std::vector<int> redistribution_categories() const {
        std::vector<int> out;
        out.reserve(low_.size() + middle_.size());
        std::merge(low_.begin(), low_.end(), middle_.begin(), middle_.end(),
                   std::back_inserter(out));
        return out;
    }

private:
    SeverityPartition(int m, std::vector<int> low, std::vector<int> middle, std::vector<int> high)
        : m_(m), low_(std::move(low)), middle_(std::move(middle)), high_(std::move(high)) {}

    int m_;
    std::vector<int> low_;
    std::vector<int> middle_;
    std::vector<int> high_;
};

/// Everything correct() needs besides the counts. density_override replaces
/// the empirical category density f_s for listed categories; it exists so the
/// reproduction harness can feed in published density figures verbatim.
struct CorrectionConfig {
    SeverityPartition partition;
    UPolicy u_policy = default_u_policy();
    std::uint64_t seed = 0;
    std::map<int, double> density_override;

    static CorrectionConfig defaults(int num_categories) {
        return CorrectionConfig{SeverityPartition::default_for(num_categories)};
    }
};

// ---------------------------------------------------------------------------
// Results.
// ---------------------------------------------------------------------------

/// Which formula produced a number in the estimate.
enum class CorrectionRule {
    HighDirect,      // (N_T/N) * f_s, taken at face value
    MaxentShare,     // equal share of the leftover mass
    UPolicyProduct,  // u * p_tilde
};

struct CategoryTrace {
    CorrectionRule proportion_rule;
    CorrectionRule prevalence_rule;
};

/// The corrected estimate. Vectors are indexed by category - 1.
struct PrevalenceEstimate {
    std::vector<double> p_tilde;      // corrected category proportions, sums to 1
    std::vector<double> p_tilde_inf;  // corrected infected proportions, <= p_tilde
    double total_prevalence = 0.0;    // sum of p_tilde_inf
    std::map<int, double> u_used;     // u per category (1 for high: infected = all of p_tilde)
    std::vector<CategoryTrace> trace;

    int num_categories() const noexcept { return static_cast<int>(p_tilde.size()); }
};

// ---------------------------------------------------------------------------
// Building blocks.
// ---------------------------------------------------------------------------

/// C(x) = P[T=1] / p(x): how much the tested sample over-represents
/// individuals tested with probability p(x).
inline double correction_factor(double testing_rate, double p_of_x) {
    if (p_of_x <= 0.0)
        throw EstimationError("category never tested: cannot divide by p(x) = " +
                              std::to_string(p_of_x));
    return testing_rate / p_of_x;
}

/// (N_T/N) * f_s never exceeds the true category proportion p_s, because the
/// tested individuals of category s are at most all its members.
inline double implied_p_lower_bound(const TestedCounts& counts, int category) {
    const BiasedDensity f = empirical_density(counts);  // rejects empty samples
    const double ratio =
        static_cast<double>(counts.total_tested()) / static_cast<double>(counts.census());
    return ratio * f.category_share(category);
}

struct HighEstimate {
    double p_tilde;
    double p_tilde_inf;
};

/// Direct estimate for high-severity categories: such individuals are tested
/// near-certainly and near-certainly infected, so the category's share of the
/// census is (N_T/N) * f_s and is attributed entirely to the infected.
inline std::map<int, HighEstimate> correct_high(const TestedCounts& counts,
                                                const SeverityPartition& partition,
                                                const std::map<int, double>& override = {}) {
    const BiasedDensity f = empirical_density(counts);
    const double ratio =
        static_cast<double>(counts.total_tested()) / static_cast<double>(counts.census());
    std::map<int, HighEstimate> out;
    for (int s : partition.high()) {
        double f_s = f.category_share(s);
        if (auto it = override.find(s); it != override.end()) f_s = it->second;
        const double p = ratio * f_s;
        out.emplace(s, HighEstimate{p, p});
    }
    return out;
}

/// Maximum-entropy fill-in: the mass not claimed by the high group is split
/// evenly across the remaining categories.
inline std::map<int, double> redistribute_low(double p_plus, const std::vector<int>& categories) {
    if (!(p_plus >= 0.0 && p_plus <= 1.0 + 1e-12))
        throw ValidationError("high-group mass " + std::to_string(p_plus) + " outside [0, 1]");
    const double remaining = std::max(0.0, 1.0 - p_plus);
    if (categories.empty()) {
        if (remaining > 1e-12)
            throw ValidationError("partition error: no categories left to receive remaining mass " +
                                  std::to_string(remaining));
        return {};
    }
    const double share = remaining / static_cast<double>(categories.size());
    std::map<int, double> out;
    for (int s : categories) out.emplace(s, share);
    return out;
}

struct AssignedPrevalence {
    double p_tilde_inf;
    double u;
};

/// Picks u per category under the policy and sets p̃_s^(1) = u * p̃_s. Each
/// category draws from its own seed substream, so results do not depend on
/// iteration order or on which other categories are present.
inline std::map<int, AssignedPrevalence> assign_prevalence(const TestedCounts& counts,
                                                           const std::map<int, double>& p_tilde,
                                                           const UPolicy& policy,
                                                           std::uint64_t seed) {
    validate(policy);

    auto fallback_u = [&](const upolicy::Fallback& fb, int category) {
        return std::visit(
            [&](const auto& p) -> double {
                using T = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<T, upolicy::Mean>) {
                    return p.midpoint;
                } else if constexpr (std::is_same_v<T, upolicy::Fixed>) {
                    return p.value;
                } else {
                    auto engine = make_engine(seed, static_cast<std::uint64_t>(category));
                    return std::uniform_real_distribution<double>(p.lo, p.hi)(engine);
                }
            },
            fb);
    };

    auto pick_u = [&](int category) {
        return std::visit(
            [&](const auto& p) -> double {
                using T = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<T, upolicy::PlugIn>) {
                    const std::int64_t tested = counts.tested(category);
                    if (tested == 0) return fallback_u(p.fallback, category);
                    return static_cast<double>(counts.positive(category)) /
                           static_cast<double>(tested);
                } else if constexpr (std::is_same_v<T, upolicy::Mean>) {
                    return p.midpoint;
                } else if constexpr (std::is_same_v<T, upolicy::Fixed>) {
                    return p.value;
                } else {
                    auto engine = make_engine(seed, static_cast<std::uint64_t>(category));
                    return std::uniform_real_distribution<double>(p.lo, p.hi)(engine);
                }
            },
            policy);
    };

    std::map<int, AssignedPrevalence> out;
    for (const auto& [category, p] : p_tilde) {
        const double u = pick_u(category);
        out.emplace(category, AssignedPrevalence{u * p, u});
    }
    return out;
}

/// Folds the counts into two categories: everything outside the high group
/// becomes category 1, the high group becomes category 2. N and N_T carry
/// over unchanged.
inline TestedCounts collapse(const TestedCounts& counts, const SeverityPartition& partition) {
    if (partition.num_categories() != counts.num_categories())
        throw ValidationError("partition is for " + std::to_string(partition.num_categories()) +
                              " categories, counts have " +
                              std::to_string(counts.num_categories()));
    std::vector<std::int64_t> pos(2, 0), neg(2, 0);
    for (int s = 1; s <= counts.num_categories(); ++s) {
        const std::size_t j = partition.is_high(s) ? 1 : 0;
        pos[j] += counts.positive(s);
        neg[j] += counts.negative(s);
    }
    return TestedCounts::create(counts.census(), std::move(pos), std::move(neg));
}

/// Full correction pipeline. High categories are scaled directly from the
/// sample; the remaining mass is spread evenly over the other categories and
/// their infected share is set by the u policy. With M = 2 this reduces
/// exactly to the closed form p̃_2 = (N_T/N) f_2, p̃_1 = 1 - p̃_2,
/// p̃_1^(1) = u p̃_1 — no special casing needed.
inline PrevalenceEstimate correct(const TestedCounts& counts, const CorrectionConfig& config) {
    const int m = counts.num_categories();
    if (config.partition.num_categories() != m)
        throw ValidationError("partition is for " +
                              std::to_string(config.partition.num_categories()) +
                              " categories, counts have " + std::to_string(m));
    validate(config.u_policy);
    for (const auto& [s, value] : config.density_override) {
        if (s < 1 || s > m)
            throw ValidationError("density override references unknown category " +
                                  std::to_string(s));
        if (!(value >= 0.0 && value <= 1.0))
            throw ValidationError("density override for category " + std::to_string(s) +
                                  " outside [0, 1]");
    }
    if (counts.total_tested() == 0)
        throw EstimationError("empty sample: no tested individuals");

    const auto high = correct_high(counts, config.partition, config.density_override);
    double p_plus = 0.0;
    for (const auto& [s, est] : high) p_plus += est.p_tilde;

    const auto redist = redistribute_low(p_plus, config.partition.redistribution_categories());
    const auto assigned = assign_prevalence(counts, redist, config.u_policy, config.seed);

    PrevalenceEstimate out;
    out.p_tilde.assign(static_cast<std::size_t>(m), 0.0);
    out.p_tilde_inf.assign(static_cast<std::size_t>(m), 0.0);
    out.trace.assign(static_cast<std::size_t>(m),
                     CategoryTrace{CorrectionRule::MaxentShare, CorrectionRule::UPolicyProduct});
    for (const auto& [s, est] : high) {
        out.p_tilde[static_cast<std::size_t>(s - 1)] = est.p_tilde;
        out.p_tilde_inf[static_cast<std::size_t>(s - 1)] = est.p_tilde_inf;
        out.u_used[s] = 1.0;
        out.trace[static_cast<std::size_t>(s - 1)] =
            CategoryTrace{CorrectionRule::HighDirect, CorrectionRule::HighDirect};
    }
    for (const auto& [s, p] : redist) out.p_tilde[static_cast<std::size_t>(s - 1)] = p;
    for (const auto& [s, a] : assigned) {
        out.p_tilde_inf[static_cast<std::size_t>(s - 1)] = a.p_tilde_inf;
        out.u_used[s] = a.u;
    }
    for (double v : out.p_tilde_inf) out.total_prevalence += v;
    return out;
}

} // namespace prevcorr
