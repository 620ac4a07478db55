#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "prevcorr/correction.hpp"
#include "prevcorr/errors.hpp"
#include "prevcorr/model.hpp"
#include "prevcorr/random.hpp"

namespace prevcorr {

/// How draw_sample realizes the test-selection mechanism.
enum class SampleMode {
    MultinomialExact,  // cell totals multinomially, tested counts binomially: O(M)
    PerIndividual,     // literal mechanism, one categorical + Bernoulli draw per person: O(N)
};

struct SimulationConfig {
    PopulationSpec spec;
    CorrectionConfig correction;
    std::int64_t replicates = 1;
    std::uint64_t seed = 0;
    SampleMode sample_mode = SampleMode::MultinomialExact;
};

struct ReplicateResult {
    double naive = std::numeric_limits<double>::quiet_NaN();
    double corrected = std::numeric_limits<double>::quiet_NaN();
    std::int64_t n_tested = 0;
    bool skipped = false;  // empty sample, estimators undefined
};

struct EstimatorSummary {
    double mean = std::numeric_limits<double>::quiet_NaN();
    double bias = std::numeric_limits<double>::quiet_NaN();  // mean - true_prevalence
    double mse = std::numeric_limits<double>::quiet_NaN();
};

struct SimulationResult {
    std::vector<ReplicateResult> per_replicate;
    EstimatorSummary naive;
    EstimatorSummary corrected;
    double true_prevalence = 0.0;
    std::int64_t skipped = 0;  // replicates with an empty sample

    std::int64_t replicates() const noexcept {
        return static_cast<std::int64_t>(per_replicate.size());
    }
};

/// Ground-truth overall infection proportion: the infected cells' total mass.
inline double true_prevalence(const PopulationSpec& spec) {
    double total = 0.0;
    for (int s = 1; s <= spec.num_categories(); ++s) total += spec.cell_prop(s, 1);
    return total;
}

/// One biased sample from the spec's selection mechanism. Both modes share the
/// two-stage picture — land in a cell, then get tested with that cell's
/// probability — and agree in distribution; they differ only in cost.
inline TestedCounts draw_sample(const PopulationSpec& spec, std::uint64_t seed,
                                SampleMode mode = SampleMode::MultinomialExact) {
    const int m = spec.num_categories();
    std::vector<std::int64_t> pos(static_cast<std::size_t>(m), 0);
    std::vector<std::int64_t> neg(static_cast<std::size_t>(m), 0);
    auto engine = make_engine(seed);

    if (mode == SampleMode::MultinomialExact) {
        const auto cells = multinomial_draw(engine, spec.census(), spec.cell_props());
        for (int s = 1; s <= m; ++s) {
            for (int infected : {0, 1}) {
                const std::int64_t in_cell = cells[static_cast<std::size_t>(2 * (s - 1) + infected)];
                if (in_cell == 0) continue;
                const double q = spec.cell_test_prob(s, infected);
                std::int64_t tested = 0;
                if (q >= 1.0) {
                    tested = in_cell;
                } else if (q > 0.0) {
                    tested = std::binomial_distribution<std::int64_t>(in_cell, q)(engine);
                }
                (infected ? pos : neg)[static_cast<std::size_t>(s - 1)] += tested;
            }
        }
    } else {
        const auto props = spec.cell_props();
        std::discrete_distribution<int> cell_of(props.begin(), props.end());
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (std::int64_t person = 0; person < spec.census(); ++person) {
            const int cell = cell_of(engine);
            const int s = cell / 2 + 1;
            const int infected = cell % 2;
            const double q = spec.cell_test_prob(s, infected);
            if (unit(engine) < q) (infected ? pos : neg)[static_cast<std::size_t>(s - 1)] += 1;
        }
    }
    return TestedCounts::create(spec.census(), std::move(pos), std::move(neg));
}

/// Repeated-sampling study of the naive and corrected estimators against the
/// known truth. Replicate i derives its sampling and correction randomness
/// from (seed, i) alone, so results do not depend on execution order. Empty
/// samples are recorded as skipped and left out of the summary means.
inline SimulationResult run_monte_carlo(const SimulationConfig& config) {
    if (config.replicates < 1) throw ValidationError("replicate count must be at least 1");
    if (config.correction.partition.num_categories() != config.spec.num_categories())
        throw ValidationError("correction partition does not match the population's categories");

    SimulationResult result;
    result.true_prevalence = true_prevalence(config.spec);
    result.per_replicate.resize(static_cast<std::size_t>(config.replicates));

    for (std::int64_t i = 0; i < config.replicates; ++i) {
        const std::uint64_t sample_seed =
            substream_seed(config.seed, 2 * static_cast<std::uint64_t>(i));
        const std::uint64_t corr_seed =
            substream_seed(config.seed, 2 * static_cast<std::uint64_t>(i) + 1);
        const TestedCounts sample = draw_sample(config.spec, sample_seed, config.sample_mode);

        ReplicateResult& rep = result.per_replicate[static_cast<std::size_t>(i)];
        rep.n_tested = sample.total_tested();
        if (sample.total_tested() == 0) {
            rep.skipped = true;
            ++result.skipped;
            continue;
        }
        CorrectionConfig cc = config.correction;
        cc.seed = corr_seed;  // fresh u randomness per replicate
        rep.naive = naive_prevalence(sample);
        rep.corrected = correct(sample, cc).total_prevalence;
    }

    const std::int64_t used = config.replicates - result.skipped;
    if (used > 0) {
        double sum_n = 0.0, sum_c = 0.0, se_n = 0.0, se_c = 0.0;
        for (const auto& rep : result.per_replicate) {
            if (rep.skipped) continue;
            sum_n += rep.naive;
            sum_c += rep.corrected;
            se_n += (rep.naive - result.true_prevalence) * (rep.naive - result.true_prevalence);
            se_c += (rep.corrected - result.true_prevalence) *
                    (rep.corrected - result.true_prevalence);
        }
        const double denom = static_cast<double>(used);
        result.naive = {sum_n / denom, sum_n / denom - result.true_prevalence, se_n / denom};
        result.corrected = {sum_c / denom, sum_c / denom - result.true_prevalence, se_c / denom};
    }
    return result;
}

} // namespace prevcorr
