#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "prevcorr/correction.hpp"
#include "prevcorr/errors.hpp"
#include "prevcorr/model.hpp"
#include "prevcorr/random.hpp"

namespace prevcorr {

/// Asymptotic (Delta-method) covariance structure of the corrected category
/// estimates. The implied M x M matrix is sigma2_high * c * w w^T with
/// w = (1/(M-1), ..., 1/(M-1), 1): `a` fills the leading (M-1) x (M-1) block,
/// `b` the last row/column off the corner, `c` the corner itself. Rank <= 1,
/// so b^2 = a*c holds exactly.
struct VarianceEstimate {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
    double sigma2_high = 0.0;  // variance of the high-group sample share
    int num_categories = 0;
    std::optional<double> total_variance;  // set once a weight vector is applied
};

/// Binomial-proportion variance of the high group's share of the sample:
/// f(1-f)/N_T, with f the tested fraction falling in the high categories.
inline double sigma2_of_high_density(const TestedCounts& counts,
                                     const SeverityPartition& partition) {
    const BiasedDensity density = empirical_density(counts);  // rejects empty samples
    double f = 0.0;
    for (int s : partition.high()) f += density.category_share(s);
    return f * (1.0 - f) / static_cast<double>(counts.total_tested());
}

/// Fills in the a/b/c scaffolding and sigma2. The a/b/c formulas treat the
/// high group as a single slot alongside M-1 redistributed categories, which
/// is the canonical single-high-category setup.
inline VarianceEstimate covariance_matrix(const TestedCounts& counts,
                                          const SeverityPartition& partition) {
    const int m = counts.num_categories();
    if (m < 2) throw ValidationError("variance model is degenerate with fewer than 2 categories");
    if (partition.num_categories() != m)
        throw ValidationError("partition is for " + std::to_string(partition.num_categories()) +
                              " categories, counts have " + std::to_string(m));
    VarianceEstimate ve;
    ve.num_categories = m;
    const double ratio =
        static_cast<double>(counts.total_tested()) / static_cast<double>(counts.census());
    ve.c = ratio * ratio;
    ve.b = ve.c / static_cast<double>(m - 1);
    ve.a = ve.c / (static_cast<double>(m - 1) * static_cast<double>(m - 1));
    ve.sigma2_high = sigma2_of_high_density(counts, partition);
    return ve;
}

/// Quadratic form w Sigma w^T with w = (u_1, ..., u_{M-1}, 1): the variance of
/// the total corrected prevalence, which is exactly that linear functional of
/// the category estimates. Expects one u per category with u = 1 on the final
/// (high) slot, as correct() records.
inline double total_prevalence_variance(const VarianceEstimate& ve,
                                        const std::map<int, double>& u_used) {
    if (static_cast<int>(u_used.size()) != ve.num_categories)
        throw ValidationError("u map has " + std::to_string(u_used.size()) + " entries, expected " +
                              std::to_string(ve.num_categories));
    double sum_u = 0.0;
    for (const auto& [s, u] : u_used) {
        if (s < 1 || s > ve.num_categories)
            throw ValidationError("u map references unknown category " + std::to_string(s));
        if (!(u >= 0.0 && u <= 1.0))
            throw ValidationError("u value " + std::to_string(u) + " outside [0, 1]");
        if (s == ve.num_categories) {
            if (u != 1.0)
                throw ValidationError("the final (high) slot must carry u = 1, got " +
                                      std::to_string(u));
        } else {
            sum_u += u;
        }
    }
    return ve.sigma2_high * (ve.a * sum_u * sum_u + 2.0 * ve.b * sum_u + ve.c);
}

/// One-call convenience: covariance scaffolding plus the total-prevalence
/// variance for the given weights.
inline VarianceEstimate estimate_variance(const TestedCounts& counts,
                                          const SeverityPartition& partition,
                                          const std::map<int, double>& u_used) {
    VarianceEstimate ve = covariance_matrix(counts, partition);
    ve.total_variance = total_prevalence_variance(ve, u_used);
    return ve;
}

/// Simulation check of the multinomial CLT that underpins the Delta method.
struct CltReport {
    std::int64_t sample_size = 0;
    std::int64_t replicates = 0;
    int dimension = 0;
    std::vector<std::vector<double>> empirical_covariance;
    std::vector<std::vector<double>> theoretical_covariance;
    double max_abs_deviation = 0.0;  // max |empirical - theoretical| over entries
    double max_se_ratio = 0.0;       // that deviation in Monte Carlo standard errors
};

/// Draws R multinomial samples of size n over the spec's 2M cells and compares
/// the empirical covariance of the proportion vector against the CLT limit
/// (Diag(p*) - p* p*^T)/n. Each entry's deviation is also expressed relative
/// to its own empirically estimated Monte Carlo standard error; under the CLT
/// max_se_ratio stays small (the acceptance threshold is 3).
inline CltReport multinomial_clt_check(const PopulationSpec& spec, std::int64_t n, std::int64_t r,
                                       std::uint64_t seed) {
    if (n < 100) throw ValidationError("CLT check needs a sample size of at least 100");
    if (r < 100) throw ValidationError("CLT check needs at least 100 replicates");

    const auto p_star = spec.cell_props();
    const int dim = static_cast<int>(p_star.size());
    const auto udim = static_cast<std::size_t>(dim);

    // All replicate proportion vectors (needed twice: covariance, then its SE).
    std::vector<std::vector<double>> props(static_cast<std::size_t>(r));
    for (std::int64_t rep = 0; rep < r; ++rep) {
        auto engine = make_engine(seed, static_cast<std::uint64_t>(rep));
        const auto cells = multinomial_draw(engine, n, p_star);
        auto& row = props[static_cast<std::size_t>(rep)];
        row.resize(udim);
        for (std::size_t i = 0; i < udim; ++i)
            row[i] = static_cast<double>(cells[i]) / static_cast<double>(n);
    }

    std::vector<double> mean(udim, 0.0);
    for (const auto& row : props)
        for (std::size_t i = 0; i < udim; ++i) mean[i] += row[i];
    for (double& v : mean) v /= static_cast<double>(r);

    CltReport report;
    report.sample_size = n;
    report.replicates = r;
    report.dimension = dim;
    report.empirical_covariance.assign(udim, std::vector<double>(udim, 0.0));
    report.theoretical_covariance.assign(udim, std::vector<double>(udim, 0.0));

    for (std::size_t i = 0; i < udim; ++i)
        for (std::size_t j = 0; j < udim; ++j)
            report.theoretical_covariance[i][j] =
                ((i == j ? p_star[i] : 0.0) - p_star[i] * p_star[j]) / static_cast<double>(n);

    // Entrywise: sample covariance, and the spread of the per-replicate
    // products that estimate it (their stdev / sqrt(R) is the MC error).
    for (std::size_t i = 0; i < udim; ++i) {
        for (std::size_t j = 0; j < udim; ++j) {
            double sum_q = 0.0, sum_q2 = 0.0;
            for (const auto& row : props) {
                const double q = (row[i] - mean[i]) * (row[j] - mean[j]);
                sum_q += q;
                sum_q2 += q * q;
            }
            const double rd = static_cast<double>(r);
            const double cov = sum_q / (rd - 1.0);
            report.empirical_covariance[i][j] = cov;
            const double dev = std::abs(cov - report.theoretical_covariance[i][j]);
            const double var_q = std::max(0.0, sum_q2 / rd - (sum_q / rd) * (sum_q / rd));
            const double se = std::sqrt(var_q / rd);
            report.max_abs_deviation = std::max(report.max_abs_deviation, dev);
            const double ratio = se > 0.0
                                     ? dev / se
                                     : (dev > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
            report.max_se_ratio = std::max(report.max_se_ratio, ratio);
        }
    }
    return report;
}

} // namespace prevcorr
