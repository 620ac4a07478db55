#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "prevcorr/correction.hpp"
#include "prevcorr/errors.hpp"
#include "prevcorr/model.hpp"

namespace prevcorr {

/// The bundled case studies: the worked synthetic example and two real
/// outbreaks where near-complete testing provides a reference prevalence.
enum class CaseStudy { Toy, DiamondPrincess, Lombardy };

inline std::string to_string(CaseStudy c) {
    switch (c) {
        case CaseStudy::Toy: return "toy";
        case CaseStudy::DiamondPrincess: return "diamond-princess";
        case CaseStudy::Lombardy: return "lombardy";
    }
    return "unknown";
}

inline std::optional<CaseStudy> parse_case(std::string_view name) {
    if (name == "toy") return CaseStudy::Toy;
    if (name == "diamond-princess") return CaseStudy::DiamondPrincess;
    if (name == "lombardy") return CaseStudy::Lombardy;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Embedded scenario data. Counts are the published tallies; the population
// specs for the two outbreaks are reconstructions -- cell proportions from the
// published counts, testing probabilities chosen as an illustrative
// symptom-biased regime so the simulator can exercise the scenarios.
// ---------------------------------------------------------------------------

namespace scenarios {

/// Synthetic four-category population of one million: half asymptomatic,
/// testing probability rising steeply with symptom severity.
inline PopulationSpec toy_population_spec() {
    return PopulationSpec::create(1000000,
                                  {0.45, 0.05, 0.2, 0.05, 0.075, 0.075, 0.01, 0.09},
                                  {0.001, 0.001, 0.01, 0.01, 0.1, 0.1, 0.9, 0.9});
}

/// The tested sample the toy population implies in expectation (N_T = 108000).
inline TestedCounts toy_counts() {
    return TestedCounts::create(1000000, {50, 500, 7500, 81000}, {450, 2000, 7500, 9000});
}

/// Cruise-ship outbreak: 3063 tested, 634 positive, of whom 306 were
/// symptomatic. Category 1 = asymptomatic, category 2 = symptomatic.
inline PopulationSpec diamond_princess_population_spec() {
    const double n = 3063.0;
    return PopulationSpec::create(3063, {2429.0 / n, 328.0 / n, 0.0, 306.0 / n},
                                  {0.05, 0.05, 0.9, 0.9});
}

/// The four sampling protocols: (1) symptomatic positives only, (2) 75%
/// symptomatic representation, (3) balanced symptomatic/asymptomatic,
/// (4) random sample at population frequencies.
inline TestedCounts diamond_princess_counts(int protocol) {
    switch (protocol) {
        case 1: return TestedCounts::create(3063, {0, 306}, {0, 0});
        case 2: return TestedCounts::create(3063, {11, 306}, {90, 0});
        case 3: return TestedCounts::create(3063, {33, 306}, {273, 0});
        case 4: return TestedCounts::create(3063, {48, 50}, {402, 0});
        default: throw ValidationError("protocol must be 1..4, got " + std::to_string(protocol));
    }
}

/// Municipality screening: 5824 tested, 932 positive, of whom 289 were
/// symptomatic. Category 1 = asymptomatic, category 2 = symptomatic.
inline PopulationSpec lombardy_population_spec() {
    const double n = 5824.0;
    return PopulationSpec::create(5824, {4892.0 / n, 643.0 / n, 0.0, 289.0 / n},
                                  {0.05, 0.05, 0.9, 0.9});
}

inline TestedCounts lombardy_counts(int protocol) {
    switch (protocol) {
        case 1: return TestedCounts::create(5824, {0, 289}, {0, 0});
        case 2: return TestedCounts::create(5824, {10, 289}, {85, 0});
        case 3: return TestedCounts::create(5824, {32, 289}, {257, 0});
        case 4: return TestedCounts::create(5824, {66, 30}, {504, 0});
        default: throw ValidationError("protocol must be 1..4, got " + std::to_string(protocol));
    }
}

/// Protocol-4 reference computations density-weight the high group with the
/// asymptomatic sample share (0.90 and 0.95) instead of the symptomatic share
/// the counts imply. The reproduction injects those figures through the
/// density override to follow the reference arithmetic; the discrepancy is
/// surfaced as a note, not resolved.
inline std::map<int, double> density_override_for(CaseStudy c, int protocol) {
    if (protocol != 4) return {};
    if (c == CaseStudy::DiamondPrincess) return {{2, 0.90}};
    if (c == CaseStudy::Lombardy) return {{2, 0.95}};
    return {};
}

} // namespace scenarios

// ---------------------------------------------------------------------------
// Reproduction: rerun every published figure and compare.
// ---------------------------------------------------------------------------

struct ScenarioCheck {
    std::string protocol;  // "toy" or "protocol-1".."protocol-4"
    std::string label;
    double expected = 0.0;  // the published figure
    double computed = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    std::string note;  // documented discrepancy, when one exists
};

struct ReproductionReport {
    std::string case_name;
    double population_prevalence = 0.0;  // reference truth for the scenario
    std::vector<ScenarioCheck> checks;
    bool all_pass = true;
};

namespace detail {

inline void add_check(ReproductionReport& report, std::string protocol, std::string label,
                      double expected, double computed, double tolerance, std::string note = {}) {
    const bool pass = std::abs(expected - computed) <= tolerance;
    report.all_pass = report.all_pass && pass;
    report.checks.push_back({std::move(protocol), std::move(label), expected, computed, tolerance,
                             pass, std::move(note)});
}

struct PublishedFigure {
    std::string label;
    double expected;
    double tolerance;
    std::string note;
    bool is_naive;  // compare against the naive estimate instead of the corrected one
};

inline void run_protocol(ReproductionReport& report, CaseStudy c, int protocol,
                         const TestedCounts& counts,
                         const std::vector<PublishedFigure>& figures) {
    CorrectionConfig config = CorrectionConfig::defaults(counts.num_categories());
    config.density_override = scenarios::density_override_for(c, protocol);
    const double naive = naive_prevalence(counts);
    const double corrected = correct(counts, config).total_prevalence;
    const std::string tag = "protocol-" + std::to_string(protocol);
    for (const auto& fig : figures)
        add_check(report, tag, fig.label, fig.expected, fig.is_naive ? naive : corrected,
                  fig.tolerance, fig.note);
}

} // namespace detail

/// Reruns a case study from the embedded data and compares every published
/// figure against the freshly computed value. `protocol` restricts the two
/// outbreak cases to a single sampling protocol; the toy case has none.
inline ReproductionReport reproduce_case(CaseStudy c, std::optional<int> protocol = std::nullopt) {
    if (protocol && (*protocol < 1 || *protocol > 4))
        throw ValidationError("protocol must be 1..4, got " + std::to_string(*protocol));

    ReproductionReport report;
    report.case_name = to_string(c);

    if (c == CaseStudy::Toy) {
        if (protocol) throw ValidationError("the toy case has no sampling protocols");
        report.population_prevalence = 0.265;
        const TestedCounts counts = scenarios::toy_counts();
        const BiasedDensity density = empirical_density(counts);
        const double naive = naive_prevalence(counts);
        const double corrected =
            correct(counts, CorrectionConfig::defaults(counts.num_categories())).total_prevalence;
        detail::add_check(report, "toy", "naive prevalence", 0.8245, naive, 0.0005);
        detail::add_check(report, "toy", "corrected total prevalence", 0.3347, corrected, 0.01,
                          "reference arithmetic rounds the redistributed share to 0.306; exact "
                          "redistribution gives 0.30333 and a total near 0.3327");
        detail::add_check(report, "toy", "tested share, category 1", 0.004,
                          density.category_share(1), 0.001);
        detail::add_check(report, "toy", "tested share, category 2", 0.023,
                          density.category_share(2), 0.001);
        detail::add_check(report, "toy", "tested share, category 3", 0.14,
                          density.category_share(3), 0.005,
                          "reference value is printed at two decimals; compared at half of that "
                          "precision (the exact share is 15000/108000 = 0.13889)");
        detail::add_check(report, "toy", "tested share, category 4", 0.833,
                          density.category_share(4), 0.001);
        return report;
    }

    const bool dp = (c == CaseStudy::DiamondPrincess);
    report.population_prevalence = dp ? 634.0 / 3063.0 : 932.0 / 5824.0;
    auto counts_for = [&](int p) {
        return dp ? scenarios::diamond_princess_counts(p) : scenarios::lombardy_counts(p);
    };
    const std::string override_note =
        dp ? "reference computation takes 0.90 (the asymptomatic sample share) as the "
             "high-group density; reproduced verbatim via a density override"
           : "reference computation takes 0.95 (the asymptomatic sample share) as the "
             "high-group density; reproduced verbatim via a density override";

    using Figures = std::vector<detail::PublishedFigure>;
    std::map<int, Figures> by_protocol;
    if (dp) {
        by_protocol[1] = {{"naive prevalence", 1.0, 1e-9, "", true},
                          {"corrected total prevalence", 0.549, 0.002, "", false}};
        by_protocol[2] = {{"naive prevalence", 0.779, 0.002, "", true},
                          {"corrected total prevalence", 0.197, 0.002, "", false}};
        by_protocol[3] = {{"naive prevalence", 0.554, 0.002, "", true},
                          {"corrected total prevalence", 0.196, 0.002, "", false}};
        by_protocol[4] = {{"naive prevalence", 0.196, 0.002, "", true},
                          {"corrected total prevalence", 0.237, 0.002, override_note, false}};
    } else {
        by_protocol[1] = {{"naive prevalence", 1.0, 1e-9, "", true},
                          {"corrected total prevalence", 0.525, 0.002, "", false}};
        by_protocol[2] = {{"naive prevalence", 0.78, 0.005, "", true},
                          {"corrected total prevalence", 0.149, 0.002, "", false}};
        by_protocol[3] = {
            {"corrected total prevalence", 0.155, 0.002,
             "reference text prints 0.11 for the sum 0.105 + 0.05 -- an arithmetic slip; the "
             "recomputed 0.155 is asserted and the printed figure flagged",
             false}};
        by_protocol[4] = {{"naive prevalence", 0.16, 0.002, "", true},
                          {"corrected total prevalence", 0.2024, 0.002, override_note, false}};
    }

    for (const auto& [p, figures] : by_protocol) {
        if (protocol && *protocol != p) continue;
        detail::run_protocol(report, c, p, counts_for(p), figures);
    }
    return report;
}

} // namespace prevcorr
