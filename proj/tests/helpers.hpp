#pragma once

// Shared fixtures, built by hand so the tests do not lean on the library's
// embedded scenario data for their inputs.

#include "prevcorr/prevcorr.hpp"

namespace fixtures {

inline prevcorr::PopulationSpec toy_spec(std::int64_t census = 1000000) {
    return prevcorr::PopulationSpec::create(
        census, {0.45, 0.05, 0.2, 0.05, 0.075, 0.075, 0.01, 0.09},
        {0.001, 0.001, 0.01, 0.01, 0.1, 0.1, 0.9, 0.9});
}

inline prevcorr::TestedCounts toy_counts() {
    return prevcorr::TestedCounts::create(1000000, {50, 500, 7500, 81000},
                                          {450, 2000, 7500, 9000});
}

// Protocol-2 style sample: 306 symptomatic positives plus 101 asymptomatic
// individuals of whom 11 tested positive (category 1 = asymptomatic).
inline prevcorr::TestedCounts ship_protocol2() {
    return prevcorr::TestedCounts::create(3063, {11, 306}, {90, 0});
}

} // namespace fixtures
