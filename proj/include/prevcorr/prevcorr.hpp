#pragma once

// Umbrella header: the whole library in one include.

#include "prevcorr/errors.hpp"
#include "prevcorr/random.hpp"
#include "prevcorr/model.hpp"
#include "prevcorr/correction.hpp"
#include "prevcorr/variance.hpp"
#include "prevcorr/simulator.hpp"
#include "prevcorr/io.hpp"
#include "prevcorr/reproduce.hpp"
