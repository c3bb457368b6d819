#pragma once

// Umbrella header: exact finite-sample bias corrections for
// regression-adjusted treatment effect estimators in completely randomized
// experiments, plus the randomization-distribution engine that checks them.

#include "debias/design.hpp"
#include "debias/dgp.hpp"
#include "debias/errors.hpp"
#include "debias/estimators.hpp"
#include "debias/linalg.hpp"
#include "debias/numeric.hpp"
#include "debias/randomization.hpp"
#include "debias/variance.hpp"
