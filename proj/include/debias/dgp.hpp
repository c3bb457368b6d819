#pragma once

#include <string>

#include "debias/design.hpp"

namespace debias {

// Marginals used by the covariate schemes.  Values are produced by inverse
// transform at deterministic plotting positions, so tables are exactly
// reproducible.
enum class Marginal {
    beta_half_half,           // Beta(1/2, 1/2)
    triangular01,             // symmetric triangular on [0, 1]
    beta_two_five,            // Beta(2, 5)
    standard_normal,          // N(0, 1)
    uniform01,                // U(0, 1)
    uniform_squared,          // square of U(0, 1), i.e. quantile p^2
    uniform_squared_reversed  // (1 - p)^2
};

double marginal_quantile(Marginal dist, double p);

struct SchemeSpec {
    int id;
    Marginal x1;
    Marginal x2;
};

// Schemes 1..4: (Beta(1/2,1/2), triangular), (Beta(2,5), normal),
// (uniform, reversed squared uniform), (uniform, squared uniform).
SchemeSpec scheme_spec(int scheme);

// n x 2 covariate matrix; row i holds the two marginal quantiles at
// plotting position (i + 1) / (n + 1).
Matrix build_covariates(int scheme, int n);

// How the quadratic form behind the outcome function treats the covariates:
// raw uses x directly with no intercept column; with_intercept prepends a
// constant column first.  raw is the default; with_intercept is the first
// alternative to try when chasing coverage discrepancies.
enum class LeverageVariant { raw, with_intercept };

// Standardized self-influence scores: v_i = x_i' (sum_j x_j x_j')^{-1} x_i,
// centered and scaled to unit sample variance (n - 1 divisor).
Vec studentized_leverage(const Matrix& x,
                         LeverageVariant variant = LeverageVariant::raw);

// Potential-outcome variants on top of the scores h:
//   1: a = 2h, b = 0      2: a = h, b = -h      3: a = b = h
// The average treatment effect is exactly zero in all three.
PotentialOutcomeTable build_table(
    int scheme, int variant, int n,
    LeverageVariant leverage = LeverageVariant::raw);

std::string marginal_name(Marginal dist);

}  // namespace debias
