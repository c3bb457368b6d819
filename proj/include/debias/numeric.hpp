#pragma once

namespace debias::numeric {

// Two-sided 95% normal critical value, frozen so tests and goldens do not
// depend on the quantile code path.
inline constexpr double kZ975 = 1.959963984540054;

// log Gamma(x) for x > 0, Lanczos approximation (g = 7, 9 terms).
double log_gamma(double x);

double log_beta(double a, double b);

// Regularized incomplete beta I_x(a, b) via the Lentz continued fraction.
double reg_inc_beta(double a, double b, double x);

// Inverse of I_x(a, b) in x: bisection to a tight bracket, then Newton
// polish.  Monotone in p.
double inv_reg_inc_beta(double a, double b, double p);

// Lower-tail standard normal quantile (Wichura's PPND16 rational
// approximation, |error| < 1e-15 over (0,1)).
double normal_quantile(double p);

// Lower-tail Student-t quantile for df > 0.  Exact relation to the inverse
// incomplete beta with a Cornish-Fisher seed and safeguarded Newton steps.
double student_t_quantile(double p, double df);

}  // namespace debias::numeric
