#pragma once

#include "debias/design.hpp"
#include "debias/linalg.hpp"

namespace debias {

// Building blocks of the regression-adjusted estimators.  "hat" quantities
// are sample versions; d and n_pop_like replace within-arm means by their
// full-sample counterparts where those are observable.
struct RegressionComponents {
    SymMatrix d_hat;    // p_a * (m_zz_a - zbar_a zbar_a') + p_b * (...)
    SymMatrix d;        // full-sample mean of z z'
    SymMatrix d_hat_a;  // m_zz_a - zbar_a zbar_a'
    SymMatrix d_hat_b;
    Vec n_hat;          // p_a * (m_yz_a - ybar_a zbar_a) + p_b * (...)
    Vec n_pop_like;     // p_a * m_yz_a + p_b * m_yz_b
    Vec n_hat_a;        // m_yz_a - ybar_a zbar_a
    Vec n_hat_b;
    Vec q_hat;          // d_hat^{-1} n_hat
    Vec q_hat_a;        // d_hat_a^{-1} n_hat_a; empty without per-arm slopes
    Vec q_hat_b;
};

// Exact complete-randomization moment constants for sample sizes (n, n_a).
// Products of three sampling indicators drive n_aaa / n_bbb / n_aab; the
// n_adj_* factors convert within-arm centered third moments to their
// unbiased versions; the c_* constants are the products that multiply the
// within-arm leverage-outcome terms of the bias estimators.
struct BiasConstants {
    int n;
    int n_a;
    int n_b;
    double n_aaa;
    double n_bbb;
    double n_aab;
    double n_adj_a;
    double n_adj_b;
    double c_a_ni;
    double c_b_ni;
    double c_a_i;
    double c_b_i;
};

BiasConstants bias_constants(int n, int n_a);

// Population leverages h[i] = z_i' D^{-1} z_i of the centered covariates.
// Their mean is exactly k.
struct Leverages {
    Vec h;
};

double diff_in_means(const ExperimentData& data);

// Per-arm slopes need each arm's covariance to be invertible, which arms
// of k or fewer units never satisfy; callers that only use the common
// slope can switch them off.
RegressionComponents regression_components(const ExperimentData& data,
                                           double rel_tol = kDefaultRelTol,
                                           bool per_arm_slopes = true);

// Covariate-adjusted difference in means with a common slope:
// ybar_a - ybar_b - { zbar_a' q_hat - zbar_b' q_hat }.  Identical to the
// treatment coefficient of OLS on (1, t, z).
double ate_noninteracted(const ExperimentData& data);

// Per-arm slopes: ybar_a - ybar_b - { zbar_a' q_hat_a - zbar_b' q_hat_b }.
// Identical to the treatment coefficient of OLS on (1, t, z, t*z) with
// centered z.  Requires both arms to have more than k + 1 units.
double ate_interacted(const ExperimentData& data);

Leverages leverages(const ExperimentData& data);

// Summands of the bias estimate for the common-slope estimator, exposed for
// term-by-term auditing.  total() is the bias estimate.
struct BiasTermsNi {
    double leverage_b;  // (1/n) (n_b/(n_b-1)) cov_b(h, y)
    double leverage_a;  // (1/n) (n_a/(n_a-1)) cov_a(h, y)
    double dinv_gap;    // (zbar_b - zbar_a)' (d_hat^{-1} - d^{-1}) n_hat
    double quad_a;      // (c_a_ni/n_a) sum_a (z-zbar_a)'D^{-1}(z-zbar_a)(y-ybar_a)
    double quad_b;      // (c_b_ni/n_b) analogous control-arm sum

    double total() const {
        return leverage_b - leverage_a + dinv_gap + quad_a - quad_b;
    }
};

// Summands for the per-arm-slopes estimator.
struct BiasTermsI {
    double leverage_b;  // (1/n) (n_a/(n_b-1)) cov_b(h, y)
    double dinv_gap_b;  // zbar_b' (d_hat_b^{-1} - d^{-1}) n_hat_b
    double quad_b;      // (c_b_i/n_b) within-arm quadratic sum, control
    double leverage_a;  // (1/n) (n_b/(n_a-1)) cov_a(h, y)
    double dinv_gap_a;  // zbar_a' (d_hat_a^{-1} - d^{-1}) n_hat_a
    double quad_a;      // (c_a_i/n_a) within-arm quadratic sum, treated

    double total() const {
        return leverage_b + dinv_gap_b - quad_b - leverage_a - dinv_gap_a +
               quad_a;
    }
};

// Bias corrections need at least 3 units per arm (within-arm covariances
// with an n_arm - 1 divisor and third-moment adjustments).
BiasTermsNi bias_terms_ni(const ExperimentData& data);
BiasTermsI bias_terms_i(const ExperimentData& data);

double bias_estimate_ni(const ExperimentData& data);
double bias_estimate_i(const ExperimentData& data);

double ate_debiased_ni(const ExperimentData& data);
double ate_debiased_i(const ExperimentData& data);

// Oracle decomposition of the slope error for one realized assignment.
// Needs the full potential-outcome table, so this is a diagnostic for
// simulated data, not an estimator.
//   q_hat = q + nu1 + nu2 + nu3          (common slope)
//   q_hat_a = q_a + nu1_a + nu2_a        (per-arm slopes, same for b)
struct BiasDecomposition {
    Vec q;
    Vec nu1;
    Vec nu2;
    Vec nu3;
    Vec q_a;
    Vec nu1_a;
    Vec nu2_a;
    Vec q_b;
    Vec nu1_b;
    Vec nu2_b;
};

BiasDecomposition decompose_bias_oracle(const PotentialOutcomeTable& table,
                                        const Assignment& assignment);

}  // namespace debias
