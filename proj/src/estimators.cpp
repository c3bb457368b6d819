#include "debias/estimators.hpp"

#include <cmath>
#include <string>

#include "debias/errors.hpp"

namespace debias {

namespace {

void require_arm_sizes(const GroupStats& g, int min_arm, const char* op) {
    if (g.n_a < min_arm || g.n_b < min_arm)
        throw DegenerateArm(std::string(op) + " needs at least " +
                            std::to_string(min_arm) + " units per arm, got " +
                            std::to_string(g.n_a) + "/" +
                            std::to_string(g.n_b));
}

}  // namespace

double diff_in_means(const ExperimentData& data) {
    const GroupStats g = group_stats(data);
    return g.mean_y_a - g.mean_y_b;
}

RegressionComponents regression_components(const ExperimentData& data,
                                           double rel_tol,
                                           bool per_arm_slopes) {
    const GroupStats g = group_stats(data);

    Matrix dhat_a =
        g.mean_zz_a.mat() - g.mean_z_a * g.mean_z_a.transpose();
    Matrix dhat_b =
        g.mean_zz_b.mat() - g.mean_z_b * g.mean_z_b.transpose();
    Matrix dhat = g.p_a * dhat_a + g.p_b * dhat_b;

    Vec n_hat_a = g.mean_yz_a - g.mean_y_a * g.mean_z_a;
    Vec n_hat_b = g.mean_yz_b - g.mean_y_b * g.mean_z_b;
    Vec n_hat = g.p_a * n_hat_a + g.p_b * n_hat_b;
    Vec n_pop_like = g.p_a * g.mean_yz_a + g.p_b * g.mean_yz_b;

    RegressionComponents rc;
    rc.d_hat = SymMatrix(dhat);
    rc.d = g.mean_zz;
    rc.d_hat_a = SymMatrix(dhat_a);
    rc.d_hat_b = SymMatrix(dhat_b);
    rc.n_hat = n_hat;
    rc.n_pop_like = n_pop_like;
    rc.n_hat_a = n_hat_a;
    rc.n_hat_b = n_hat_b;
    rc.q_hat = invert_spd(rc.d_hat, rel_tol).mat() * n_hat;
    if (per_arm_slopes) {
        rc.q_hat_a = invert_spd(rc.d_hat_a, rel_tol).mat() * n_hat_a;
        rc.q_hat_b = invert_spd(rc.d_hat_b, rel_tol).mat() * n_hat_b;
    }
    return rc;
}

double ate_noninteracted(const ExperimentData& data) {
    const GroupStats g = group_stats(data);
    const RegressionComponents rc =
        regression_components(data, kDefaultRelTol, false);
    // Full-sample mean of centered z is 0, so the "minus zbar" pieces of the
    // textbook expression vanish.
    return g.mean_y_a - g.mean_y_b -
           (g.mean_z_a.dot(rc.q_hat) - g.mean_z_b.dot(rc.q_hat));
}

double ate_interacted(const ExperimentData& data) {
    const GroupStats g = group_stats(data);
    if (g.n_a <= data.k() + 1 || g.n_b <= data.k() + 1)
        throw DegenerateArm(
            "interacted estimator needs more than k + 1 units per arm");
    const RegressionComponents rc = regression_components(data);
    return g.mean_y_a - g.mean_y_b -
           (g.mean_z_a.dot(rc.q_hat_a) - g.mean_z_b.dot(rc.q_hat_b));
}

Leverages leverages(const ExperimentData& data) {
    const GroupStats g = group_stats(data);
    const SymMatrix d_inv = invert_spd(g.mean_zz);
    const int n = data.n();
    Vec h(n);
    for (int i = 0; i < n; ++i) {
        const Vec zi = data.z.row(i).transpose();
        h[i] = quadratic_form(zi, d_inv);
    }
    return Leverages{std::move(h)};
}

BiasConstants bias_constants(int n, int n_a) {
    const int n_b = n - n_a;
    if (n_a < 3 || n_b < 3)
        throw DegenerateArm("bias constants need at least 3 units per arm");
    const double dn = n, da = n_a, db = n_b;

    // Moments of products of three sampling indicators, split by how many
    // distinct units they involve.
    const double pair = dn * (dn - 1);
    const double triple = dn * (dn - 1) * (dn - 2);
    const double n_aaa =
        (dn / (da * da * da)) * (da / dn - 3 * da * (da - 1) / pair +
                                 2 * da * (da - 1) * (da - 2) / triple);
    const double n_bbb =
        (dn / (db * db * db)) * (db / dn - 3 * db * (db - 1) / pair +
                                 2 * db * (db - 1) * (db - 2) / triple);
    // The fully-distinct piece enters twice (the two interleavings of the
    // repeated arm index with the other arm's index).
    const double n_aab = (dn / (da * da * db)) *
                         (-da * db / pair + 2 * da * (da - 1) * db / triple);
    // Converts a within-arm centered third moment into its unbiased version.
    const double n_adj_a =
        (triple / ((da - 1) * (da - 2) * da)) * (da * da * da) / (dn * dn * dn);
    const double n_adj_b =
        (triple / ((db - 1) * (db - 2) * db)) * (db * db * db) / (dn * dn * dn);

    BiasConstants c;
    c.n = n;
    c.n_a = n_a;
    c.n_b = n_b;
    c.n_aaa = n_aaa;
    c.n_bbb = n_bbb;
    c.n_aab = n_aab;
    c.n_adj_a = n_adj_a;
    c.n_adj_b = n_adj_b;
    c.c_a_ni = (da / db) * n_aaa * n_adj_a;
    c.c_b_ni = (da / db) * n_aab * n_adj_b;
    c.c_a_i = n_aaa * n_adj_a;
    c.c_b_i = n_bbb * n_adj_b;
    return c;
}

namespace {

// Shared intermediates of the two bias estimates.
struct BiasWork {
    GroupStats g;
    RegressionComponents rc;
    SymMatrix d_inv;
    double cov_a, cov_b;    // within-arm cov(h, y), 1/n_arm divisor
    double quad_a, quad_b;  // sum_arm (z - zbar)'D^{-1}(z - zbar)(y - ybar)
    Vec d_inv_n_hat;
    Vec d_inv_n_hat_a, d_inv_n_hat_b;
};

BiasWork bias_work(const ExperimentData& data, bool per_arm_slopes) {
    BiasWork w;
    w.g = group_stats(data);
    require_arm_sizes(w.g, 3, "bias correction");
    w.rc = regression_components(data, kDefaultRelTol, per_arm_slopes);
    w.d_inv = invert_spd(w.g.mean_zz);
    const Vec h = leverages(data).h;

    const int n = data.n();
    double sum_ha = 0, sum_hb = 0, sum_h_a = 0, sum_h_b = 0;
    double quad_a = 0, quad_b = 0;
    for (int i = 0; i < n; ++i) {
        const Vec zi = data.z.row(i).transpose();
        if (data.t[i]) {
            sum_ha += h[i] * data.y[i];
            sum_h_a += h[i];
            const Vec d = zi - w.g.mean_z_a;
            quad_a += quadratic_form(d, w.d_inv) * (data.y[i] - w.g.mean_y_a);
        } else {
            sum_hb += h[i] * data.y[i];
            sum_h_b += h[i];
            const Vec d = zi - w.g.mean_z_b;
            quad_b += quadratic_form(d, w.d_inv) * (data.y[i] - w.g.mean_y_b);
        }
    }
    w.cov_a = sum_ha / w.g.n_a - (sum_h_a / w.g.n_a) * w.g.mean_y_a;
    w.cov_b = sum_hb / w.g.n_b - (sum_h_b / w.g.n_b) * w.g.mean_y_b;
    w.quad_a = quad_a;
    w.quad_b = quad_b;
    w.d_inv_n_hat = w.d_inv.mat() * w.rc.n_hat;
    w.d_inv_n_hat_a = w.d_inv.mat() * w.rc.n_hat_a;
    w.d_inv_n_hat_b = w.d_inv.mat() * w.rc.n_hat_b;
    return w;
}

}  // namespace

BiasTermsNi bias_terms_ni(const ExperimentData& data) {
    const BiasWork w = bias_work(data, false);
    const BiasConstants c = bias_constants(w.g.n, w.g.n_a);
    const double n = w.g.n, na = w.g.n_a, nb = w.g.n_b;

    BiasTermsNi t;
    t.leverage_b = (1.0 / n) * (nb / (nb - 1.0)) * w.cov_b;
    t.leverage_a = (1.0 / n) * (na / (na - 1.0)) * w.cov_a;
    t.dinv_gap =
        (w.g.mean_z_b - w.g.mean_z_a).dot(w.rc.q_hat - w.d_inv_n_hat);
    t.quad_a = (c.c_a_ni / na) * w.quad_a;
    t.quad_b = (c.c_b_ni / nb) * w.quad_b;
    return t;
}

BiasTermsI bias_terms_i(const ExperimentData& data) {
    const BiasWork w = bias_work(data, true);
    const BiasConstants c = bias_constants(w.g.n, w.g.n_a);
    const double n = w.g.n, na = w.g.n_a, nb = w.g.n_b;

    BiasTermsI t;
    t.leverage_b = (1.0 / n) * (na / (nb - 1.0)) * w.cov_b;
    t.leverage_a = (1.0 / n) * (nb / (na - 1.0)) * w.cov_a;
    t.dinv_gap_b = w.g.mean_z_b.dot(w.rc.q_hat_b - w.d_inv_n_hat_b);
    t.dinv_gap_a = w.g.mean_z_a.dot(w.rc.q_hat_a - w.d_inv_n_hat_a);
    t.quad_b = (c.c_b_i / nb) * w.quad_b;
    t.quad_a = (c.c_a_i / na) * w.quad_a;
    return t;
}

double bias_estimate_ni(const ExperimentData& data) {
    return bias_terms_ni(data).total();
}

double bias_estimate_i(const ExperimentData& data) {
    return bias_terms_i(data).total();
}

double ate_debiased_ni(const ExperimentData& data) {
    return ate_noninteracted(data) - bias_estimate_ni(data);
}

double ate_debiased_i(const ExperimentData& data) {
    return ate_interacted(data) - bias_estimate_i(data);
}

BiasDecomposition decompose_bias_oracle(const PotentialOutcomeTable& table,
                                        const Assignment& assignment) {
    const ExperimentData data = realize(table, assignment);
    const GroupStats g = group_stats(data);
    const RegressionComponents rc = regression_components(data);
    const SymMatrix d_inv = invert_spd(g.mean_zz);
    const int n = table.n();
    const int k = table.k();

    // Population targets use the science table: both potential outcomes of
    // every unit, with the same centered covariates.
    const Matrix& z = data.z;
    Vec mean_az = Vec::Zero(k), mean_bz = Vec::Zero(k);
    for (int i = 0; i < n; ++i) {
        const Vec zi = z.row(i).transpose();
        mean_az += table.a[i] * zi;
        mean_bz += table.b[i] * zi;
    }
    mean_az /= n;
    mean_bz /= n;
    const double abar = table.a.mean();
    const double bbar = table.b.mean();

    BiasDecomposition d;
    d.q = d_inv.mat() * (g.p_a * mean_az + g.p_b * mean_bz);
    d.q_a = d_inv.mat() * mean_az;
    d.q_b = d_inv.mat() * mean_bz;

    // Common slope: q_hat - q = nu1 + nu2 + nu3.
    Vec mean_az_arm = Vec::Zero(k), mean_bz_arm = Vec::Zero(k);
    double abar_arm = 0, bbar_arm = 0;
    for (int i = 0; i < n; ++i) {
        const Vec zi = z.row(i).transpose();
        if (data.t[i]) {
            mean_az_arm += table.a[i] * zi;
            abar_arm += table.a[i];
        } else {
            mean_bz_arm += table.b[i] * zi;
            bbar_arm += table.b[i];
        }
    }
    mean_az_arm /= g.n_a;
    mean_bz_arm /= g.n_b;
    abar_arm /= g.n_a;
    bbar_arm /= g.n_b;

    // Centered-outcome within-arm means drive nu1 and nu3 (a* = a - abar);
    // the full-sample mean of a*z equals that of az because zbar = 0.
    Vec mean_astar_z_arm = mean_az_arm - abar * g.mean_z_a;
    Vec mean_bstar_z_arm = mean_bz_arm - bbar * g.mean_z_b;
    d.nu1 = d_inv.mat() * (g.p_a * (mean_astar_z_arm - mean_az) +
                           g.p_b * (mean_bstar_z_arm - mean_bz));
    d.nu2 = (invert_spd(rc.d_hat).mat() - d_inv.mat()) * rc.n_hat;
    d.nu3 = -d_inv.mat() * (g.p_a * (abar_arm - abar) * g.mean_z_a +
                            g.p_b * (bbar_arm - bbar) * g.mean_z_b);

    // Per-arm slopes: q_hat_a - q_a = nu1_a + nu2_a, likewise for b.
    d.nu1_a = (invert_spd(rc.d_hat_a).mat() - d_inv.mat()) * rc.n_hat_a;
    d.nu2_a = d_inv.mat() * (rc.n_hat_a - mean_az);
    d.nu1_b = (invert_spd(rc.d_hat_b).mat() - d_inv.mat()) * rc.n_hat_b;
    d.nu2_b = d_inv.mat() * (rc.n_hat_b - mean_bz);
    return d;
}

}  // namespace debias
