#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "debias/estimators.hpp"
#include "debias/randomization.hpp"
#include "debias/variance.hpp"
#include "doctest.h"
#include "rational_constants.hpp"

using namespace debias;

namespace {

PotentialOutcomeTable random_table(std::mt19937_64& rng, int n, int k) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Matrix z(n, k);
    Vec a(n), b(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < k; ++j) z(i, j) = u(rng);
        a[i] = u(rng) + 0.8 * z(i, 0);
        b[i] = u(rng) - 0.5 * z(i, k - 1);
    }
    return make_table(a, b, z);
}

ExperimentData draw_dataset(std::mt19937_64& rng, int n, int k, int n_a) {
    PotentialOutcomeTable table = random_table(rng, n, k);
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(n_a);
    return realize(table, make_assignment(idx, n));
}

}  // namespace

TEST_CASE("bias constants match exact rational arithmetic") {
    for (auto [n, n_a] : {std::pair{24, 8}, {12, 4}, {8, 3}, {9, 4},
                          {200, 67}, {1000, 333}}) {
        const BiasConstants c = bias_constants(n, n_a);
        const rational::ExactConstants e =
            rational::exact_bias_constants(n, n_a);
        auto rel = [](double got, double want) {
            return std::abs(got - want) / std::max(1.0, std::abs(want));
        };
        CHECK(rel(c.n_aaa, e.n_aaa.value()) < 1e-14);
        CHECK(rel(c.n_bbb, e.n_bbb.value()) < 1e-14);
        CHECK(rel(c.n_aab, e.n_aab.value()) < 1e-14);
        CHECK(rel(c.n_adj_a, e.n_adj_a.value()) < 1e-14);
        CHECK(rel(c.n_adj_b, e.n_adj_b.value()) < 1e-14);
        CHECK(rel(c.c_a_ni, e.c_a_ni.value()) < 1e-14);
        CHECK(rel(c.c_b_ni, e.c_b_ni.value()) < 1e-14);
        CHECK(rel(c.c_a_i, e.c_a_i.value()) < 1e-14);
        CHECK(rel(c.c_b_i, e.c_b_i.value()) < 1e-14);
    }
}

TEST_CASE("third-moment constants agree with direct enumeration") {
    // E[xbar_A ybar_A zbar_A] over all assignments equals
    // n_aaa * mean(x*y*z) for centered columns, and similarly for the
    // mixed-arm and within-arm centered versions.
    const int n = 7, n_a = 3;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Vec x(n), y(n), z(n);
    for (int i = 0; i < n; ++i) {
        x[i] = u(rng);
        y[i] = u(rng);
        z[i] = u(rng);
    }
    x.array() -= x.mean();
    y.array() -= y.mean();
    z.array() -= z.mean();
    const double third = (x.array() * y.array() * z.array()).mean();

    AssignmentSpace space(n, n_a);
    double aaa = 0, aab = 0, adj = 0;
    enumerate(space, [&](const Assignment& asg) {
        std::vector<char> in_a(n, 0);
        for (int i : asg.treated) in_a[i] = 1;
        double xa = 0, ya = 0, za = 0, zb = 0;
        for (int i = 0; i < n; ++i) {
            if (in_a[i]) {
                xa += x[i];
                ya += y[i];
                za += z[i];
            } else {
                zb += z[i];
            }
        }
        xa /= n_a;
        ya /= n_a;
        za /= n_a;
        zb /= n - n_a;
        double c = 0;
        for (int i : asg.treated)
            c += (x[i] - xa) * (y[i] - ya) * (z[i] - za);
        aaa += xa * ya * za;
        aab += xa * ya * zb;
        adj += c / n_a;
    });
    const double total = static_cast<double>(space.total());
    aaa /= total;
    aab /= total;
    adj /= total;

    const BiasConstants c = bias_constants(n, n_a);
    CHECK(aaa == doctest::Approx(c.n_aaa * third).epsilon(1e-12));
    CHECK(aab == doctest::Approx(c.n_aab * third).epsilon(1e-12));
    CHECK(c.n_adj_a * adj == doctest::Approx(third).epsilon(1e-12));
}

TEST_CASE("constants need at least 3 units per arm") {
    CHECK_THROWS_AS(bias_constants(8, 2), DegenerateArm);
    CHECK_THROWS_AS(bias_constants(8, 6), DegenerateArm);
    CHECK_NOTHROW(bias_constants(6, 3));
}

TEST_CASE("moment-form estimators equal the OLS treatment coefficients") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        ExperimentData data = draw_dataset(rng, 16, 3, 6);
        CHECK(ate_noninteracted(data) ==
              doctest::Approx(fit_noninteracted(data).beta[1])
                  .epsilon(1e-10));
        CHECK(ate_interacted(data) ==
              doctest::Approx(fit_interacted(data).beta[1]).epsilon(1e-10));
        CHECK(diff_in_means(data) ==
              doctest::Approx(fit_unadjusted(data).beta[1]).epsilon(1e-10));
    }
}

TEST_CASE("debiased estimators are exactly unbiased under enumeration") {
    std::mt19937_64 rng(29);
    for (auto [n, n_a] : {std::pair{8, 4}, {10, 4}, {12, 4}}) {
        PotentialOutcomeTable table = random_table(rng, n, 2);
        const double ate = average_treatment_effect(table);
        AssignmentSpace space(n, n_a);
        long double sum_ni = 0, sum_i = 0, sum_dm = 0;
        enumerate(space, [&](const Assignment& asg) {
            ExperimentData data = realize(table, asg);
            sum_ni += ate_debiased_ni(data);
            sum_i += ate_debiased_i(data);
            sum_dm += diff_in_means(data);
        });
        const auto total = static_cast<long double>(space.total());
        CHECK(std::abs(static_cast<double>(sum_ni / total) - ate) < 1e-9);
        CHECK(std::abs(static_cast<double>(sum_i / total) - ate) < 1e-9);
        CHECK(std::abs(static_cast<double>(sum_dm / total) - ate) < 1e-9);
    }
}

TEST_CASE("the bias estimate matches the enumerated OLS bias") {
    // E[bias_estimate] equals the actual bias of the uncorrected estimator;
    // this is the content of the unbiasedness theorems, checked termwise.
    std::mt19937_64 rng(31);
    PotentialOutcomeTable table = random_table(rng, 10, 2);
    const double ate = average_treatment_effect(table);
    AssignmentSpace space(10, 4);
    long double sum_ni = 0, sum_i = 0, est_ni = 0, est_i = 0;
    enumerate(space, [&](const Assignment& asg) {
        ExperimentData data = realize(table, asg);
        sum_ni += ate_noninteracted(data);
        sum_i += ate_interacted(data);
        est_ni += bias_estimate_ni(data);
        est_i += bias_estimate_i(data);
    });
    const auto total = static_cast<long double>(space.total());
    CHECK(static_cast<double>((sum_ni - est_ni) / total) ==
          doctest::Approx(ate).epsilon(1e-10));
    CHECK(static_cast<double>((sum_i - est_i) / total) ==
          doctest::Approx(ate).epsilon(1e-10));
}

TEST_CASE("bias term breakdown sums to the estimate") {
    std::mt19937_64 rng(37);
    for (int trial = 0; trial < 10; ++trial) {
        ExperimentData data = draw_dataset(rng, 12, 2, 5);
        CHECK(bias_terms_ni(data).total() ==
              doctest::Approx(bias_estimate_ni(data)).epsilon(1e-13));
        CHECK(bias_terms_i(data).total() ==
              doctest::Approx(bias_estimate_i(data)).epsilon(1e-13));
        CHECK(ate_debiased_ni(data) ==
              doctest::Approx(ate_noninteracted(data) -
                              bias_estimate_ni(data))
                  .epsilon(1e-13));
        CHECK(ate_debiased_i(data) ==
              doctest::Approx(ate_interacted(data) - bias_estimate_i(data))
                  .epsilon(1e-13));
    }
}

TEST_CASE("estimates are translation invariant and scale equivariant") {
    std::mt19937_64 rng(41);
    ExperimentData data = draw_dataset(rng, 14, 2, 5);
    Vec y2 = data.y.array() + 100.0;
    ExperimentData shifted = make_experiment_data(
        y2, data.t, data.z.rowwise() + data.centering_shift.transpose());
    Vec y3 = data.y * 3.0;
    ExperimentData scaled = make_experiment_data(
        y3, data.t, data.z.rowwise() + data.centering_shift.transpose());

    auto all_five = [](const ExperimentData& d) {
        return std::array<double, 5>{diff_in_means(d), ate_noninteracted(d),
                                     ate_interacted(d), ate_debiased_ni(d),
                                     ate_debiased_i(d)};
    };
    auto base = all_five(data), shift = all_five(shifted), scale = all_five(scaled);
    for (int j = 0; j < 5; ++j) {
        CHECK(shift[j] == doctest::Approx(base[j]).epsilon(1e-9));
        CHECK(scale[j] == doctest::Approx(3.0 * base[j]).epsilon(1e-11));
    }
}

TEST_CASE("estimates are invariant to affine covariate maps") {
    std::mt19937_64 rng(43);
    ExperimentData data = draw_dataset(rng, 14, 2, 6);
    Matrix a(2, 2);
    a << 2.0, -0.7, 0.4, 1.5;  // invertible
    Matrix z_raw = data.z.rowwise() + data.centering_shift.transpose();
    Matrix z2 = (z_raw * a).rowwise() + Eigen::RowVector2d(5.0, -3.0);
    ExperimentData mapped = make_experiment_data(data.y, data.t, z2);
    CHECK(ate_noninteracted(mapped) ==
          doctest::Approx(ate_noninteracted(data)).epsilon(1e-10));
    CHECK(ate_interacted(mapped) ==
          doctest::Approx(ate_interacted(data)).epsilon(1e-10));
    CHECK(ate_debiased_ni(mapped) ==
          doctest::Approx(ate_debiased_ni(data)).epsilon(1e-10));
    CHECK(ate_debiased_i(mapped) ==
          doctest::Approx(ate_debiased_i(data)).epsilon(1e-10));
}

TEST_CASE("population leverages average to the covariate count") {
    std::mt19937_64 rng(47);
    for (int k : {1, 2, 4}) {
        ExperimentData data = draw_dataset(rng, 15, k, 6);
        Leverages lev = leverages(data);
        CHECK(lev.h.mean() == doctest::Approx(k).epsilon(1e-12));
        CHECK(lev.h.minCoeff() > 0.0);
    }
}

TEST_CASE("corrections refuse arms with fewer than 3 units") {
    std::mt19937_64 rng(53);
    ExperimentData data = draw_dataset(rng, 10, 2, 2);
    CHECK_THROWS_AS(bias_estimate_ni(data), DegenerateArm);
    CHECK_THROWS_AS(bias_estimate_i(data), DegenerateArm);
    CHECK_NOTHROW(ate_noninteracted(data));
}

TEST_CASE("slope error decomposition reconstructs the fitted slopes") {
    std::mt19937_64 rng(59);
    PotentialOutcomeTable table = random_table(rng, 12, 2);
    AssignmentSpace space(12, 5);
    int checked = 0;
    enumerate(space, [&](const Assignment& asg) {
        if (++checked % 37 != 0) return;  // spot check a spread of draws
        ExperimentData data = realize(table, asg);
        RegressionComponents rc = regression_components(data);
        BiasDecomposition d = decompose_bias_oracle(table, asg);
        Vec rebuilt = d.q + d.nu1 + d.nu2 + d.nu3;
        CHECK((rebuilt - rc.q_hat).cwiseAbs().maxCoeff() < 1e-10);
        Vec rebuilt_a = d.q_a + d.nu1_a + d.nu2_a;
        Vec rebuilt_b = d.q_b + d.nu1_b + d.nu2_b;
        CHECK((rebuilt_a - rc.q_hat_a).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((rebuilt_b - rc.q_hat_b).cwiseAbs().maxCoeff() < 1e-10);
    });
    CHECK(checked == 792);
}

TEST_CASE("linear slope-error term averages to zero exactly") {
    // nu1 replaces within-arm means of the population-centered outcomes by
    // their full-sample counterparts, so its enumeration mean vanishes; the
    // slope bias lives entirely in the nonlinear terms.
    std::mt19937_64 rng(61);
    PotentialOutcomeTable table = random_table(rng, 10, 2);
    AssignmentSpace space(10, 4);
    Vec sum_nu1 = Vec::Zero(2);
    Vec sum_err = Vec::Zero(2), sum_terms = Vec::Zero(2);
    enumerate(space, [&](const Assignment& asg) {
        ExperimentData data = realize(table, asg);
        RegressionComponents rc = regression_components(data);
        BiasDecomposition d = decompose_bias_oracle(table, asg);
        sum_nu1 += d.nu1;
        sum_err += rc.q_hat - d.q;
        sum_terms += d.nu1 + d.nu2 + d.nu3;
    });
    const double total = static_cast<double>(space.total());
    CHECK(sum_nu1.cwiseAbs().maxCoeff() / total < 1e-12);
    CHECK((sum_err - sum_terms).cwiseAbs().maxCoeff() / total < 1e-12);
}
