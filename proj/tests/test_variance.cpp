#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>

#include "debias/estimators.hpp"
#include "debias/numeric.hpp"
#include "debias/variance.hpp"
#include "doctest.h"

using namespace debias;

namespace {

ExperimentData sample_data(unsigned seed, int n = 14, int k = 2,
                           int n_a = 6) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Matrix z(n, k);
    Vec y(n);
    std::vector<int> t(n, 0);
    for (int i = 0; i < n_a; ++i) t[i] = 1;
    std::shuffle(t.begin(), t.end(), rng);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < k; ++j) z(i, j) = u(rng);
        y[i] = 1.0 + 0.9 * t[i] + z(i, 0) - 0.4 * z(i, k - 1) +
               0.3 * u(rng);
    }
    return make_experiment_data(y, t, z);
}

// Dense re-computation of the HC sandwich for the treatment coefficient.
double sandwich_by_hand(const FitContext& ctx, double power) {
    const Matrix& x = ctx.x;
    Vec w = ctx.residuals.array() /
            (1.0 - ctx.hat_diag.array()).pow(power / 2.0);
    Matrix meat = Matrix::Zero(x.cols(), x.cols());
    for (int i = 0; i < x.rows(); ++i)
        meat += w[i] * w[i] * x.row(i).transpose() * x.row(i);
    Matrix cov = ctx.xtx_inverse * meat * ctx.xtx_inverse;
    return cov(ctx.treatment_col, ctx.treatment_col);
}

}  // namespace

TEST_CASE("fit_ols recovers exact coefficients on noiseless data") {
    const int n = 12;
    Matrix x(n, 3);
    Vec y(n);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < n; ++i) {
        x(i, 0) = 1.0;
        x(i, 1) = i < 5 ? 1.0 : 0.0;
        x(i, 2) = u(rng);
        y[i] = 2.0 - 1.5 * x(i, 1) + 0.75 * x(i, 2);
    }
    FitContext ctx = fit_ols(y, x);
    CHECK(ctx.beta[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(ctx.beta[1] == doctest::Approx(-1.5).epsilon(1e-12));
    CHECK(ctx.beta[2] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(ctx.residuals.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("hat diagonal sums to the regressor count") {
    ExperimentData data = sample_data(7);
    CHECK(fit_unadjusted(data).hat_diag.sum() ==
          doctest::Approx(2.0).epsilon(1e-12));
    CHECK(fit_noninteracted(data).hat_diag.sum() ==
          doctest::Approx(4.0).epsilon(1e-12));
    CHECK(fit_interacted(data).hat_diag.sum() ==
          doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("design-matrix layout of the three fits") {
    ExperimentData data = sample_data(11);
    FitContext ni = fit_noninteracted(data);
    CHECK(ni.x.cols() == 2 + data.k());
    CHECK(ni.treatment_col == 1);
    CHECK((ni.x.col(0).array() == 1.0).all());
    FitContext it = fit_interacted(data);
    CHECK(it.x.cols() == 2 + 2 * data.k());
    // interacted columns vanish on the control arm
    for (int i = 0; i < data.n(); ++i)
        if (data.t[i] == 0)
            for (int j = 0; j < data.k(); ++j)
                CHECK(it.x(i, 2 + data.k() + j) == 0.0);
}

TEST_CASE("hc variances match a dense reimplementation") {
    ExperimentData data = sample_data(13);
    for (const FitContext& ctx :
         {fit_unadjusted(data), fit_noninteracted(data),
          fit_interacted(data)}) {
        CHECK(hc_variance(ctx, HcFlavor::hc2) ==
              doctest::Approx(sandwich_by_hand(ctx, 1.0)).epsilon(1e-11));
        CHECK(hc_variance(ctx, HcFlavor::hc3) ==
              doctest::Approx(sandwich_by_hand(ctx, 2.0)).epsilon(1e-11));
    }
}

TEST_CASE("bc residual contexts shift only the treatment coordinate") {
    ExperimentData data = sample_data(17);
    FitContext ctx = fit_noninteracted(data);
    const double debiased = ate_debiased_ni(data);
    FitContext bc = bc_residuals(ctx, debiased);
    CHECK(bc.beta[ctx.treatment_col] == doctest::Approx(debiased));
    for (int j = 0; j < ctx.beta.size(); ++j)
        if (j != ctx.treatment_col)
            CHECK(bc.beta[j] == doctest::Approx(ctx.beta[j]));
    CHECK((bc.hat_diag - ctx.hat_diag).cwiseAbs().maxCoeff() == 0.0);
    Vec expect = ctx.residuals -
                 (debiased - ctx.beta[ctx.treatment_col]) *
                     ctx.x.col(ctx.treatment_col);
    CHECK((bc.residuals - expect).cwiseAbs().maxCoeff() < 1e-13);
    // bc variance flavors on the shifted context
    CHECK(hc_variance(bc, HcFlavor::bc_hc2) ==
          doctest::Approx(sandwich_by_hand(bc, 1.0)).epsilon(1e-11));
}

TEST_CASE("satterthwaite df ignores the outcome") {
    ExperimentData d1 = sample_data(19);
    ExperimentData d2 = make_experiment_data(
        Vec(d1.y.array() * -2.7 + 5.0), d1.t,
        Matrix(d1.z.rowwise() + d1.centering_shift.transpose()));
    FitContext a = fit_noninteracted(d1);
    FitContext b = fit_noninteracted(d2);
    CHECK(satterthwaite_df(a, HcFlavor::hc2) ==
          doctest::Approx(satterthwaite_df(b, HcFlavor::hc2))
              .epsilon(1e-12));
    // the bc flavors reuse the base flavor's weights, so the df agrees
    CHECK(satterthwaite_df(a, HcFlavor::bc_hc2) ==
          doctest::Approx(satterthwaite_df(a, HcFlavor::hc2))
              .epsilon(1e-12));
    CHECK(satterthwaite_df(a, HcFlavor::hc2) > 1.0);
    CHECK(satterthwaite_df(a, HcFlavor::hc2) < d1.n());
}

TEST_CASE("student df conventions") {
    ExperimentData data = sample_data(23);
    FitContext ctx = fit_noninteracted(data);
    CHECK(student_df(ctx) == doctest::Approx(data.n() - 4));
    CHECK(student_df(ctx, TDfConvention::nminus1) ==
          doctest::Approx(data.n() - 1));
}

TEST_CASE("confidence_interval geometry") {
    using numeric::kZ975;
    Interval z = confidence_interval(1.0, 0.5, CiMode::normal);
    CHECK(z.lo == doctest::Approx(1.0 - kZ975 * 0.5).epsilon(1e-14));
    CHECK(z.hi == doctest::Approx(1.0 + kZ975 * 0.5).epsilon(1e-14));
    CHECK(z.width() == doctest::Approx(2 * kZ975 * 0.5).epsilon(1e-14));
    CHECK(z.covers(1.9));
    CHECK(!z.covers(2.1));

    Interval t = confidence_interval(1.0, 0.5, CiMode::student_t, 23);
    CHECK(t.width() ==
          doctest::Approx(2 * 2.0686576104190406 * 0.5).epsilon(1e-12));
    CHECK(t.width() > z.width());

    Interval t90 =
        confidence_interval(0.0, 1.0, CiMode::student_t, 11, 0.90);
    CHECK(t90.hi == doctest::Approx(1.7958848187036691).epsilon(1e-11));

    CHECK_THROWS_AS(
        confidence_interval(0.0, 1.0, CiMode::student_t, 0.0),
        DomainError);
    CHECK_THROWS_AS(confidence_interval(0.0, 1.0, CiMode::normal, 0, 1.5),
                    DomainError);
}

TEST_CASE("zero residual variance collapses the interval") {
    // constant outcome within each arm: HC2 variance is exactly zero
    Vec y(8);
    y << 2, 2, 2, 2, 1, 1, 1, 1;
    Matrix z = Matrix::Zero(8, 1);
    z << 0.3, -0.1, 0.4, 0.2, -0.3, 0.1, -0.4, -0.2;
    ExperimentData data =
        make_experiment_data(y, {1, 1, 1, 1, 0, 0, 0, 0}, z);
    FitContext ctx = fit_unadjusted(data);
    const double v = hc_variance(ctx, HcFlavor::hc2);
    CHECK(v >= 0.0);
    CHECK(v < 1e-24);
}

TEST_CASE("variance_report bundles se, dfs, and the three intervals") {
    ExperimentData data = sample_data(29);
    FitContext ctx = fit_noninteracted(data);
    const double center = ctx.beta[1];
    VarianceReport r = variance_report(ctx, HcFlavor::hc2, center);
    CHECK(r.se ==
          doctest::Approx(std::sqrt(hc_variance(ctx, HcFlavor::hc2)))
              .epsilon(1e-13));
    CHECK(r.df_t == doctest::Approx(data.n() - 4));
    CHECK(r.df_satt ==
          doctest::Approx(satterthwaite_df(ctx, HcFlavor::hc2)));
    CHECK(r.ci_z.width() < r.ci_t.width());
    CHECK(r.ci_z.covers(center));
    CHECK(0.5 * (r.ci_t.lo + r.ci_t.hi) == doctest::Approx(center));

    // bc flavor recenters residuals at the debiased estimate internally
    const double debiased = ate_debiased_ni(data);
    VarianceReport rb = variance_report(ctx, HcFlavor::bc_hc2, debiased);
    FitContext bc = bc_residuals(ctx, debiased);
    CHECK(rb.se ==
          doctest::Approx(std::sqrt(hc_variance(bc, HcFlavor::bc_hc2)))
              .epsilon(1e-13));
}

TEST_CASE("flavor and mode names round trip") {
    for (HcFlavor f : {HcFlavor::hc2, HcFlavor::hc3, HcFlavor::bc_hc2,
                       HcFlavor::bc_hc3})
        CHECK(hc_flavor_from_string(to_string(f)) == f);
    for (CiMode m :
         {CiMode::normal, CiMode::student_t, CiMode::satterthwaite})
        CHECK(ci_mode_from_string(to_string(m)) == m);
    CHECK_THROWS_AS(hc_flavor_from_string("hc9"), DomainError);
    CHECK_THROWS_AS(ci_mode_from_string("bootstrap"), DomainError);
}
