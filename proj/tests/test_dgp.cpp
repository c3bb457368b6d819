#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "debias/dgp.hpp"
#include "doctest.h"

using namespace debias;

TEST_CASE("marginal quantiles against reference values") {
    CHECK(marginal_quantile(Marginal::beta_half_half, 0.3) ==
          doctest::Approx(0.2061073738537634).epsilon(1e-12));
    CHECK(marginal_quantile(Marginal::beta_half_half, 0.5) ==
          doctest::Approx(0.5).epsilon(1e-12));
    CHECK(marginal_quantile(Marginal::triangular01, 0.2) ==
          doctest::Approx(0.31622776601683794).epsilon(1e-13));
    CHECK(marginal_quantile(Marginal::triangular01, 0.8) ==
          doctest::Approx(1.0 - 0.31622776601683794).epsilon(1e-13));
    CHECK(marginal_quantile(Marginal::beta_two_five, 0.04) ==
          doctest::Approx(0.05566580036830409).epsilon(1e-10));
    CHECK(marginal_quantile(Marginal::beta_two_five, 0.5) ==
          doctest::Approx(0.26444998329566005).epsilon(1e-10));
    CHECK(marginal_quantile(Marginal::beta_two_five, 0.96) ==
          doctest::Approx(0.60210167315947749).epsilon(1e-10));
    CHECK(marginal_quantile(Marginal::standard_normal, 0.975) ==
          doctest::Approx(1.959963984540054).epsilon(1e-13));
    CHECK(marginal_quantile(Marginal::uniform01, 0.37) ==
          doctest::Approx(0.37));
    CHECK(marginal_quantile(Marginal::uniform_squared, 0.3) ==
          doctest::Approx(0.09).epsilon(1e-14));
    CHECK(marginal_quantile(Marginal::uniform_squared_reversed, 0.3) ==
          doctest::Approx(0.49).epsilon(1e-14));
    CHECK_THROWS_AS(marginal_quantile(Marginal::uniform01, 0.0),
                    DomainError);
    CHECK_THROWS_AS(marginal_quantile(Marginal::uniform01, 1.0),
                    DomainError);
}

TEST_CASE("quantiles are monotone in p") {
    // uniform_squared_reversed maps p to (1-p)^2, so it decreases.
    for (Marginal m :
         {Marginal::beta_half_half, Marginal::triangular01,
          Marginal::beta_two_five, Marginal::standard_normal,
          Marginal::uniform_squared, Marginal::uniform_squared_reversed}) {
        const double sign =
            m == Marginal::uniform_squared_reversed ? -1.0 : 1.0;
        double prev = sign * marginal_quantile(m, 0.001);
        for (double p = 0.01; p < 1.0; p += 0.01) {
            const double q = sign * marginal_quantile(m, p);
            CHECK(q >= prev);
            prev = q;
        }
    }
}

TEST_CASE("scheme specs pair the documented marginals") {
    CHECK(scheme_spec(1).x1 == Marginal::beta_half_half);
    CHECK(scheme_spec(1).x2 == Marginal::triangular01);
    CHECK(scheme_spec(2).x1 == Marginal::beta_two_five);
    CHECK(scheme_spec(2).x2 == Marginal::standard_normal);
    CHECK(scheme_spec(3).x1 == Marginal::uniform01);
    CHECK(scheme_spec(3).x2 == Marginal::uniform_squared_reversed);
    CHECK(scheme_spec(4).x1 == Marginal::uniform01);
    CHECK(scheme_spec(4).x2 == Marginal::uniform_squared);
    CHECK_THROWS_AS(scheme_spec(0), DomainError);
    CHECK_THROWS_AS(scheme_spec(5), DomainError);
    CHECK(marginal_name(Marginal::beta_two_five) == "beta(2,5)");
}

TEST_CASE("covariates sit on the equally spaced quantile grid") {
    const int n = 24;
    Matrix x = build_covariates(1, n);
    REQUIRE(x.rows() == n);
    REQUIRE(x.cols() == 2);
    CHECK(x(0, 0) ==
          doctest::Approx(0.0039426493427610846).epsilon(1e-12));
    CHECK(x(n - 1, 0) ==
          doctest::Approx(0.99605735065723888).epsilon(1e-12));
    CHECK(x(n - 1, 1) ==
          doctest::Approx(1.0 - std::sqrt(0.02)).epsilon(1e-12));
    Matrix x2 = build_covariates(2, n);
    CHECK(x2(11, 0) ==
          doctest::Approx(0.25589632464056322).epsilon(1e-10));
    CHECK(x2(11, 1) ==
          doctest::Approx(-0.05015358346473367).epsilon(1e-12));
    // deterministic: same call, same table
    CHECK((build_covariates(2, n) - x2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("studentized leverage is standardized") {
    for (int scheme : {1, 2, 3, 4}) {
        Matrix x = build_covariates(scheme, 24);
        Vec h = studentized_leverage(x);
        CHECK(std::abs(h.mean()) < 1e-12);
        CHECK(h.squaredNorm() / (h.size() - 1) ==
              doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("leverage variants differ") {
    Matrix x = build_covariates(1, 24);
    Vec raw = studentized_leverage(x, LeverageVariant::raw);
    Vec cen = studentized_leverage(x, LeverageVariant::with_intercept);
    CHECK((raw - cen).cwiseAbs().maxCoeff() > 1e-3);
    CHECK(std::abs(cen.mean()) < 1e-12);
    CHECK(cen.squaredNorm() / (cen.size() - 1) ==
          doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("outcome variants wire the leverage into the arms") {
    const int n = 24;
    Matrix x = build_covariates(3, n);
    Vec h = studentized_leverage(x);

    PotentialOutcomeTable v1 = build_table(3, 1, n);
    CHECK((v1.a - 2.0 * h).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(v1.b.cwiseAbs().maxCoeff() == 0.0);

    PotentialOutcomeTable v2 = build_table(3, 2, n);
    CHECK((v2.a - h).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((v2.b + h).cwiseAbs().maxCoeff() < 1e-14);

    PotentialOutcomeTable v3 = build_table(3, 3, n);
    CHECK((v3.a - v3.b).cwiseAbs().maxCoeff() == 0.0);

    for (const auto& t : {v1, v2, v3})
        CHECK(std::abs(average_treatment_effect(t)) < 1e-12);

    CHECK((v1.z - x).cwiseAbs().maxCoeff() == 0.0);
    CHECK_THROWS_AS(build_table(1, 4, n), DomainError);
    CHECK_THROWS_AS(build_table(7, 1, n), DomainError);
}
