#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>

#include "debias/randomization.hpp"
#include "doctest.h"

using namespace debias;

namespace {

PotentialOutcomeTable small_table(int n) {
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Matrix z(n, 2);
    Vec a(n), b(n);
    for (int i = 0; i < n; ++i) {
        z(i, 0) = u(rng);
        z(i, 1) = u(rng);
        a[i] = 1.0 + z(i, 0) + 0.5 * u(rng);
        b[i] = z(i, 1) + 0.5 * u(rng);
    }
    return make_table(a, b, z);
}

}  // namespace

TEST_CASE("assignment space counts") {
    CHECK(AssignmentSpace(12, 4).total() == 495);
    CHECK(AssignmentSpace(24, 8).total() == 735471);
    CHECK(AssignmentSpace(8, 4).total() == 70);
    AssignmentSpace big(200, 100);
    CHECK(!big.total_exact());
    CHECK_THROWS_AS(big.total(), Overflow);
    CHECK(big.total_approx() > 1e58);
    CHECK(AssignmentSpace(64, 32).total() == 1832624140942590534ULL);
    CHECK_THROWS_AS(AssignmentSpace(6, 1), DegenerateArm);
    CHECK_THROWS_AS(AssignmentSpace(6, 5), DegenerateArm);
}

TEST_CASE("enumerate covers the space in lexicographic order") {
    AssignmentSpace space(9, 4);
    std::vector<std::vector<int>> seen;
    enumerate(space, [&](const Assignment& a) {
        CHECK(a.n == 9);
        CHECK(a.n_treated() == 4);
        seen.push_back(a.treated);
    });
    REQUIRE(seen.size() == 126);
    CHECK(seen.front() == std::vector<int>{0, 1, 2, 3});
    CHECK(seen.back() == std::vector<int>{5, 6, 7, 8});
    for (std::size_t i = 1; i < seen.size(); ++i)
        CHECK(seen[i - 1] < seen[i]);
    // every unit treated in exactly C(8,3) = 56 subsets
    std::vector<int> hits(9, 0);
    for (const auto& s : seen)
        for (int i : s) ++hits[i];
    for (int h : hits) CHECK(h == 56);
}

TEST_CASE("unrank matches enumeration order") {
    AssignmentSpace space(16, 5);
    std::vector<std::vector<int>> all;
    all.reserve(4368);
    enumerate(space,
              [&](const Assignment& a) { all.push_back(a.treated); });
    REQUIRE(all.size() == space.total());
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<std::uint64_t> pick(0, all.size() - 1);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::uint64_t r = pick(rng);
        CHECK(unrank(space, r).treated == all[r]);
    }
    CHECK(unrank(space, 0).treated == all.front());
    CHECK(unrank(space, all.size() - 1).treated == all.back());
    CHECK_THROWS_AS(unrank(space, all.size()), IndexOutOfRange);
}

TEST_CASE("sampling is reproducible and uniform-ish") {
    AssignmentSpace space(12, 4);
    auto draws = sample(space, 99, 4000);
    auto again = sample(space, 99, 4000);
    REQUIRE(draws.size() == 4000);
    bool identical = true;
    for (std::size_t i = 0; i < draws.size(); ++i)
        identical = identical && draws[i].treated == again[i].treated;
    CHECK(identical);
    auto other = sample(space, 100, 4000);
    bool all_same = true;
    for (std::size_t i = 0; i < draws.size(); ++i)
        all_same = all_same && draws[i].treated == other[i].treated;
    CHECK(!all_same);
    // inclusion frequency near n_treated / n = 1/3
    std::vector<int> hits(12, 0);
    for (const auto& a : draws)
        for (int i : a.treated) ++hits[i];
    for (int h : hits) {
        CHECK(h > 4000 / 3 - 200);
        CHECK(h < 4000 / 3 + 200);
    }
}

TEST_CASE("exact distribution is unbiased and internally consistent") {
    PotentialOutcomeTable table = small_table(12);
    AssignmentSpace space(12, 4);
    EngineOptions opt;
    DistributionSummary s = exact_distribution(table, space, opt);

    CHECK(s.mode == "exact");
    CHECK(s.draws == 495);
    CHECK(s.n == 12);
    CHECK(s.true_ate ==
          doctest::Approx(average_treatment_effect(table)).epsilon(1e-14));
    REQUIRE(s.estimators.size() == kNumEstimators);

    for (const auto& e : s.estimators) {
        CHECK(e.rmse ==
              doctest::Approx(std::sqrt(e.bias * e.bias + e.sd * e.sd))
                  .epsilon(1e-12));
        CHECK(std::isnan(e.se_bias));
    }
    CHECK(std::abs(s.estimators[0].bias) < 1e-12);   // unadjusted
    CHECK(std::abs(s.estimators[3].bias) < 1e-12);   // debiased ni
    CHECK(std::abs(s.estimators[4].bias) < 1e-12);   // debiased i
    CHECK(s.estimators[1].name == "ols_noninteracted");
    CHECK(std::abs(s.estimators[1].bias) > 1e-6);    // adjusted OLS is not

    // engine statistics equal a direct pass over the public estimators
    long double sum = 0, sumsq = 0;
    enumerate(space, [&](const Assignment& asg) {
        const double v = ate_noninteracted(realize(table, asg));
        sum += v;
        sumsq += v * v;
    });
    const double m = static_cast<double>(sum / 495.0L);
    const double var = static_cast<double>(sumsq / 495.0L) - m * m;
    CHECK(s.estimators[1].mean == doctest::Approx(m).epsilon(1e-12));
    CHECK(s.estimators[1].sd ==
          doctest::Approx(std::sqrt(var)).epsilon(1e-10));

    // coverage cells exist for every estimator/flavor/mode combination,
    // with bc flavors confined to the debiased estimators
    std::set<std::string> combos;
    for (const auto& c : s.ci) {
        combos.insert(c.estimator + '|' + c.flavor + '|' + c.mode);
        CHECK(c.coverage >= 0.0);
        CHECK(c.coverage <= 1.0);
        CHECK(c.mean_width >= 0.0);
        if (c.flavor.rfind("bc-", 0) == 0)
            CHECK(c.estimator.rfind("debiased", 0) == 0);
    }
    CHECK(combos.size() == 21);  // 3 modes x (5 hc2 + 2 bc-hc2)
    CHECK(combos.count("debiased_interacted|bc-hc2|satterthwaite") == 1);
    CHECK(combos.count("unadjusted|bc-hc2|z") == 0);
}

TEST_CASE("summary json and csv round trip the core fields") {
    PotentialOutcomeTable table = small_table(10);
    AssignmentSpace space(10, 4);
    DistributionSummary s = exact_distribution(table, space);
    const std::string js = summary_json(s);
    CHECK(js.find("\"schema_version\": 1") != std::string::npos);
    CHECK(js.find("\"randomization-summary\"") != std::string::npos);
    CHECK(js.find("\"ols_interacted\"") != std::string::npos);
    const std::string csv = summary_csv(s);
    CHECK(csv.rfind("record,", 0) == 0);
    CHECK(csv.find("point,ols_noninteracted") != std::string::npos);
}

TEST_CASE("serial and threaded runs produce identical bytes") {
    PotentialOutcomeTable table = small_table(13);
    AssignmentSpace space(13, 5);
    EngineOptions serial;
    serial.threads = 1;
    EngineOptions wide;
    wide.threads = 4;
    CHECK(summary_json(exact_distribution(table, space, serial)) ==
          summary_json(exact_distribution(table, space, wide)));

    EngineOptions mc1 = serial, mc4 = wide;
    CHECK(summary_json(monte_carlo_distribution(table, space, 5, 20000,
                                                mc1)) ==
          summary_json(monte_carlo_distribution(table, space, 5, 20000,
                                                mc4)));
}

TEST_CASE("monte carlo tracks the exact answer and reports its noise") {
    PotentialOutcomeTable table = small_table(12);
    AssignmentSpace space(12, 4);
    DistributionSummary ex = exact_distribution(table, space);
    DistributionSummary mc =
        monte_carlo_distribution(table, space, 31, 40000);
    CHECK(mc.mode == "monte-carlo");
    CHECK(mc.draws == 40000);
    CHECK(mc.seed == 31);
    for (int e = 0; e < kNumEstimators; ++e) {
        const auto& a = ex.estimators[e];
        const auto& b = mc.estimators[e];
        CHECK(std::isfinite(b.se_bias));
        CHECK(b.se_bias > 0.0);
        CHECK(std::abs(a.bias - b.bias) < 5.0 * b.se_bias + 1e-12);
        CHECK(std::abs(a.sd - b.sd) < 5.0 * b.se_sd + 1e-12);
    }
    for (const auto& c : mc.ci) CHECK(std::isfinite(c.se_coverage));
}

TEST_CASE("budget guard fires before enumerating") {
    PotentialOutcomeTable table = small_table(18);
    AssignmentSpace space(18, 6);  // 18564 assignments
    EngineOptions opt;
    opt.budget = 1000;
    CHECK_THROWS_AS(exact_distribution(table, space, opt), BudgetExceeded);
}

TEST_CASE("per-assignment dump lists one row per draw") {
    PotentialOutcomeTable table = small_table(8);
    AssignmentSpace space(8, 4);
    EngineOptions opt;
    opt.dump_csv_path = "dump_test.csv";
    exact_distribution(table, space, opt);
    std::ifstream in("dump_test.csv");
    REQUIRE(in.good());
    std::string line;
    std::getline(in, line);
    CHECK(line.rfind("rank,", 0) == 0);
    int rows = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 70);
    in.close();
    std::remove("dump_test.csv");
}

TEST_CASE("width medians use the lower middle draw") {
    PotentialOutcomeTable table = small_table(8);
    AssignmentSpace space(8, 4);
    EngineOptions opt;
    opt.flavors = {HcFlavor::hc2};
    opt.ci_modes = {CiMode::normal};
    DistributionSummary s = exact_distribution(table, space, opt);

    std::vector<double> widths;
    enumerate(space, [&](const Assignment& asg) {
        ExperimentData data = realize(table, asg);
        FitContext ctx = fit_unadjusted(data);
        widths.push_back(variance_report(ctx, HcFlavor::hc2, ctx.beta[1])
                             .ci_z.width());
    });
    std::sort(widths.begin(), widths.end());
    const double lower_median = widths[(widths.size() - 1) / 2];
    for (const auto& c : s.ci)
        if (c.estimator == "unadjusted")
            CHECK(c.median_width ==
                  doctest::Approx(lower_median).epsilon(1e-12));
}

TEST_CASE("no-widths mode reports NaN medians") {
    PotentialOutcomeTable table = small_table(8);
    AssignmentSpace space(8, 4);
    EngineOptions opt;
    opt.collect_widths = false;
    DistributionSummary s = exact_distribution(table, space, opt);
    for (const auto& c : s.ci) {
        CHECK(std::isnan(c.median_width));
        CHECK(std::isfinite(c.mean_width));
    }
}
