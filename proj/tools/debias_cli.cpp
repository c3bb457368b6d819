// Command-line front end: estimate ATEs from a CSV, run scheme simulations,
// dump generated tables, and run the verification suite.

#include <algorithm>
#include <cctype>
#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "debias/debias.hpp"
#include "json.hpp"
#include "rational_constants.hpp"

namespace {

using nlohmann::ordered_json;
using namespace debias;

constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitData = 2;
constexpr int kExitVerify = 3;

std::vector<HcFlavor> parse_flavors(const std::vector<std::string>& names) {
    std::vector<HcFlavor> out;
    for (const auto& s : names) out.push_back(hc_flavor_from_string(s));
    return out;
}

std::vector<CiMode> parse_modes(const std::vector<std::string>& names) {
    std::vector<CiMode> out;
    for (const auto& s : names) out.push_back(ci_mode_from_string(s));
    return out;
}

TDfConvention parse_t_df(const std::string& s) {
    if (s == "n-1") return TDfConvention::nminus1;
    if (s == "residual") return TDfConvention::residual;
    throw DomainError("unknown t-df convention '" + s +
                      "' (expected n-1 or residual)");
}

LeverageVariant parse_leverage(const std::string& s) {
    if (s == "raw") return LeverageVariant::raw;
    if (s == "intercept") return LeverageVariant::with_intercept;
    throw DomainError("unknown leverage variant '" + s +
                      "' (expected raw or intercept)");
}

// "-" writes to stdout.
void write_text(const std::string& path, const std::string& text) {
    if (path == "-") {
        std::fputs(text.c_str(), stdout);
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << text;
    if (!out) throw IoError("failed writing " + path);
}

std::string flavor_label(const std::string& flavor) {
    std::string s = flavor;
    for (char& c : s)
        c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;  // hc2 -> HC2, bc-hc2 -> BC-HC2
}

std::string mode_label(const std::string& mode) {
    if (mode == "z") return "Z";
    if (mode == "t") return "Student-t";
    return "Satterthwaite";
}

// Table mirroring the simulation-summary layout: one column per estimator,
// one row per statistic, three decimals, blanks where a cell does not apply.
std::string render_summary_table(const DistributionSummary& s) {
    static const char* headers[kNumEstimators] = {
        "Unadjusted", "OLS Non-Int.", "OLS Interacted", "Debiased Non-Int.",
        "Debiased Interacted"};
    const int label_w = 38;
    int col_w[kNumEstimators];
    std::ostringstream out;

    out << std::string(label_w, ' ');
    for (int e = 0; e < kNumEstimators; ++e) {
        col_w[e] = static_cast<int>(std::strlen(headers[e])) + 2;
        char buf[64];
        std::snprintf(buf, sizeof buf, "%*s", col_w[e], headers[e]);
        out << buf;
    }
    out << '\n';

    auto row = [&](const std::string& label, const double* vals) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%-*s", label_w, label.c_str());
        out << buf;
        for (int e = 0; e < kNumEstimators; ++e) {
            if (std::isnan(vals[e]))
                std::snprintf(buf, sizeof buf, "%*s", col_w[e], "");
            else
                std::snprintf(buf, sizeof buf, "%*.3f", col_w[e], vals[e]);
            out << buf;
        }
        out << '\n';
    };

    double bias[kNumEstimators], sd[kNumEstimators], rmse[kNumEstimators];
    const auto& names = estimator_names();
    for (int e = 0; e < kNumEstimators; ++e) {
        bias[e] = s.estimators[e].bias;
        sd[e] = s.estimators[e].sd;
        rmse[e] = s.estimators[e].rmse;
    }
    row("Bias", bias);
    row("SD", sd);
    row("RMSE", rmse);

    // Cell lookup and the (flavor, mode) row order.  The interacted debiased
    // estimator carries every requested combination, so it drives the order.
    std::map<std::string, const CiSummary*> cells;
    std::vector<std::pair<std::string, std::string>> combos;
    for (const auto& c : s.ci) {
        cells[c.estimator + '|' + c.flavor + '|' + c.mode] = &c;
        if (c.estimator == names[kNumEstimators - 1])
            combos.emplace_back(c.flavor, c.mode);
    }

    enum Stat { kCoverage, kMeanWidth, kMedianWidth };
    auto stat_rows = [&](Stat which, const char* fmt) {
        for (const auto& [flavor, mode] : combos) {
            double vals[kNumEstimators];
            bool any = false;
            for (int e = 0; e < kNumEstimators; ++e) {
                auto it = cells.find(names[e] + '|' + flavor + '|' + mode);
                double v = std::numeric_limits<double>::quiet_NaN();
                if (it != cells.end()) {
                    const CiSummary& c = *it->second;
                    v = which == kCoverage     ? c.coverage
                        : which == kMeanWidth ? c.mean_width
                                              : c.median_width;
                }
                vals[e] = v;
                any = any || !std::isnan(v);
            }
            if (!any) continue;
            char label[96];
            std::snprintf(label, sizeof label, fmt,
                          flavor_label(flavor).c_str(),
                          mode_label(mode).c_str());
            row(label, vals);
        }
    };
    stat_rows(kCoverage, "CI Coverage (%s, %s)");
    stat_rows(kMeanWidth, "CI Width Avg (%s, %s)");
    stat_rows(kMedianWidth, "CI Width Med (%s, %s)");
    return out.str();
}

// --- estimate ----------------------------------------------------------

struct EstimateArgs {
    std::string input;
    std::string y_col = "y";
    std::string t_col = "t";
    std::vector<std::string> z_cols;
    std::vector<std::string> flavors{"hc2", "bc-hc2"};
    std::vector<std::string> ci{"z", "t", "satterthwaite"};
    double level = 0.95;
    std::string t_df = "n-1";
    std::string out = "-";
    std::string format = "json";
};

int run_estimate(const EstimateArgs& a) {
    CsvColumns cols{a.y_col, a.t_col, a.z_cols};
    ExperimentData data = a.input == "-"
                              ? ingest_csv(std::cin, cols)
                              : ingest_csv_file(a.input, cols);

    const auto flavors = parse_flavors(a.flavors);
    const auto modes = parse_modes(a.ci);
    const TDfConvention conv = parse_t_df(a.t_df);
    if (!(a.level > 0 && a.level < 1))
        throw DomainError("level must be in (0, 1)");

    struct Row {
        const char* name;
        double estimate;
        bool debiased;
        double correction;
        const FitContext* fit;
    };
    FitContext fit_u = fit_unadjusted(data);
    FitContext fit_ni = fit_noninteracted(data);
    FitContext fit_i = fit_interacted(data);
    const double corr_ni = bias_estimate_ni(data);
    const double corr_i = bias_estimate_i(data);
    const Row rows[kNumEstimators] = {
        {"unadjusted", diff_in_means(data), false, 0, &fit_u},
        {"ols_noninteracted", ate_noninteracted(data), false, 0, &fit_ni},
        {"ols_interacted", ate_interacted(data), false, 0, &fit_i},
        {"debiased_noninteracted", ate_debiased_ni(data), true, corr_ni,
         &fit_ni},
        {"debiased_interacted", ate_debiased_i(data), true, corr_i, &fit_i},
    };

    ordered_json report;
    report["schema_version"] = 1;
    report["kind"] = "estimate-report";
    report["data"] = {{"n", data.n()},
                      {"n_treated", data.n_treated()},
                      {"outcome", a.y_col},
                      {"treatment", a.t_col},
                      {"covariates", a.z_cols}};
    report["settings"] = {{"level", a.level},
                          {"t_df", a.t_df},
                          {"flavors", a.flavors},
                          {"ci_modes", a.ci}};
    ordered_json ests = ordered_json::array();
    for (const Row& r : rows) {
        ordered_json e;
        e["name"] = r.name;
        e["estimate"] = r.estimate;
        if (r.debiased) e["correction"] = r.correction;
        ordered_json vars = ordered_json::array();
        for (HcFlavor f : flavors) {
            const bool bc = f == HcFlavor::bc_hc2 || f == HcFlavor::bc_hc3;
            if (bc && !r.debiased) continue;
            VarianceReport vr =
                variance_report(*r.fit, f, r.estimate, a.level);
            const double df_t = conv == TDfConvention::nminus1
                                    ? data.n() - 1
                                    : vr.df_t;
            ordered_json v;
            v["flavor"] = to_string(f);
            v["se"] = vr.se;
            v["df"] = {{"t", df_t}, {"satterthwaite", vr.df_satt}};
            ordered_json cis = ordered_json::array();
            for (CiMode m : modes) {
                Interval ci =
                    m == CiMode::student_t
                        ? confidence_interval(r.estimate, vr.se, m, df_t,
                                              a.level)
                    : m == CiMode::normal ? vr.ci_z
                                          : vr.ci_satt;
                cis.push_back({{"mode", to_string(m)},
                               {"lo", ci.lo},
                               {"hi", ci.hi}});
            }
            v["ci"] = cis;
            vars.push_back(v);
        }
        e["variance"] = vars;
        ests.push_back(e);
    }
    report["estimators"] = ests;

    if (a.format == "json") {
        write_text(a.out, report.dump(2) + "\n");
    } else {
        std::ostringstream csv;
        csv << "record,estimator,flavor,mode,metric,value\n";
        char buf[160];
        auto put = [&](const std::string& rec, const std::string& est,
                       const std::string& flavor, const std::string& mode,
                       const std::string& metric, double value) {
            std::snprintf(buf, sizeof buf, "%s,%s,%s,%s,%s,%.17g\n",
                          rec.c_str(), est.c_str(), flavor.c_str(),
                          mode.c_str(), metric.c_str(), value);
            csv << buf;
        };
        put("meta", "", "", "", "n", data.n());
        put("meta", "", "", "", "n_treated", data.n_treated());
        for (const auto& e : report["estimators"]) {
            const std::string name = e["name"];
            put("point", name, "", "", "estimate", e["estimate"]);
            if (e.contains("correction"))
                put("point", name, "", "", "correction", e["correction"]);
            for (const auto& v : e["variance"]) {
                const std::string flavor = v["flavor"];
                put("se", name, flavor, "", "se", v["se"]);
                put("df", name, flavor, "t", "df", v["df"]["t"]);
                put("df", name, flavor, "satterthwaite", "df",
                    v["df"]["satterthwaite"]);
                for (const auto& ci : v["ci"]) {
                    const std::string mode = ci["mode"];
                    put("ci", name, flavor, mode, "lo", ci["lo"]);
                    put("ci", name, flavor, mode, "hi", ci["hi"]);
                }
            }
        }
        write_text(a.out, csv.str());
    }
    return kExitOk;
}

// --- simulate ----------------------------------------------------------

struct SimulateArgs {
    int scheme = 1;
    int variant = 1;
    int n = 24;
    int n_treated = 0;  // 0 = n / 3, the schemes' design fraction
    std::string mode = "exact";
    std::uint64_t reps = 0;
    std::uint64_t seed = 0;
    bool reps_set = false;
    bool seed_set = false;
    std::vector<std::string> flavors{"hc2", "bc-hc2"};
    std::vector<std::string> ci{"z", "t", "satterthwaite"};
    double level = 0.95;
    std::string t_df = "n-1";
    std::string leverage = "raw";
    int threads = 0;
    std::uint64_t budget = 10'000'000;
    bool skip_singular = false;
    bool no_widths = false;
    std::string dump_assignments;
    std::string out;
    std::string format = "json";
};

int run_simulate(const SimulateArgs& a) {
    if (a.mode == "mc") {
        if (!a.reps_set || !a.seed_set)
            throw DomainError("--mode mc requires --reps and --seed");
    } else if (a.mode == "exact") {
        if (a.reps_set || a.seed_set)
            throw DomainError(
                "--reps/--seed only apply to --mode mc; exact enumeration "
                "is deterministic");
    } else {
        throw DomainError("unknown mode '" + a.mode +
                          "' (expected exact or mc)");
    }

    PotentialOutcomeTable table =
        build_table(a.scheme, a.variant, a.n, parse_leverage(a.leverage));
    const int n_treated = a.n_treated > 0 ? a.n_treated : a.n / 3;
    AssignmentSpace space(a.n, n_treated);

    EngineOptions opt;
    opt.flavors = parse_flavors(a.flavors);
    opt.ci_modes = parse_modes(a.ci);
    opt.t_df = parse_t_df(a.t_df);
    opt.level = a.level;
    opt.threads = a.threads;
    opt.budget = a.budget;
    opt.skip_singular = a.skip_singular;
    opt.collect_widths = !a.no_widths;
    opt.dump_csv_path = a.dump_assignments;

    DistributionSummary s =
        a.mode == "exact"
            ? exact_distribution(table, space, opt)
            : monte_carlo_distribution(table, space, a.seed, a.reps, opt);

    if (a.out != "-") {
        std::printf("scheme %d variant %d: n=%d, n_treated=%d, %s, "
                    "%" PRIu64 " draws, true ATE %.3g\n",
                    a.scheme, a.variant, a.n, n_treated,
                    s.mode == "exact" ? "exact enumeration" : "monte carlo",
                    s.draws, s.true_ate);
        if (s.mode != "exact")
            std::printf("seed %" PRIu64 ", reps %" PRIu64 "\n", s.seed,
                        a.reps);
        if (s.skipped_singular > 0)
            std::printf("skipped %" PRIu64 " singular assignments\n",
                        s.skipped_singular);
        std::fputs(render_summary_table(s).c_str(), stdout);
    }
    if (!a.out.empty())
        write_text(a.out, a.format == "json" ? summary_json(s)
                                             : summary_csv(s));
    return kExitOk;
}

// --- dump-dgp ----------------------------------------------------------

struct DumpArgs {
    int scheme = 1;
    int variant = 1;
    int n = 24;
    std::string leverage = "raw";
    std::string out = "-";
};

int run_dump_dgp(const DumpArgs& a) {
    const LeverageVariant lv = parse_leverage(a.leverage);
    Matrix x = build_covariates(a.scheme, a.n);
    Matrix xa = x;
    if (lv == LeverageVariant::with_intercept) {
        xa.resize(a.n, x.cols() + 1);
        xa.col(0).setOnes();
        xa.rightCols(x.cols()) = x;
    }
    SymMatrix gram_inv = invert_spd(SymMatrix(xa.transpose() * xa));
    PotentialOutcomeTable table = build_table(a.scheme, a.variant, a.n, lv);
    Vec h = studentized_leverage(x, lv);

    std::ostringstream csv;
    csv << "unit,x1,x2,v,h,y0,y1\n";
    char buf[200];
    for (int i = 0; i < a.n; ++i) {
        const double v = quadratic_form(xa.row(i).transpose(), gram_inv);
        std::snprintf(buf, sizeof buf,
                      "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", i + 1,
                      x(i, 0), x(i, 1), v, h[i], table.b[i], table.a[i]);
        csv << buf;
    }
    write_text(a.out, csv.str());
    return kExitOk;
}

// --- verify ------------------------------------------------------------

struct VerifyState {
    bool failed = false;
    std::string first_failure;

    void report(const std::string& name, double err, double tol) {
        const bool ok = err <= tol;
        std::printf("%-58s %s  (max err %.2e, tol %.0e)\n", name.c_str(),
                    ok ? "ok  " : "FAIL", err, tol);
        if (!ok && !failed) {
            failed = true;
            char buf[160];
            std::snprintf(buf, sizeof buf, "%s: residual %.3e exceeds %.0e",
                          name.c_str(), err, tol);
            first_failure = buf;
        }
    }
};

Vec centered_uniform(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Vec v(n);
    for (int i = 0; i < n; ++i) v[i] = u(rng);
    v.array() -= v.mean();
    return v;
}

// Enumeration means of the three arm-mean products against their
// closed-form third-moment expressions.
void check_lemmas(VerifyState& st) {
    const int configs[2][2] = {{8, 3}, {9, 4}};
    double err_a1i = 0, err_a1ii = 0, err_a2 = 0;
    std::mt19937_64 rng(20240811);
    for (auto [n, n_a] : configs) {
        const BiasConstants c = bias_constants(n, n_a);
        AssignmentSpace space(n, n_a);
        const double total = static_cast<double>(space.total());
        for (int trial = 0; trial < 50; ++trial) {
            const Vec x = centered_uniform(rng, n);
            const Vec y = centered_uniform(rng, n);
            const Vec z = centered_uniform(rng, n);
            const double third =
                (x.array() * y.array() * z.array()).mean();
            double aaa = 0, aab = 0, adj = 0;
            enumerate(space, [&](const Assignment& asg) {
                double xa = 0, ya = 0, za = 0, ca = 0;
                std::vector<char> in_a(n, 0);
                for (int i : asg.treated) in_a[i] = 1;
                for (int i : asg.treated) {
                    xa += x[i];
                    ya += y[i];
                    za += z[i];
                }
                xa /= n_a;
                ya /= n_a;
                za /= n_a;
                double zb = 0;
                for (int i = 0; i < n; ++i)
                    if (!in_a[i]) zb += z[i];
                zb /= (n - n_a);
                for (int i : asg.treated)
                    ca += (x[i] - xa) * (y[i] - ya) * (z[i] - za);
                aaa += xa * ya * za;
                aab += xa * ya * zb;
                adj += ca / n_a;
            });
            aaa /= total;
            aab /= total;
            adj /= total;
            const double scale = std::max(1.0, std::abs(third));
            err_a1i = std::max(err_a1i,
                               std::abs(aaa - c.n_aaa * third) / scale);
            err_a1ii = std::max(err_a1ii,
                                std::abs(aab - c.n_aab * third) / scale);
            err_a2 = std::max(err_a2,
                              std::abs(c.n_adj_a * adj - third) / scale);
        }
    }
    st.report("lemma A1 first identity (8,3)+(9,4), 50 triples", err_a1i,
              1e-10);
    st.report("lemma A1 second identity (8,3)+(9,4), 50 triples", err_a1ii,
              1e-10);
    st.report("lemma A2 arm third moment (8,3)+(9,4), 50 triples", err_a2,
              1e-10);
}

// Enumeration mean of both debiased estimators equals the true ATE.
void check_unbiasedness(VerifyState& st) {
    const int configs[3][2] = {{8, 4}, {10, 4}, {12, 5}};
    std::mt19937_64 rng(20240812);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double err_ni = 0, err_i = 0;
    for (auto [n, n_a] : configs) {
        for (int trial = 0; trial < 5; ++trial) {
            Matrix z(n, 2);
            Vec a(n), b(n);
            for (int i = 0; i < n; ++i) {
                z(i, 0) = u(rng);
                z(i, 1) = u(rng);
                a[i] = u(rng) + 0.7 * z(i, 0);
                b[i] = u(rng) - 0.4 * z(i, 1);
            }
            PotentialOutcomeTable table = make_table(a, b, z);
            const double ate = average_treatment_effect(table);
            AssignmentSpace space(n, n_a);
            long double sum_ni = 0, sum_i = 0;
            enumerate(space, [&](const Assignment& asg) {
                ExperimentData data = realize(table, asg);
                sum_ni += ate_debiased_ni(data);
                sum_i += ate_debiased_i(data);
            });
            const double total = static_cast<double>(space.total());
            err_ni = std::max(
                err_ni, std::abs(static_cast<double>(sum_ni) / total - ate));
            err_i = std::max(
                err_i, std::abs(static_cast<double>(sum_i) / total - ate));
        }
    }
    st.report("debiased non-interacted unbiased, n in {8,10,12}", err_ni,
              1e-9);
    st.report("debiased interacted unbiased, n in {8,10,12}", err_i, 1e-9);
}

// The centered-regression shortcuts must equal the full OLS fits.
void check_fwl(VerifyState& st) {
    std::mt19937_64 rng(20240813);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double err = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 16;
        Matrix z(n, 3);
        Vec y(n);
        std::vector<int> t(n, 0);
        for (int i = 0; i < n / 2; ++i) t[i] = 1;
        std::shuffle(t.begin(), t.end(), rng);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < 3; ++j) z(i, j) = u(rng);
            y[i] = u(rng) + t[i] * 0.8 + z(i, 0) - 0.3 * z(i, 2);
        }
        ExperimentData data = make_experiment_data(y, t, z);
        err = std::max(err, std::abs(ate_noninteracted(data) -
                                     fit_noninteracted(data).beta[1]));
        err = std::max(err, std::abs(ate_interacted(data) -
                                     fit_interacted(data).beta[1]));
    }
    st.report("moment-form estimators match OLS fits (20 datasets)", err,
              1e-10);
}

struct PerturbHook {
    std::string field;
    double delta = 1e-3;
};

PerturbHook read_perturb_hook() {
    PerturbHook hook;
    const char* env = std::getenv("DEBIAS_VERIFY_PERTURB");
    if (!env || !*env) return hook;
    std::string s(env);
    const auto eq = s.find('=');
    hook.field = s.substr(0, eq);
    if (eq != std::string::npos) hook.delta = std::stod(s.substr(eq + 1));
    return hook;
}

void check_constants(VerifyState& st) {
    const PerturbHook hook = read_perturb_hook();
    const int configs[3][2] = {{24, 8}, {12, 4}, {8, 3}};
    struct Entry {
        const char* key;
        const char* label;
    };
    const Entry entries[9] = {
        {"n_aaa", "N_{AAA}"},     {"n_bbb", "N_{BBB}"},
        {"n_aab", "N_{AAB}"},     {"n_adj_a", "N_{Adj,A}"},
        {"n_adj_b", "N_{Adj,B}"}, {"c_a_ni", "C_{A,NI}"},
        {"c_b_ni", "C_{B,NI}"},   {"c_a_i", "C_{A,I}"},
        {"c_b_i", "C_{B,I}"},
    };
    for (auto [n, n_a] : configs) {
        BiasConstants c = bias_constants(n, n_a);
        const rational::ExactConstants e =
            rational::exact_bias_constants(n, n_a);
        double* fields[9] = {&c.n_aaa,   &c.n_bbb,   &c.n_aab,
                             &c.n_adj_a, &c.n_adj_b, &c.c_a_ni,
                             &c.c_b_ni,  &c.c_a_i,   &c.c_b_i};
        const rational::Fraction* exact[9] = {
            &e.n_aaa,   &e.n_bbb,   &e.n_aab,  &e.n_adj_a, &e.n_adj_b,
            &e.c_a_ni,  &e.c_b_ni,  &e.c_a_i,  &e.c_b_i};
        for (int j = 0; j < 9; ++j) {
            double got = *fields[j];
            if (hook.field == entries[j].key) got += hook.delta;
            const double want = exact[j]->value();
            const double err =
                std::abs(got - want) / std::max(1.0, std::abs(want));
            char name[96];
            std::snprintf(name, sizeof name, "constant %s at (%d,%d)",
                          entries[j].label, n, n_a);
            st.report(name, err, 1e-14);
        }
    }
}

int run_verify() {
    VerifyState st;
    check_lemmas(st);
    check_unbiasedness(st);
    check_fwl(st);
    check_constants(st);
    if (st.failed) {
        std::printf("verification FAILED: %s\n", st.first_failure.c_str());
        return kExitVerify;
    }
    std::printf("all identities pass\n");
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Exact finite-sample bias corrections for "
                 "regression-adjusted ATE estimators"};
    app.require_subcommand(1);

    EstimateArgs est;
    auto* cmd_est = app.add_subcommand(
        "estimate", "Estimate treatment effects from a CSV dataset");
    cmd_est->add_option("input", est.input, "CSV path, or - for stdin")
        ->required();
    cmd_est->add_option("--y-col", est.y_col, "outcome column name")
        ->envname("DEBIAS_Y_COL");
    cmd_est->add_option("--t-col", est.t_col, "treatment column name")
        ->envname("DEBIAS_T_COL");
    cmd_est->add_option("--z-cols", est.z_cols, "covariate column names")
        ->required()
        ->delimiter(',')
        ->envname("DEBIAS_Z_COLS");
    cmd_est->add_option("--flavors", est.flavors, "variance flavors")
        ->delimiter(',')
        ->envname("DEBIAS_FLAVORS");
    cmd_est->add_option("--ci", est.ci, "interval modes")
        ->delimiter(',')
        ->envname("DEBIAS_CI");
    cmd_est->add_option("--level", est.level, "confidence level")
        ->envname("DEBIAS_LEVEL");
    cmd_est->add_option("--t-df", est.t_df, "Student-t df: n-1 or residual")
        ->envname("DEBIAS_T_DF");
    cmd_est->add_option("--out", est.out, "output path (- for stdout)")
        ->envname("DEBIAS_OUT");
    cmd_est->add_option("--format", est.format, "json or csv")
        ->check(CLI::IsMember({"json", "csv"}))
        ->envname("DEBIAS_FORMAT");

    SimulateArgs sim;
    auto* cmd_sim = app.add_subcommand(
        "simulate", "Randomization distribution of a covariate scheme");
    cmd_sim->add_option("--scheme", sim.scheme, "covariate scheme 1..4")
        ->check(CLI::Range(1, 4))
        ->envname("DEBIAS_SCHEME");
    cmd_sim->add_option("--variant", sim.variant, "outcome variant 1..3")
        ->check(CLI::Range(1, 3))
        ->envname("DEBIAS_VARIANT");
    cmd_sim->add_option("--n", sim.n, "number of units")
        ->envname("DEBIAS_N");
    cmd_sim
        ->add_option("--n-treated", sim.n_treated,
                     "treated units (default n/3)")
        ->envname("DEBIAS_N_TREATED");
    cmd_sim->add_option("--mode", sim.mode, "exact or mc")
        ->envname("DEBIAS_MODE");
    cmd_sim->add_option("--reps", sim.reps, "monte carlo draws")
        ->envname("DEBIAS_REPS");
    cmd_sim->add_option("--seed", sim.seed, "monte carlo seed")
        ->envname("DEBIAS_SEED");
    cmd_sim->add_option("--flavors", sim.flavors, "variance flavors")
        ->delimiter(',')
        ->envname("DEBIAS_FLAVORS");
    cmd_sim->add_option("--ci", sim.ci, "interval modes")
        ->delimiter(',')
        ->envname("DEBIAS_CI");
    cmd_sim->add_option("--level", sim.level, "confidence level")
        ->envname("DEBIAS_LEVEL");
    cmd_sim->add_option("--t-df", sim.t_df, "Student-t df: n-1 or residual")
        ->envname("DEBIAS_T_DF");
    cmd_sim
        ->add_option("--leverage-variant", sim.leverage,
                     "raw or intercept")
        ->envname("DEBIAS_LEVERAGE_VARIANT");
    cmd_sim->add_option("--threads", sim.threads, "worker threads (0=auto)")
        ->envname("DEBIAS_THREADS");
    cmd_sim
        ->add_option("--budget", sim.budget,
                     "largest exact space the engine will enumerate")
        ->envname("DEBIAS_BUDGET");
    cmd_sim->add_flag("--skip-singular", sim.skip_singular,
                      "drop singular assignments instead of failing");
    cmd_sim->add_flag("--no-widths", sim.no_widths,
                      "skip per-draw width collection (no medians)");
    cmd_sim->add_option("--dump-assignments", sim.dump_assignments,
                        "per-assignment CSV path");
    cmd_sim->add_option("--out", sim.out,
                        "summary path (- for stdout, suppresses the table)")
        ->envname("DEBIAS_OUT");
    cmd_sim->add_option("--format", sim.format, "json or csv")
        ->check(CLI::IsMember({"json", "csv"}))
        ->envname("DEBIAS_FORMAT");

    DumpArgs dmp;
    auto* cmd_dmp = app.add_subcommand(
        "dump-dgp", "Emit a generated scheme table as CSV");
    cmd_dmp->add_option("--scheme", dmp.scheme, "covariate scheme 1..4")
        ->check(CLI::Range(1, 4))
        ->envname("DEBIAS_SCHEME");
    cmd_dmp->add_option("--variant", dmp.variant, "outcome variant 1..3")
        ->check(CLI::Range(1, 3))
        ->envname("DEBIAS_VARIANT");
    cmd_dmp->add_option("--n", dmp.n, "number of units")
        ->envname("DEBIAS_N");
    cmd_dmp
        ->add_option("--leverage-variant", dmp.leverage,
                     "raw or intercept")
        ->envname("DEBIAS_LEVERAGE_VARIANT");
    cmd_dmp->add_option("--out", dmp.out, "output path (- for stdout)")
        ->envname("DEBIAS_OUT");

    auto* cmd_ver = app.add_subcommand(
        "verify", "Run the identity verification suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitData;
    }

    sim.reps_set = cmd_sim->count("--reps") > 0;
    sim.seed_set = cmd_sim->count("--seed") > 0;

    try {
        if (cmd_est->parsed()) return run_estimate(est);
        if (cmd_sim->parsed()) return run_simulate(sim);
        if (cmd_dmp->parsed()) return run_dump_dgp(dmp);
        if (cmd_ver->parsed()) return run_verify();
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitIo;
    } catch (const BudgetExceeded& e) {
        std::fprintf(stderr,
                     "error: %s\nuse --mode mc with --reps/--seed, or raise "
                     "--budget\n",
                     e.what());
        return kExitData;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    }
    return kExitData;
}
