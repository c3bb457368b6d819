#include <cmath>
#include <cstdio>
#include <sstream>

#include "debias/randomization.hpp"
#include "json.hpp"

namespace debias {

namespace {

using ordered_json = nlohmann::ordered_json;

// NaN is not representable in JSON; emit null instead.
ordered_json num(double v) {
    if (std::isnan(v)) return nullptr;
    return v;
}

std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::string summary_json(const DistributionSummary& s) {
    ordered_json j;
    j["schema_version"] = 1;
    j["kind"] = "randomization-summary";
    ordered_json eng;
    eng["mode"] = s.mode;
    eng["n"] = s.n;
    eng["n_treated"] = s.n_treated;
    eng["draws"] = s.draws;
    if (s.mode == "monte-carlo") eng["seed"] = s.seed;
    eng["true_ate"] = s.true_ate;
    eng["level"] = s.level;
    eng["t_df"] = s.t_df;
    eng["skipped_singular"] = s.skipped_singular;
    j["engine"] = std::move(eng);

    ordered_json ests = ordered_json::array();
    for (const auto& e : s.estimators) {
        ordered_json o;
        o["name"] = e.name;
        o["mean"] = num(e.mean);
        o["bias"] = num(e.bias);
        o["sd"] = num(e.sd);
        o["rmse"] = num(e.rmse);
        if (s.mode == "monte-carlo") {
            o["se_bias"] = num(e.se_bias);
            o["se_sd"] = num(e.se_sd);
            o["se_rmse"] = num(e.se_rmse);
        }
        ests.push_back(std::move(o));
    }
    j["estimators"] = std::move(ests);

    ordered_json cis = ordered_json::array();
    for (const auto& c : s.ci) {
        ordered_json o;
        o["estimator"] = c.estimator;
        o["flavor"] = c.flavor;
        o["mode"] = c.mode;
        o["coverage"] = num(c.coverage);
        o["mean_width"] = num(c.mean_width);
        o["median_width"] = num(c.median_width);
        if (s.mode == "monte-carlo") {
            o["se_coverage"] = num(c.se_coverage);
            o["se_mean_width"] = num(c.se_mean_width);
            o["se_median_width"] = num(c.se_median_width);
        }
        cis.push_back(std::move(o));
    }
    j["ci"] = std::move(cis);

    ordered_json diag;
    diag["max_abs_correction_ni"] = num(s.max_abs_correction_ni);
    diag["max_abs_correction_i"] = num(s.max_abs_correction_i);
    diag["mean_abs_correction_ni"] = num(s.mean_abs_correction_ni);
    diag["mean_abs_correction_i"] = num(s.mean_abs_correction_i);
    j["diagnostics"] = std::move(diag);
    return j.dump(2) + "\n";
}

std::string summary_csv(const DistributionSummary& s) {
    std::ostringstream out;
    out << "record,estimator,flavor,mode,metric,value\n";
    out << "meta,,,,mode," << s.mode << "\n";
    out << "meta,,,,n," << s.n << "\n";
    out << "meta,,,,n_treated," << s.n_treated << "\n";
    out << "meta,,,,draws," << s.draws << "\n";
    if (s.mode == "monte-carlo") out << "meta,,,,seed," << s.seed << "\n";
    out << "meta,,,,true_ate," << fmt(s.true_ate) << "\n";
    out << "meta,,,,level," << fmt(s.level) << "\n";
    out << "meta,,,,t_df," << s.t_df << "\n";
    out << "meta,,,,skipped_singular," << s.skipped_singular << "\n";
    const bool mc = s.mode == "monte-carlo";
    for (const auto& e : s.estimators) {
        out << "point," << e.name << ",,,mean," << fmt(e.mean) << "\n";
        out << "point," << e.name << ",,,bias," << fmt(e.bias) << "\n";
        out << "point," << e.name << ",,,sd," << fmt(e.sd) << "\n";
        out << "point," << e.name << ",,,rmse," << fmt(e.rmse) << "\n";
        if (mc) {
            out << "point," << e.name << ",,,se_bias," << fmt(e.se_bias)
                << "\n";
            out << "point," << e.name << ",,,se_sd," << fmt(e.se_sd) << "\n";
            out << "point," << e.name << ",,,se_rmse," << fmt(e.se_rmse)
                << "\n";
        }
    }
    for (const auto& c : s.ci) {
        const std::string key =
            c.estimator + "," + c.flavor + "," + c.mode + ",";
        out << "ci," << key << "coverage," << fmt(c.coverage) << "\n";
        out << "ci," << key << "mean_width," << fmt(c.mean_width) << "\n";
        out << "ci," << key << "median_width," << fmt(c.median_width) << "\n";
        if (mc) {
            out << "ci," << key << "se_coverage," << fmt(c.se_coverage)
                << "\n";
            out << "ci," << key << "se_mean_width," << fmt(c.se_mean_width)
                << "\n";
            out << "ci," << key << "se_median_width,"
                << fmt(c.se_median_width) << "\n";
        }
    }
    out << "diagnostic,,,,max_abs_correction_ni,"
        << fmt(s.max_abs_correction_ni) << "\n";
    out << "diagnostic,,,,max_abs_correction_i," << fmt(s.max_abs_correction_i)
        << "\n";
    out << "diagnostic,,,,mean_abs_correction_ni,"
        << fmt(s.mean_abs_correction_ni) << "\n";
    out << "diagnostic,,,,mean_abs_correction_i,"
        << fmt(s.mean_abs_correction_i) << "\n";
    return out.str();
}

}  // namespace debias
