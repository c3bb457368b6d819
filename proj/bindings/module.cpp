#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <string>
#include <vector>

#include "debias/debias.hpp"

namespace py = pybind11;
using namespace debias;

namespace {

py::dict estimate_all(const Vec& y, const std::vector<int>& t,
                      const Matrix& z) {
    ExperimentData data = make_experiment_data(y, t, z);
    py::dict d;
    d["unadjusted"] = diff_in_means(data);
    d["ols_noninteracted"] = ate_noninteracted(data);
    d["ols_interacted"] = ate_interacted(data);
    d["debiased_noninteracted"] = ate_debiased_ni(data);
    d["debiased_interacted"] = ate_debiased_i(data);
    d["correction_noninteracted"] = bias_estimate_ni(data);
    d["correction_interacted"] = bias_estimate_i(data);
    return d;
}

py::dict constants_dict(int n, int n_treated) {
    const BiasConstants c = bias_constants(n, n_treated);
    py::dict d;
    d["n"] = c.n;
    d["n_a"] = c.n_a;
    d["n_b"] = c.n_b;
    d["n_aaa"] = c.n_aaa;
    d["n_bbb"] = c.n_bbb;
    d["n_aab"] = c.n_aab;
    d["n_adj_a"] = c.n_adj_a;
    d["n_adj_b"] = c.n_adj_b;
    d["c_a_ni"] = c.c_a_ni;
    d["c_b_ni"] = c.c_b_ni;
    d["c_a_i"] = c.c_a_i;
    d["c_b_i"] = c.c_b_i;
    return d;
}

py::dict table_dict(int scheme, int variant, int n) {
    PotentialOutcomeTable table = build_table(scheme, variant, n);
    py::dict d;
    d["a"] = table.a;
    d["b"] = table.b;
    d["z"] = table.z;
    d["h"] = studentized_leverage(build_covariates(scheme, n));
    d["ate"] = average_treatment_effect(table);
    return d;
}

std::string simulate_json_str(int scheme, int variant, int n, int n_treated,
                              const std::string& mode, std::uint64_t reps,
                              std::uint64_t seed, double level,
                              const std::string& t_df, int threads,
                              std::uint64_t budget) {
    PotentialOutcomeTable table = build_table(scheme, variant, n);
    AssignmentSpace space(n, n_treated > 0 ? n_treated : n / 3);

    EngineOptions opt;
    opt.level = level;
    opt.threads = threads;
    opt.budget = budget;
    if (t_df == "n-1") {
        opt.t_df = TDfConvention::nminus1;
    } else if (t_df == "residual") {
        opt.t_df = TDfConvention::residual;
    } else {
        throw DomainError("t_df must be n-1 or residual");
    }

    DistributionSummary s;
    if (mode == "exact") {
        s = exact_distribution(table, space, opt);
    } else if (mode == "mc") {
        s = monte_carlo_distribution(table, space, seed, reps, opt);
    } else {
        throw DomainError("mode must be exact or mc");
    }
    return summary_json(s);
}

}  // namespace

PYBIND11_MODULE(_debias, m) {
    m.doc() = "bias-corrected treatment effect estimation";

    m.def("estimate", &estimate_all, py::arg("y"), py::arg("t"),
          py::arg("z"),
          "All five treatment effect estimates plus the two bias "
          "corrections, given outcomes, a 0/1 treatment vector, and a "
          "covariate matrix.");
    m.def("bias_constants", &constants_dict, py::arg("n"),
          py::arg("n_treated"),
          "Design constants entering the exact bias corrections.");
    m.def("generate_table", &table_dict, py::arg("scheme"),
          py::arg("variant"), py::arg("n"),
          "Potential outcome table for one of the built-in covariate "
          "schemes.");
    m.def("simulate_json", &simulate_json_str, py::arg("scheme"),
          py::arg("variant"), py::arg("n") = 24, py::arg("n_treated") = 0,
          py::arg("mode") = "exact", py::arg("reps") = 0,
          py::arg("seed") = 0, py::arg("level") = 0.95,
          py::arg("t_df") = "n-1", py::arg("threads") = 0,
          py::arg("budget") = std::uint64_t{10'000'000},
          "Randomization-distribution summary as a JSON string.");
}
