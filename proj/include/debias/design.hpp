#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "debias/linalg.hpp"

namespace debias {

// Science table of a completely randomized experiment: unit i has treated
// response a[i], control response b[i], and covariate row z.row(i).
// Covariates here are raw (uncentered).
struct PotentialOutcomeTable {
    Vec a;
    Vec b;
    Matrix z;

    int n() const { return static_cast<int>(a.size()); }
    int k() const { return static_cast<int>(z.cols()); }
};

// Validates n >= 4, k >= 1, n > k + 2 and matching shapes.
PotentialOutcomeTable make_table(Vec a, Vec b, Matrix z);

double average_treatment_effect(const PotentialOutcomeTable& table);

// Treated-unit index set, sorted ascending, 2 <= size <= n - 2.
struct Assignment {
    std::vector<int> treated;
    int n;

    int n_treated() const { return static_cast<int>(treated.size()); }
};

Assignment make_assignment(std::vector<int> treated, int n);

// One realized dataset: observed outcome, 0/1 treatment, and covariates
// centered at the full-sample mean.  centering_shift holds the subtracted
// column means so raw covariates can be recovered.
struct ExperimentData {
    Vec y;
    std::vector<int> t;
    Matrix z;
    Vec centering_shift;

    int n() const { return static_cast<int>(y.size()); }
    int k() const { return static_cast<int>(z.cols()); }
    int n_treated() const;
};

// Centers z and validates: n >= 4, arms have at least 2 units each, t is
// 0/1.  The centered columns sum to zero within 1e-10 * n * max|z|.
ExperimentData make_experiment_data(Vec y, std::vector<int> t, Matrix z_raw);

ExperimentData realize(const PotentialOutcomeTable& table,
                       const Assignment& assignment);

struct CsvColumns {
    std::string y;
    std::string t;
    std::vector<std::string> z;
};

// Reads a CSV with a header row.  Throws ParseError for malformed cells or
// missing columns (1-based row/column coordinates), NonBinaryTreatment when
// the treatment column has values other than 0/1, DegenerateArm when either
// arm ends up with fewer than 2 units.
ExperimentData ingest_csv(std::istream& in, const CsvColumns& columns);
ExperimentData ingest_csv_file(const std::string& path,
                               const CsvColumns& columns);

// Per-arm first and second moments of the centered data.  mean_zz_* are raw
// within-arm second moments (not centered within the arm).
struct GroupStats {
    int n = 0;
    int n_a = 0;
    int n_b = 0;
    double p_a = 0;
    double p_b = 0;
    double mean_y_a = 0;
    double mean_y_b = 0;
    Vec mean_z_a;
    Vec mean_z_b;
    Vec mean_yz_a;
    Vec mean_yz_b;
    SymMatrix mean_zz_a;
    SymMatrix mean_zz_b;
    SymMatrix mean_zz;  // full-sample second moment of centered z
};

GroupStats group_stats(const ExperimentData& data);

}  // namespace debias
