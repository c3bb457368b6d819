#pragma once

#include <string>

#include "debias/design.hpp"
#include "debias/linalg.hpp"

namespace debias {

enum class HcFlavor { hc2, hc3, bc_hc2, bc_hc3 };
enum class CiMode { normal, student_t, satterthwaite };

// Degrees of freedom used by the plain Student-t interval: residual is
// n - rank(X); nminus1 treats every observation as its own cluster and uses
// n - 1 regardless of the design.
enum class TDfConvention { residual, nminus1 };

std::string to_string(HcFlavor f);
std::string to_string(CiMode m);
HcFlavor hc_flavor_from_string(const std::string& s);
CiMode ci_mode_from_string(const std::string& s);

// One fitted OLS regression.  Invariants: 0 <= hat_diag[i] < 1 and
// x * beta + residuals reproduces y to rounding.
struct FitContext {
    Matrix x;
    Vec y;
    Vec beta;
    Vec residuals;
    Vec hat_diag;
    Matrix xtx_inverse;
    int treatment_col = 1;
};

FitContext fit_ols(const Vec& y, const Matrix& x, int treatment_col = 1,
                   double rel_tol = kDefaultRelTol);

// Design builders for the three regressions under study.  The interacted
// design uses centered z in both the main and interaction columns.
FitContext fit_unadjusted(const ExperimentData& data);
FitContext fit_noninteracted(const ExperimentData& data);
FitContext fit_interacted(const ExperimentData& data);

// Heteroskedasticity-consistent variance of the treatment coefficient:
//   sum_i u_i^2 w_i e_i^2,  u = (X'X)^{-1} X' row for the treatment column,
// with w_i = 1/(1-h_ii) for HC2 and 1/(1-h_ii)^2 for HC3.  The bc_* flavors
// use the same weights; pass the context produced by bc_residuals.  Throws
// LeverageOne when some h_ii is 1 to rounding.
double hc_variance(const FitContext& ctx, HcFlavor flavor);

// Replaces the treatment coefficient by its debiased value and recomputes
// residuals; the design, hat values and the rest of beta are unchanged.
FitContext bc_residuals(const FitContext& ctx, double debiased_coef);

// Bell-McCaffrey Satterthwaite degrees of freedom, tr(M)^2 / tr(M^2) with
// M_ij = sqrt(w_i w_j) u_i u_j (I - H)_ij.  Depends only on the design, so
// the bc_* flavors match their base flavor exactly.
double satterthwaite_df(const FitContext& ctx, HcFlavor flavor);

double student_df(const FitContext& ctx,
                  TDfConvention convention = TDfConvention::residual);

struct Interval {
    double lo = 0;
    double hi = 0;

    double width() const { return hi - lo; }
    bool covers(double value) const { return lo <= value && value <= hi; }
};

// Central interval estimate +/- c * se where c is the normal quantile, the
// Student-t quantile at df, or the Student-t quantile at a Satterthwaite df
// (mode selects which; df is ignored for CiMode::normal).
Interval confidence_interval(double estimate, double se, CiMode mode,
                             double df = 0, double level = 0.95);

struct VarianceReport {
    HcFlavor flavor = HcFlavor::hc2;
    double se = 0;
    double df_t = 0;     // n - rank(X)
    double df_satt = 0;  // Bell-McCaffrey
    Interval ci_z;
    Interval ci_t;
    Interval ci_satt;
};

// Full inference summary for one fit and flavor.  center is the point
// estimate the intervals are built around; for the bc_* flavors pass the
// debiased estimate and the original (pre-correction) fit, the report
// recomputes residuals internally.
VarianceReport variance_report(const FitContext& ctx, HcFlavor flavor,
                               double center, double level = 0.95);

}  // namespace debias
