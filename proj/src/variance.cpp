#include "debias/variance.hpp"

#include <cmath>
#include <string>

#include "debias/errors.hpp"
#include "debias/numeric.hpp"

namespace debias {

std::string to_string(HcFlavor f) {
    switch (f) {
        case HcFlavor::hc2: return "hc2";
        case HcFlavor::hc3: return "hc3";
        case HcFlavor::bc_hc2: return "bc-hc2";
        case HcFlavor::bc_hc3: return "bc-hc3";
    }
    return "?";
}

std::string to_string(CiMode m) {
    switch (m) {
        case CiMode::normal: return "z";
        case CiMode::student_t: return "t";
        case CiMode::satterthwaite: return "satterthwaite";
    }
    return "?";
}

HcFlavor hc_flavor_from_string(const std::string& s) {
    if (s == "hc2") return HcFlavor::hc2;
    if (s == "hc3") return HcFlavor::hc3;
    if (s == "bc-hc2") return HcFlavor::bc_hc2;
    if (s == "bc-hc3") return HcFlavor::bc_hc3;
    throw DomainError("unknown variance flavor '" + s + "'");
}

CiMode ci_mode_from_string(const std::string& s) {
    if (s == "z") return CiMode::normal;
    if (s == "t") return CiMode::student_t;
    if (s == "satterthwaite" || s == "satt") return CiMode::satterthwaite;
    throw DomainError("unknown interval mode '" + s + "'");
}

FitContext fit_ols(const Vec& y, const Matrix& x, int treatment_col,
                   double rel_tol) {
    if (y.size() != x.rows())
        throw DimensionMismatch("fit_ols: y length vs design rows");
    if (treatment_col < 0 || treatment_col >= x.cols())
        throw IndexOutOfRange("fit_ols: treatment column out of range");
    SymMatrix xtx(Matrix(x.transpose() * x));
    SymMatrix xtx_inv = invert_spd(xtx, rel_tol);
    FitContext ctx;
    ctx.x = x;
    ctx.y = y;
    ctx.xtx_inverse = xtx_inv.mat();
    ctx.beta = ctx.xtx_inverse * (x.transpose() * y);
    ctx.residuals = y - x * ctx.beta;
    ctx.hat_diag = (x * ctx.xtx_inverse).cwiseProduct(x).rowwise().sum();
    ctx.treatment_col = treatment_col;
    return ctx;
}

namespace {

Vec treatment_vec(const ExperimentData& data) {
    Vec t(data.n());
    for (int i = 0; i < data.n(); ++i) t[i] = data.t[i];
    return t;
}

}  // namespace

FitContext fit_unadjusted(const ExperimentData& data) {
    const int n = data.n();
    Matrix x(n, 2);
    x.col(0).setOnes();
    x.col(1) = treatment_vec(data);
    return fit_ols(data.y, x, 1);
}

FitContext fit_noninteracted(const ExperimentData& data) {
    const int n = data.n(), k = data.k();
    Matrix x(n, 2 + k);
    x.col(0).setOnes();
    x.col(1) = treatment_vec(data);
    x.rightCols(k) = data.z;
    return fit_ols(data.y, x, 1);
}

FitContext fit_interacted(const ExperimentData& data) {
    const int n = data.n(), k = data.k();
    Matrix x(n, 2 + 2 * k);
    x.col(0).setOnes();
    x.col(1) = treatment_vec(data);
    x.middleCols(2, k) = data.z;
    x.rightCols(k) = data.z.array().colwise() * x.col(1).array();
    return fit_ols(data.y, x, 1);
}

namespace {

constexpr double kLeverageEps = 1e-12;

// HC2 / HC3 weight; the bc_* flavors reuse their base weight.
double hc_weight(HcFlavor flavor, double h) {
    const double gap = 1.0 - h;
    if (gap <= kLeverageEps)
        throw LeverageOne("leverage " + std::to_string(h) +
                          " leaves no residual variance to rescale");
    if (flavor == HcFlavor::hc3 || flavor == HcFlavor::bc_hc3)
        return 1.0 / (gap * gap);
    return 1.0 / gap;
}

}  // namespace

double hc_variance(const FitContext& ctx, HcFlavor flavor) {
    const auto n = ctx.x.rows();
    // u_i = c'(X'X)^{-1} x_i with c picking the treatment column.
    const Vec u = ctx.x * ctx.xtx_inverse.col(ctx.treatment_col);
    double v = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double w = hc_weight(flavor, ctx.hat_diag[i]);
        const double ue = u[i] * ctx.residuals[i];
        v += ue * ue * w;
    }
    return v;
}

FitContext bc_residuals(const FitContext& ctx, double debiased_coef) {
    FitContext out = ctx;
    const double shift = debiased_coef - ctx.beta[ctx.treatment_col];
    out.beta[ctx.treatment_col] = debiased_coef;
    out.residuals -= shift * ctx.x.col(ctx.treatment_col);
    return out;
}

double satterthwaite_df(const FitContext& ctx, HcFlavor flavor) {
    const auto n = ctx.x.rows();
    const Vec u = ctx.x * ctx.xtx_inverse.col(ctx.treatment_col);
    Vec a2(n);  // w_i u_i^2
    for (Eigen::Index i = 0; i < n; ++i)
        a2[i] = hc_weight(flavor, ctx.hat_diag[i]) * u[i] * u[i];

    // M = A (I - H) A with A = diag(sqrt(w) |u|); df = tr(M)^2 / tr(M^2).
    const Matrix g = ctx.x * ctx.xtx_inverse;  // H = g x'
    double tr_m = 0;
    for (Eigen::Index i = 0; i < n; ++i)
        tr_m += a2[i] * (1.0 - ctx.hat_diag[i]);
    double tr_m2 = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double dii = 1.0 - ctx.hat_diag[i];
        tr_m2 += a2[i] * a2[i] * dii * dii;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double hij = g.row(i).dot(ctx.x.row(j));
            tr_m2 += 2.0 * a2[i] * a2[j] * hij * hij;
        }
    }
    if (tr_m2 <= 0)
        throw DegenerateSpectrum(
            "Satterthwaite spectrum vanished; no degrees of freedom");
    return tr_m * tr_m / tr_m2;
}

double student_df(const FitContext& ctx, TDfConvention convention) {
    if (convention == TDfConvention::nminus1)
        return static_cast<double>(ctx.x.rows() - 1);
    return static_cast<double>(ctx.x.rows() - ctx.x.cols());
}

Interval confidence_interval(double estimate, double se, CiMode mode,
                             double df, double level) {
    if (!(level > 0 && level < 1))
        throw DomainError("confidence level must be in (0, 1)");
    const double p = 0.5 * (1.0 + level);
    double crit;
    if (mode == CiMode::normal)
        crit = level == 0.95 ? numeric::kZ975 : numeric::normal_quantile(p);
    else
        crit = numeric::student_t_quantile(p, df);
    return Interval{estimate - crit * se, estimate + crit * se};
}

VarianceReport variance_report(const FitContext& ctx, HcFlavor flavor,
                               double center, double level) {
    const bool bc =
        flavor == HcFlavor::bc_hc2 || flavor == HcFlavor::bc_hc3;
    const FitContext* use = &ctx;
    FitContext shifted;
    if (bc) {
        shifted = bc_residuals(ctx, center);
        use = &shifted;
    }
    VarianceReport r;
    r.flavor = flavor;
    r.se = std::sqrt(hc_variance(*use, flavor));
    r.df_t = student_df(ctx, TDfConvention::residual);
    r.df_satt = satterthwaite_df(ctx, flavor);
    r.ci_z = confidence_interval(center, r.se, CiMode::normal, 0, level);
    r.ci_t =
        confidence_interval(center, r.se, CiMode::student_t, r.df_t, level);
    r.ci_satt = confidence_interval(center, r.se, CiMode::satterthwaite,
                                    r.df_satt, level);
    return r;
}

}  // namespace debias
