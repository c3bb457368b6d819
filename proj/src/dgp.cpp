#include "debias/dgp.hpp"

#include <cmath>
#include <string>

#include "debias/errors.hpp"
#include "debias/numeric.hpp"

namespace debias {

double marginal_quantile(Marginal dist, double p) {
    if (!(p > 0 && p < 1))
        throw DomainError("marginal_quantile needs p in (0, 1)");
    constexpr double half_pi = 1.570796326794896619231321691639751442;
    switch (dist) {
        case Marginal::beta_half_half: {
            const double s = std::sin(half_pi * p);
            return s * s;
        }
        case Marginal::triangular01:
            return p < 0.5 ? std::sqrt(0.5 * p)
                           : 1.0 - std::sqrt(0.5 * (1.0 - p));
        case Marginal::beta_two_five:
            return numeric::inv_reg_inc_beta(2.0, 5.0, p);
        case Marginal::standard_normal:
            return numeric::normal_quantile(p);
        case Marginal::uniform01:
            return p;
        case Marginal::uniform_squared:
            return p * p;
        case Marginal::uniform_squared_reversed:
            return (1.0 - p) * (1.0 - p);
    }
    throw DomainError("unknown marginal");
}

std::string marginal_name(Marginal dist) {
    switch (dist) {
        case Marginal::beta_half_half: return "beta(1/2,1/2)";
        case Marginal::triangular01: return "triangular(0,1)";
        case Marginal::beta_two_five: return "beta(2,5)";
        case Marginal::standard_normal: return "normal(0,1)";
        case Marginal::uniform01: return "uniform(0,1)";
        case Marginal::uniform_squared: return "uniform(0,1) squared";
        case Marginal::uniform_squared_reversed:
            return "reversed uniform(0,1) squared";
    }
    return "?";
}

SchemeSpec scheme_spec(int scheme) {
    switch (scheme) {
        case 1:
            return {1, Marginal::beta_half_half, Marginal::triangular01};
        case 2:
            return {2, Marginal::beta_two_five, Marginal::standard_normal};
        case 3:
            return {3, Marginal::uniform01,
                    Marginal::uniform_squared_reversed};
        case 4:
            return {4, Marginal::uniform01, Marginal::uniform_squared};
        default:
            throw DomainError("scheme must be 1..4, got " +
                              std::to_string(scheme));
    }
}

Matrix build_covariates(int scheme, int n) {
    if (n < 4) throw DomainError("build_covariates needs n >= 4");
    const SchemeSpec spec = scheme_spec(scheme);
    Matrix x(n, 2);
    for (int i = 0; i < n; ++i) {
        const double p = static_cast<double>(i + 1) / (n + 1);
        x(i, 0) = marginal_quantile(spec.x1, p);
        x(i, 1) = marginal_quantile(spec.x2, p);
    }
    return x;
}

Vec studentized_leverage(const Matrix& x, LeverageVariant variant) {
    const auto n = x.rows();
    if (n < 3) throw DomainError("studentized_leverage needs n >= 3");
    Matrix xx = x;
    if (variant == LeverageVariant::with_intercept) {
        xx.resize(n, x.cols() + 1);
        xx.col(0).setOnes();
        xx.rightCols(x.cols()) = x;
    }
    SymMatrix gram(Matrix(xx.transpose() * xx));
    const SymMatrix inv = invert_spd(gram);
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i)
        v[i] = xx.row(i) * inv.mat() * xx.row(i).transpose();
    const double mean = v.mean();
    const double var = (v.array() - mean).square().sum() / (n - 1);
    if (!(var > 0))
        throw DomainError(
            "self-influence scores are constant; cannot standardize");
    return (v.array() - mean) / std::sqrt(var);
}

PotentialOutcomeTable build_table(int scheme, int variant, int n,
                                  LeverageVariant leverage) {
    Matrix x = build_covariates(scheme, n);
    const Vec h = studentized_leverage(x, leverage);
    Vec a, b;
    switch (variant) {
        case 1:
            a = 2.0 * h;
            b = Vec::Zero(n);
            break;
        case 2:
            a = h;
            b = -h;
            break;
        case 3:
            a = h;
            b = h;
            break;
        default:
            throw DomainError("variant must be 1..3, got " +
                              std::to_string(variant));
    }
    return make_table(std::move(a), std::move(b), std::move(x));
}

}  // namespace debias
