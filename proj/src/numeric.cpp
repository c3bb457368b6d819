#include "debias/numeric.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "debias/errors.hpp"

namespace debias::numeric {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

// Lanczos, g = 7, 9 coefficients (Godfrey's table).
constexpr double kLanczos[9] = {
    0.99999999999980993,      676.5203681218851,     -1259.1392167224028,
    771.32342877765313,       -176.61502916214059,   12.507343278686905,
    -0.13857109526572012,     9.9843695780195716e-6, 1.5056327351493116e-7};

}  // namespace

double log_gamma(double x) {
    if (!(x > 0)) throw DomainError("log_gamma needs x > 0");
    if (x < 0.5) {
        // Reflection keeps the series argument away from 0.
        return std::log(kPi / std::sin(kPi * x)) - log_gamma(1.0 - x);
    }
    const double z = x - 1.0;
    double a = kLanczos[0];
    for (int i = 1; i < 9; ++i) a += kLanczos[i] / (z + i);
    const double t = z + 7.5;
    return 0.5 * std::log(2.0 * kPi) + (z + 0.5) * std::log(t) - t +
           std::log(a);
}

double log_beta(double a, double b) {
    return log_gamma(a) + log_gamma(b) - log_gamma(a + b);
}

namespace {

// Continued fraction for the incomplete beta (Lentz's method).
double inc_beta_cf(double a, double b, double x) {
    constexpr double tiny = 1e-300;
    constexpr double eps = 1e-16;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 500; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < eps) break;
    }
    return h;
}

}  // namespace

double reg_inc_beta(double a, double b, double x) {
    if (!(a > 0) || !(b > 0))
        throw DomainError("reg_inc_beta needs a, b > 0");
    if (x <= 0) return 0.0;
    if (x >= 1) return 1.0;
    const double front =
        std::exp(a * std::log(x) + b * std::log1p(-x) - log_beta(a, b));
    // The continued fraction converges fast on one side of the mean.
    if (x < (a + 1.0) / (a + b + 2.0))
        return front * inc_beta_cf(a, b, x) / a;
    return 1.0 - front * inc_beta_cf(b, a, 1.0 - x) / b;
}

double inv_reg_inc_beta(double a, double b, double p) {
    if (!(a > 0) || !(b > 0))
        throw DomainError("inv_reg_inc_beta needs a, b > 0");
    if (!(p >= 0 && p <= 1))
        throw DomainError("inv_reg_inc_beta needs p in [0, 1]");
    if (p == 0) return 0.0;
    if (p == 1) return 1.0;
    double lo = 0.0, hi = 1.0;
    // Bisection gives a tight, guaranteed bracket.
    for (int i = 0; i < 80; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (reg_inc_beta(a, b, mid) < p)
            lo = mid;
        else
            hi = mid;
    }
    double x = 0.5 * (lo + hi);
    const double log_b = log_beta(a, b);
    // A couple of Newton steps polish off the last bits.
    for (int i = 0; i < 3; ++i) {
        if (x <= 0 || x >= 1) break;
        const double f = reg_inc_beta(a, b, x) - p;
        const double dens =
            std::exp((a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) -
                     log_b);
        if (dens <= 0) break;
        double step = f / dens;
        double next = x - step;
        if (next <= lo || next >= hi) break;
        x = next;
    }
    return x;
}

double normal_quantile(double p) {
    // Wichura's algorithm AS 241, PPND16.
    if (!(p > 0 && p < 1))
        throw DomainError("normal_quantile needs p in (0, 1)");
    const double q = p - 0.5;
    if (std::abs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        return q *
               (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r +
                     67265.770927008700853) *
                        r +
                    45921.953931549871457) *
                       r +
                   13731.693765509461125) *
                      r +
                  1971.5909503065514427) *
                     r +
                 133.14166789178437745) *
                    r +
                3.387132872796366608) /
               (((((((r * 5226.495278852854561 + 28729.085735721942674) * r +
                     39307.89580009271061) *
                        r +
                    21213.794301586595867) *
                       r +
                   5394.1960214247511077) *
                      r +
                  687.1870074920579083) *
                     r +
                 42.313330701600911252) *
                    r +
                1.0);
    }
    double r = q < 0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double val;
    if (r <= 5.0) {
        r -= 1.6;
        val = (((((((r * 7.7454501427834140764e-4 + 0.0227238449892691845833) *
                        r +
                    0.24178072517745061177) *
                       r +
                   1.27045825245236838258) *
                      r +
                  3.64784832476320460504) *
                     r +
                 5.7694972214606914055) *
                    r +
                4.6303378461565452959) *
                   r +
               1.42343711074968357734) /
              (((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) *
                        r +
                    0.0151986665636164571966) *
                       r +
                   0.14810397642748007459) *
                      r +
                  0.68976733498510000455) *
                     r +
                 1.6763848301838038494) *
                    r +
                2.05319162663775882187) *
                   r +
               1.0);
    } else {
        r -= 5.0;
        val = (((((((r * 2.01033439929228813265e-7 +
                     2.71155556874348757815e-5) *
                        r +
                    0.0012426609473880784386) *
                       r +
                   0.026532189526576123093) *
                      r +
                  0.29656057182850489123) *
                     r +
                 1.7848265399172913358) *
                    r +
                5.4637849111641143699) *
                   r +
               6.6579046435011037772) /
              (((((((r * 2.04426310338993978564e-15 +
                     1.4215117583164458887e-7) *
                        r +
                    1.8463183175100546818e-5) *
                       r +
                   7.868691311456132591e-4) *
                      r +
                  0.0148753612908506148525) *
                     r +
                 0.13692988092273580531) *
                    r +
                0.59983220655588793769) *
                   r +
               1.0);
    }
    return q < 0 ? -val : val;
}

double student_t_quantile(double p, double df) {
    if (!(df > 0)) throw DomainError("student_t_quantile needs df > 0");
    if (!(p > 0 && p < 1))
        throw DomainError("student_t_quantile needs p in (0, 1)");
    if (p == 0.5) return 0.0;
    // Work in the upper tail; mirror at the end.
    const bool lower = p < 0.5;
    const double pu = lower ? p : 1.0 - p;  // upper-tail mass
    // Cornish-Fisher seed from the normal quantile.
    const double z = normal_quantile(1.0 - pu);
    const double z2 = z * z;
    double t = z *
               (1.0 + (z2 + 1.0) / (4.0 * df) +
                (5.0 * z2 * z2 + 16.0 * z2 + 3.0) / (96.0 * df * df));
    if (!std::isfinite(t) || t <= 0) t = z > 0 ? z : 1.0;

    // Upper-tail CDF of t > 0: P(T > t) = I_x(df/2, 1/2)/2, x = df/(df+t^2).
    const auto upper_tail = [df](double tt) {
        const double x = df / (df + tt * tt);
        return 0.5 * reg_inc_beta(0.5 * df, 0.5, x);
    };
    const double log_norm =
        -log_beta(0.5 * df, 0.5) - 0.5 * std::log(df);
    const auto density = [df, log_norm](double tt) {
        return std::exp(log_norm -
                        0.5 * (df + 1.0) * std::log1p(tt * tt / df));
    };

    // Safeguarded Newton on the exact CDF.
    double lo = 0.0, hi = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 60; ++i) {
        const double f = upper_tail(t) - pu;
        if (f > 0)
            lo = t;  // t too small (tail mass too big)
        else
            hi = t;
        const double d = density(t);
        double next = d > 0 ? t + f / d : t;
        if (!(next > lo && next < hi))
            next = std::isfinite(hi) ? 0.5 * (lo + hi) : 2.0 * (lo + 1.0);
        if (std::abs(next - t) <= 1e-14 * (1.0 + std::abs(t))) {
            t = next;
            break;
        }
        t = next;
    }
    return lower ? -t : t;
}

}  // namespace debias::numeric
