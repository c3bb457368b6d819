#pragma once

// Exact rational evaluation of the complete-randomization moment constants,
// kept separate from the double-arithmetic production path so the two can
// be checked against each other.

#include <cstdint>
#include <numeric>
#include <stdexcept>

namespace debias::rational {

struct Fraction {
    __int128 num = 0;
    __int128 den = 1;

    static __int128 gcd128(__int128 a, __int128 b) {
        if (a < 0) a = -a;
        if (b < 0) b = -b;
        while (b) {
            const __int128 t = a % b;
            a = b;
            b = t;
        }
        return a;
    }

    void reduce() {
        if (den < 0) {
            num = -num;
            den = -den;
        }
        const __int128 g = gcd128(num, den);
        if (g > 1) {
            num /= g;
            den /= g;
        }
    }

    Fraction() = default;
    Fraction(long long n) : num(n), den(1) {}
    Fraction(long long n, long long d) : num(n), den(d) { reduce(); }

    friend Fraction operator+(Fraction a, Fraction b) {
        Fraction r;
        r.num = a.num * b.den + b.num * a.den;
        r.den = a.den * b.den;
        r.reduce();
        return r;
    }
    friend Fraction operator-(Fraction a, Fraction b) {
        Fraction r;
        r.num = a.num * b.den - b.num * a.den;
        r.den = a.den * b.den;
        r.reduce();
        return r;
    }
    friend Fraction operator*(Fraction a, Fraction b) {
        Fraction r;
        r.num = a.num * b.num;
        r.den = a.den * b.den;
        r.reduce();
        return r;
    }

    double value() const {
        return static_cast<double>(num) / static_cast<double>(den);
    }
};

struct ExactConstants {
    Fraction n_aaa, n_bbb, n_aab, n_adj_a, n_adj_b;
    Fraction c_a_ni, c_b_ni, c_a_i, c_b_i;
};

inline ExactConstants exact_bias_constants(long long n, long long n_a) {
    const long long n_b = n - n_a;
    if (n_a < 3 || n_b < 3)
        throw std::invalid_argument("need at least 3 units per arm");
    using F = Fraction;
    const F pair(n * (n - 1));
    const F triple(n * (n - 1) * (n - 2));
    auto inv = [](const F& f) {
        F r;
        r.num = f.den;
        r.den = f.num;
        r.reduce();
        return r;
    };

    ExactConstants c;
    c.n_aaa = F(n, n_a * n_a * n_a) *
              (F(n_a, n) - F(3 * n_a * (n_a - 1)) * inv(pair) +
               F(2 * n_a * (n_a - 1) * (n_a - 2)) * inv(triple));
    c.n_bbb = F(n, n_b * n_b * n_b) *
              (F(n_b, n) - F(3 * n_b * (n_b - 1)) * inv(pair) +
               F(2 * n_b * (n_b - 1) * (n_b - 2)) * inv(triple));
    c.n_aab = F(n, n_a * n_a * n_b) *
              (F(0) - F(n_a * n_b) * inv(pair) +
               F(2 * n_a * (n_a - 1) * n_b) * inv(triple));
    c.n_adj_a = triple * inv(F((n_a - 1) * (n_a - 2) * n_a)) *
                F(n_a * n_a * n_a) * inv(F(n * n * n));
    c.n_adj_b = triple * inv(F((n_b - 1) * (n_b - 2) * n_b)) *
                F(n_b * n_b * n_b) * inv(F(n * n * n));
    c.c_a_ni = F(n_a, n_b) * c.n_aaa * c.n_adj_a;
    c.c_b_ni = F(n_a, n_b) * c.n_aab * c.n_adj_b;
    c.c_a_i = c.n_aaa * c.n_adj_a;
    c.c_b_i = c.n_bbb * c.n_adj_b;
    return c;
}

}  // namespace debias::rational
