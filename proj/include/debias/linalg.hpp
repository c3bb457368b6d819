#pragma once

#include <Eigen/Dense>

#include "debias/errors.hpp"

namespace debias {

using Vec = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kDefaultRelTol = 1e-10;

// Dense symmetric matrix.  Construction symmetrizes, so (i,j) and (j,i) are
// bit-identical afterwards regardless of how the input was assembled.
class SymMatrix {
  public:
    SymMatrix() : m_(0, 0) {}
    explicit SymMatrix(const Matrix& m);

    int dim() const { return static_cast<int>(m_.rows()); }
    double operator()(int i, int j) const { return m_(i, j); }
    const Matrix& mat() const { return m_; }

  private:
    Matrix m_;
};

// Inverse of a symmetric positive definite matrix via pivoted LDLT.  Throws
// SingularMatrix when the smallest |pivot| falls below rel_tol times the
// largest, or when any pivot is nonpositive.  The result is symmetrized.
SymMatrix invert_spd(const SymMatrix& m, double rel_tol = kDefaultRelTol);

// Spectral-cutoff generalized inverse: eigenvalues whose magnitude falls
// below rel_tol times the largest are treated as exact zeros.  Opt-in
// fallback for rank-deficient moment matrices; invert_spd is the default
// path and callers that want the pseudo-inverse must ask for it.
SymMatrix pseudo_inverse(const SymMatrix& m, double rel_tol = kDefaultRelTol);

// v' M v.  Throws DimensionMismatch when sizes disagree.
double quadratic_form(const Vec& v, const SymMatrix& m);

}  // namespace debias
