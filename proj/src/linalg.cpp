#include "debias/linalg.hpp"

#include <cmath>

namespace debias {

SymMatrix::SymMatrix(const Matrix& m) {
    if (m.rows() != m.cols())
        throw DimensionMismatch("SymMatrix needs a square input, got " +
                                std::to_string(m.rows()) + "x" +
                                std::to_string(m.cols()));
    if (m.rows() < 1) throw DimensionMismatch("SymMatrix needs dim >= 1");
    m_ = 0.5 * (m + m.transpose());
}

SymMatrix invert_spd(const SymMatrix& m, double rel_tol) {
    const auto& a = m.mat();
    Eigen::LDLT<Matrix> ldlt(a);
    if (ldlt.info() != Eigen::Success)
        throw SingularMatrix("LDLT factorization failed");
    const Vec d = ldlt.vectorD();
    const double dmax = d.maxCoeff();
    const double dmin = d.minCoeff();
    if (!(dmax > 0) || dmin <= rel_tol * dmax)
        throw SingularMatrix(
            "matrix is singular at relative tolerance " +
            std::to_string(rel_tol) + " (pivot range [" +
            std::to_string(dmin) + ", " + std::to_string(dmax) + "])");
    Matrix inv = ldlt.solve(Matrix::Identity(a.rows(), a.cols()));
    return SymMatrix(inv);
}

SymMatrix pseudo_inverse(const SymMatrix& m, double rel_tol) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(m.mat());
    if (es.info() != Eigen::Success)
        throw SingularMatrix("eigendecomposition failed");
    const Vec& ev = es.eigenvalues();
    const double cutoff = rel_tol * ev.cwiseAbs().maxCoeff();
    Vec inv_ev = Vec::Zero(ev.size());
    for (int i = 0; i < ev.size(); ++i)
        if (std::abs(ev[i]) > cutoff) inv_ev[i] = 1.0 / ev[i];
    Matrix inv = es.eigenvectors() * inv_ev.asDiagonal() *
                 es.eigenvectors().transpose();
    return SymMatrix(inv);
}

double quadratic_form(const Vec& v, const SymMatrix& m) {
    if (v.size() != m.dim())
        throw DimensionMismatch("quadratic_form: vector length " +
                                std::to_string(v.size()) + " vs matrix dim " +
                                std::to_string(m.dim()));
    return v.dot(m.mat() * v);
}

}  // namespace debias
