#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include "imhyb/errors.hpp"

namespace imhyb::numerics {

using DenseMatrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

namespace detail {

inline bool all_finite(const Vector& v) { return v.allFinite(); }

// Minimizes ||J d + F||^2 + lambda ||d||^2 through the stacked least-squares
// system [J; sqrt(lambda) I] d = [-F; 0].
inline Vector stacked_damped_solve(const DenseMatrix& J, const Vector& F, double lambda) {
    const Index m = J.rows();
    const Index n = J.cols();
    DenseMatrix stacked(m + n, n);
    stacked.topRows(m) = J;
    stacked.bottomRows(n).setZero();
    stacked.bottomRows(n).diagonal().setConstant(std::sqrt(lambda));
    Vector rhs = Vector::Zero(m + n);
    rhs.head(m) = -F;
    Eigen::ColPivHouseholderQR<DenseMatrix> qr(stacked);
    if (qr.rank() < n) {
        throw SingularSystem("damped normal matrix is rank deficient (rank " +
                             std::to_string(qr.rank()) + " < " + std::to_string(n) + ")");
    }
    Vector d = qr.solve(rhs);
    if (!all_finite(d)) throw SingularSystem("non-finite step from stacked solve");
    return d;
}

}  // namespace detail

/// Solves (G + lambda I) d = -g where G = J^T J and g = J^T F were formed by
/// the caller. Cholesky first; on failure falls back to an orthogonal
/// factorization of the stacked system, which needs J and F.
inline Vector solve_damped_gram(DenseMatrix gram, const Vector& grad, double lambda,
                                const DenseMatrix& J, const Vector& F) {
    if (lambda < 0.0 || !std::isfinite(lambda)) {
        throw SingularSystem("damping factor must be finite and non-negative");
    }
    gram.diagonal().array() += lambda;
    Eigen::LLT<DenseMatrix> llt(gram);
    if (llt.info() == Eigen::Success) {
        Vector d = -llt.solve(grad);
        if (detail::all_finite(d)) return d;
    }
    return detail::stacked_damped_solve(J, F, lambda);
}

/// Levenberg-Marquardt search direction: (J^T J + lambda I) d = -J^T F.
inline Vector solve_damped_normal(const DenseMatrix& J, const Vector& F, double lambda) {
    if (J.rows() != F.size()) {
        throw DimensionMismatch("residual length " + std::to_string(F.size()) +
                                " != Jacobian rows " + std::to_string(J.rows()));
    }
    DenseMatrix gram = DenseMatrix::Zero(J.cols(), J.cols());
    gram.selfadjointView<Eigen::Lower>().rankUpdate(J.transpose());
    gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose();
    Vector grad = J.transpose() * F;
    return solve_damped_gram(std::move(gram), grad, lambda, J, F);
}

/// Contiguous range of rows sharing a sparsity pattern over column blocks.
struct RowGroup {
    Index begin = 0;
    Index size = 0;
};

/// J^T J for a Jacobian whose rows split into groups and whose columns split
/// into equal blocks; (group, block) tiles that are identically zero are
/// skipped. Groups must partition the rows of J.
inline DenseMatrix blocked_gram(const DenseMatrix& J, std::span<const RowGroup> groups,
                                Index block_cols) {
    const Index n = J.cols();
    if (block_cols <= 0 || n % block_cols != 0) {
        throw DimensionMismatch("column block size does not divide Jacobian width");
    }
    const Index nblocks = n / block_cols;
    DenseMatrix gram = DenseMatrix::Zero(n, n);
    std::vector<Index> active;
    for (const RowGroup& g : groups) {
        if (g.size == 0) continue;
        active.clear();
        for (Index k = 0; k < nblocks; ++k) {
            if (!J.block(g.begin, k * block_cols, g.size, block_cols).isZero(0.0)) {
                active.push_back(k);
            }
        }
        for (std::size_t a = 0; a < active.size(); ++a) {
            const Index k = active[a];
            const auto Jk = J.block(g.begin, k * block_cols, g.size, block_cols);
            gram.block(k * block_cols, k * block_cols, block_cols, block_cols)
                .selfadjointView<Eigen::Lower>()
                .rankUpdate(Jk.transpose());
            for (std::size_t b = a + 1; b < active.size(); ++b) {
                const Index l = active[b];
                const auto Jl = J.block(g.begin, l * block_cols, g.size, block_cols);
                gram.block(l * block_cols, k * block_cols, block_cols, block_cols).noalias() +=
                    Jl.transpose() * Jk;
            }
        }
    }
    gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose();
    return gram;
}

/// Minimum-norm least-squares solution V^+ y. Singular values below
/// max(Q, eta) * eps * sigma_max are treated as zero.
inline Vector pinv_solve(const DenseMatrix& V, const Vector& y) {
    if (y.size() != V.rows()) {
        throw DimensionMismatch("target length " + std::to_string(y.size()) +
                                " != design rows " + std::to_string(V.rows()));
    }
    Eigen::JacobiSVD<DenseMatrix> svd(V, Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(static_cast<double>(std::max(V.rows(), V.cols())) *
                     std::numeric_limits<double>::epsilon());
    return svd.solve(y);
}

/// All (complex) eigenvalues of a square matrix, unordered.
inline std::vector<std::complex<double>> eigvals(const DenseMatrix& A) {
    if (A.rows() != A.cols()) {
        throw NonSquare(std::to_string(A.rows()) + "x" + std::to_string(A.cols()));
    }
    if (A.rows() == 0) return {};
    Eigen::EigenSolver<DenseMatrix> es(A, false);
    const auto ev = es.eigenvalues();
    return {ev.data(), ev.data() + ev.size()};
}

/// Gaussian elimination with partial pivoting. A pivot smaller than
/// pivot_tol * max|A| raises SingularSystem.
inline Vector lu_solve(DenseMatrix A, Vector b, double pivot_tol = 1e-12) {
    const Index n = A.rows();
    if (A.cols() != n) throw NonSquare("lu_solve needs a square matrix");
    if (b.size() != n) throw DimensionMismatch("lu_solve right-hand side length");
    const double scale = n > 0 ? A.cwiseAbs().maxCoeff() : 0.0;
    for (Index k = 0; k < n; ++k) {
        Index p;
        const double piv = A.col(k).tail(n - k).cwiseAbs().maxCoeff(&p);
        p += k;
        if (!(piv > pivot_tol * scale)) {
            throw SingularSystem("pivot " + std::to_string(piv) + " at column " +
                                 std::to_string(k));
        }
        if (p != k) {
            A.row(p).swap(A.row(k));
            std::swap(b(p), b(k));
        }
        for (Index i = k + 1; i < n; ++i) {
            const double m = A(i, k) / A(k, k);
            if (m == 0.0) continue;
            A.row(i).tail(n - k) -= m * A.row(k).tail(n - k);
            b(i) -= m * b(k);
        }
    }
    for (Index i = n - 1; i >= 0; --i) {
        b(i) = (b(i) - A.row(i).tail(n - i - 1).dot(b.tail(n - i - 1))) / A(i, i);
    }
    return b;
}

}  // namespace imhyb::numerics
