#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "ieti/errors.hpp"

namespace ieti {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using LinearOperator = std::function<Vector(const Vector&)>;

/// Cached sparse Cholesky factorization of an SPD matrix.
class SpdFactorization {
public:
    explicit SpdFactorization(const SparseMatrix& A) : n_(static_cast<int>(A.rows())) {
        llt_.compute(A);
        if (llt_.info() != Eigen::Success)
            throw NotSpdError("factor_spd: Cholesky failed, matrix is not SPD");
    }

    Vector solve(const Vector& b) const { return llt_.solve(b); }
    int size() const { return n_; }

private:
    Eigen::SimplicialLLT<SparseMatrix> llt_;
    int n_;
};

/**
 * Cached LU factorization (partial pivoting) of the symmetric indefinite
 * saddle point matrix [[K, C^T], [C, 0]], with K of size n x n and C of
 * size m x n. Well posed when ker(K) and ker(C) intersect trivially and
 * the rows of C are linearly independent.
 */
class SaddleFactorization {
public:
    SaddleFactorization(const SparseMatrix& K, const SparseMatrix& C)
        : n_(static_cast<int>(K.rows())), m_(static_cast<int>(C.rows())) {
        std::vector<Eigen::Triplet<double>> triplets;
        triplets.reserve(static_cast<std::size_t>(K.nonZeros()) + 2 * static_cast<std::size_t>(C.nonZeros()));
        for (int col = 0; col < K.outerSize(); ++col)
            for (SparseMatrix::InnerIterator it(K, col); it; ++it)
                triplets.emplace_back(static_cast<int>(it.row()), col, it.value());
        for (int col = 0; col < C.outerSize(); ++col)
            for (SparseMatrix::InnerIterator it(C, col); it; ++it) {
                triplets.emplace_back(n_ + static_cast<int>(it.row()), col, it.value());
                triplets.emplace_back(col, n_ + static_cast<int>(it.row()), it.value());
            }
        SparseMatrix S(n_ + m_, n_ + m_);
        S.setFromTriplets(triplets.begin(), triplets.end());
        S.makeCompressed();
        lu_.compute(S);
        if (lu_.info() != Eigen::Success)
            throw SingularSaddleError("factor_saddle: LU failed, saddle matrix is rank deficient");
    }

    /// Solve for (x, mu) given the stacked right-hand side (b, c).
    std::pair<Vector, Vector> solve(const Vector& b, const Vector& c) const {
        Vector rhs(n_ + m_);
        rhs.head(n_) = b;
        rhs.tail(m_) = c;
        const Vector sol = lu_.solve(rhs);
        return {sol.head(n_), sol.tail(m_)};
    }

    int primal_size() const { return n_; }
    int multiplier_size() const { return m_; }

private:
    Eigen::SparseLU<SparseMatrix> lu_;
    int n_;
    int m_;
};

struct PcgResult {
    Vector x;
    int iterations = 0;
    double kappa = 1.0;                  // Lanczos estimate of cond(M^-1 A)
    std::vector<double> residuals;       // ||r_k|| including k = 0
    bool converged = true;
};

namespace detail {

/// Extreme eigenvalue ratio of the Lanczos tridiagonal assembled from the
/// PCG coefficients alpha_k and beta_k.
inline double lanczos_condition(const std::vector<double>& alphas, const std::vector<double>& betas) {
    const int n = static_cast<int>(alphas.size());
    if (n == 0) return 1.0;
    Matrix T = Matrix::Zero(n, n);
    T(0, 0) = 1.0 / alphas[0];
    for (int k = 1; k < n; ++k) {
        T(k, k) = 1.0 / alphas[static_cast<std::size_t>(k)] +
                  betas[static_cast<std::size_t>(k - 1)] / alphas[static_cast<std::size_t>(k - 1)];
        const double off = std::sqrt(betas[static_cast<std::size_t>(k - 1)]) / alphas[static_cast<std::size_t>(k - 1)];
        T(k, k - 1) = off;
        T(k - 1, k) = off;
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(T);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    return lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
}

}  // namespace detail

/**
 * Preconditioned conjugate gradients with zero initial guess. Stops when
 * ||r_k|| <= max(tol * ||r_0||, abs_tol). The preconditioner is given as
 * the application of M^-1. Non-positive curvature raises
 * IndefiniteOperatorError; hitting max_it clears the `converged` flag
 * instead of throwing. The absolute floor guards right-hand sides that
 * are zero up to roundoff (e.g. jump residuals of a symmetric problem).
 */
inline PcgResult pcg(const LinearOperator& apply_A, const LinearOperator& apply_M, const Vector& b,
                     double tol = 1e-6, int max_it = 500, double abs_tol = 0.0) {
    PcgResult res;
    res.x = Vector::Zero(b.size());
    const double r0 = b.norm();
    res.residuals.push_back(r0);
    if (r0 <= abs_tol) return res;

    std::vector<double> alphas, betas;
    Vector r = b;
    Vector s = apply_M(r);
    double rs = r.dot(s);
    if (rs <= 0.0) throw IndefiniteOperatorError("pcg: preconditioner is not positive definite");
    Vector p = s;

    for (int k = 0; k < max_it; ++k) {
        const Vector q = apply_A(p);
        const double pq = p.dot(q);
        if (pq <= 0.0) throw IndefiniteOperatorError("pcg: non-positive curvature p^T A p");
        const double alpha = rs / pq;
        alphas.push_back(alpha);
        res.x += alpha * p;
        r -= alpha * q;
        res.residuals.push_back(r.norm());
        res.iterations = k + 1;
        if (r.norm() <= std::max(tol * r0, abs_tol)) {
            res.kappa = detail::lanczos_condition(alphas, betas);
            return res;
        }
        s = apply_M(r);
        const double rs_next = r.dot(s);
        if (rs_next <= 0.0) throw IndefiniteOperatorError("pcg: preconditioner is not positive definite");
        const double beta = rs_next / rs;
        betas.push_back(beta);
        p = s + beta * p;
        rs = rs_next;
    }
    res.kappa = detail::lanczos_condition(alphas, betas);
    res.converged = false;
    return res;
}

/// Dense generalized eigenvalue oracle: extreme eigenvalue ratio of
/// M^-1 A for SPD A and M. Intended for cross-checks at small sizes.
inline double condition_number_dense(const Matrix& A, const Matrix& M) {
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(A, M);
    const auto& ev = es.eigenvalues();
    return ev.maxCoeff() / ev.minCoeff();
}

}  // namespace ieti
