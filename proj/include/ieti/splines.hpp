#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "ieti/errors.hpp"

namespace ieti {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/**
 * Open knot vector on [0,1] together with a polynomial degree.
 *
 * Invariants enforced at construction:
 *  - knots are monotonically non-decreasing with knots.front() = 0 and
 *    knots.back() = 1,
 *  - the first and last knot have multiplicity exactly degree+1,
 *  - interior knots have multiplicity at most degree.
 *
 * The basis spanned by the knot vector has m - degree - 1 functions,
 * where m is the number of knots. Instances are immutable; evaluation
 * is reentrant.
 */
class KnotVector {
public:
    KnotVector(std::vector<double> knots, int degree)
        : knots_(std::move(knots)), degree_(degree) {
        validate();
    }

    /// Open knot vector with `spans` uniform interior spans, each interior
    /// breakpoint repeated `interior_multiplicity` times.
    static KnotVector open_uniform(int degree, int spans, int interior_multiplicity = 1) {
        if (degree < 1 || spans < 1) throw std::invalid_argument("open_uniform: degree and spans must be >= 1");
        if (interior_multiplicity < 1 || interior_multiplicity > degree)
            throw std::invalid_argument("open_uniform: interior multiplicity must be in [1, degree]");
        std::vector<double> knots(degree + 1, 0.0);
        for (int b = 1; b < spans; ++b)
            knots.insert(knots.end(), interior_multiplicity, static_cast<double>(b) / spans);
        knots.insert(knots.end(), degree + 1, 1.0);
        return KnotVector(std::move(knots), degree);
    }

    int degree() const { return degree_; }
    int num_knots() const { return static_cast<int>(knots_.size()); }

    /// Number of basis functions, M = m - p - 1.
    int basis_count() const { return num_knots() - degree_ - 1; }

    double knot(int i) const { return knots_[static_cast<std::size_t>(i)]; }
    const std::vector<double>& knots() const { return knots_; }

    /// Unique knot values (element boundaries).
    std::vector<double> breakpoints() const {
        std::vector<double> out;
        for (double k : knots_)
            if (out.empty() || k != out.back()) out.push_back(k);
        return out;
    }

    /// Number of non-empty knot spans.
    int span_count() const { return static_cast<int>(breakpoints().size()) - 1; }

    /// Greville abscissa of basis function i: mean of knots i+1 .. i+p.
    double greville(int i) const {
        double s = 0.0;
        for (int j = 1; j <= degree_; ++j) s += knots_[static_cast<std::size_t>(i + j)];
        return degree_ > 0 ? s / degree_ : 0.5 * (knots_[static_cast<std::size_t>(i)] + knots_[static_cast<std::size_t>(i + 1)]);
    }

    /**
     * Index s of the non-empty span with knot(s) <= t < knot(s+1).
     * At t = 1 the last non-empty span is returned, so evaluation is
     * defined on the closed interval [0,1].
     */
    int find_span(double t) const {
        if (t < 0.0 || t > 1.0) throw std::domain_error("find_span: parameter outside [0,1]");
        const int last = num_knots() - degree_ - 2;  // start of the last span
        if (t >= 1.0) return last;
        int lo = degree_, hi = last + 1;
        // binary search over [degree, last]; empty spans cannot satisfy
        // knot(mid) <= t < knot(mid+1)
        int mid = (lo + hi) / 2;
        while (t < knots_[static_cast<std::size_t>(mid)] || t >= knots_[static_cast<std::size_t>(mid + 1)]) {
            if (t < knots_[static_cast<std::size_t>(mid)])
                hi = mid;
            else
                lo = mid;
            mid = (lo + hi) / 2;
        }
        return mid;
    }

    /**
     * Values of the p+1 basis functions that do not vanish at t.
     * Returns the span index; values[j] is the value of function
     * span - degree + j. Uses the triangular evaluation scheme, the
     * numerically stable form of the Cox-de Boor recursion (every 0/0
     * term of the raw recursion is avoided by construction).
     */
    int eval_basis(double t, Vector& values) const {
        const int span = find_span(t);
        values.resize(degree_ + 1);
        std::vector<double> left(degree_ + 1), right(degree_ + 1);
        values[0] = 1.0;
        for (int j = 1; j <= degree_; ++j) {
            left[j] = t - knots_[static_cast<std::size_t>(span + 1 - j)];
            right[j] = knots_[static_cast<std::size_t>(span + j)] - t;
            double saved = 0.0;
            for (int r = 0; r < j; ++r) {
                const double tmp = values[r] / (right[r + 1] + left[j - r]);
                values[r] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            values[j] = saved;
        }
        return span;
    }

    /**
     * Values and first derivatives of the nonzero basis functions at t.
     * The derivative of a degree-p function is assembled from the two
     * neighbouring degree-(p-1) functions; vanishing denominators drop
     * out together with their (identically zero) numerators.
     */
    int eval_basis_derivs(double t, Vector& values, Vector& derivs) const {
        const int span = find_span(t);
        const int p = degree_;
        values.resize(p + 1);
        derivs.resize(p + 1);
        if (p == 0) {
            values[0] = 1.0;
            derivs[0] = 0.0;
            return span;
        }
        // degree p-1 values on the same span
        Vector lower(p);
        lower[0] = 1.0;
        std::vector<double> left(p + 1), right(p + 1);
        for (int j = 1; j <= p - 1; ++j) {
            left[j] = t - knots_[static_cast<std::size_t>(span + 1 - j)];
            right[j] = knots_[static_cast<std::size_t>(span + j)] - t;
            double saved = 0.0;
            for (int r = 0; r < j; ++r) {
                const double tmp = lower[r] / (right[r + 1] + left[j - r]);
                lower[r] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            lower[j] = saved;
        }
        // one more Cox-de Boor step for the values
        left[p] = t - knots_[static_cast<std::size_t>(span + 1 - p)];
        right[p] = knots_[static_cast<std::size_t>(span + p)] - t;
        double saved = 0.0;
        for (int r = 0; r < p; ++r) {
            const double tmp = lower[r] / (right[r + 1] + left[p - r]);
            values[r] = saved + right[r + 1] * tmp;
            saved = left[p - r] * tmp;
        }
        values[p] = saved;
        // derivative: N'_{i,p} = p * ( N_{i,p-1}/(x_{i+p}-x_i) - N_{i+1,p-1}/(x_{i+p+1}-x_{i+1}) )
        for (int j = 0; j <= p; ++j) {
            const int i = span - p + j;
            double d = 0.0;
            if (j > 0) {
                const double den = knots_[static_cast<std::size_t>(i + p)] - knots_[static_cast<std::size_t>(i)];
                if (den > 0.0) d += lower[j - 1] / den;
            }
            if (j < p) {
                const double den = knots_[static_cast<std::size_t>(i + p + 1)] - knots_[static_cast<std::size_t>(i + 1)];
                if (den > 0.0) d -= lower[j] / den;
            }
            derivs[j] = p * d;
        }
        return span;
    }

    /// Multiplicity of the value t in the knot vector.
    int multiplicity(double t) const {
        return static_cast<int>(std::count(knots_.begin(), knots_.end(), t));
    }

    bool operator==(const KnotVector& other) const {
        return degree_ == other.degree_ && knots_ == other.knots_;
    }

    /// Knot vector of the mirrored parametrization t -> 1 - t.
    KnotVector reversed() const {
        std::vector<double> rev(knots_.size());
        for (std::size_t i = 0; i < knots_.size(); ++i) rev[i] = 1.0 - knots_[knots_.size() - 1 - i];
        return KnotVector(std::move(rev), degree_);
    }

private:
    void validate() const {
        const int m = num_knots();
        if (degree_ < 1) throw std::invalid_argument("KnotVector: degree must be >= 1");
        if (m < 2 * (degree_ + 1)) throw std::invalid_argument("KnotVector: too few knots");
        if (knots_.front() != 0.0 || knots_.back() != 1.0)
            throw std::invalid_argument("KnotVector: knots must span [0,1]");
        for (int i = 0; i + 1 < m; ++i)
            if (knots_[static_cast<std::size_t>(i)] > knots_[static_cast<std::size_t>(i + 1)])
                throw std::invalid_argument("KnotVector: knots must be non-decreasing");
        for (int i = 0; i <= degree_; ++i)
            if (knots_[static_cast<std::size_t>(i)] != 0.0 || knots_[static_cast<std::size_t>(m - 1 - i)] != 1.0)
                throw std::invalid_argument("KnotVector: end knots must have multiplicity degree+1");
        int mult = 1;
        for (int i = degree_ + 1; i < m - degree_ - 1; ++i) {
            mult = knots_[static_cast<std::size_t>(i)] == knots_[static_cast<std::size_t>(i - 1)] ? mult + 1 : 1;
            if (mult > degree_) throw std::invalid_argument("KnotVector: interior multiplicity exceeds degree");
        }
    }

    std::vector<double> knots_;
    int degree_;
};

/// Refined knot vector plus the coefficients representing the same spline.
struct RefinedSpline {
    KnotVector kv;
    Matrix coeffs;  // basis_count() rows, one column per coefficient component
};

/**
 * Boehm knot insertion. The returned spline represents the same function;
 * the basis count grows by one. Throws RefinementError when inserting at
 * an existing knot whose multiplicity already equals the degree.
 */
inline RefinedSpline insert_knot(const KnotVector& kv, const Matrix& coeffs, double t_new) {
    if (!(t_new > 0.0 && t_new < 1.0)) throw std::domain_error("insert_knot: knot must lie in (0,1)");
    if (coeffs.rows() != kv.basis_count()) throw std::invalid_argument("insert_knot: coefficient count mismatch");
    const int p = kv.degree();
    if (kv.multiplicity(t_new) + 1 > p)
        throw RefinementError("insert_knot: interior multiplicity would exceed the degree");
    const int span = kv.find_span(t_new);

    std::vector<double> knots = kv.knots();
    knots.insert(knots.begin() + span + 1, t_new);

    Matrix out(coeffs.rows() + 1, coeffs.cols());
    for (int i = 0; i <= span - p; ++i) out.row(i) = coeffs.row(i);
    for (int i = span - p + 1; i <= span; ++i) {
        const double a = (t_new - kv.knot(i)) / (kv.knot(i + p) - kv.knot(i));
        out.row(i) = a * coeffs.row(i) + (1.0 - a) * coeffs.row(i - 1);
    }
    for (int i = span + 1; i < out.rows(); ++i) out.row(i) = coeffs.row(i - 1);
    return {KnotVector(std::move(knots), p), std::move(out)};
}

/// Insert the midpoint of every non-empty span once (uniform h-refinement).
inline RefinedSpline refine_uniform(const KnotVector& kv, const Matrix& coeffs) {
    RefinedSpline cur{kv, coeffs};
    for (double b : kv.breakpoints()) {
        if (b == 0.0) continue;
        const auto& bs = cur.kv.breakpoints();
        auto it = std::find(bs.begin(), bs.end(), b);
        const double prev = *(it - 1);
        cur = insert_knot(cur.kv, cur.coeffs, 0.5 * (prev + b));
    }
    return cur;
}

/// Evaluate the spline with the given coefficients at t.
inline Vector eval_spline(const KnotVector& kv, const Matrix& coeffs, double t) {
    Vector values;
    const int span = kv.eval_basis(t, values);
    Vector out = Vector::Zero(coeffs.cols());
    for (int j = 0; j <= kv.degree(); ++j) out += values[j] * coeffs.row(span - kv.degree() + j).transpose();
    return out;
}

/// Nonzero tensor basis values and parameter-space gradients at one point.
///
/// Entries are ordered locally lexicographic with direction 1 running
/// fastest; entry (j1, j2) refers to the global multi-index
/// (first1 + j1, first2 + j2).
struct TensorValues {
    int first1 = 0;
    int first2 = 0;
    Vector values;               // (p1+1)(p2+1)
    Eigen::Matrix<double, Eigen::Dynamic, 2> grads;
};

/**
 * Tensor-product B-spline basis in two parameter directions.
 *
 * A basis function is addressed by the multi-index (i1, i2) with
 * i1 in [0, dim(0)) and i2 in [0, dim(1)); the linear index is
 * i1 + dim(0) * i2 (direction 1 fastest). Immutable and reentrant.
 */
class TensorBasis {
public:
    TensorBasis(KnotVector kv1, KnotVector kv2) : kv_{std::move(kv1), std::move(kv2)} {}

    const KnotVector& direction(int d) const { return kv_[static_cast<std::size_t>(d)]; }
    int dim(int d) const { return kv_[static_cast<std::size_t>(d)].basis_count(); }
    int total() const { return dim(0) * dim(1); }

    int linear_index(int i1, int i2) const { return i1 + dim(0) * i2; }
    std::array<int, 2> multi_index(int linear) const { return {linear % dim(0), linear / dim(0)}; }

    /// Greville point of basis function (i1, i2) in the parameter domain.
    Eigen::Vector2d greville(int i1, int i2) const {
        return {kv_[0].greville(i1), kv_[1].greville(i2)};
    }

    /// Values and gradients of all basis functions non-vanishing at (t1, t2).
    TensorValues eval(double t1, double t2) const {
        Vector v1, d1, v2, d2;
        const int s1 = kv_[0].eval_basis_derivs(t1, v1, d1);
        const int s2 = kv_[1].eval_basis_derivs(t2, v2, d2);
        const int p1 = kv_[0].degree(), p2 = kv_[1].degree();
        TensorValues out;
        out.first1 = s1 - p1;
        out.first2 = s2 - p2;
        const int n = (p1 + 1) * (p2 + 1);
        out.values.resize(n);
        out.grads.resize(n, 2);
        int a = 0;
        for (int j2 = 0; j2 <= p2; ++j2)
            for (int j1 = 0; j1 <= p1; ++j1, ++a) {
                out.values[a] = v1[j1] * v2[j2];
                out.grads(a, 0) = d1[j1] * v2[j2];
                out.grads(a, 1) = v1[j1] * d2[j2];
            }
        return out;
    }

    /**
     * Linear indices of the basis functions whose trace on a patch side is
     * nonzero, ordered by the parameter running along the side.
     * Side convention: 0: xi1=0, 1: xi1=1, 2: xi2=0, 3: xi2=1.
     */
    std::vector<int> side_dofs(int side) const {
        std::vector<int> out;
        const int m1 = dim(0), m2 = dim(1);
        switch (side) {
            case 0: out.reserve(m2); for (int i2 = 0; i2 < m2; ++i2) out.push_back(linear_index(0, i2)); break;
            case 1: out.reserve(m2); for (int i2 = 0; i2 < m2; ++i2) out.push_back(linear_index(m1 - 1, i2)); break;
            case 2: out.reserve(m1); for (int i1 = 0; i1 < m1; ++i1) out.push_back(linear_index(i1, 0)); break;
            case 3: out.reserve(m1); for (int i1 = 0; i1 < m1; ++i1) out.push_back(linear_index(i1, m2 - 1)); break;
            default: throw std::invalid_argument("side_dofs: side must be 0..3");
        }
        return out;
    }

    /// Linear indices of the four corner dofs (SW, SE, NW, NE).
    std::array<int, 4> corner_dofs() const {
        const int m1 = dim(0), m2 = dim(1);
        return {linear_index(0, 0), linear_index(m1 - 1, 0), linear_index(0, m2 - 1), linear_index(m1 - 1, m2 - 1)};
    }

    bool operator==(const TensorBasis& other) const {
        return kv_[0] == other.kv_[0] && kv_[1] == other.kv_[1];
    }

private:
    std::array<KnotVector, 2> kv_;
};

}  // namespace ieti
