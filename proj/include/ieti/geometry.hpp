#pragma once

#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ieti/errors.hpp"
#include "ieti/splines.hpp"

namespace ieti {

/**
 * B-spline geometry map G(xi) = sum_i P_i N_i(xi) from the unit square
 * into the plane, together with its Jacobian. Control points are stored
 * one per basis function, in the basis' linear ordering.
 */
class GeometryMap {
public:
    GeometryMap(TensorBasis basis, Eigen::MatrixX2d control_points)
        : basis_(std::move(basis)), ctrl_(std::move(control_points)) {
        if (ctrl_.rows() != basis_.total())
            throw std::invalid_argument("GeometryMap: one control point per basis function required");
    }

    const TensorBasis& basis() const { return basis_; }
    const Eigen::MatrixX2d& control_points() const { return ctrl_; }

    Eigen::Vector2d point(const Eigen::Vector2d& xi) const {
        const TensorValues tv = basis_.eval(xi[0], xi[1]);
        Eigen::Vector2d x = Eigen::Vector2d::Zero();
        int a = 0;
        for (int j2 = 0; j2 <= basis_.direction(1).degree(); ++j2)
            for (int j1 = 0; j1 <= basis_.direction(0).degree(); ++j1, ++a)
                x += tv.values[a] * ctrl_.row(basis_.linear_index(tv.first1 + j1, tv.first2 + j2)).transpose();
        return x;
    }

    /// Jacobian dG/dxi; throws SingularGeometryError when det <= 0.
    Eigen::Matrix2d jacobian(const Eigen::Vector2d& xi) const {
        const TensorValues tv = basis_.eval(xi[0], xi[1]);
        Eigen::Matrix2d J = Eigen::Matrix2d::Zero();
        int a = 0;
        for (int j2 = 0; j2 <= basis_.direction(1).degree(); ++j2)
            for (int j1 = 0; j1 <= basis_.direction(0).degree(); ++j1, ++a) {
                const auto P = ctrl_.row(basis_.linear_index(tv.first1 + j1, tv.first2 + j2));
                J.col(0) += tv.grads(a, 0) * P.transpose();
                J.col(1) += tv.grads(a, 1) * P.transpose();
            }
        if (J.determinant() <= 0.0)
            throw SingularGeometryError("geometry map has non-positive Jacobian determinant");
        return J;
    }

    /// One round of knot insertion at all span midpoints in both directions;
    /// the represented geometry is unchanged.
    GeometryMap refined() const {
        // direction 1: rows of the control grid are coefficient vectors of
        // dim(0) univariate splines with 2*dim(1) components
        const int m1 = basis_.dim(0), m2 = basis_.dim(1);
        Matrix c1(m1, 2 * m2);
        for (int i1 = 0; i1 < m1; ++i1)
            for (int i2 = 0; i2 < m2; ++i2)
                c1.block<1, 2>(i1, 2 * i2) = ctrl_.row(basis_.linear_index(i1, i2));
        RefinedSpline r1 = refine_uniform(basis_.direction(0), c1);
        const int n1 = r1.kv.basis_count();

        Matrix c2(m2, 2 * n1);
        for (int i2 = 0; i2 < m2; ++i2)
            for (int i1 = 0; i1 < n1; ++i1)
                c2.block<1, 2>(i2, 2 * i1) = r1.coeffs.block<1, 2>(i1, 2 * i2);
        RefinedSpline r2 = refine_uniform(basis_.direction(1), c2);
        const int n2 = r2.kv.basis_count();

        TensorBasis rb(r1.kv, r2.kv);
        Eigen::MatrixX2d cp(n1 * n2, 2);
        for (int i2 = 0; i2 < n2; ++i2)
            for (int i1 = 0; i1 < n1; ++i1)
                cp.row(rb.linear_index(i1, i2)) = r2.coeffs.block<1, 2>(i2, 2 * i1);
        return GeometryMap(std::move(rb), std::move(cp));
    }

private:
    TensorBasis basis_;
    Eigen::MatrixX2d ctrl_;
};

enum class BoundaryKind { Dirichlet, Neumann, Interface };

inline std::string to_string(BoundaryKind k) {
    switch (k) {
        case BoundaryKind::Dirichlet: return "dirichlet";
        case BoundaryKind::Neumann: return "neumann";
        default: return "interface";
    }
}

struct Patch {
    GeometryMap map;
    double alpha = 1.0;                          // patchwise constant diffusion coefficient
    std::array<BoundaryKind, 4> sides{};         // side order: xi1=0, xi1=1, xi2=0, xi2=1
};

/// Declared interface between side_a of patch_a and side_b of patch_b.
/// `reversed` flips the running direction of side_b.
struct Interface {
    int patch_a = 0;
    int side_a = 0;
    int patch_b = 0;
    int side_b = 0;
    bool reversed = false;
};

/**
 * Conforming multipatch domain: patches plus declared full-side
 * interfaces. Along every interface the two boundary curves must
 * coincide (matched knot vectors and control points); this is validated
 * by build_interface_pairs.
 */
struct MultiPatch {
    std::vector<Patch> patches;
    std::vector<Interface> interfaces;

    int num_patches() const { return static_cast<int>(patches.size()); }

    bool has_dirichlet() const {
        for (const auto& p : patches)
            for (auto s : p.sides)
                if (s == BoundaryKind::Dirichlet) return true;
        return false;
    }
};

/// Matched coefficient-index pairs (one list per declared interface);
/// pair r couples dof pairs[r].first of patch_a with pairs[r].second of
/// patch_b, in the running order of side_a.
struct InterfacePairs {
    std::vector<std::vector<std::pair<int, int>>> per_interface;
};

namespace detail {

inline bool knot_vectors_match(const KnotVector& a, const KnotVector& b, bool reversed) {
    const KnotVector bb = reversed ? b.reversed() : b;
    if (a.degree() != bb.degree() || a.num_knots() != bb.num_knots()) return false;
    for (int i = 0; i < a.num_knots(); ++i)
        if (std::abs(a.knot(i) - bb.knot(i)) > 1e-12) return false;
    return true;
}

/// Knot vector of the direction running along a side.
inline const KnotVector& along_side(const TensorBasis& basis, int side) {
    return basis.direction(side < 2 ? 1 : 0);
}

}  // namespace detail

/**
 * Build the matched dof pairs of every declared interface (over the given
 * analysis bases, one per patch) and validate geometric conformity of the
 * patch sides: matched geometry knot vectors and side control points to
 * 1e-12, up to the orientation flag. Partial-side gluing is not
 * representable and mismatches raise NonConformingError.
 */
inline InterfacePairs build_interface_pairs(const MultiPatch& mp, const std::vector<TensorBasis>& bases) {
    if (static_cast<int>(bases.size()) != mp.num_patches())
        throw std::invalid_argument("build_interface_pairs: one analysis basis per patch required");
    InterfacePairs out;
    out.per_interface.reserve(mp.interfaces.size());
    for (const Interface& itf : mp.interfaces) {
        const Patch& pa = mp.patches[static_cast<std::size_t>(itf.patch_a)];
        const Patch& pb = mp.patches[static_cast<std::size_t>(itf.patch_b)];
        if (pa.sides[static_cast<std::size_t>(itf.side_a)] != BoundaryKind::Interface ||
            pb.sides[static_cast<std::size_t>(itf.side_b)] != BoundaryKind::Interface)
            throw NonConformingError("interface declared on a side not tagged as interface");

        // geometric conformity of the shared curve
        const auto& ga = pa.map;
        const auto& gb = pb.map;
        if (!detail::knot_vectors_match(detail::along_side(ga.basis(), itf.side_a),
                                        detail::along_side(gb.basis(), itf.side_b), itf.reversed))
            throw NonConformingError("geometry knot vectors differ along a declared interface");
        auto sa = ga.basis().side_dofs(itf.side_a);
        auto sb = gb.basis().side_dofs(itf.side_b);
        if (itf.reversed) std::reverse(sb.begin(), sb.end());
        for (std::size_t r = 0; r < sa.size(); ++r) {
            const double gap = (ga.control_points().row(sa[r]) - gb.control_points().row(sb[r])).norm();
            if (gap > 1e-12)
                throw NonConformingError("side control points differ along a declared interface");
        }

        // matched analysis dofs
        const TensorBasis& ba = bases[static_cast<std::size_t>(itf.patch_a)];
        const TensorBasis& bb = bases[static_cast<std::size_t>(itf.patch_b)];
        if (!detail::knot_vectors_match(detail::along_side(ba, itf.side_a),
                                        detail::along_side(bb, itf.side_b), itf.reversed))
            throw NonConformingError("analysis knot vectors differ along a declared interface");
        auto da = ba.side_dofs(itf.side_a);
        auto db = bb.side_dofs(itf.side_b);
        if (itf.reversed) std::reverse(db.begin(), db.end());
        std::vector<std::pair<int, int>> pairs(da.size());
        for (std::size_t r = 0; r < da.size(); ++r) pairs[r] = {da[r], db[r]};
        out.per_interface.push_back(std::move(pairs));
    }
    return out;
}

}  // namespace ieti
