#pragma once

#include <cmath>
#include <functional>
#include <numeric>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "ieti/errors.hpp"
#include "ieti/geometry.hpp"
#include "ieti/splines.hpp"

namespace ieti {

using SparseMatrix = Eigen::SparseMatrix<double>;
using ScalarField = std::function<double(double, double)>;

inline ScalarField zero_field() {
    return [](double, double) { return 0.0; };
}

/// Gauss-Legendre rule on [0,1]: nodes and weights, exact for
/// polynomials up to degree 2n-1.
struct GaussRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

inline GaussRule gauss_legendre(int n) {
    GaussRule rule;
    rule.nodes.resize(static_cast<std::size_t>(n));
    rule.weights.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        // Newton iteration on the i-th root of P_n, Chebyshev initial guess
        double x = std::cos(M_PI * (4.0 * i + 3.0) / (4.0 * n + 2.0));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-15) break;
        }
        rule.nodes[static_cast<std::size_t>(i)] = 0.5 * (x + 1.0);
        rule.weights[static_cast<std::size_t>(i)] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    return rule;
}

/// Stiffness matrix and load vector of one patch over all its basis
/// functions (no boundary conditions applied yet).
struct PatchSystem {
    SparseMatrix K;
    Vector f;
};

/**
 * Galerkin assembly of K_ij = int alpha grad(N_j) . grad(N_i) dx and
 * f_i = int source N_i dx + int_{Neumann sides} neumann N_i ds over one
 * patch. Tensor Gauss-Legendre quadrature with p+1 points per direction
 * on every non-empty knot span of the analysis basis.
 */
inline PatchSystem assemble_patch(const GeometryMap& map, const TensorBasis& basis, double alpha,
                                  const ScalarField& source, const ScalarField& neumann,
                                  const std::array<BoundaryKind, 4>& sides) {
    const int p1 = basis.direction(0).degree(), p2 = basis.direction(1).degree();
    const auto bp1 = basis.direction(0).breakpoints();
    const auto bp2 = basis.direction(1).breakpoints();
    const GaussRule q1 = gauss_legendre(p1 + 1);
    const GaussRule q2 = gauss_legendre(p2 + 1);

    const int n_local = (p1 + 1) * (p2 + 1);
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>((bp1.size() - 1) * (bp2.size() - 1)) *
                     static_cast<std::size_t>(n_local * n_local));
    Vector f = Vector::Zero(basis.total());

    std::vector<int> idx(static_cast<std::size_t>(n_local));
    Matrix Kel(n_local, n_local);
    Eigen::Matrix<double, Eigen::Dynamic, 2> gphys(n_local, 2);

    for (std::size_t e2 = 0; e2 + 1 < bp2.size(); ++e2) {
        const double a2 = bp2[e2], h2 = bp2[e2 + 1] - bp2[e2];
        for (std::size_t e1 = 0; e1 + 1 < bp1.size(); ++e1) {
            const double a1 = bp1[e1], h1 = bp1[e1 + 1] - bp1[e1];
            Kel.setZero();
            bool have_idx = false;
            for (std::size_t g2 = 0; g2 < q2.nodes.size(); ++g2) {
                const double t2 = a2 + h2 * q2.nodes[g2];
                for (std::size_t g1 = 0; g1 < q1.nodes.size(); ++g1) {
                    const double t1 = a1 + h1 * q1.nodes[g1];
                    const TensorValues tv = basis.eval(t1, t2);
                    if (!have_idx) {
                        int a = 0;
                        for (int j2 = 0; j2 <= p2; ++j2)
                            for (int j1 = 0; j1 <= p1; ++j1, ++a)
                                idx[static_cast<std::size_t>(a)] =
                                    basis.linear_index(tv.first1 + j1, tv.first2 + j2);
                        have_idx = true;
                    }
                    const Eigen::Vector2d xi(t1, t2);
                    const Eigen::Matrix2d J = map.jacobian(xi);
                    const double det = J.determinant();
                    const Eigen::Matrix2d Jinv = J.inverse();
                    const double w = q1.weights[g1] * q2.weights[g2] * h1 * h2 * det;

                    gphys.noalias() = tv.grads * Jinv;  // rows: grad N in physical coords
                    Kel.noalias() += (alpha * w) * (gphys * gphys.transpose());

                    const Eigen::Vector2d x = map.point(xi);
                    const double fw = w * source(x[0], x[1]);
                    if (fw != 0.0)
                        for (int a = 0; a < n_local; ++a)
                            f[idx[static_cast<std::size_t>(a)]] += fw * tv.values[a];
                }
            }
            for (int b = 0; b < n_local; ++b)
                for (int a = 0; a < n_local; ++a)
                    triplets.emplace_back(idx[static_cast<std::size_t>(a)],
                                          idx[static_cast<std::size_t>(b)], Kel(a, b));
        }
    }

    // Neumann boundary terms: int g_N N_i ds in physical arc length
    for (int side = 0; side < 4; ++side) {
        if (sides[static_cast<std::size_t>(side)] != BoundaryKind::Neumann) continue;
        const int dir = side < 2 ? 1 : 0;                  // direction running along the side
        const double fixed = (side == 0 || side == 2) ? 0.0 : 1.0;
        const auto& kv = basis.direction(dir);
        const GaussRule q = gauss_legendre(kv.degree() + 1);
        const auto bps = kv.breakpoints();
        const auto dofs = basis.side_dofs(side);
        Vector values;
        for (std::size_t e = 0; e + 1 < bps.size(); ++e) {
            const double a0 = bps[e], h = bps[e + 1] - bps[e];
            for (std::size_t g = 0; g < q.nodes.size(); ++g) {
                const double t = a0 + h * q.nodes[g];
                const Eigen::Vector2d xi = dir == 0 ? Eigen::Vector2d(t, fixed) : Eigen::Vector2d(fixed, t);
                const Eigen::Matrix2d J = map.jacobian(xi);
                const double ds = J.col(dir).norm();
                const Eigen::Vector2d x = map.point(xi);
                const double w = q.weights[g] * h * ds * neumann(x[0], x[1]);
                if (w == 0.0) continue;
                const int span = kv.eval_basis(t, values);
                for (int j = 0; j <= kv.degree(); ++j)
                    f[dofs[static_cast<std::size_t>(span - kv.degree() + j)]] += w * values[j];
            }
        }
    }

    PatchSystem ps;
    ps.K.resize(basis.total(), basis.total());
    ps.K.setFromTriplets(triplets.begin(), triplets.end());
    ps.K.makeCompressed();
    ps.f = std::move(f);
    return ps;
}

/// Patch system after Dirichlet elimination: rows/columns of Dirichlet-side
/// basis functions removed, inhomogeneous data moved to the right-hand side.
struct ReducedPatchSystem {
    SparseMatrix K;                    // free x free
    Vector f;                          // lifting included
    std::vector<int> free_to_full;     // free index -> tensor index
    std::vector<int> full_to_free;     // -1 at Dirichlet dofs
    Vector dirichlet_values;           // full-sized; 0 at free dofs
};

/**
 * Remove Dirichlet-side dofs. Dirichlet coefficient values come from
 * interpolation of g_D at the physical images of the Greville points, and
 * enter the reduced right-hand side as f_free - K[free, dir] * g_dir.
 * A corner dof shared by a Dirichlet and another side is Dirichlet.
 */
inline ReducedPatchSystem eliminate_dirichlet(const PatchSystem& ps, const TensorBasis& basis,
                                              const GeometryMap& map,
                                              const std::array<BoundaryKind, 4>& sides,
                                              const ScalarField& dirichlet_data) {
    const int n = basis.total();
    std::vector<char> is_dirichlet(static_cast<std::size_t>(n), 0);
    for (int side = 0; side < 4; ++side)
        if (sides[static_cast<std::size_t>(side)] == BoundaryKind::Dirichlet)
            for (int d : basis.side_dofs(side)) is_dirichlet[static_cast<std::size_t>(d)] = 1;

    ReducedPatchSystem out;
    out.full_to_free.assign(static_cast<std::size_t>(n), -1);
    out.dirichlet_values = Vector::Zero(n);
    for (int i = 0; i < n; ++i) {
        if (is_dirichlet[static_cast<std::size_t>(i)]) {
            const auto mi = basis.multi_index(i);
            const Eigen::Vector2d x = map.point(basis.greville(mi[0], mi[1]));
            out.dirichlet_values[i] = dirichlet_data(x[0], x[1]);
        } else {
            out.full_to_free[static_cast<std::size_t>(i)] = static_cast<int>(out.free_to_full.size());
            out.free_to_full.push_back(i);
        }
    }

    const int nf = static_cast<int>(out.free_to_full.size());
    out.f.resize(nf);
    for (int i = 0; i < nf; ++i) out.f[i] = ps.f[out.free_to_full[static_cast<std::size_t>(i)]];

    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(ps.K.nonZeros()));
    for (int col = 0; col < ps.K.outerSize(); ++col) {
        for (SparseMatrix::InnerIterator it(ps.K, col); it; ++it) {
            const int fr = out.full_to_free[static_cast<std::size_t>(it.row())];
            if (fr < 0) continue;
            const int fc = out.full_to_free[static_cast<std::size_t>(col)];
            if (fc >= 0)
                triplets.emplace_back(fr, fc, it.value());
            else
                out.f[fr] -= it.value() * out.dirichlet_values[col];
        }
    }
    out.K.resize(nf, nf);
    out.K.setFromTriplets(triplets.begin(), triplets.end());
    out.K.makeCompressed();
    return out;
}

/**
 * Index split of the free dofs of every patch into interior (I) and
 * interface (B) parts, plus the global numbering of coupled interface
 * dofs. Within B, vertex (patch corner) dofs are flagged primal; the
 * remaining B dofs form the dual set.
 */
struct DofPartition {
    struct PatchDofs {
        std::vector<int> interior;       // free-local indices
        std::vector<int> boundary;       // free-local indices, ascending
        std::vector<int> boundary_full;  // tensor index of each B dof
        std::vector<int> coupled_id;     // global coupled id of each B dof
        std::vector<char> is_primal;     // vertex-primal flag per B dof
        std::vector<int> free_to_b;      // -1 when a free dof is interior
    };
    std::vector<PatchDofs> patches;
    int num_coupled = 0;
    // members of each coupled dof as (patch, B-local index)
    std::vector<std::vector<std::pair<int, int>>> coupled_members;
    std::vector<char> coupled_is_primal;
};

inline DofPartition partition_dofs(const MultiPatch& mp, const std::vector<TensorBasis>& bases,
                                   const InterfacePairs& pairs,
                                   const std::vector<ReducedPatchSystem>& reduced) {
    const int np = mp.num_patches();
    DofPartition part;
    part.patches.resize(static_cast<std::size_t>(np));

    for (int k = 0; k < np; ++k) {
        const TensorBasis& basis = bases[static_cast<std::size_t>(k)];
        const auto& red = reduced[static_cast<std::size_t>(k)];
        std::vector<char> on_interface(static_cast<std::size_t>(basis.total()), 0);
        for (int side = 0; side < 4; ++side)
            if (mp.patches[static_cast<std::size_t>(k)].sides[static_cast<std::size_t>(side)] == BoundaryKind::Interface)
                for (int d : basis.side_dofs(side)) on_interface[static_cast<std::size_t>(d)] = 1;

        auto& pd = part.patches[static_cast<std::size_t>(k)];
        pd.free_to_b.assign(red.free_to_full.size(), -1);
        for (std::size_t fl = 0; fl < red.free_to_full.size(); ++fl) {
            const int full = red.free_to_full[fl];
            if (on_interface[static_cast<std::size_t>(full)]) {
                pd.free_to_b[fl] = static_cast<int>(pd.boundary.size());
                pd.boundary.push_back(static_cast<int>(fl));
                pd.boundary_full.push_back(full);
            } else {
                pd.interior.push_back(static_cast<int>(fl));
            }
        }
        pd.coupled_id.assign(pd.boundary.size(), -1);
        pd.is_primal.assign(pd.boundary.size(), 0);
    }

    // union-find over (patch, B-local) nodes to number coupled dofs
    std::vector<int> offset(static_cast<std::size_t>(np) + 1, 0);
    for (int k = 0; k < np; ++k)
        offset[static_cast<std::size_t>(k) + 1] =
            offset[static_cast<std::size_t>(k)] + static_cast<int>(part.patches[static_cast<std::size_t>(k)].boundary.size());
    std::vector<int> parent(static_cast<std::size_t>(offset.back()));
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int a) {
        while (parent[static_cast<std::size_t>(a)] != a) {
            parent[static_cast<std::size_t>(a)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(a)])];
            a = parent[static_cast<std::size_t>(a)];
        }
        return a;
    };

    auto b_node = [&](int patch, int full_dof) -> int {
        const auto& red = reduced[static_cast<std::size_t>(patch)];
        const int fl = red.full_to_free[static_cast<std::size_t>(full_dof)];
        if (fl < 0) return -1;  // Dirichlet
        const int b = part.patches[static_cast<std::size_t>(patch)].free_to_b[static_cast<std::size_t>(fl)];
        return b < 0 ? -1 : offset[static_cast<std::size_t>(patch)] + b;
    };

    for (std::size_t i = 0; i < mp.interfaces.size(); ++i) {
        const Interface& itf = mp.interfaces[i];
        for (const auto& [da, db] : pairs.per_interface[i]) {
            const int na = b_node(itf.patch_a, da);
            const int nb = b_node(itf.patch_b, db);
            if ((na < 0) != (nb < 0))
                throw NonConformingError("matched interface dofs disagree on Dirichlet elimination");
            if (na < 0) continue;
            parent[static_cast<std::size_t>(find(na))] = find(nb);
        }
    }

    std::vector<int> group_id(parent.size(), -1);
    for (int k = 0; k < np; ++k) {
        auto& pd = part.patches[static_cast<std::size_t>(k)];
        for (std::size_t b = 0; b < pd.boundary.size(); ++b) {
            const int node = offset[static_cast<std::size_t>(k)] + static_cast<int>(b);
            const int root = find(node);
            if (group_id[static_cast<std::size_t>(root)] < 0) {
                group_id[static_cast<std::size_t>(root)] = part.num_coupled++;
                part.coupled_members.emplace_back();
            }
            pd.coupled_id[b] = group_id[static_cast<std::size_t>(root)];
            part.coupled_members[static_cast<std::size_t>(pd.coupled_id[b])].emplace_back(k, static_cast<int>(b));
        }
    }

    // vertex-primal flags: coupled dofs that are a patch corner somewhere
    part.coupled_is_primal.assign(static_cast<std::size_t>(part.num_coupled), 0);
    for (int k = 0; k < np; ++k) {
        const auto& pd = part.patches[static_cast<std::size_t>(k)];
        for (int corner : bases[static_cast<std::size_t>(k)].corner_dofs()) {
            const int node = b_node(k, corner);
            if (node < 0) continue;
            const int b = node - offset[static_cast<std::size_t>(k)];
            part.coupled_is_primal[static_cast<std::size_t>(pd.coupled_id[static_cast<std::size_t>(b)])] = 1;
        }
    }
    for (int k = 0; k < np; ++k) {
        auto& pd = part.patches[static_cast<std::size_t>(k)];
        for (std::size_t b = 0; b < pd.boundary.size(); ++b)
            pd.is_primal[b] = part.coupled_is_primal[static_cast<std::size_t>(pd.coupled_id[b])];
    }
    return part;
}

/// Monolithic system over the continuous space: interface dofs identified,
/// K = sum_k A K^(k) A^T.
struct GlobalSystem {
    SparseMatrix K;
    Vector f;
    std::vector<std::vector<int>> patch_to_global;  // per patch: free-local -> global
    int num_dofs = 0;
};

inline GlobalSystem assemble_global(const MultiPatch& mp, const DofPartition& part,
                                    const std::vector<ReducedPatchSystem>& reduced) {
    const int np = mp.num_patches();
    GlobalSystem gs;
    gs.patch_to_global.resize(static_cast<std::size_t>(np));

    std::vector<int> coupled_global(static_cast<std::size_t>(part.num_coupled), -1);
    for (int k = 0; k < np; ++k) {
        const auto& pd = part.patches[static_cast<std::size_t>(k)];
        auto& map = gs.patch_to_global[static_cast<std::size_t>(k)];
        map.assign(reduced[static_cast<std::size_t>(k)].free_to_full.size(), -1);
        for (std::size_t fl = 0; fl < map.size(); ++fl) {
            const int b = pd.free_to_b[fl];
            if (b < 0) {
                map[fl] = gs.num_dofs++;
            } else {
                int& g = coupled_global[static_cast<std::size_t>(pd.coupled_id[static_cast<std::size_t>(b)])];
                if (g < 0) g = gs.num_dofs++;
                map[fl] = g;
            }
        }
    }

    std::vector<Eigen::Triplet<double>> triplets;
    gs.f = Vector::Zero(gs.num_dofs);
    for (int k = 0; k < np; ++k) {
        const auto& red = reduced[static_cast<std::size_t>(k)];
        const auto& map = gs.patch_to_global[static_cast<std::size_t>(k)];
        for (int col = 0; col < red.K.outerSize(); ++col)
            for (SparseMatrix::InnerIterator it(red.K, col); it; ++it)
                triplets.emplace_back(map[static_cast<std::size_t>(it.row())], map[static_cast<std::size_t>(col)], it.value());
        for (std::size_t fl = 0; fl < map.size(); ++fl) gs.f[map[fl]] += red.f[static_cast<int>(fl)];
    }
    gs.K.resize(gs.num_dofs, gs.num_dofs);
    gs.K.setFromTriplets(triplets.begin(), triplets.end());
    gs.K.makeCompressed();
    return gs;
}

}  // namespace ieti
