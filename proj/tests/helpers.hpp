#pragma once

// Shared fixtures and independent dense oracles for the unit and
// acceptance suites. Everything here deliberately avoids the solver's
// cached factorization path: Schur complements are formed by dense
// elimination and the intermediate space by an explicit kernel basis.

#include <random>
#include <vector>

#include <Eigen/Dense>

#include "ieti/driver.hpp"
#include "ieti/ieti.hpp"

namespace ieti::testing {

/// Two unit patches glued along x = 1 with Dirichlet on the far west side,
/// so the whole shared edge stays free (2 corner dofs + interior dofs).
inline MultiPatch two_patch_mesh() {
    auto quad = [](std::array<double, 8> c) {
        TensorBasis basis(KnotVector({0, 0, 1, 1}, 1), KnotVector({0, 0, 1, 1}, 1));
        Eigen::MatrixX2d cp(4, 2);
        cp << c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7];
        return GeometryMap(std::move(basis), std::move(cp));
    };
    MultiPatch mp;
    mp.patches.push_back({quad({0, 0, 1, 0, 0, 1, 1, 1}),
                          1.0,
                          {BoundaryKind::Dirichlet, BoundaryKind::Interface, BoundaryKind::Neumann,
                           BoundaryKind::Neumann}});
    mp.patches.push_back({quad({1, 0, 2, 0, 1, 1, 2, 1}),
                          1.0,
                          {BoundaryKind::Interface, BoundaryKind::Neumann, BoundaryKind::Neumann,
                           BoundaryKind::Neumann}});
    mp.interfaces.push_back({0, 1, 1, 0, false});
    return mp;
}

/// All setup products the dense oracles need, assembled without IetiSystem.
struct DenseSetup {
    MultiPatch mp;
    std::vector<TensorBasis> bases;
    std::vector<ReducedPatchSystem> reduced;
    InterfacePairs pairs;
    DofPartition part;
    std::vector<Matrix> schur;  // dense per-patch Schur complements
    std::vector<int> b_sizes;
    std::vector<int> b_offset;  // offsets into the concatenated trace space
    int total_b = 0;
};

inline DenseSetup dense_setup(const MultiPatch& mp, const std::vector<TensorBasis>& bases,
                              const ProblemData& data) {
    DenseSetup s;
    s.mp = mp;
    s.bases = bases;
    for (int k = 0; k < mp.num_patches(); ++k) {
        const Patch& patch = mp.patches[static_cast<std::size_t>(k)];
        const PatchSystem full = assemble_patch(patch.map, bases[static_cast<std::size_t>(k)], patch.alpha,
                                                data.source, data.neumann, patch.sides);
        s.reduced.push_back(eliminate_dirichlet(full, bases[static_cast<std::size_t>(k)], patch.map,
                                                patch.sides, data.dirichlet));
    }
    s.pairs = build_interface_pairs(mp, bases);
    s.part = partition_dofs(mp, bases, s.pairs, s.reduced);

    for (int k = 0; k < mp.num_patches(); ++k) {
        const auto& pd = s.part.patches[static_cast<std::size_t>(k)];
        const Matrix K(s.reduced[static_cast<std::size_t>(k)].K);
        const int nb = static_cast<int>(pd.boundary.size());
        const int ni = static_cast<int>(pd.interior.size());
        Matrix Kbb(nb, nb), Kib(ni, nb), Kii(ni, ni);
        for (int a = 0; a < nb; ++a)
            for (int b = 0; b < nb; ++b) Kbb(a, b) = K(pd.boundary[static_cast<std::size_t>(a)], pd.boundary[static_cast<std::size_t>(b)]);
        for (int a = 0; a < ni; ++a)
            for (int b = 0; b < nb; ++b) Kib(a, b) = K(pd.interior[static_cast<std::size_t>(a)], pd.boundary[static_cast<std::size_t>(b)]);
        for (int a = 0; a < ni; ++a)
            for (int b = 0; b < ni; ++b) Kii(a, b) = K(pd.interior[static_cast<std::size_t>(a)], pd.interior[static_cast<std::size_t>(b)]);
        Matrix schur = Kbb;
        if (ni > 0) schur -= Kib.transpose() * Kii.llt().solve(Kib);
        s.schur.push_back(std::move(schur));
        s.b_offset.push_back(s.total_b);
        s.b_sizes.push_back(nb);
        s.total_b += nb;
    }
    return s;
}

/// Dense matrix of a jump operator over the concatenated trace space.
inline Matrix dense_jump(const JumpOperator& op, const DenseSetup& s) {
    Matrix B = Matrix::Zero(op.num_rows(), s.total_b);
    for (int r = 0; r < op.num_rows(); ++r) {
        const auto& row = op.rows[static_cast<std::size_t>(r)];
        B(r, s.b_offset[static_cast<std::size_t>(row.patch_a)] + row.b_a) += row.w_a;
        B(r, s.b_offset[static_cast<std::size_t>(row.patch_b)] + row.b_b) -= row.w_b;
    }
    return B;
}

inline Matrix dense_block_schur(const DenseSetup& s) {
    Matrix S = Matrix::Zero(s.total_b, s.total_b);
    for (std::size_t k = 0; k < s.schur.size(); ++k)
        S.block(s.b_offset[k], s.b_offset[k], s.b_sizes[k], s.b_sizes[k]) = s.schur[k];
    return S;
}

/// Basis of the intermediate space W~ = { w : primal functionals agree
/// across patches }, computed as the kernel of the explicit inter-patch
/// constraint matrix.
inline Matrix dense_wtilde_basis(const DenseSetup& s, const PrimalSet& primal) {
    // one chain of constraints per global primal dof
    std::vector<std::vector<std::pair<int, int>>> members(static_cast<std::size_t>(primal.num_global));
    for (std::size_t k = 0; k < primal.local_to_global.size(); ++k)
        for (std::size_t r = 0; r < primal.local_to_global[k].size(); ++r)
            members[static_cast<std::size_t>(primal.local_to_global[k][r])].push_back({static_cast<int>(k), static_cast<int>(r)});

    std::vector<Eigen::RowVectorXd> rows;
    for (const auto& group : members)
        for (std::size_t m = 1; m < group.size(); ++m) {
            Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(s.total_b);
            const auto [k0, r0] = group[0];
            const auto [k1, r1] = group[m];
            row.segment(s.b_offset[static_cast<std::size_t>(k0)], s.b_sizes[static_cast<std::size_t>(k0)]) +=
                primal.C[static_cast<std::size_t>(k0)].row(r0);
            row.segment(s.b_offset[static_cast<std::size_t>(k1)], s.b_sizes[static_cast<std::size_t>(k1)]) -=
                primal.C[static_cast<std::size_t>(k1)].row(r1);
            rows.push_back(std::move(row));
        }
    Matrix G = Matrix::Zero(static_cast<Eigen::Index>(rows.size()), s.total_b);
    for (std::size_t r = 0; r < rows.size(); ++r) G.row(static_cast<Eigen::Index>(r)) = rows[r];
    if (rows.empty()) return Matrix::Identity(s.total_b, s.total_b);
    Eigen::FullPivLU<Matrix> lu(G);
    return lu.kernel();
}

/// Dense F = B~ S~^-1 B~^T via the explicit W~ basis.
inline Matrix dense_F(const DenseSetup& s, const PrimalSet& primal, const JumpOperator& jump) {
    const Matrix M = dense_wtilde_basis(s, primal);
    const Matrix S = dense_block_schur(s);
    const Matrix B = dense_jump(jump, s) * M;
    const Matrix St = M.transpose() * S * M;
    return B * St.ldlt().solve(B.transpose());
}

/// Dense M_sD^-1 = B_D diag(S^(k)) B_D^T.
inline Matrix dense_MsD(const DenseSetup& s, const JumpOperator& scaled_jump) {
    const Matrix Bd = dense_jump(scaled_jump, s);
    return Bd * dense_block_schur(s) * Bd.transpose();
}

/// Dense assembled interface Schur complement S^ on the coupled dofs.
inline Matrix dense_Shat(const DenseSetup& s) {
    Matrix Sh = Matrix::Zero(s.part.num_coupled, s.part.num_coupled);
    for (std::size_t k = 0; k < s.schur.size(); ++k) {
        const auto& pd = s.part.patches[k];
        for (int a = 0; a < s.b_sizes[k]; ++a)
            for (int b = 0; b < s.b_sizes[k]; ++b)
                Sh(pd.coupled_id[static_cast<std::size_t>(a)], pd.coupled_id[static_cast<std::size_t>(b)]) +=
                    s.schur[k](a, b);
    }
    return Sh;
}

/// Dense M_BDDC^-1 = E_D S~^-1 E_D^T with the delta-weighted average E_D.
inline Matrix dense_Mbddc(const DenseSetup& s, const PrimalSet& primal, const ScalingVector& sv) {
    Matrix E = Matrix::Zero(s.part.num_coupled, s.total_b);
    for (std::size_t k = 0; k < s.schur.size(); ++k) {
        const auto& pd = s.part.patches[k];
        for (int b = 0; b < s.b_sizes[k]; ++b)
            E(pd.coupled_id[static_cast<std::size_t>(b)], s.b_offset[k] + b) =
                sv.delta[k][b];
    }
    const Matrix M = dense_wtilde_basis(s, primal);
    const Matrix St = M.transpose() * dense_block_schur(s) * M;
    const Matrix EM = E * M;
    return EM * St.ldlt().solve(EM.transpose());
}

/// Real eigenvalues of P * A for SPD P (via its Cholesky congruence).
inline Vector spd_product_eigenvalues(const Matrix& P, const Matrix& A) {
    const Eigen::LLT<Matrix> llt(P);
    if (llt.info() != Eigen::Success) throw std::runtime_error("spd_product_eigenvalues: P not SPD");
    const Matrix L = llt.matrixL();
    const Matrix sym = L.transpose() * A * L;
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (sym + sym.transpose()));
    return es.eigenvalues();
}

/// Relative l2 difference between two per-patch coefficient fields.
inline double relative_difference(const std::vector<Vector>& a, const std::vector<Vector>& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        num += (a[k] - b[k]).squaredNorm();
        den += b[k].squaredNorm();
    }
    return std::sqrt(num / std::max(den, 1e-300));
}

}  // namespace ieti::testing
