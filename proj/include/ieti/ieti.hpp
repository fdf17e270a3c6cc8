#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "ieti/assembly.hpp"
#include "ieti/errors.hpp"
#include "ieti/geometry.hpp"
#include "ieti/linalg.hpp"
#include "ieti/splines.hpp"

namespace ieti {

enum class Scaling { Multiplicity, Coefficient, Stiffness, StiffnessModified };
enum class PrimalAlgorithm { A, C };
enum class PreconditionerKind { None, Dirichlet, ScaledDirichlet, Bddc };

/**
 * Signed incidence operator enforcing w^(a)_i - w^(b)_j = 0 across patch
 * interfaces, one row per Lagrange multiplier. Rows are ordered
 * lexicographically by (patch pair, pair position) and reference B-local
 * dof indices. The scaled variant carries delta^dagger weights instead of
 * unit entries.
 */
struct JumpOperator {
    struct Row {
        int patch_a, b_a;  // +weight entry
        int patch_b, b_b;  // -weight entry
        double w_a = 1.0;
        double w_b = 1.0;
    };
    std::vector<Row> rows;

    int num_rows() const { return static_cast<int>(rows.size()); }

    /// B^T lambda as one vector per patch over its B dofs.
    std::vector<Vector> apply_transpose(const Vector& lambda, const std::vector<int>& b_sizes) const {
        std::vector<Vector> out(b_sizes.size());
        for (std::size_t k = 0; k < b_sizes.size(); ++k) out[k] = Vector::Zero(b_sizes[k]);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const Row& row = rows[r];
            out[static_cast<std::size_t>(row.patch_a)][row.b_a] += row.w_a * lambda[static_cast<Eigen::Index>(r)];
            out[static_cast<std::size_t>(row.patch_b)][row.b_b] -= row.w_b * lambda[static_cast<Eigen::Index>(r)];
        }
        return out;
    }

    /// B w for per-patch trace vectors w.
    Vector apply(const std::vector<Vector>& w) const {
        Vector out(num_rows());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const Row& row = rows[r];
            out[static_cast<Eigen::Index>(r)] = row.w_a * w[static_cast<std::size_t>(row.patch_a)][row.b_a] -
                                                row.w_b * w[static_cast<std::size_t>(row.patch_b)][row.b_b];
        }
        return out;
    }
};

/// delta^dagger weights per patch and B dof; for every coupled dof the
/// weights of the sharing patches sum to one.
struct ScalingVector {
    std::vector<Vector> delta;
};

/// Primal variables (vertex evaluations and, for Algorithm C, interface
/// edge averages) realized as per-patch constraint matrices C^(k) over the
/// B dofs, plus the grouping of patch-local rows into global primal dofs.
struct PrimalSet {
    int num_global = 0;
    std::vector<Matrix> C;                          // per patch: n_pi^(k) x n_B^(k)
    std::vector<std::vector<int>> local_to_global;  // per patch row -> global primal dof
};

/// Energy-minimizing primal basis: per-patch columns Phi_j over the B dofs
/// and the coarse matrix S_PiPi assembled from the saddle multipliers.
struct PrimalBasis {
    std::vector<Matrix> phi;  // per patch: n_B x n_pi^(k)
    Matrix s_pp;              // global coarse matrix
    Eigen::LLT<Matrix> s_pp_llt;
};

/// Element of the intermediate space W~ = W_Pi (+) prod_k W_Delta^(k) in
/// the representation {w_Pi, {w_Delta^(k)}}; also used for functionals.
struct Split {
    Vector pi;
    std::vector<Vector> delta;
};

inline JumpOperator build_jump_operator(const MultiPatch& mp, const InterfacePairs& pairs,
                                        const DofPartition& part,
                                        const std::vector<ReducedPatchSystem>& reduced,
                                        bool restrict_to_dual) {
    struct Key {
        int lo, hi, itf, pos;
        bool operator<(const Key& o) const {
            return std::tie(lo, hi, itf, pos) < std::tie(o.lo, o.hi, o.itf, o.pos);
        }
    };
    std::vector<std::pair<Key, JumpOperator::Row>> rows;
    for (std::size_t i = 0; i < mp.interfaces.size(); ++i) {
        const Interface& itf = mp.interfaces[i];
        const auto& plist = pairs.per_interface[i];
        for (std::size_t pos = 0; pos < plist.size(); ++pos) {
            const auto b_of = [&](int patch, int full) {
                const int fl = reduced[static_cast<std::size_t>(patch)].full_to_free[static_cast<std::size_t>(full)];
                return fl < 0 ? -1 : part.patches[static_cast<std::size_t>(patch)].free_to_b[static_cast<std::size_t>(fl)];
            };
            const int ba = b_of(itf.patch_a, plist[pos].first);
            const int bb = b_of(itf.patch_b, plist[pos].second);
            if (ba < 0 || bb < 0) continue;  // Dirichlet pair
            const int cid = part.patches[static_cast<std::size_t>(itf.patch_a)].coupled_id[static_cast<std::size_t>(ba)];
            if (restrict_to_dual && part.coupled_is_primal[static_cast<std::size_t>(cid)]) continue;
            JumpOperator::Row row;
            if (itf.patch_a <= itf.patch_b) {
                row = {itf.patch_a, ba, itf.patch_b, bb, 1.0, 1.0};
            } else {
                row = {itf.patch_b, bb, itf.patch_a, ba, 1.0, 1.0};
            }
            rows.push_back({{std::min(itf.patch_a, itf.patch_b), std::max(itf.patch_a, itf.patch_b),
                             static_cast<int>(i), static_cast<int>(pos)},
                            row});
        }
    }
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    JumpOperator op;
    op.rows.reserve(rows.size());
    for (auto& [key, row] : rows) op.rows.push_back(row);
    return op;
}

/**
 * delta^dagger_i = rho_i^(k) / sum_l rho_{j_l}^(l) over the patches sharing
 * the coupled dof. Multiplicity scaling uses rho = 1, coefficient scaling
 * rho = alpha^(k), stiffness scaling the diagonal of the patch stiffness,
 * and modified stiffness scaling the patch-median diagonal value.
 */
inline ScalingVector scaling_vector(Scaling strategy, const MultiPatch& mp, const DofPartition& part,
                                    const std::vector<ReducedPatchSystem>& reduced) {
    const int np = mp.num_patches();
    std::vector<Vector> rho(static_cast<std::size_t>(np));
    for (int k = 0; k < np; ++k) {
        const auto& pd = part.patches[static_cast<std::size_t>(k)];
        const auto& red = reduced[static_cast<std::size_t>(k)];
        Vector r(pd.boundary.size());
        switch (strategy) {
            case Scaling::Multiplicity:
                r.setOnes();
                break;
            case Scaling::Coefficient:
                r.setConstant(mp.patches[static_cast<std::size_t>(k)].alpha);
                break;
            case Scaling::Stiffness:
                for (std::size_t b = 0; b < pd.boundary.size(); ++b)
                    r[static_cast<Eigen::Index>(b)] = red.K.coeff(pd.boundary[b], pd.boundary[b]);
                break;
            case Scaling::StiffnessModified: {
                Vector diag = red.K.diagonal();
                std::vector<double> d(diag.data(), diag.data() + diag.size());
                std::nth_element(d.begin(), d.begin() + d.size() / 2, d.end());
                r.setConstant(d[d.size() / 2]);
                break;
            }
        }
        rho[static_cast<std::size_t>(k)] = std::move(r);
    }

    Vector sums = Vector::Zero(part.num_coupled);
    for (int k = 0; k < np; ++k) {
        const auto& pd = part.patches[static_cast<std::size_t>(k)];
        for (std::size_t b = 0; b < pd.boundary.size(); ++b)
            sums[pd.coupled_id[b]] += rho[static_cast<std::size_t>(k)][static_cast<Eigen::Index>(b)];
    }
    ScalingVector sv;
    sv.delta.resize(static_cast<std::size_t>(np));
    for (int k = 0; k < np; ++k) {
        const auto& pd = part.patches[static_cast<std::size_t>(k)];
        Vector d(pd.boundary.size());
        for (std::size_t b = 0; b < pd.boundary.size(); ++b)
            d[static_cast<Eigen::Index>(b)] =
                rho[static_cast<std::size_t>(k)][static_cast<Eigen::Index>(b)] / sums[pd.coupled_id[b]];
        sv.delta[static_cast<std::size_t>(k)] = std::move(d);
    }
    return sv;
}

inline JumpOperator scale_jump_operator(const JumpOperator& op, const ScalingVector& sv) {
    JumpOperator out = op;
    for (auto& row : out.rows) {
        // cross scaling: the entry on one patch carries the neighbour's weight
        const double da = sv.delta[static_cast<std::size_t>(row.patch_a)][row.b_a];
        const double db = sv.delta[static_cast<std::size_t>(row.patch_b)][row.b_b];
        row.w_a = db;
        row.w_b = da;
    }
    return out;
}

/**
 * Vertex evaluations at all coupled patch corners; with Algorithm C one
 * edge-average functional per declared interface is added, integrated in
 * physical arc length with p+1 Gauss points per boundary element.
 */
inline PrimalSet select_primal(PrimalAlgorithm algorithm, const MultiPatch& mp,
                               const std::vector<TensorBasis>& bases, const DofPartition& part,
                               const std::vector<ReducedPatchSystem>& reduced) {
    const int np = mp.num_patches();
    PrimalSet ps;
    ps.C.resize(static_cast<std::size_t>(np));
    ps.local_to_global.resize(static_cast<std::size_t>(np));

    // vertex primal dofs: one global dof per primal coupled group
    std::vector<int> coupled_to_primal(static_cast<std::size_t>(part.num_coupled), -1);
    for (int c = 0; c < part.num_coupled; ++c)
        if (part.coupled_is_primal[static_cast<std::size_t>(c)]) coupled_to_primal[static_cast<std::size_t>(c)] = ps.num_global++;

    struct LocalRow {
        int global;
        Vector weights;
    };
    std::vector<std::vector<LocalRow>> rows(static_cast<std::size_t>(np));
    for (int k = 0; k < np; ++k) {
        const auto& pd = part.patches[static_cast<std::size_t>(k)];
        for (std::size_t b = 0; b < pd.boundary.size(); ++b) {
            if (!pd.is_primal[b]) continue;
            Vector w = Vector::Zero(static_cast<Eigen::Index>(pd.boundary.size()));
            w[static_cast<Eigen::Index>(b)] = 1.0;
            rows[static_cast<std::size_t>(k)].push_back({coupled_to_primal[static_cast<std::size_t>(pd.coupled_id[b])], std::move(w)});
        }
    }

    if (algorithm == PrimalAlgorithm::C) {
        for (std::size_t i = 0; i < mp.interfaces.size(); ++i) {
            const Interface& itf = mp.interfaces[i];
            // an edge average is linearly dependent on the vertex
            // functionals unless the edge carries at least one dual dof
            bool has_dual = false;
            {
                const auto& pd = part.patches[static_cast<std::size_t>(itf.patch_a)];
                const auto& red = reduced[static_cast<std::size_t>(itf.patch_a)];
                for (int full : bases[static_cast<std::size_t>(itf.patch_a)].side_dofs(itf.side_a)) {
                    const int fl = red.full_to_free[static_cast<std::size_t>(full)];
                    if (fl < 0) continue;
                    const int b = pd.free_to_b[static_cast<std::size_t>(fl)];
                    if (b >= 0 && !pd.is_primal[static_cast<std::size_t>(b)]) has_dual = true;
                }
            }
            if (!has_dual) continue;
            const int global = ps.num_global++;
            for (int which = 0; which < 2; ++which) {
                const int k = which == 0 ? itf.patch_a : itf.patch_b;
                const int side = which == 0 ? itf.side_a : itf.side_b;
                const TensorBasis& basis = bases[static_cast<std::size_t>(k)];
                const GeometryMap& map = mp.patches[static_cast<std::size_t>(k)].map;
                const auto& pd = part.patches[static_cast<std::size_t>(k)];
                const auto& red = reduced[static_cast<std::size_t>(k)];

                const int dir = side < 2 ? 1 : 0;
                const double fixed = (side == 0 || side == 2) ? 0.0 : 1.0;
                const auto& kv = basis.direction(dir);
                const auto side_full = basis.side_dofs(side);
                const GaussRule q = gauss_legendre(kv.degree() + 1);
                Vector acc = Vector::Zero(static_cast<Eigen::Index>(side_full.size()));
                double length = 0.0;
                Vector values;
                const auto bps = kv.breakpoints();
                for (std::size_t e = 0; e + 1 < bps.size(); ++e) {
                    const double a0 = bps[e], h = bps[e + 1] - bps[e];
                    for (std::size_t g = 0; g < q.nodes.size(); ++g) {
                        const double t = a0 + h * q.nodes[g];
                        const Eigen::Vector2d xi =
                            dir == 0 ? Eigen::Vector2d(t, fixed) : Eigen::Vector2d(fixed, t);
                        const double ds = map.jacobian(xi).col(dir).norm();
                        const double w = q.weights[g] * h * ds;
                        length += w;
                        const int span = kv.eval_basis(t, values);
                        for (int j = 0; j <= kv.degree(); ++j)
                            acc[span - kv.degree() + j] += w * values[j];
                    }
                }
                Vector w = Vector::Zero(static_cast<Eigen::Index>(pd.boundary.size()));
                for (std::size_t r = 0; r < side_full.size(); ++r) {
                    const int fl = red.full_to_free[static_cast<std::size_t>(side_full[r])];
                    if (fl < 0) continue;  // Dirichlet endpoint: trace fixed to the boundary data
                    const int b = pd.free_to_b[static_cast<std::size_t>(fl)];
                    w[b] = acc[static_cast<Eigen::Index>(r)] / length;
                }
                rows[static_cast<std::size_t>(k)].push_back({global, std::move(w)});
            }
        }
    }

    for (int k = 0; k < np; ++k) {
        const auto& lr = rows[static_cast<std::size_t>(k)];
        Matrix C(lr.size(), part.patches[static_cast<std::size_t>(k)].boundary.size());
        for (std::size_t r = 0; r < lr.size(); ++r) {
            C.row(static_cast<Eigen::Index>(r)) = lr[r].weights.transpose();
            ps.local_to_global[static_cast<std::size_t>(k)].push_back(lr[r].global);
        }
        ps.C[static_cast<std::size_t>(k)] = std::move(C);
    }

    // every floating patch needs at least one primal constraint
    for (int k = 0; k < np; ++k) {
        const auto& sides = mp.patches[static_cast<std::size_t>(k)].sides;
        const bool floating = std::none_of(sides.begin(), sides.end(),
                                           [](BoundaryKind s) { return s == BoundaryKind::Dirichlet; });
        if (floating && ps.local_to_global[static_cast<std::size_t>(k)].empty())
            throw ConfigError("primal set does not control the kernel of a floating patch");
    }
    return ps;
}

/**
 * Per-patch IETI state: cached factorizations and blocks. The saddle
 * factorization of [[K, C^T], [C, 0]] is computed once and reused for the
 * primal basis, all W_Delta solves and the final solution recovery.
 */
struct PatchOperators {
    SparseMatrix K_bb;          // B x B block
    SparseMatrix K_ib;          // I x B block
    Vector f_b, f_i;
    Vector g;                   // condensed interface load f_B - K_BI K_II^-1 f_I
    std::unique_ptr<SpdFactorization> K_ii;
    std::unique_ptr<SaddleFactorization> saddle;
    std::vector<int> b_to_free; // B-local -> free-local
    std::vector<int> i_to_free; // I-local -> free-local
};

inline PrimalBasis compute_primal_basis(const std::vector<PatchOperators>& ops, const PrimalSet& primal,
                                        const DofPartition& part) {
    const int np = static_cast<int>(ops.size());
    PrimalBasis pb;
    pb.phi.resize(static_cast<std::size_t>(np));
    pb.s_pp = Matrix::Zero(primal.num_global, primal.num_global);

    for (int k = 0; k < np; ++k) {
        const auto& op = ops[static_cast<std::size_t>(k)];
        const int n_b = static_cast<int>(part.patches[static_cast<std::size_t>(k)].boundary.size());
        const int n_pi = static_cast<int>(primal.local_to_global[static_cast<std::size_t>(k)].size());
        Matrix phi(n_b, n_pi);
        Matrix mu(n_pi, n_pi);
        const int n_free = op.saddle->primal_size();
        for (int j = 0; j < n_pi; ++j) {
            Vector e = Vector::Zero(n_pi);
            e[j] = 1.0;
            auto [x, m] = op.saddle->solve(Vector::Zero(n_free), e);
            for (int b = 0; b < n_b; ++b) phi(b, j) = x[op.b_to_free[static_cast<std::size_t>(b)]];
            mu.col(j) = m;
        }
        pb.phi[static_cast<std::size_t>(k)] = std::move(phi);
        // (S_PiPi^(k))_{ij} = -(mu_i)_j, assembled into the global coarse matrix
        for (int i = 0; i < n_pi; ++i)
            for (int j = 0; j < n_pi; ++j)
                pb.s_pp(primal.local_to_global[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)],
                        primal.local_to_global[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)]) -= mu(j, i);
    }
    if (primal.num_global > 0) {
        pb.s_pp_llt.compute(pb.s_pp);
        if (pb.s_pp_llt.info() != Eigen::Success)
            throw ConfigError("coarse matrix S_PiPi is not SPD: primal set insufficient");
    }
    return pb;
}

namespace detail {

/// Parallel per-patch loop; the first exception thrown by any iteration
/// survives the parallel region and is rethrown on the calling thread.
template <typename Body>
inline void parallel_patch_loop(int num_patches, Body&& body) {
    std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
    for (int k = 0; k < num_patches; ++k) {
        try {
            body(k);
        } catch (...) {
#pragma omp critical(ieti_patch_loop_error)
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
}

}  // namespace detail

struct ProblemData {
    ScalarField source = zero_field();
    ScalarField neumann = zero_field();
    ScalarField dirichlet = zero_field();
};

struct IetiOptions {
    PrimalAlgorithm algorithm = PrimalAlgorithm::C;
    Scaling scaling = Scaling::Coefficient;
    PreconditionerKind preconditioner = PreconditionerKind::ScaledDirichlet;
    double tol = 1e-6;
    int max_it = 500;
};

struct IetiSolution {
    std::vector<Vector> u;  // per patch, all tensor coefficients (Dirichlet included)
    int iterations = 0;
    double kappa = 1.0;
    std::vector<double> residuals;
};

/**
 * IETI-DP solver for one multipatch diffusion problem. Setup assembles and
 * factorizes all patch-local systems (in parallel, results read-only
 * afterwards); the apply_* members realize the operators entering PCG.
 */
class IetiSystem {
public:
    IetiSystem(const MultiPatch& mp, std::vector<TensorBasis> bases, ProblemData data, IetiOptions opt)
        : bases_(std::move(bases)), options_(opt), num_patches_(mp.num_patches()) {
        if (!mp.has_dirichlet()) throw ConfigError("IETI solve requires a non-empty Dirichlet boundary");

        reduced_.resize(static_cast<std::size_t>(num_patches_));
        detail::parallel_patch_loop(num_patches_, [&](int k) {
            const Patch& patch = mp.patches[static_cast<std::size_t>(k)];
            const TensorBasis& basis = bases_[static_cast<std::size_t>(k)];
            PatchSystem full = assemble_patch(patch.map, basis, patch.alpha, data.source, data.neumann, patch.sides);
            reduced_[static_cast<std::size_t>(k)] =
                eliminate_dirichlet(full, basis, patch.map, patch.sides, data.dirichlet);
        });

        pairs_ = build_interface_pairs(mp, bases_);
        partition_ = partition_dofs(mp, bases_, pairs_, reduced_);

        ops_.resize(static_cast<std::size_t>(num_patches_));
        primal_ = select_primal(opt.algorithm, mp, bases_, partition_, reduced_);

        detail::parallel_patch_loop(num_patches_, [&](int k) { setup_patch(k); });

        basis_ = compute_primal_basis(ops_, primal_, partition_);

        jump_ = build_jump_operator(mp, pairs_, partition_, reduced_, /*restrict_to_dual=*/true);
        scaling_ = scaling_vector(opt.scaling, mp, partition_, reduced_);
        scaled_jump_ = scale_jump_operator(jump_, scaling_);
    }

    // --- sizes and setup artifacts ------------------------------------
    int num_multipliers() const { return jump_.num_rows(); }
    int num_coupled() const { return partition_.num_coupled; }
    int num_primal() const { return primal_.num_global; }
    int total_dofs() const {
        int n = partition_.num_coupled;
        for (const auto& pd : partition_.patches) n += static_cast<int>(pd.interior.size());
        return n;
    }
    const DofPartition& partition() const { return partition_; }
    const InterfacePairs& pairs() const { return pairs_; }
    const PrimalSet& primal() const { return primal_; }
    const PrimalBasis& primal_basis() const { return basis_; }
    const JumpOperator& jump() const { return jump_; }
    const JumpOperator& scaled_jump() const { return scaled_jump_; }
    const ScalingVector& scaling() const { return scaling_; }
    const std::vector<ReducedPatchSystem>& reduced_systems() const { return reduced_; }
    const std::vector<TensorBasis>& bases() const { return bases_; }
    std::vector<int> b_sizes() const {
        std::vector<int> out(static_cast<std::size_t>(num_patches_));
        for (int k = 0; k < num_patches_; ++k)
            out[static_cast<std::size_t>(k)] = static_cast<int>(partition_.patches[static_cast<std::size_t>(k)].boundary.size());
        return out;
    }

    // --- per-patch Schur complement ------------------------------------
    /// S^(k) w = K_BB w - K_BI K_II^-1 K_IB w (one Dirichlet solve).
    Vector schur_apply(int k, const Vector& w_b) const {
        const auto& op = ops_[static_cast<std::size_t>(k)];
        Vector v = op.K_bb * w_b;
        if (op.K_ii && op.K_ii->size() > 0) {
            const Vector x = op.K_ii->solve(op.K_ib * w_b);
            v.noalias() -= op.K_ib.transpose() * x;
        }
        return v;
    }

    // --- block-diagonal S~^-1 -------------------------------------------
    /// Coarse solve plus constrained patch Neumann solves, reusing the
    /// stored factorizations.
    Split apply_stilde_inv(const Split& f) const {
        Split w;
        w.pi = primal_.num_global > 0 ? basis_.s_pp_llt.solve(f.pi).eval() : Vector();
        w.delta.resize(f.delta.size());
#pragma omp parallel for schedule(dynamic)
        for (int k = 0; k < num_patches_; ++k) {
            const auto& op = ops_[static_cast<std::size_t>(k)];
            const int n_free = op.saddle->primal_size();
            Vector rhs = Vector::Zero(n_free);
            const auto& fd = f.delta[static_cast<std::size_t>(k)];
            for (int b = 0; b < fd.size(); ++b) rhs[op.b_to_free[static_cast<std::size_t>(b)]] = fd[b];
            auto [x, m] = op.saddle->solve(rhs, Vector::Zero(op.saddle->multiplier_size()));
            Vector wd(fd.size());
            for (int b = 0; b < fd.size(); ++b) wd[b] = x[op.b_to_free[static_cast<std::size_t>(b)]];
            w.delta[static_cast<std::size_t>(k)] = std::move(wd);
        }
        return w;
    }

    /// Partial assembly I~^T: split a per-patch functional into the coarse
    /// component Phi^T f and the patch components.
    Split split_functional(std::vector<Vector> f) const {
        Split out;
        out.pi = Vector::Zero(primal_.num_global);
        for (int k = 0; k < num_patches_; ++k) {
            const auto& l2g = primal_.local_to_global[static_cast<std::size_t>(k)];
            if (!l2g.empty()) {
                const Vector local = basis_.phi[static_cast<std::size_t>(k)].transpose() * f[static_cast<std::size_t>(k)];
                for (std::size_t j = 0; j < l2g.size(); ++j) out.pi[l2g[j]] += local[static_cast<Eigen::Index>(j)];
            }
        }
        out.delta = std::move(f);
        return out;
    }

    /// Embedding I~: per-patch traces w^(k) = Phi^(k) w_Pi + w_Delta^(k).
    std::vector<Vector> embed(const Split& w) const {
        std::vector<Vector> out(w.delta.size());
        for (int k = 0; k < num_patches_; ++k) {
            Vector v = w.delta[static_cast<std::size_t>(k)];
            const auto& l2g = primal_.local_to_global[static_cast<std::size_t>(k)];
            if (!l2g.empty()) {
                Vector local(l2g.size());
                for (std::size_t j = 0; j < l2g.size(); ++j) local[static_cast<Eigen::Index>(j)] = w.pi[l2g[j]];
                v.noalias() += basis_.phi[static_cast<std::size_t>(k)] * local;
            }
            out[static_cast<std::size_t>(k)] = std::move(v);
        }
        return out;
    }

    // --- IETI-DP operator and right-hand side ---------------------------
    /// nu = F lambda = B I~ S~^-1 I~^T B^T lambda.
    Vector apply_F(const Vector& lambda) const {
        return jump_.apply(embed(apply_stilde_inv(split_functional(jump_.apply_transpose(lambda, b_sizes())))));
    }

    /// d = B~ S~^-1 g~.
    Vector rhs_d() const {
        std::vector<Vector> g(static_cast<std::size_t>(num_patches_));
        for (int k = 0; k < num_patches_; ++k) g[static_cast<std::size_t>(k)] = ops_[static_cast<std::size_t>(k)].g;
        return jump_.apply(embed(apply_stilde_inv(split_functional(std::move(g)))));
    }

    // --- Dirichlet preconditioners --------------------------------------
    /// M^-1 r = B_D diag(S^(k)) B_D^T r (unscaled variant with B).
    Vector apply_dirichlet_prec(const Vector& r, bool scaled) const {
        const JumpOperator& op = scaled ? scaled_jump_ : jump_;
        std::vector<Vector> t = op.apply_transpose(r, b_sizes());
#pragma omp parallel for schedule(dynamic)
        for (int k = 0; k < num_patches_; ++k)
            t[static_cast<std::size_t>(k)] = schur_apply(k, t[static_cast<std::size_t>(k)]);
        return op.apply(t);
    }

    // --- assembled Schur system and BDDC ---------------------------------
    /// S^ u = sum_k R^(k)T S^(k) R^(k) u on the coupled interface dofs.
    Vector apply_shat(const Vector& u_hat) const {
        std::vector<Vector> w(static_cast<std::size_t>(num_patches_));
        for (int k = 0; k < num_patches_; ++k) w[static_cast<std::size_t>(k)] = gather(k, u_hat);
#pragma omp parallel for schedule(dynamic)
        for (int k = 0; k < num_patches_; ++k)
            w[static_cast<std::size_t>(k)] = schur_apply(k, w[static_cast<std::size_t>(k)]);
        Vector out = Vector::Zero(partition_.num_coupled);
        for (int k = 0; k < num_patches_; ++k) scatter_add(k, w[static_cast<std::size_t>(k)], out);
        return out;
    }

    Vector rhs_ghat() const {
        Vector out = Vector::Zero(partition_.num_coupled);
        for (int k = 0; k < num_patches_; ++k) scatter_add(k, ops_[static_cast<std::size_t>(k)].g, out);
        return out;
    }

    /// M_BDDC^-1 r = E~_D S~^-1 E~_D^T r with the delta^dagger-weighted
    /// averaging operator E~_D.
    Vector apply_bddc(const Vector& r_hat) const {
        std::vector<Vector> f(static_cast<std::size_t>(num_patches_));
        for (int k = 0; k < num_patches_; ++k)
            f[static_cast<std::size_t>(k)] =
                scaling_.delta[static_cast<std::size_t>(k)].cwiseProduct(gather(k, r_hat));
        const std::vector<Vector> w = embed(apply_stilde_inv(split_functional(std::move(f))));
        Vector out = Vector::Zero(partition_.num_coupled);
        for (int k = 0; k < num_patches_; ++k)
            scatter_add(k, scaling_.delta[static_cast<std::size_t>(k)].cwiseProduct(w[static_cast<std::size_t>(k)]), out);
        return out;
    }

    // --- solve ------------------------------------------------------------
    IetiSolution solve() const {
        PcgResult pcg_result;
        std::vector<Vector> u_b;
        if (options_.preconditioner == PreconditionerKind::Bddc) {
            const Vector ghat = rhs_ghat();
            pcg_result = pcg([this](const Vector& v) { return apply_shat(v); },
                             [this](const Vector& v) { return apply_bddc(v); }, ghat, options_.tol,
                             options_.max_it);
            u_b.resize(static_cast<std::size_t>(num_patches_));
            for (int k = 0; k < num_patches_; ++k) u_b[static_cast<std::size_t>(k)] = gather(k, pcg_result.x);
        } else {
            std::vector<Vector> g(static_cast<std::size_t>(num_patches_));
            for (int k = 0; k < num_patches_; ++k) g[static_cast<std::size_t>(k)] = ops_[static_cast<std::size_t>(k)].g;
            const std::vector<Vector> w_g = embed(apply_stilde_inv(split_functional(std::move(g))));
            const Vector d = jump_.apply(w_g);
            // the entries of d are jumps of the uncoupled solution; a d at
            // roundoff level relative to that solution means lambda = 0
            double trace_scale = 0.0;
            for (const Vector& w : w_g) trace_scale += w.squaredNorm();
            const double floor = 1e-13 * std::sqrt(trace_scale);

            LinearOperator prec;
            switch (options_.preconditioner) {
                case PreconditionerKind::None:
                    prec = [](const Vector& v) { return v; };
                    break;
                case PreconditionerKind::Dirichlet:
                    prec = [this](const Vector& v) { return apply_dirichlet_prec(v, false); };
                    break;
                default:
                    prec = [this](const Vector& v) { return apply_dirichlet_prec(v, true); };
                    break;
            }
            pcg_result = pcg([this](const Vector& v) { return apply_F(v); }, prec, d, options_.tol,
                             options_.max_it, floor);
            // u = S~^-1 (g~ - B~^T lambda)
            std::vector<Vector> h = jump_.apply_transpose(pcg_result.x, b_sizes());
            for (int k = 0; k < num_patches_; ++k)
                h[static_cast<std::size_t>(k)] = ops_[static_cast<std::size_t>(k)].g - h[static_cast<std::size_t>(k)];
            u_b = embed(apply_stilde_inv(split_functional(std::move(h))));
        }
        if (!pcg_result.converged)
            throw SolverError("IETI PCG did not reach the requested tolerance", pcg_result.residuals);

        IetiSolution sol;
        sol.iterations = pcg_result.iterations;
        sol.kappa = pcg_result.kappa;
        sol.residuals = std::move(pcg_result.residuals);
        sol.u.resize(static_cast<std::size_t>(num_patches_));
#pragma omp parallel for schedule(dynamic)
        for (int k = 0; k < num_patches_; ++k)
            sol.u[static_cast<std::size_t>(k)] = recover_patch(k, u_b[static_cast<std::size_t>(k)]);
        return sol;
    }

private:
    void setup_patch(int k) {
        auto& op = ops_[static_cast<std::size_t>(k)];
        const auto& red = reduced_[static_cast<std::size_t>(k)];
        const auto& pd = partition_.patches[static_cast<std::size_t>(k)];
        const int n_b = static_cast<int>(pd.boundary.size());
        const int n_i = static_cast<int>(pd.interior.size());
        const int n_free = static_cast<int>(red.free_to_full.size());

        op.b_to_free.assign(pd.boundary.begin(), pd.boundary.end());
        op.i_to_free.assign(pd.interior.begin(), pd.interior.end());

        std::vector<int> free_to_i(static_cast<std::size_t>(n_free), -1);
        for (int i = 0; i < n_i; ++i) free_to_i[static_cast<std::size_t>(op.i_to_free[static_cast<std::size_t>(i)])] = i;

        std::vector<Eigen::Triplet<double>> t_bb, t_ib, t_ii;
        for (int col = 0; col < red.K.outerSize(); ++col) {
            const int bc = pd.free_to_b[static_cast<std::size_t>(col)];
            const int ic = free_to_i[static_cast<std::size_t>(col)];
            for (SparseMatrix::InnerIterator it(red.K, col); it; ++it) {
                const int br = pd.free_to_b[static_cast<std::size_t>(it.row())];
                const int ir = free_to_i[static_cast<std::size_t>(it.row())];
                if (br >= 0 && bc >= 0) t_bb.emplace_back(br, bc, it.value());
                else if (ir >= 0 && bc >= 0) t_ib.emplace_back(ir, bc, it.value());
                else if (ir >= 0 && ic >= 0) t_ii.emplace_back(ir, ic, it.value());
            }
        }
        op.K_bb.resize(n_b, n_b);
        op.K_bb.setFromTriplets(t_bb.begin(), t_bb.end());
        op.K_ib.resize(n_i, n_b);
        op.K_ib.setFromTriplets(t_ib.begin(), t_ib.end());
        SparseMatrix K_ii(n_i, n_i);
        K_ii.setFromTriplets(t_ii.begin(), t_ii.end());

        op.f_b.resize(n_b);
        for (int b = 0; b < n_b; ++b) op.f_b[b] = red.f[op.b_to_free[static_cast<std::size_t>(b)]];
        op.f_i.resize(n_i);
        for (int i = 0; i < n_i; ++i) op.f_i[i] = red.f[op.i_to_free[static_cast<std::size_t>(i)]];

        if (n_i > 0) op.K_ii = std::make_unique<SpdFactorization>(K_ii);
        op.g = op.f_b;
        if (n_i > 0) op.g.noalias() -= op.K_ib.transpose() * op.K_ii->solve(op.f_i);

        // saddle factorization of [[K, C^T], [C, 0]] over all free dofs
        const auto& C_dense = primal_.C[static_cast<std::size_t>(k)];
        std::vector<Eigen::Triplet<double>> t_c;
        for (int r = 0; r < C_dense.rows(); ++r)
            for (int b = 0; b < n_b; ++b)
                if (C_dense(r, b) != 0.0)
                    t_c.emplace_back(r, op.b_to_free[static_cast<std::size_t>(b)], C_dense(r, b));
        SparseMatrix C(C_dense.rows(), n_free);
        C.setFromTriplets(t_c.begin(), t_c.end());
        op.saddle = std::make_unique<SaddleFactorization>(red.K, C);
    }

    Vector recover_patch(int k, const Vector& u_b) const {
        const auto& op = ops_[static_cast<std::size_t>(k)];
        const auto& red = reduced_[static_cast<std::size_t>(k)];
        Vector full = red.dirichlet_values;
        for (std::size_t b = 0; b < op.b_to_free.size(); ++b)
            full[red.free_to_full[static_cast<std::size_t>(op.b_to_free[b])]] = u_b[static_cast<Eigen::Index>(b)];
        if (!op.i_to_free.empty()) {
            const Vector u_i = op.K_ii->solve(op.f_i - op.K_ib * u_b);
            for (std::size_t i = 0; i < op.i_to_free.size(); ++i)
                full[red.free_to_full[static_cast<std::size_t>(op.i_to_free[i])]] = u_i[static_cast<Eigen::Index>(i)];
        }
        return full;
    }

    Vector gather(int k, const Vector& global) const {
        const auto& pd = partition_.patches[static_cast<std::size_t>(k)];
        Vector out(pd.boundary.size());
        for (std::size_t b = 0; b < pd.boundary.size(); ++b) out[static_cast<Eigen::Index>(b)] = global[pd.coupled_id[b]];
        return out;
    }

    void scatter_add(int k, const Vector& local, Vector& global) const {
        const auto& pd = partition_.patches[static_cast<std::size_t>(k)];
        for (std::size_t b = 0; b < pd.boundary.size(); ++b) global[pd.coupled_id[b]] += local[static_cast<Eigen::Index>(b)];
    }

    std::vector<TensorBasis> bases_;
    IetiOptions options_;
    int num_patches_;
    std::vector<ReducedPatchSystem> reduced_;
    InterfacePairs pairs_;
    DofPartition partition_;
    PrimalSet primal_;
    PrimalBasis basis_;
    std::vector<PatchOperators> ops_;
    JumpOperator jump_;
    JumpOperator scaled_jump_;
    ScalingVector scaling_;
};

}  // namespace ieti
