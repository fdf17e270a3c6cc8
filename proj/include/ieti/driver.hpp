#pragma once

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ieti/assembly.hpp"
#include "ieti/geometry.hpp"
#include "ieti/ieti.hpp"
#include "ieti/json_io.hpp"
#include "ieti/linalg.hpp"
#include "ieti/splines.hpp"

namespace ieti {

// ---------------------------------------------------------------------------
// geometry generators
// ---------------------------------------------------------------------------

struct AlphaPattern {
    enum class Kind { Constant, Checkerboard };
    Kind kind = Kind::Constant;
    double value = 1.0;  // constant value, or checkerboard low value
    double high = 1.0;

    double at(int ix, int iy) const {
        if (kind == Kind::Constant) return value;
        return (ix + iy) % 2 == 0 ? value : high;
    }
};

namespace detail {

/// Bilinear single-element patch with the given corner points
/// (SW, SE, NW, NE order).
inline GeometryMap bilinear_patch(const std::array<Eigen::Vector2d, 4>& corners) {
    TensorBasis basis(KnotVector::open_uniform(1, 1), KnotVector::open_uniform(1, 1));
    Eigen::MatrixX2d cp(4, 2);
    for (int c = 0; c < 4; ++c) cp.row(c) = corners[static_cast<std::size_t>(c)].transpose();
    return GeometryMap(std::move(basis), std::move(cp));
}

struct Cell {
    int ix, iy;
};

/// Multipatch from a set of grid cells; `node` maps lattice coordinates to
/// physical points (shared corners stay shared, so interfaces conform).
/// Cells in the bottom row get a Dirichlet south side unless
/// `all_dirichlet` marks the whole outer boundary.
inline MultiPatch cells_to_multipatch(const std::vector<Cell>& cells,
                                      const std::function<Eigen::Vector2d(int, int)>& node,
                                      const AlphaPattern& alpha, bool all_dirichlet) {
    std::map<std::pair<int, int>, int> index;
    for (std::size_t c = 0; c < cells.size(); ++c) index[{cells[c].ix, cells[c].iy}] = static_cast<int>(c);
    int min_iy = cells.front().iy;
    for (const Cell& c : cells) min_iy = std::min(min_iy, c.iy);

    MultiPatch mp;
    for (const Cell& c : cells) {
        GeometryMap map = bilinear_patch({node(c.ix, c.iy), node(c.ix + 1, c.iy),
                                          node(c.ix, c.iy + 1), node(c.ix + 1, c.iy + 1)});
        const bool w = index.count({c.ix - 1, c.iy}) > 0;
        const bool e = index.count({c.ix + 1, c.iy}) > 0;
        const bool s = index.count({c.ix, c.iy - 1}) > 0;
        const bool n = index.count({c.ix, c.iy + 1}) > 0;
        std::array<BoundaryKind, 4> sides;
        const BoundaryKind outer = all_dirichlet ? BoundaryKind::Dirichlet : BoundaryKind::Neumann;
        sides[0] = w ? BoundaryKind::Interface : outer;
        sides[1] = e ? BoundaryKind::Interface : outer;
        sides[2] = s ? BoundaryKind::Interface : (c.iy == min_iy ? BoundaryKind::Dirichlet : outer);
        sides[3] = n ? BoundaryKind::Interface : outer;
        mp.patches.push_back({std::move(map), alpha.at(c.ix, c.iy), sides});
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
        const Cell& cell = cells[c];
        if (auto it = index.find({cell.ix + 1, cell.iy}); it != index.end())
            mp.interfaces.push_back({static_cast<int>(c), 1, it->second, 0, false});
        if (auto it = index.find({cell.ix, cell.iy + 1}); it != index.end())
            mp.interfaces.push_back({static_cast<int>(c), 3, it->second, 2, false});
    }
    return mp;
}

}  // namespace detail

/// nx x ny axis-aligned patches tiling the unit square. Dirichlet on the
/// south outer side (or the whole boundary when all_dirichlet), Neumann on
/// the remaining outer sides.
inline MultiPatch generate_grid_multipatch(int nx, int ny, const AlphaPattern& alpha = {},
                                           bool all_dirichlet = false) {
    if (nx < 1 || ny < 1) throw std::invalid_argument("generate_grid_multipatch: nx, ny >= 1");
    std::vector<detail::Cell> cells;
    for (int iy = 0; iy < ny; ++iy)
        for (int ix = 0; ix < nx; ++ix) cells.push_back({ix, iy});
    auto node = [nx, ny](int ix, int iy) {
        return Eigen::Vector2d(static_cast<double>(ix) / nx, static_cast<double>(iy) / ny);
    };
    return detail::cells_to_multipatch(cells, node, alpha, all_dirichlet);
}

/// Footprint-shaped benchmark domain: 21 conforming bilinear quadrilateral
/// patches in a claw arrangement (a 6x3 sole with three toes), smoothly
/// distorted so the patch layout is genuinely non-affine. Dirichlet on the
/// south outer side, Neumann elsewhere.
inline MultiPatch generate_footprint_multipatch(const AlphaPattern& alpha = {}) {
    std::vector<detail::Cell> cells;
    for (int iy = 0; iy < 3; ++iy)
        for (int ix = 0; ix < 6; ++ix) cells.push_back({ix, iy});
    for (int ix : {0, 2, 4}) cells.push_back({ix, 3});
    auto node = [](int ix, int iy) {
        const double x = static_cast<double>(ix), y = static_cast<double>(iy);
        return Eigen::Vector2d(x + 0.15 * std::sin(0.8 * x + 0.5 * y),
                               y + 0.12 * std::sin(0.9 * y - 0.4 * x) + 0.05 * x);
    };
    return detail::cells_to_multipatch(cells, node, alpha, false);
}

// ---------------------------------------------------------------------------
// analysis discretization
// ---------------------------------------------------------------------------

/// Open knot vector of the given degree whose breakpoints subdivide every
/// span of the geometry knot vector into `spans` equal parts, with the
/// requested interior multiplicity.
inline KnotVector analysis_knots(const KnotVector& geometry, int degree, int spans, int interior_mult) {
    const auto geo_bp = geometry.breakpoints();
    std::vector<double> knots(static_cast<std::size_t>(degree) + 1, 0.0);
    for (std::size_t e = 0; e + 1 < geo_bp.size(); ++e)
        for (int s = 1; s <= spans; ++s) {
            const double t = geo_bp[e] + (geo_bp[e + 1] - geo_bp[e]) * s / spans;
            if (t >= 1.0) break;
            knots.insert(knots.end(), static_cast<std::size_t>(interior_mult), t);
        }
    knots.insert(knots.end(), static_cast<std::size_t>(degree) + 1, 1.0);
    return KnotVector(std::move(knots), degree);
}

/// Per-patch analysis bases of the given degree; interfaces stay conforming
/// because matched sides carry matched geometry knots.
inline std::vector<TensorBasis> analysis_bases(const MultiPatch& mp, int degree, int spans,
                                               int interior_mult = 1) {
    std::vector<TensorBasis> out;
    out.reserve(mp.patches.size());
    for (const Patch& p : mp.patches)
        out.emplace_back(analysis_knots(p.map.basis().direction(0), degree, spans, interior_mult),
                         analysis_knots(p.map.basis().direction(1), degree, spans, interior_mult));
    return out;
}

// ---------------------------------------------------------------------------
// error computation and the monolithic oracle path
// ---------------------------------------------------------------------------

/// L2 norm of u_h - exact over the physical domain by elementwise Gauss
/// quadrature (p+2 points per direction).
inline double compute_l2_error(const MultiPatch& mp, const std::vector<TensorBasis>& bases,
                               const std::vector<Vector>& u, const ScalarField& exact) {
    double err2 = 0.0;
    for (int k = 0; k < mp.num_patches(); ++k) {
        const TensorBasis& basis = bases[static_cast<std::size_t>(k)];
        const GeometryMap& map = mp.patches[static_cast<std::size_t>(k)].map;
        const auto bp1 = basis.direction(0).breakpoints();
        const auto bp2 = basis.direction(1).breakpoints();
        const GaussRule q1 = gauss_legendre(basis.direction(0).degree() + 2);
        const GaussRule q2 = gauss_legendre(basis.direction(1).degree() + 2);
        const int p1 = basis.direction(0).degree(), p2 = basis.direction(1).degree();
        for (std::size_t e2 = 0; e2 + 1 < bp2.size(); ++e2)
            for (std::size_t e1 = 0; e1 + 1 < bp1.size(); ++e1) {
                const double h1 = bp1[e1 + 1] - bp1[e1], h2 = bp2[e2 + 1] - bp2[e2];
                for (std::size_t g2 = 0; g2 < q2.nodes.size(); ++g2)
                    for (std::size_t g1 = 0; g1 < q1.nodes.size(); ++g1) {
                        const double t1 = bp1[e1] + h1 * q1.nodes[g1];
                        const double t2 = bp2[e2] + h2 * q2.nodes[g2];
                        const TensorValues tv = basis.eval(t1, t2);
                        double uh = 0.0;
                        int a = 0;
                        for (int j2 = 0; j2 <= p2; ++j2)
                            for (int j1 = 0; j1 <= p1; ++j1, ++a)
                                uh += tv.values[a] *
                                      u[static_cast<std::size_t>(k)][basis.linear_index(tv.first1 + j1, tv.first2 + j2)];
                        const Eigen::Vector2d xi(t1, t2);
                        const Eigen::Vector2d x = map.point(xi);
                        const double det = map.jacobian(xi).determinant();
                        const double diff = uh - exact(x[0], x[1]);
                        err2 += q1.weights[g1] * q2.weights[g2] * h1 * h2 * det * diff * diff;
                    }
            }
    }
    return std::sqrt(err2);
}

/// Direct sparse Cholesky solve of the assembled (continuous) system;
/// the independent reference for solve_ieti. Returns per-patch full
/// coefficient vectors like IetiSystem::solve.
inline std::vector<Vector> solve_monolithic(const MultiPatch& mp, const std::vector<TensorBasis>& bases,
                                            const ProblemData& data) {
    const int np = mp.num_patches();
    std::vector<ReducedPatchSystem> reduced(static_cast<std::size_t>(np));
    for (int k = 0; k < np; ++k) {
        const Patch& patch = mp.patches[static_cast<std::size_t>(k)];
        PatchSystem full = assemble_patch(patch.map, bases[static_cast<std::size_t>(k)], patch.alpha,
                                          data.source, data.neumann, patch.sides);
        reduced[static_cast<std::size_t>(k)] =
            eliminate_dirichlet(full, bases[static_cast<std::size_t>(k)], patch.map, patch.sides, data.dirichlet);
    }
    const InterfacePairs pairs = build_interface_pairs(mp, bases);
    const DofPartition part = partition_dofs(mp, bases, pairs, reduced);
    const GlobalSystem gs = assemble_global(mp, part, reduced);
    const SpdFactorization fac(gs.K);
    const Vector x = fac.solve(gs.f);

    std::vector<Vector> out(static_cast<std::size_t>(np));
    for (int k = 0; k < np; ++k) {
        const auto& red = reduced[static_cast<std::size_t>(k)];
        Vector full = red.dirichlet_values;
        for (std::size_t fl = 0; fl < red.free_to_full.size(); ++fl)
            full[red.free_to_full[fl]] = x[gs.patch_to_global[static_cast<std::size_t>(k)][fl]];
        out[static_cast<std::size_t>(k)] = std::move(full);
    }
    return out;
}

// ---------------------------------------------------------------------------
// benchmark harness
// ---------------------------------------------------------------------------

struct RunConfig {
    std::string geometry = "grid:2,2";  // "grid:NX,NY" | "footprint" | JSON file path
    int degree = 2;
    int refine = 2;        // dyadic refinement level; spans per geometry span = 2^refine
    int spans = 0;         // when > 0, overrides refine with an explicit span count
    int interior_mult = 1;
    PrimalAlgorithm algorithm = PrimalAlgorithm::C;
    PreconditionerKind preconditioner = PreconditionerKind::ScaledDirichlet;
    Scaling scaling = Scaling::Coefficient;
    double tol = 1e-6;
    int max_it = 500;
    AlphaPattern alpha;
    bool manufactured = false;  // sin(pi x) sin(pi y) problem with full Dirichlet boundary
};

struct RunReport {
    std::string algorithm = "C";
    std::string scaling = "coefficient";
    std::string preconditioner = "scaled-dirichlet";
    int dofs = 0;
    int multipliers = 0;
    int h_over_H_inv = 0;
    int iterations = -1;  // -1 flags a failed run
    double kappa = std::numeric_limits<double>::quiet_NaN();
    double l2_error = std::numeric_limits<double>::quiet_NaN();
    double seconds = 0.0;
    std::vector<double> residuals;
};

inline std::string to_string(PrimalAlgorithm a) { return a == PrimalAlgorithm::A ? "A" : "C"; }

inline std::string to_string(Scaling s) {
    switch (s) {
        case Scaling::Multiplicity: return "multiplicity";
        case Scaling::Coefficient: return "coefficient";
        case Scaling::Stiffness: return "stiffness";
        default: return "stiffness-modified";
    }
}

inline std::string to_string(PreconditionerKind p) {
    switch (p) {
        case PreconditionerKind::None: return "none";
        case PreconditionerKind::Dirichlet: return "dirichlet";
        case PreconditionerKind::ScaledDirichlet: return "scaled-dirichlet";
        default: return "bddc";
    }
}

/// Manufactured benchmark problem u = sin(pi x) sin(pi y) with alpha = 1.
struct Manufactured {
    ScalarField exact = [](double x, double y) { return std::sin(M_PI * x) * std::sin(M_PI * y); };
    ScalarField source = [](double x, double y) {
        return 2.0 * M_PI * M_PI * std::sin(M_PI * x) * std::sin(M_PI * y);
    };
};

inline MultiPatch make_geometry(const RunConfig& cfg) {
    if (cfg.geometry == "footprint") return generate_footprint_multipatch(cfg.alpha);
    if (cfg.geometry.rfind("grid:", 0) == 0) {
        int nx = 0, ny = 0;
        if (std::sscanf(cfg.geometry.c_str(), "grid:%d,%d", &nx, &ny) != 2)
            throw std::invalid_argument("geometry grid spec must be grid:NX,NY");
        return generate_grid_multipatch(nx, ny, cfg.alpha, cfg.manufactured);
    }
    return load_multipatch_json(cfg.geometry);
}

inline ProblemData problem_data_for(const RunConfig& cfg) {
    ProblemData data;
    if (cfg.manufactured)
        data.source = Manufactured{}.source;
    else
        data.dirichlet = [](double x, double y) { return x + y; };
    return data;
}

/// Execute one benchmark cell. Failures surface as a report with
/// iterations = -1 so sweeps can continue.
inline RunReport run_single(const RunConfig& cfg) {
    RunReport rep;
    rep.algorithm = to_string(cfg.algorithm);
    rep.scaling = to_string(cfg.scaling);
    rep.preconditioner = to_string(cfg.preconditioner);

    const auto t0 = std::chrono::steady_clock::now();
    try {
        const MultiPatch mp = make_geometry(cfg);
        const int spans = cfg.spans > 0 ? cfg.spans : (1 << cfg.refine);
        std::vector<TensorBasis> bases = analysis_bases(mp, cfg.degree, spans, cfg.interior_mult);
        for (const TensorBasis& b : bases)
            for (int d = 0; d < 2; ++d)
                rep.h_over_H_inv = std::max(rep.h_over_H_inv, b.direction(d).span_count());

        const ProblemData data = problem_data_for(cfg);

        IetiOptions opt;
        opt.algorithm = cfg.algorithm;
        opt.scaling = cfg.scaling;
        opt.preconditioner = cfg.preconditioner;
        opt.tol = cfg.tol;
        opt.max_it = cfg.max_it;

        IetiSystem system(mp, bases, data, opt);
        rep.dofs = system.total_dofs();
        rep.multipliers = system.num_multipliers();
        IetiSolution sol = system.solve();
        rep.iterations = sol.iterations;
        rep.kappa = sol.kappa;
        rep.residuals = std::move(sol.residuals);
        if (cfg.manufactured) rep.l2_error = compute_l2_error(mp, bases, sol.u, Manufactured{}.exact);
    } catch (const std::exception&) {
        rep.iterations = -1;  // failure flag
    }
    rep.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

/// Re-solve one cell with IETI and with the monolithic direct path and
/// compare the coefficient fields.
inline double oracle_difference(const RunConfig& cfg) {
    const MultiPatch mp = make_geometry(cfg);
    const int spans = cfg.spans > 0 ? cfg.spans : (1 << cfg.refine);
    const std::vector<TensorBasis> bases = analysis_bases(mp, cfg.degree, spans, cfg.interior_mult);
    const ProblemData data = problem_data_for(cfg);

    IetiOptions opt;
    opt.algorithm = cfg.algorithm;
    opt.scaling = cfg.scaling;
    opt.preconditioner = cfg.preconditioner;
    opt.tol = std::min(cfg.tol, 1e-10);
    opt.max_it = std::max(cfg.max_it, 2000);
    IetiSystem system(mp, bases, data, opt);
    const IetiSolution sol = system.solve();
    const auto reference = solve_monolithic(mp, bases, data);

    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < sol.u.size(); ++k) {
        num += (sol.u[k] - reference[k]).squaredNorm();
        den += reference[k].squaredNorm();
    }
    return std::sqrt(num / std::max(den, 1e-300));
}

/// Run every cell; afterwards the first three small cells (<= 5000 dofs)
/// are re-verified against the monolithic oracle, and a mismatch marks
/// the cell as failed.
inline std::vector<RunReport> run_benchmark(const std::vector<RunConfig>& sweep) {
    std::vector<RunReport> out;
    out.reserve(sweep.size());
    for (const RunConfig& cfg : sweep) out.push_back(run_single(cfg));

    int checked = 0;
    for (std::size_t i = 0; i < sweep.size() && checked < 3; ++i) {
        if (out[i].iterations < 0 || out[i].dofs > 5000) continue;
        ++checked;
        try {
            if (oracle_difference(sweep[i]) > 1e-8) out[i].iterations = -1;
        } catch (const std::exception&) {
            out[i].iterations = -1;
        }
    }
    return out;
}

inline constexpr const char* kCsvHeader =
    "algorithm,scaling,preconditioner,dofs,multipliers,h_over_H_inv,iterations,kappa,l2_error,seconds";

inline std::string to_csv(const std::vector<RunReport>& reports) {
    std::ostringstream os;
    os << kCsvHeader << "\n";
    os << std::setprecision(17);
    for (const RunReport& r : reports)
        os << r.algorithm << ',' << r.scaling << ',' << r.preconditioner << ',' << r.dofs << ','
           << r.multipliers << ',' << r.h_over_H_inv << ',' << r.iterations << ',' << r.kappa << ','
           << r.l2_error << ',' << r.seconds << "\n";
    return os.str();
}

inline void write_csv(const std::string& path, const std::vector<RunReport>& reports) {
    std::ofstream os(path);
    if (!os) throw Error("cannot open CSV output file: " + path);
    os << to_csv(reports);
}

// ---------------------------------------------------------------------------
// benchmark suites mirroring the reported condition number studies
// ---------------------------------------------------------------------------

inline std::vector<RunConfig> suite_table1(const std::string& geometry = "footprint") {
    std::vector<RunConfig> sweep;
    for (PrimalAlgorithm alg : {PrimalAlgorithm::A, PrimalAlgorithm::C})
        for (int spans : {9, 13, 21, 37}) {
            RunConfig base;
            base.geometry = geometry;
            base.degree = 4;
            base.spans = spans;
            base.algorithm = alg;
            base.max_it = 2000;

            RunConfig unprec = base;
            unprec.preconditioner = PreconditionerKind::None;
            sweep.push_back(unprec);
            for (Scaling s : {Scaling::Coefficient, Scaling::Stiffness}) {
                RunConfig c = base;
                c.scaling = s;
                sweep.push_back(c);
            }
        }
    return sweep;
}

inline std::vector<RunConfig> suite_table3(const std::string& geometry = "footprint") {
    std::vector<RunConfig> sweep = suite_table1(geometry);
    for (RunConfig& cfg : sweep) {
        cfg.alpha.kind = AlphaPattern::Kind::Checkerboard;
        cfg.alpha.value = 1e-3;
        cfg.alpha.high = 1e3;
    }
    return sweep;
}

inline std::vector<RunConfig> suite_table4(const std::string& geometry = "footprint") {
    std::vector<RunConfig> sweep;
    for (int degree = 2; degree <= 10; ++degree) {
        RunConfig base;
        base.geometry = geometry;
        base.degree = degree;
        base.spans = 4;
        base.interior_mult = std::max(1, degree - 1);  // C^1 smoothness per patch
        base.algorithm = PrimalAlgorithm::C;
        base.max_it = 3000;

        RunConfig unprec = base;
        unprec.preconditioner = PreconditionerKind::None;
        sweep.push_back(unprec);
        for (Scaling s : {Scaling::Coefficient, Scaling::Stiffness, Scaling::StiffnessModified}) {
            RunConfig c = base;
            c.scaling = s;
            sweep.push_back(c);
        }
    }
    return sweep;
}

inline std::vector<RunConfig> suite_convergence() {
    std::vector<RunConfig> sweep;
    for (int degree : {2, 3})
        for (int refine : {1, 2, 3, 4}) {
            RunConfig cfg;
            cfg.geometry = "grid:2,2";
            cfg.degree = degree;
            cfg.refine = refine;
            cfg.manufactured = true;
            cfg.tol = 1e-12;
            cfg.max_it = 2000;
            sweep.push_back(cfg);
        }
    return sweep;
}

}  // namespace ieti
