#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ieti/errors.hpp"
#include "ieti/geometry.hpp"
#include "ieti/splines.hpp"

namespace ieti {

/**
 * Load a multipatch domain from the JSON geometry format:
 *
 * {"patches": [{"degree": [p1, p2], "knots": [[...], [...]],
 *               "control_points": [[x, y], ...], "alpha": 1.0,
 *               "sides": ["dirichlet", "neumann", "interface", "interface"]}],
 *  "interfaces": [{"patch_a": 0, "side_a": 1, "patch_b": 1, "side_b": 0,
 *                  "reversed": false}]}
 *
 * Control points are listed in the lexicographic basis order with the
 * first parameter direction running fastest; the side order is xi1=0,
 * xi1=1, xi2=0, xi2=1.
 */
inline MultiPatch load_multipatch_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open geometry file: " + path);
    nlohmann::json j;
    is >> j;

    MultiPatch mp;
    for (const auto& jp : j.at("patches")) {
        const auto degree = jp.at("degree").get<std::vector<int>>();
        const auto knots = jp.at("knots").get<std::vector<std::vector<double>>>();
        if (degree.size() != 2 || knots.size() != 2)
            throw Error("patch must declare two degrees and two knot vectors");
        TensorBasis basis(KnotVector(knots[0], degree[0]), KnotVector(knots[1], degree[1]));

        const auto cps = jp.at("control_points").get<std::vector<std::vector<double>>>();
        if (static_cast<int>(cps.size()) != basis.total())
            throw Error("control point count does not match the basis dimension");
        Eigen::MatrixX2d cp(cps.size(), 2);
        for (std::size_t i = 0; i < cps.size(); ++i) {
            if (cps[i].size() != 2) throw Error("control points must be 2D");
            cp(static_cast<Eigen::Index>(i), 0) = cps[i][0];
            cp(static_cast<Eigen::Index>(i), 1) = cps[i][1];
        }

        Patch patch{GeometryMap(std::move(basis), std::move(cp)), jp.value("alpha", 1.0), {}};
        if (patch.alpha <= 0.0) throw Error("alpha must be positive");
        const auto sides = jp.at("sides").get<std::vector<std::string>>();
        if (sides.size() != 4) throw Error("each patch needs four side tags");
        for (int s = 0; s < 4; ++s) {
            const std::string& tag = sides[static_cast<std::size_t>(s)];
            if (tag == "dirichlet")
                patch.sides[static_cast<std::size_t>(s)] = BoundaryKind::Dirichlet;
            else if (tag == "neumann")
                patch.sides[static_cast<std::size_t>(s)] = BoundaryKind::Neumann;
            else if (tag == "interface")
                patch.sides[static_cast<std::size_t>(s)] = BoundaryKind::Interface;
            else
                throw Error("unknown side tag: " + tag);
        }
        mp.patches.push_back(std::move(patch));
    }

    for (const auto& ji : j.value("interfaces", nlohmann::json::array())) {
        Interface itf;
        itf.patch_a = ji.at("patch_a").get<int>();
        itf.side_a = ji.at("side_a").get<int>();
        itf.patch_b = ji.at("patch_b").get<int>();
        itf.side_b = ji.at("side_b").get<int>();
        itf.reversed = ji.value("reversed", false);
        const int np = mp.num_patches();
        if (itf.patch_a < 0 || itf.patch_a >= np || itf.patch_b < 0 || itf.patch_b >= np ||
            itf.side_a < 0 || itf.side_a > 3 || itf.side_b < 0 || itf.side_b > 3)
            throw Error("interface refers to an unknown patch or side");
        mp.interfaces.push_back(itf);
    }
    return mp;
}

/// Inverse of load_multipatch_json; handy for exporting generated domains.
inline void save_multipatch_json(const std::string& path, const MultiPatch& mp) {
    nlohmann::json j;
    j["patches"] = nlohmann::json::array();
    for (const Patch& p : mp.patches) {
        nlohmann::json jp;
        jp["degree"] = {p.map.basis().direction(0).degree(), p.map.basis().direction(1).degree()};
        jp["knots"] = {p.map.basis().direction(0).knots(), p.map.basis().direction(1).knots()};
        auto cps = nlohmann::json::array();
        for (Eigen::Index i = 0; i < p.map.control_points().rows(); ++i)
            cps.push_back({p.map.control_points()(i, 0), p.map.control_points()(i, 1)});
        jp["control_points"] = std::move(cps);
        jp["alpha"] = p.alpha;
        jp["sides"] = {to_string(p.sides[0]), to_string(p.sides[1]), to_string(p.sides[2]),
                       to_string(p.sides[3])};
        j["patches"].push_back(std::move(jp));
    }
    j["interfaces"] = nlohmann::json::array();
    for (const Interface& itf : mp.interfaces)
        j["interfaces"].push_back({{"patch_a", itf.patch_a},
                                   {"side_a", itf.side_a},
                                   {"patch_b", itf.patch_b},
                                   {"side_b", itf.side_b},
                                   {"reversed", itf.reversed}});
    std::ofstream os(path);
    if (!os) throw Error("cannot open geometry file for writing: " + path);
    os << j.dump(2) << "\n";
}

}  // namespace ieti
