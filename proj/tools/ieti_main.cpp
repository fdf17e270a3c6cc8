#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ieti/driver.hpp"

namespace {

ieti::AlphaPattern parse_alpha(const std::string& spec) {
    ieti::AlphaPattern out;
    double v = 0.0, lo = 0.0, hi = 0.0;
    if (std::sscanf(spec.c_str(), "constant:%lf", &v) == 1) {
        out.kind = ieti::AlphaPattern::Kind::Constant;
        out.value = v;
    } else if (std::sscanf(spec.c_str(), "checkerboard:%lf,%lf", &lo, &hi) == 2) {
        out.kind = ieti::AlphaPattern::Kind::Checkerboard;
        out.value = lo;
        out.high = hi;
    } else {
        throw CLI::ValidationError("--alpha", "expected constant:V or checkerboard:LO,HI");
    }
    if (out.value <= 0.0 || (out.kind == ieti::AlphaPattern::Kind::Checkerboard && out.high <= 0.0))
        throw CLI::ValidationError("--alpha", "diffusion coefficient must be positive");
    return out;
}

void print_report(const ieti::RunReport& rep) {
    std::cout << "dofs=" << rep.dofs << " multipliers=" << rep.multipliers
              << " H/h=" << rep.h_over_H_inv << " iterations=" << rep.iterations
              << " kappa=" << rep.kappa;
    if (!std::isnan(rep.l2_error)) std::cout << " l2_error=" << rep.l2_error;
    std::cout << " seconds=" << rep.seconds << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"IETI-DP solver for multipatch isogeometric diffusion problems"};
    app.require_subcommand(1);

    // --- solve -------------------------------------------------------------
    auto* solve = app.add_subcommand("solve", "solve one configuration and report kappa/iterations");
    ieti::RunConfig cfg;
    std::string alpha_spec = "constant:1";
    std::string algorithm = "C";
    std::string precond = "scaled-dirichlet";
    std::string scaling = "coefficient";
    std::string out_csv, history_path;
    solve->add_option("--geometry", cfg.geometry, "geometry: <file.json>|grid:NX,NY|footprint");
    solve->add_option("--degree", cfg.degree, "B-spline degree of the analysis space")->check(CLI::Range(1, 12));
    solve->add_option("--refine", cfg.refine, "dyadic refinements; 2^R knot spans per patch side")
        ->check(CLI::Range(0, 12));
    solve->add_option("--algorithm", algorithm, "primal variables: A (vertices) or C (vertices+edge averages)")
        ->check(CLI::IsMember({"A", "C"}));
    solve->add_option("--precond", precond, "preconditioner for the PCG iteration")
        ->check(CLI::IsMember({"none", "dirichlet", "scaled-dirichlet", "bddc"}));
    solve->add_option("--scaling", scaling, "delta^dagger weights")
        ->check(CLI::IsMember({"multiplicity", "coefficient", "stiffness", "stiffness-modified"}));
    solve->add_option("--alpha", alpha_spec, "diffusion coefficient: constant:V or checkerboard:LO,HI");
    solve->add_option("--tol", cfg.tol, "relative residual reduction for PCG")->check(CLI::PositiveNumber);
    solve->add_option("--max-it", cfg.max_it, "PCG iteration cap")->check(CLI::PositiveNumber);
    solve->add_option("--out", out_csv, "write the run report as CSV");
    solve->add_option("--history", history_path, "dump the PCG residual history as JSON");

    // --- bench -------------------------------------------------------------
    auto* bench = app.add_subcommand("bench", "run a benchmark suite and write CSV reports");
    std::string suite = "table1";
    std::string out_dir = ".";
    std::string bench_geometry = "footprint";
    bench->add_option("--suite", suite, "table1|table3|table4|convergence")
        ->check(CLI::IsMember({"table1", "table3", "table4", "convergence"}));
    bench->add_option("--out", out_dir, "output directory for <suite>.csv");
    bench->add_option("--geometry", bench_geometry, "geometry for the table suites (footprint or grid:NX,NY)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (solve->parsed()) {
            cfg.alpha = parse_alpha(alpha_spec);
            cfg.algorithm = algorithm == "A" ? ieti::PrimalAlgorithm::A : ieti::PrimalAlgorithm::C;
            const std::map<std::string, ieti::PreconditionerKind> pmap{
                {"none", ieti::PreconditionerKind::None},
                {"dirichlet", ieti::PreconditionerKind::Dirichlet},
                {"scaled-dirichlet", ieti::PreconditionerKind::ScaledDirichlet},
                {"bddc", ieti::PreconditionerKind::Bddc}};
            const std::map<std::string, ieti::Scaling> smap{
                {"multiplicity", ieti::Scaling::Multiplicity},
                {"coefficient", ieti::Scaling::Coefficient},
                {"stiffness", ieti::Scaling::Stiffness},
                {"stiffness-modified", ieti::Scaling::StiffnessModified}};
            cfg.preconditioner = pmap.at(precond);
            cfg.scaling = smap.at(scaling);

            const ieti::RunReport rep = ieti::run_single(cfg);
            print_report(rep);
            if (!out_csv.empty()) ieti::write_csv(out_csv, {rep});
            if (!history_path.empty()) {
                nlohmann::json j{{"iterations", rep.iterations},
                                 {"kappa", rep.kappa},
                                 {"residuals", rep.residuals}};
                std::ofstream os(history_path);
                os << j.dump(2) << "\n";
            }
            if (rep.iterations < 0) {
                std::cerr << "solver error: run failed\n";
                return 1;
            }
        } else {
            std::vector<ieti::RunConfig> sweep;
            if (suite == "table1")
                sweep = ieti::suite_table1(bench_geometry);
            else if (suite == "table3")
                sweep = ieti::suite_table3(bench_geometry);
            else if (suite == "table4")
                sweep = ieti::suite_table4(bench_geometry);
            else
                sweep = ieti::suite_convergence();

            std::vector<ieti::RunReport> reports;
            for (const auto& c : sweep) {
                reports.push_back(ieti::run_single(c));
                const auto& rep = reports.back();
                std::cout << rep.algorithm << "/" << rep.scaling << "/" << rep.preconditioner << "  ";
                print_report(rep);
            }
            std::filesystem::create_directories(out_dir);
            ieti::write_csv((std::filesystem::path(out_dir) / (suite + ".csv")).string(), reports);
            for (const auto& rep : reports)
                if (rep.iterations < 0) {
                    std::cerr << "solver error: at least one sweep cell failed\n";
                    return 1;
                }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
