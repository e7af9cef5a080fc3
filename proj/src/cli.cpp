#include "cdpde/cli.hpp"

#include "cdpde/lineint.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#ifndef CDPDE_SCENARIO_DIR
#define CDPDE_SCENARIO_DIR "scenarios"
#endif

namespace cdpde {

namespace fs = std::filesystem;

namespace {

std::string num(double v) { return format_double(v); }

std::vector<std::string> time_columns(int n_time) {
    if (n_time == 1) return {"t"};
    std::vector<std::string> out;
    for (int k = 0; k < n_time; ++k) out.push_back("t" + std::to_string(k + 1));
    return out;
}

// Entry (i, j), coefficient k of an n x n matrix over A_r.
std::vector<std::string> entry_columns(const std::string& name, int rows, int cols, int dim) {
    std::vector<std::string> out;
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            for (int k = 0; k < dim; ++k)
                out.push_back(name + "_" + std::to_string(i) + "_" + std::to_string(j) + "_" + std::to_string(k));
    return out;
}

void append(std::vector<std::string>& row, const Matrix& m) {
    const auto& b = m.block();
    for (Eigen::Index c = 0; c < b.cols(); ++c)
        for (Eigen::Index k = 0; k < b.rows(); ++k) row.push_back(num(b(k, c)));
}

CsvTable kernel_table(const RunResult& r) {
    const Scenario& s = r.scenario;
    CsvTable t;
    t.columns = {"x", "y"};
    for (const auto& c : time_columns(s.n_time)) t.columns.push_back(c);
    for (const auto& c : entry_columns("K", s.n, s.n, 1 << s.level)) t.columns.push_back(c);
    for (const auto& p : kernel_lattice(r.F, s.lattice)) {
        std::vector<std::string> row;
        for (Eigen::Index k = 0; k < p.size(); ++k) row.push_back(num(p[k]));
        append(row, r.K(p));
        t.add(std::move(row));
    }
    return t;
}

CsvTable residual_table(const RunResult& r) {
    const int n_time = r.scenario.n_time;
    CsvTable t;
    t.columns = {"point", "x", "y"};
    for (const auto& c : time_columns(n_time)) t.columns.push_back(c);
    for (const char* c : {"label", "gated", "residual"}) t.columns.push_back(c);
    for (std::size_t l = 0; l < r.labels.size(); ++l)
        for (std::size_t i = 0; i < r.points.size(); ++i) {
            const auto& p = r.points[i];
            std::vector<std::string> row{std::to_string(i), num(p[0]), num(p[1])};
            for (int k = 0; k < n_time; ++k) row.push_back(num(p[2 + k]));
            row.push_back(r.labels[l]);
            row.push_back(r.gated[l] ? "1" : "0");
            row.push_back(num(r.residuals[l][i]));
            t.add(std::move(row));
        }
    return t;
}

CsvTable convergence_table(const RunResult& r) {
    CsvTable t;
    t.columns = {"step", "increment", "ratio", "norm_gain"};
    const auto& inc = r.neumann.increments;
    const auto& gain = r.norm.history;
    for (std::size_t m = 0; m < inc.size(); ++m) {
        const double ratio = m > 0 && inc[m - 1] > 0.0 ? inc[m] / inc[m - 1] : std::nan("");
        const double g = m > 0 && m - 1 < gain.size() ? gain[m - 1] : std::nan("");
        t.add({std::to_string(m), num(inc[m]), num(ratio), num(g)});
    }
    return t;
}

std::string diagnostics_text(const RunResult& r, unsigned seed) {
    std::string out = header_line(r.scenario.name, seed) + "\n";
    for (const auto& [k, v] : r.diagnostics) out += k + "=" + num(v) + "\n";
    for (std::size_t l = 0; l < r.labels.size(); ++l) {
        double sup = 0.0;
        for (double v : r.residuals[l]) sup = std::max(sup, v);
        out += "residual[" + r.labels[l] + "]=" + num(sup) + "\n";
    }
    return out;
}

CsvTable continuation_table(const RunResult& r) {
    CsvTable t;
    t.columns = {"p", "converged", "iterations", "ratio", "residual", "message"};
    for (const auto& c : r.continuation)
        t.add({num(c.p), c.converged ? "1" : "0", std::to_string(c.iterations), num(c.ratio), num(c.residual),
               c.message});
    return t;
}

CsvTable profile_table(const RunResult& r) {
    CsvTable t;
    t.columns = {"t", "x"};
    const int dim = 1 << r.scenario.level;
    for (int k = 0; k < dim; ++k) t.columns.push_back("v_" + std::to_string(k));
    t.columns.push_back("v_norm");
    for (const auto& row : kdv_profile(r, {0.0, 0.5, 1.0})) {
        std::vector<std::string> cells{num(row.t), num(row.x)};
        for (Eigen::Index k = 0; k < row.v.size(); ++k) cells.push_back(num(row.v[k]));
        cells.push_back(num(row.v.norm()));
        t.add(std::move(cells));
    }
    return t;
}

}  // namespace

CsvTable ledger_rows(const RunResult& r, unsigned seed) {
    CsvTable t;
    t.columns = {"scenario", "p", "iterations", "contraction_ratio", "max_residual", "seed"};
    t.add({r.scenario.name, num(r.p), std::to_string(r.neumann.iterations), num(r.neumann.observed_ratio),
           num(r.max_residual), std::to_string(seed)});
    return t;
}

Artifact residual_artifact(const RunResult& r, unsigned seed) {
    return {r.scenario.name + "/residual.csv", render_csv(header_line(r.scenario.name, seed), residual_table(r))};
}

std::vector<Artifact> solve_artifacts(const RunResult& r, unsigned seed) {
    const std::string& name = r.scenario.name;
    const std::string head = header_line(name, seed);
    std::vector<Artifact> out{
        {name + "/K.csv", render_csv(head, kernel_table(r))},
        residual_artifact(r, seed),
        {name + "/convergence.csv", render_csv(head, convergence_table(r))},
        {name + "/diagnostics.txt", diagnostics_text(r, seed)},
    };
    if (r.scenario.kind == ResidualKind::kdv) {
        out.emplace_back(name + "/profile.csv", render_csv(head, profile_table(r)));
        out.emplace_back(name + "/continuation.csv", render_csv(head, continuation_table(r)));
    }
    return out;
}

Artifact identity_artifact(const IdentityReport& rep, unsigned seed) {
    CsvTable t;
    t.columns = {"identity", "m", "point", "defect", "status"};
    for (const auto& row : rep.rows)
        t.add({row.identity, std::to_string(row.m), std::to_string(row.point), num(row.defect), row.status});
    return {"identity_" + rep.family + "_r" + std::to_string(rep.level) + ".csv",
            render_csv(header_line(rep.family, seed), t)};
}

Artifact algebra_artifact(const AlgebraReport& rep, unsigned seed) {
    CsvTable t;
    t.columns = {"law", "expected", "max_defect", "tol", "passed", "witness"};
    for (const auto& l : rep.laws)
        t.add({l.law, l.expected ? "holds" : "fails", num(l.max_defect), num(l.tol), l.passed ? "1" : "0",
               l.witness});
    const std::string name = "algebra_r" + std::to_string(rep.level);
    return {name + ".csv", render_csv(header_line(name, seed), t)};
}

void write_artifacts(const std::string& out_dir, const std::vector<Artifact>& files) {
    // Stage everything first so that a failure leaves no half-written set behind.
    std::vector<std::pair<fs::path, fs::path>> staged;
    auto discard = [&] {
        std::error_code ec;
        for (const auto& [tmp, dst] : staged) fs::remove(tmp, ec);
    };
    try {
        for (const auto& [rel, content] : files) {
            const fs::path dst = fs::path(out_dir) / rel;
            std::error_code ec;
            fs::create_directories(dst.parent_path(), ec);
            if (ec) throw IoError("io: cannot create " + dst.parent_path().string() + ": " + ec.message());
            const fs::path tmp = dst.string() + ".tmp";
            staged.emplace_back(tmp, dst);
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            out << content;
            out.flush();
            if (!out) throw IoError("io: cannot write " + tmp.string());
        }
        for (const auto& [tmp, dst] : staged) {
            std::error_code ec;
            fs::rename(tmp, dst, ec);
            if (ec) throw IoError("io: cannot move " + tmp.string() + " into place: " + ec.message());
        }
    } catch (...) {
        discard();
        throw;
    }
}

namespace {

struct Globals {
    std::string out = "out";
    int threads = 1;
    unsigned seed = 1;
    bool verbose = false;
};

struct SolveArgs {
    std::string scenario;
    std::optional<double> p;
    std::optional<int> lattice_points;
    double tol = 1e-10;
    bool no_continuation = false;
};

std::string resolve_scenario(const std::string& arg, const std::string& catalog) {
    if (fs::exists(arg)) return arg;
    const fs::path named = fs::path(catalog) / (arg + ".yaml");
    if (fs::exists(named)) return named.string();
    throw IoError("scenario: no file " + arg + " and no catalog entry " + named.string());
}

RunResult run(const SolveArgs& a, const Globals& g, const std::string& catalog) {
    const Scenario s = load_scenario(resolve_scenario(a.scenario, catalog));
    RunOptions opt;
    opt.p = a.p;
    opt.lattice_points = a.lattice_points;
    opt.tol = a.tol;
    opt.threads = g.threads;
    opt.seed = g.seed;
    opt.continuation = !a.no_continuation;
    return run_scenario(s, opt);
}

void print_run(const RunResult& r, bool verbose) {
    std::cout << describe(r.scenario) << ": " << r.neumann.iterations << " iterations, ratio "
              << num(r.neumann.observed_ratio) << ", max residual " << num(r.max_residual) << " (ceiling "
              << num(r.scenario.ceiling) << ")\n";
    for (const auto& c : r.continuation)
        std::cout << "  p = " << num(c.p) << ": " << (c.converged ? "converged" : "diverged") << ", residual "
                  << num(c.residual) << "\n";
    if (verbose)
        for (const auto& [k, v] : r.diagnostics) std::cout << "  " << k << " = " << num(v) << "\n";
}

void add_solve_options(CLI::App* cmd, SolveArgs& a) {
    cmd->add_option("scenario", a.scenario, "scenario file or catalog name")->required();
    cmd->add_option("--p", a.p, "coupling override");
    cmd->add_option("--lattice-points", a.lattice_points, "points per lattice axis")->check(CLI::Range(2, 1025));
    cmd->add_option("--tol", a.tol, "Neumann increment tolerance")->check(CLI::PositiveNumber);
}

}  // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"Cayley-Dickson dressing: algebra and identity checks, scenario solves"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--out", g.out, "output directory")->capture_default_str();
    app.add_option("--threads", g.threads, "worker threads for residual evaluation")
        ->envname("CD_PDE_THREADS")
        ->check(CLI::Range(1, 256));
    app.add_option("--seed", g.seed, "random seed, recorded in every output")->capture_default_str();
    app.add_flag("-v,--verbose", g.verbose, "print diagnostics");

    int level = 2, pairs = 1000;
    auto* alg = app.add_subcommand("algebra-check", "algebra laws over random pairs");
    alg->add_option("--level,-r", level, "algebra level r")->required()->check(CLI::Range(2, 4));
    alg->add_option("--pairs", pairs)->check(CLI::Range(1, 1000000))->capture_default_str();

    std::string family;
    int m = 1, id_pairs = 1;
    double id_tol = 1e-5;
    bool zero = false;
    auto* idc = app.add_subcommand("identity-check", "commutator identities against independent evaluations");
    idc->add_option("--family", family)->required()->check(CLI::IsMember({"prop2_5", "cor2_6", "lemma3_5", "prop3_15"}));
    idc->add_option("--m", m, "largest order")->check(CLI::Range(1, 6))->capture_default_str();
    idc->add_option("--level,-r", level, "algebra level r")->check(CLI::Range(2, 4))->capture_default_str();
    idc->add_option("--pairs", id_pairs, "random field pairs per order")->check(CLI::Range(1, 1000));
    idc->add_option("--tol", id_tol, "defect bound for the exit status")->capture_default_str();
    idc->add_flag("--zero-fields", zero, "use zero fields");

    SolveArgs sa;
    auto* solve = app.add_subcommand("solve", "solve a scenario and write its artifacts");
    add_solve_options(solve, sa);
    solve->add_flag("--no-continuation", sa.no_continuation, "skip the KdV continuation ladder");

    SolveArgs ra;
    auto* residual = app.add_subcommand("residual", "solve a scenario and write only the residual table");
    add_solve_options(residual, ra);

    std::string catalog = CDPDE_SCENARIO_DIR;
    auto* cat = app.add_subcommand("catalog", "scenario catalog");
    cat->require_subcommand(1);
    cat->add_option("--dir", catalog, "catalog directory")->capture_default_str();
    auto* list = cat->add_subcommand("list", "list catalog scenarios");
    for (auto* cmd : {solve, residual}) cmd->add_option("--catalog", catalog, "catalog directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (*alg) {
            const AlgebraReport rep = algebra_check(level, pairs, g.seed);
            for (const auto& l : rep.laws) {
                std::cout << (l.passed ? "ok    " : "FAIL  ") << l.law << " (" << (l.expected ? "holds" : "fails")
                          << " at r = " << level << "): max defect " << num(l.max_defect) << "\n";
                if (!l.witness.empty()) std::cout << "      witness: " << l.witness << "\n";
            }
            write_artifacts(g.out, {algebra_artifact(rep, g.seed)});
            return rep.passed() ? kExitOk : kExitCheckFailed;
        }
        if (*idc) {
            const IdentityReport rep = identity_check(family, m, level, g.seed, id_pairs, zero);
            for (const auto& row : rep.rows)
                if (g.verbose || row.status != "ok")
                    std::cout << row.identity << " m=" << row.m << " pair=" << row.point << ": " << num(row.defect)
                              << (row.status == "ok" ? "" : "  [" + row.status + "]") << "\n";
            std::cout << family << " r = " << level << ", m <= " << m << ": max defect " << num(rep.max_defect())
                      << "\n";
            write_artifacts(g.out, {identity_artifact(rep, g.seed)});
            if (rep.quadrature_failed()) return kExitQuadrature;
            return rep.max_defect() <= id_tol ? kExitOk : kExitCheckFailed;
        }
        if (*solve) {
            const RunResult r = run(sa, g, catalog);
            // Render everything before touching the output directory.
            const auto files = solve_artifacts(r, g.seed);
            write_artifacts(g.out, files);
            append_csv((fs::path(g.out) / "run_ledger.csv").string(), header_line("run_ledger", g.seed),
                       ledger_rows(r, g.seed));
            print_run(r, g.verbose);
            return r.max_residual <= r.scenario.ceiling ? kExitOk : kExitCheckFailed;
        }
        if (*residual) {
            ra.no_continuation = true;
            const RunResult r = run(ra, g, catalog);
            write_artifacts(g.out, {residual_artifact(r, g.seed)});
            for (std::size_t l = 0; l < r.labels.size(); ++l) {
                const double sup = *std::max_element(r.residuals[l].begin(), r.residuals[l].end());
                std::cout << (r.gated[l] ? "gated  " : "diag   ") << r.labels[l] << ": " << num(sup) << "\n";
            }
            return r.max_residual <= r.scenario.ceiling ? kExitOk : kExitCheckFailed;
        }
        if (*list) {
            std::vector<fs::path> files;
            for (const auto& e : fs::directory_iterator(catalog))
                if (e.path().extension() == ".yaml") files.push_back(e.path());
            std::sort(files.begin(), files.end());
            for (const auto& f : files) {
                const Scenario s = load_scenario(f.string());
                std::cout << s.name << "\t" << kind_name(s.kind) << "\tr=" << s.level << "\tp=" << num(s.p) << "\t"
                          << s.title << "\n";
            }
            return kExitOk;
        }
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const QuadratureError& e) {
        std::cerr << "quadrature: " << e.what() << "\n";
        return kExitQuadrature;
    } catch (const IoError& e) {
        std::cerr << e.what() << "\n";
        return kExitIo;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "io: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::invalid_argument& e) {
        std::cerr << "validation: " << e.what() << "\n";
        return kExitValidation;
    }
    return kExitOk;
}

}  // namespace cdpde
