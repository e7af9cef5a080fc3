#include "cdpde/cli.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <map>
#include <set>

using namespace cdpde;
namespace fs = std::filesystem;

namespace {

int cli(std::vector<std::string> args) {
    args.insert(args.begin(), "cd-pde");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("cdpde_cli_" + name);
    fs::remove_all(p);
    return p;
}

std::map<std::string, std::string> files_under(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = read_file(e.path().string());
    return out;
}

}  // namespace

TEST(Cli, SolveWritesArtifactsWithHeaders) {
    const fs::path out = scratch("solve");
    ASSERT_EQ(cli({"--out", out.string(), "--seed", "5", "solve", "kdv_4_2"}), kExitOk);
    const auto files = files_under(out);
    for (const char* name : {"kdv_4_2/K.csv", "kdv_4_2/residual.csv", "kdv_4_2/convergence.csv",
                             "kdv_4_2/diagnostics.txt", "kdv_4_2/profile.csv", "kdv_4_2/continuation.csv",
                             "run_ledger.csv"})
        ASSERT_TRUE(files.count(name)) << name;
    for (const auto& [name, text] : files) {
        const std::string scenario = name == "run_ledger.csv" ? "run_ledger" : "kdv_4_2";
        EXPECT_EQ(text.rfind(header_line(scenario, 5), 0), 0u) << name;
    }

    const CsvTable residual = parse_csv(files.at("kdv_4_2/residual.csv"));
    double worst = 0.0;
    std::size_t gated = 0;
    for (const auto& row : residual.rows)
        if (row[5] == "1") {
            ++gated;
            worst = std::max(worst, std::stod(row[6]));
        }
    EXPECT_EQ(gated, 3u * 25u);
    EXPECT_LE(worst, 1e-4);

    const CsvTable profile = parse_csv(files.at("kdv_4_2/profile.csv"));
    std::set<std::string> times;
    for (const auto& row : profile.rows) times.insert(row[0]);
    EXPECT_EQ(times.size(), 3u);

    const CsvTable conv = parse_csv(files.at("kdv_4_2/convergence.csv"));
    for (std::size_t k = 1; k < conv.rows.size(); ++k)
        EXPECT_LT(std::stod(conv.rows[k][1]), std::stod(conv.rows[k - 1][1]));

    ASSERT_EQ(cli({"--out", out.string(), "--seed", "5", "solve", "ex3_9"}), kExitOk);
    EXPECT_EQ(parse_csv(read_file((out / "run_ledger.csv").string())).rows.size(), 2u);
    fs::remove_all(out);
}

TEST(Cli, RerunsAreByteIdentical) {
    const fs::path a = scratch("det_a"), b = scratch("det_b");
    for (const char* name : {"kdv_4_2", "ex3_7", "ex3_11_multiplier"}) {
        ASSERT_EQ(cli({"--out", a.string(), "--threads", "1", "solve", name}), kExitOk);
        ASSERT_EQ(cli({"--out", b.string(), "--threads", "4", "solve", name}), kExitOk);
    }
    EXPECT_EQ(files_under(a), files_under(b));
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST(Cli, FailuresMapToExitCodesAndWriteNothing) {
    const fs::path out = scratch("fail");
    const fs::path bad = fs::temp_directory_path() / "cdpde_cli_bad.yaml";
    write_atomic(bad.string(), "name: broken\nlevel: 9\n");
    EXPECT_EQ(cli({"--out", out.string(), "solve", bad.string()}), kExitValidation);
    EXPECT_EQ(cli({"--out", out.string(), "solve", "kdv_4_2", "--p", "40", "--no-continuation"}), kExitDivergence);
    EXPECT_EQ(cli({"--out", out.string(), "solve", "no_such_scenario"}), kExitIo);
    EXPECT_EQ(cli({"--out", out.string(), "algebra-check", "--level", "5"}), kExitValidation);
    EXPECT_EQ(cli({"--out", out.string(), "identity-check", "--family", "thm9"}), kExitValidation);
    EXPECT_EQ(cli({"--out", out.string(), "frobnicate"}), kExitValidation);
    EXPECT_FALSE(fs::exists(out));

    // The output directory is a regular file.
    EXPECT_EQ(cli({"--out", bad.string(), "solve", "ex3_9"}), kExitIo);
    fs::remove(bad);
}

TEST(Cli, AlgebraAndIdentityChecks) {
    const fs::path out = scratch("checks");
    EXPECT_EQ(cli({"--out", out.string(), "algebra-check", "--level", "4", "--pairs", "200"}), kExitOk);
    const CsvTable laws = parse_csv(read_file((out / "algebra_r4.csv").string()));
    bool witnessed = false;
    for (const auto& row : laws.rows)
        if (row[0] == "norm multiplicativity") witnessed = row[1] == "fails" && !row[5].empty();
    EXPECT_TRUE(witnessed);

    EXPECT_EQ(cli({"--out", out.string(), "identity-check", "--family", "cor2_6", "--m", "3", "--zero-fields"}),
              kExitOk);
    const CsvTable zero = parse_csv(read_file((out / "identity_cor2_6_r2.csv").string()));
    ASSERT_FALSE(zero.rows.empty());
    for (const auto& row : zero.rows) EXPECT_EQ(row[3], "0");

    EXPECT_EQ(cli({"--out", out.string(), "identity-check", "--family", "prop2_5", "--m", "1", "--level", "2"}),
              kExitOk);
    fs::remove_all(out);
}

TEST(Cli, ZeroCouplingOverride) {
    const fs::path out = scratch("p0");
    ASSERT_EQ(cli({"--out", out.string(), "solve", "ex3_8", "--p", "0"}), kExitOk);
    const auto text = read_file((out / "ex3_8" / "diagnostics.txt").string());
    EXPECT_NE(text.find("iterations=0\n"), std::string::npos);
    fs::remove_all(out);
}
