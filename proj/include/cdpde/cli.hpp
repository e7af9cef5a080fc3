#pragma once

// The cd-pde command line: subcommands, exit codes and the artifacts each run writes.

#include "cdpde/identities.hpp"
#include "cdpde/io.hpp"
#include "cdpde/scenario.hpp"

#include <string>
#include <utility>
#include <vector>

namespace cdpde {

enum ExitCode : int {
    kExitOk = 0,
    kExitCheckFailed = 1,
    kExitValidation = 2,
    kExitDivergence = 3,
    kExitQuadrature = 4,
    kExitIo = 5,
};

// Relative path under the output directory and the full file content.
using Artifact = std::pair<std::string, std::string>;

std::vector<Artifact> solve_artifacts(const RunResult& r, unsigned seed);
Artifact residual_artifact(const RunResult& r, unsigned seed);
Artifact identity_artifact(const IdentityReport& rep, unsigned seed);
Artifact algebra_artifact(const AlgebraReport& rep, unsigned seed);
CsvTable ledger_rows(const RunResult& r, unsigned seed);

// Writes every artifact or none: all contents are rendered before the first write.
void write_artifacts(const std::string& out_dir, const std::vector<Artifact>& files);

int run_cli(int argc, char** argv);

}  // namespace cdpde
