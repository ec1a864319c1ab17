#pragma once

#include <string>
#include <vector>

namespace zpd::cli {

/// Operator command surface; returns the process exit status.
/// Subcommands: ingest, index, mine, seed, refine, calibrate, pipeline,
/// export-rft, exam-build, evaluate, report.
int run(int argc, char** argv);
int run(const std::vector<std::string>& args);  // args without the program name

}  // namespace zpd::cli
