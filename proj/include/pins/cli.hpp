#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "pins/core.hpp"
#include "pins/solver.hpp"

namespace pins::cli {

// Process exit codes.
inline constexpr int kExitConverged = 0;
inline constexpr int kExitFailure = 1;  // solver error other than usage/IO
inline constexpr int kExitUsage = 2;
inline constexpr int kExitBudget = 3;
inline constexpr int kExitStalled = 4;

int exit_code(SolveStatus status);

// 64-bit FNV-1a over the binary serialization of the instance.
std::uint64_t fingerprint(const Instance& inst);

// Label used for a run in combined CSVs, e.g. "pins@0.01".
std::string run_label(Mode mode, double eta);

// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace pins::cli
