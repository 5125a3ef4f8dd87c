#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace han {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitData = 3,
  kExitInternal = 4,
};

// Entry point for the `han` tool: train, eval, profile, export-attn, synth.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace han
