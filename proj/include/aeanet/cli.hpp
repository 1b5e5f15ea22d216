#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace aeanet {

// Exit codes: 0 success, 1 validation failure, 2 usage error, 3 I/O error.
struct CommandOutcome {
  int exit_code = 0;
  std::string summary;
  std::vector<std::string> artifacts;
};

// args excludes the program name. Subcommands: gen-data, train, predict, eval,
// check, ablate, sweep, heatmap.
CommandOutcome dispatch(const std::vector<std::string>& args, std::ostream& out,
                        std::ostream& err);

}  // namespace aeanet
