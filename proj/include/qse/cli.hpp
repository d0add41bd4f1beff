#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace qse::cli {

/// Runs `qse_bench` with argv[1..]. Results go to `out`, diagnostics to `err`.
/// Returns 0 on success, 1 on runtime errors and 2 on usage errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace qse::cli
