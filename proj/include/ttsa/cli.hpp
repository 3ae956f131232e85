#pragma once

#include <ostream>

namespace ttsa {

/// Entry point of the `ttsa` tool. Exit codes: 0 success, 1 usage or parse
/// error, 2 infeasible plan, failed check or failed computation.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ttsa
