#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace casr {

/// Runs one `casr` invocation. args excludes the program name. Returns 0 on
/// success, 1 on a usage error and 2 when processing fails. Machine output
/// goes to out, diagnostics to err.
int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int cli_main(int argc, char** argv);

}  // namespace casr
