#pragma once

#include <iosfwd>

#include "wht/error.hpp"

namespace wht::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kIo = 2, kValidation = 3 };

/// Version of the --json output layout.
inline constexpr int kJsonSchemaVersion = 1;

ExitCode exit_code_for(Errc code) noexcept;

/// Entry point shared by the `wht` binary and the tests. Results go to
/// `out`, diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace wht::cli
