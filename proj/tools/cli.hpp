#pragma once

#include <ostream>

namespace geoloc::cli {

enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kMissingFile = 3,
  kMalformedInput = 4,
  kBadConfig = 5,
  kBadData = 6,
  kDiverged = 7,
  kOutOfRange = 8,
};

/// Runs one `geoloc` invocation. Normal output goes to `out`, diagnostics to
/// `err`; the return value is the process exit status.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace geoloc::cli
