#pragma once

namespace ccd::cli {

// Full command-line surface; returns the process exit code
// (0 success, 1 usage error, 2 runtime failure).
int dispatch(int argc, const char* const* argv);

}  // namespace ccd::cli
