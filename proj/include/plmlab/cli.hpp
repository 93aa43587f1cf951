#pragma once

#include <iosfwd>

namespace plmlab {

// Full command-line surface; returns the process exit code (0 success,
// 2 usage error, 1 runtime error). Output streams are injectable for
// tests.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace plmlab
