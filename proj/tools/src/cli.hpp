#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace eblab::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kConfigError = 2,
  kUnknownEstimator = 3,
  kNumericFailure = 4,
  kAuditFailure = 5,
};

inline constexpr const char* kCsvSchemaVersion = "1";

// Entry point shared by the executable and the tests. Reads a JSON config from
// `in` when --config is "-" (or --stdin is given); writes artifacts under --out.
int run(int argc, char** argv, std::istream& in, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace eblab::cli
