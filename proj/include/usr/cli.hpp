#pragma once

#include <string>
#include <vector>

namespace usr::cli {

// Exit codes: 0 success, 1 usage error, 2 data/file error, 3 numeric failure.
enum ExitCode : int {
    kOk = 0,
    kUsageError = 1,
    kDataError = 2,
    kNumericError = 3,
};

int run(const std::vector<std::string>& args);  // args excludes the program name
int run(int argc, const char* const* argv);

}  // namespace usr::cli
