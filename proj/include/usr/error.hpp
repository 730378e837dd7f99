#pragma once

#include <stdexcept>
#include <string>

namespace usr {

// Error taxonomy shared by all modules. The CLI maps these onto exit codes:
// ParameterError -> 1 (usage), DataError/DimensionError -> 2 (data/file),
// NumericError -> 3 (non-finite values, failed gradient checks).
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionError : Error {
    using Error::Error;
};

struct ParameterError : Error {
    using Error::Error;
};

struct DataError : Error {
    using Error::Error;
};

struct NumericError : Error {
    using Error::Error;
};

}  // namespace usr
