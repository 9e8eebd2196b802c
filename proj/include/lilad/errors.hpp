#pragma once

#include <stdexcept>
#include <string>

namespace lilad {

// Base class for everything thrown on purpose by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad command-line usage or incompatible option combinations.  CLI exit 1.
struct UsageError : Error {
  using Error::Error;
};

// Unreadable / malformed / truncated files, bad magic, version mismatch,
// sampling that cannot produce physical parameters.  CLI exit 2.
struct DataError : Error {
  using Error::Error;
};
struct FormatError : DataError {
  using DataError::DataError;
};
struct DistributionError : DataError {
  using DataError::DataError;
};

// API contract violations surfaced through data files (e.g. checkpoint whose
// dimensions do not match the requested architecture).  CLI exit 2.
struct ContractError : Error {
  using Error::Error;
};
struct DimensionError : ContractError {
  using ContractError::ContractError;
};
struct ParameterError : ContractError {
  using ContractError::ContractError;
};

// Numerical failures at runtime.  CLI exit 3.
struct NumericError : Error {
  using Error::Error;
};
struct TrainingError : NumericError {
  using NumericError::NumericError;
};
struct SingularityError : NumericError {
  using NumericError::NumericError;
};
struct IntegrationError : NumericError {
  using NumericError::NumericError;
};
struct EnforcementError : NumericError {
  using NumericError::NumericError;
};
struct SolverError : NumericError {
  using NumericError::NumericError;
};

}  // namespace lilad
