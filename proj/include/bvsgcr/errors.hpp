#pragma once
#include <stdexcept>
#include <string>

namespace bvsgcr {

// Error taxonomy; the CLI maps these onto exit codes.
struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// malformed graph input (asymmetric adjacency, bad diagonal)
struct StructuralError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

}  // namespace bvsgcr
