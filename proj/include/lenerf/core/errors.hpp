#pragma once

#include <stdexcept>
#include <string>

namespace lenerf {

// Exit codes used by the command-line tool map onto these categories.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when a computation produces NaN/Inf. `op()` names the offending operation.
class NumericError : public std::runtime_error {
 public:
  NumericError(std::string op, const std::string& detail)
      : std::runtime_error("non-finite value in '" + op + "': " + detail), op_(std::move(op)) {}
  const std::string& op() const noexcept { return op_; }

 private:
  std::string op_;
};

struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

/// Frozen parameters were modified during edit training.
struct FrozenParameterError : std::logic_error {
  using std::logic_error::logic_error;
};

}  // namespace lenerf

namespace lenerf {

/// Optimisation diverged; the model was rolled back to its last good state.
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace lenerf
