#pragma once

#include <stdexcept>
#include <string>

namespace opsquare {

// Invalid user-supplied configuration (topology dimensions, scenario fields).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A data-plane or control-plane contract was broken by the simulator itself.
// These indicate bugs, never traffic conditions.
class ProtocolViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A LUT update referenced a port or destination that does not exist.
class InvalidPortError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Statistics were recorded against a slice nobody registered.
class AccountingError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace opsquare
