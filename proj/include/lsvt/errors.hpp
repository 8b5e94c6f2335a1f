#pragma once

#include <stdexcept>
#include <string>

namespace lsvt {

// Operand shapes are incompatible with the requested operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A numeric argument lies outside the operation's domain (e.g. temperature <= 0).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A caller violated an API precondition (non-scalar loss, empty view set, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed or truncated file contents.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration key or value.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Emits a one-line warning on stderr. Kept as a single choke point so tests can silence it.
void warn(const std::string& message);
void set_warnings_enabled(bool enabled);

}  // namespace lsvt
