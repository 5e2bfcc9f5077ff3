#pragma once

#include <stdexcept>
#include <string>

namespace optstop {

/// Violated precondition on a caller-supplied argument (dimensions, ranges, config values).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A computation would exceed its tractability guard (e.g. exact DP enumeration size).
class ResourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A mathematical quantity does not exist for the requested parameters.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw InputError(what);
}

}  // namespace optstop
