#pragma once

#include <stdexcept>
#include <string>

namespace ivmqr {

enum class ErrorKind
{
  invalid_resolution,
  domain_violation,
  boundary_derivative,
  invalid_cycle,
  no_preimage,
  size_mismatch,
  invalid_model,
  unsupported_coupling,
  insufficient_data,
  invalid_bandwidth,
  dimension_error,
  invalid_b,
  singular_matrix,
  no_directions,
  invalid_start,
  invalid_config,
  io_error
};

// Stable kebab-case name used in reports and diagnostics.
const char* to_string(ErrorKind kind);

class Error : public std::runtime_error
{
public:
  Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what)
    , kind_(kind)
  {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind)
{
  switch (kind) {
    case ErrorKind::invalid_resolution: return "invalid-resolution";
    case ErrorKind::domain_violation: return "domain-violation";
    case ErrorKind::boundary_derivative: return "boundary-derivative-warning";
    case ErrorKind::invalid_cycle: return "invalid-cycle";
    case ErrorKind::no_preimage: return "no-preimage";
    case ErrorKind::size_mismatch: return "size-mismatch";
    case ErrorKind::invalid_model: return "invalid-model";
    case ErrorKind::unsupported_coupling: return "unsupported-coupling";
    case ErrorKind::insufficient_data: return "insufficient-data";
    case ErrorKind::invalid_bandwidth: return "invalid-bandwidth";
    case ErrorKind::dimension_error: return "dimension-error";
    case ErrorKind::invalid_b: return "invalid-b";
    case ErrorKind::singular_matrix: return "singular-matrix";
    case ErrorKind::no_directions: return "no-directions";
    case ErrorKind::invalid_start: return "invalid-start";
    case ErrorKind::invalid_config: return "invalid-config";
    case ErrorKind::io_error: return "io-error";
  }
  return "unknown";
}

} // namespace ivmqr
