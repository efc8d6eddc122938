#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ckalign {

enum class ErrorKind {
  storage,
  format,
  validation,
  lookup,
  size,
  degenerate_bandwidth,
  degenerate_kernel,
  degenerate_vector,
  numerical,
  unsupported_spec,
  spec,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::storage: return "storage";
    case ErrorKind::format: return "format";
    case ErrorKind::validation: return "validation";
    case ErrorKind::lookup: return "lookup";
    case ErrorKind::size: return "size";
    case ErrorKind::degenerate_bandwidth: return "degenerate-bandwidth";
    case ErrorKind::degenerate_kernel: return "degenerate-kernel";
    case ErrorKind::degenerate_vector: return "degenerate-vector";
    case ErrorKind::numerical: return "numerical";
    case ErrorKind::unsupported_spec: return "unsupported-spec";
    case ErrorKind::spec: return "spec";
  }
  return "unknown";
}

/// Every failure raised by the library carries a kind so callers (the CLI in
/// particular) can map it to an exit status without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace ckalign
