#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace tlsm {

/// Failure categories shared by every module. The CLI maps these onto
/// process exit codes.
enum class ErrorKind {
  parameter,
  geometry,
  stability,
  alignment,
  dimension,
  band,
  format,
  io,
  config,
  stale_artifact,
  numerical,
  degenerate,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

struct Point2 {
  double x = 0.0;
  double z = 0.0;
};

/// 64-bit FNV-1a. Stable across platforms; used for artifact provenance.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 14695981039346656037ull);

}  // namespace tlsm
