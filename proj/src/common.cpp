#include "tlsm/common.hpp"

namespace tlsm {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parameter: return "parameter";
    case ErrorKind::geometry: return "geometry";
    case ErrorKind::stability: return "stability";
    case ErrorKind::alignment: return "alignment";
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::band: return "band";
    case ErrorKind::format: return "format";
    case ErrorKind::io: return "io";
    case ErrorKind::config: return "config";
    case ErrorKind::stale_artifact: return "stale-artifact";
    case ErrorKind::numerical: return "numerical";
    case ErrorKind::degenerate: return "degenerate";
  }
  return "unknown";
}

void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, std::string(to_string(kind)) + " error: " + message);
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace tlsm
