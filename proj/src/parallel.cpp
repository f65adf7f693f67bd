#include "dynorank/parallel.hpp"

#include <cstdlib>
#include <string>

#include "dynorank/errors.hpp"

namespace dynorank {

std::size_t resolve_threads(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("DYNORANK_THREADS"); env && *env) {
    std::size_t pos = 0;
    long long v = 0;
    try {
      v = std::stoll(env, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != std::string(env).size() || v < 1) {
      throw ValidationError(std::string("DYNORANK_THREADS must be a positive integer, got '") + env + "'");
    }
    return static_cast<std::size_t>(v);
  }
  return 1;
}

}  // namespace dynorank
