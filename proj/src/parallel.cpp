#include "proxbridge/parallel.hpp"

#include <cstdlib>
#include <string>

namespace proxbridge {

int resolve_jobs(int requested) {
  if (const char* env = std::getenv("PROXBRIDGE_JOBS")) {
    try {
      const int v = std::stoi(env);
      if (v > 0) return v;
    } catch (const std::exception&) {
    }
  }
  return requested < 1 ? 1 : requested;
}

}  // namespace proxbridge
