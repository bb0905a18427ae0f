#include "lkemu/parallel.hpp"

#include <cstdlib>
#include <string>

namespace lkemu {

int default_workers() {
  if (const char* env = std::getenv("LKEMU_WORKERS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return n;
    } catch (const std::exception&) {
    }
  }
  return 1;
}

}  // namespace lkemu
