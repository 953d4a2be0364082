#include "mlmosaic/parallel.hpp"

#include <stdexcept>

namespace mlmosaic {

namespace {
std::atomic<int> g_max_threads{1};
}

void set_max_threads(int n) {
  if (n < 1) throw std::invalid_argument("thread count must be >= 1");
  g_max_threads = n;
}

int max_threads() { return g_max_threads; }

}  // namespace mlmosaic
