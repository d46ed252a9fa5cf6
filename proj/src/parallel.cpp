#include "safedom/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace safedom {

int worker_count() {
  if (const char* env = std::getenv("SDTRAIN_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
    return 1;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void for_each_chunk(
    std::size_t n, std::size_t chunk_size,
    const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  if (chunk_size == 0) chunk_size = 1;
  const std::size_t n_chunks = (n + chunk_size - 1) / chunk_size;
  const int workers = worker_count();
  if (workers <= 1 || n_chunks <= 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) {
      const std::size_t begin = c * chunk_size;
      fn(c, begin, std::min(begin + chunk_size, n));
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t c = next.fetch_add(1); c < n_chunks;
         c = next.fetch_add(1)) {
      const std::size_t begin = c * chunk_size;
      fn(c, begin, std::min(begin + chunk_size, n));
    }
  };
  const std::size_t n_threads =
      std::min<std::size_t>(static_cast<std::size_t>(workers), n_chunks);
  std::vector<std::thread> pool;
  pool.reserve(n_threads - 1);
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(work);
  work();
  for (std::thread& t : pool) t.join();
}

}  // namespace safedom
