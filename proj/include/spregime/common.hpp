#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace spregime {

// Error categories; the CLI maps them onto exit codes 2/3/4.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Static block partition over [0, n). Each index is processed exactly once
// and writes only its own output slot, so results do not depend on the
// thread count. n_threads <= 1 runs inline.
inline void parallel_for(std::size_t n, int n_threads,
                         const std::function<void(std::size_t)>& body) {
  if (n == 0) return;
  if (n_threads <= 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(n_threads), n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::exception_ptr first_error;
  std::mutex err_mutex;
  for (std::size_t t = 0; t < workers; ++t) {
    pool.emplace_back([&, t]() {
      const std::size_t lo = n * t / workers;
      const std::size_t hi = n * (t + 1) / workers;
      try {
        for (std::size_t i = lo; i < hi; ++i) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace spregime
