#include "mrf/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace mrf {

namespace {

// set on pool workers and on any thread currently inside a parallel region,
// so nested parallel_for calls always run inline
thread_local bool tls_in_parallel = false;

class Pool {
 public:
  explicit Pool(int n_workers) : stop_(false), generation_(0), pending_(0) {
    for (int i = 0; i < n_workers; ++i) {
      workers_.emplace_back([this] { worker_loop(); });
    }
  }

  ~Pool() {
    {
      std::unique_lock lk(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& w : workers_) w.join();
  }

  void run(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body) {
    std::unique_lock run_lk(run_mu_);  // one parallel region at a time
    const int parts = static_cast<int>(workers_.size()) + 1;
    {
      std::unique_lock lk(mu_);
      n_ = n;
      parts_ = parts;
      body_ = &body;
      next_part_.store(1, std::memory_order_relaxed);
      pending_ = parts - 1;
      ++generation_;
    }
    cv_.notify_all();
    run_part(0, n, parts, body);  // caller handles part 0
    std::unique_lock lk(mu_);
    done_cv_.wait(lk, [this] { return pending_ == 0; });
    body_ = nullptr;
  }

 private:
  static void run_part(int part, std::size_t n, int parts,
                       const std::function<void(std::size_t, std::size_t)>& body) {
    const std::size_t begin = n * static_cast<std::size_t>(part) / parts;
    const std::size_t end = n * static_cast<std::size_t>(part + 1) / parts;
    if (begin < end) body(begin, end);
  }

  void worker_loop() {
    tls_in_parallel = true;
    uint64_t seen = 0;
    for (;;) {
      const std::function<void(std::size_t, std::size_t)>* body = nullptr;
      std::size_t n = 0;
      int parts = 0;
      {
        std::unique_lock lk(mu_);
        cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
        body = body_;
        n = n_;
        parts = parts_;
      }
      // grab parts until exhausted
      for (;;) {
        const int part = next_part_.fetch_add(1, std::memory_order_relaxed);
        if (part >= parts) break;
        run_part(part, n, parts, *body);
      }
      {
        std::unique_lock lk(mu_);
        if (--pending_ == 0) done_cv_.notify_all();
      }
    }
  }

  std::vector<std::thread> workers_;
  std::mutex run_mu_;
  std::mutex mu_;
  std::condition_variable cv_, done_cv_;
  bool stop_;
  uint64_t generation_;
  int pending_;
  std::size_t n_ = 0;
  int parts_ = 0;
  const std::function<void(std::size_t, std::size_t)>* body_ = nullptr;
  std::atomic<int> next_part_{0};
};

int resolve_max_threads() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* env = std::getenv("MRF_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, cap);
  }
  return n;
}

Pool* pool_instance() {
  static Pool* pool = [] {
    const int workers = resolve_max_threads() - 1;
    return workers > 0 ? new Pool(workers) : nullptr;
  }();
  return pool;
}

}  // namespace

int max_threads() {
  static const int n = resolve_max_threads();
  return n;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body) {
  if (n == 0) return;
  Pool* pool = pool_instance();
  if (pool == nullptr || tls_in_parallel || n < 2) {
    body(0, n);
    return;
  }
  tls_in_parallel = true;
  try {
    pool->run(n, body);
  } catch (...) {
    tls_in_parallel = false;
    throw;
  }
  tls_in_parallel = false;
}

}  // namespace mrf
