#include "dpp/worker_pool.hpp"

#include <atomic>
#include <memory>

namespace dpp {

WorkerPool::WorkerPool(unsigned workers) {
  threads_.reserve(workers);
  for (unsigned k = 0; k < workers; ++k) threads_.emplace_back([this] { loop(); });
}

WorkerPool::~WorkerPool() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
  }
  cv_.notify_all();
  for (auto& t : threads_) t.join();
}

unsigned WorkerPool::hardware_threads() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : n;
}

void WorkerPool::post(std::function<void()> task) {
  {
    std::lock_guard lock(mu_);
    queue_.push_back(std::move(task));
  }
  cv_.notify_one();
}

void WorkerPool::loop() {
  while (true) {
    std::function<void()> task;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
      if (queue_.empty()) return;
      task = std::move(queue_.front());
      queue_.pop_front();
    }
    task();
  }
}

void WorkerPool::parallel_for(std::size_t n, std::size_t grain,
                              const std::function<void(std::size_t, std::size_t)>& body) {
  if (n == 0) return;
  if (grain == 0) grain = 1;
  const std::size_t blocks = (n + grain - 1) / grain;
  if (blocks == 1 || threads_.empty()) {
    body(0, n);
    return;
  }

  struct State {
    std::atomic<std::size_t> next{0};
    std::size_t done = 0;
    std::exception_ptr error;
    std::mutex mu;
    std::condition_variable cv;
  };
  auto state = std::make_shared<State>();
  const auto* body_ptr = &body;

  // Helpers only touch `body` after claiming a block, and the caller does not
  // return before every claimed block has finished, so the pointer stays valid.
  auto drain = [state, body_ptr, blocks, grain, n] {
    while (true) {
      std::size_t b = state->next.fetch_add(1);
      if (b >= blocks) return;
      std::exception_ptr err;
      try {
        (*body_ptr)(b * grain, std::min(n, (b + 1) * grain));
      } catch (...) {
        err = std::current_exception();
      }
      std::lock_guard lock(state->mu);
      if (err && !state->error) state->error = err;
      if (++state->done == blocks) state->cv.notify_all();
    }
  };

  const std::size_t helpers = std::min<std::size_t>(threads_.size(), blocks - 1);
  for (std::size_t k = 0; k < helpers; ++k) post(drain);
  drain();
  std::unique_lock lock(state->mu);
  state->cv.wait(lock, [&] { return state->done == blocks; });
  if (state->error) std::rethrow_exception(state->error);
}

}  // namespace dpp
