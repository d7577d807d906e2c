#pragma once

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <functional>
#include <future>
#include <mutex>
#include <thread>
#include <vector>

namespace dpp {

/// Fixed set of worker threads with a FIFO task queue.
///
/// parallel_for() lets the calling thread take part in the work, so it is safe to
/// call from inside a task running on the same pool.
class WorkerPool {
 public:
  explicit WorkerPool(unsigned workers);
  ~WorkerPool();

  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  unsigned workers() const { return static_cast<unsigned>(threads_.size()); }

  /// Threads that can run a parallel_for at once: the workers plus the caller.
  unsigned parallelism() const { return workers() + 1; }

  template <class F>
  auto submit(F&& fn) -> std::future<decltype(fn())> {
    using R = decltype(fn());
    auto task = std::make_shared<std::packaged_task<R()>>(std::forward<F>(fn));
    auto fut = task->get_future();
    post([task] { (*task)(); });
    return fut;
  }

  /// Calls body(begin, end) over [0, n) in blocks of at most `grain` items.
  /// Blocks are claimed in ascending order. Exceptions are not caught.
  void parallel_for(std::size_t n, std::size_t grain, const std::function<void(std::size_t, std::size_t)>& body);

  static unsigned hardware_threads();

 private:
  void post(std::function<void()> task);
  void loop();

  std::vector<std::thread> threads_;
  std::deque<std::function<void()>> queue_;
  std::mutex mu_;
  std::condition_variable cv_;
  bool stopping_ = false;
};

}  // namespace dpp
