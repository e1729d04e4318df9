#pragma once
// Two-way deterministic work splitting: one persistent worker plus the
// calling thread. Each range element is processed by exactly one thread with
// an unchanged inner loop order, so results are bitwise reproducible.
#include <condition_variable>
#include <functional>
#include <mutex>
#include <thread>

namespace madt {

class HalfWorker {
 public:
  static HalfWorker& instance();
  // fn(begin, end) is invoked on [0,mid) by the worker and [mid,n) inline.
  void run(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

 private:
  HalfWorker();
  ~HalfWorker();
  std::thread thread_;
  std::mutex mu_;
  std::condition_variable cv_;
  const std::function<void(int64_t, int64_t)>* job_ = nullptr;
  int64_t job_begin_ = 0, job_end_ = 0;
  bool done_ = true;
  bool stop_ = false;
};

// Splits [0,n) across two threads when the estimated work is large enough,
// otherwise runs inline.
void parallel_rows(int64_t n, int64_t work_per_row,
                   const std::function<void(int64_t, int64_t)>& fn);

}  // namespace madt
