#include "madt/parallel.hpp"

namespace madt {

HalfWorker& HalfWorker::instance() {
  static HalfWorker w;
  return w;
}

HalfWorker::HalfWorker() {
  thread_ = std::thread([this] {
    std::unique_lock<std::mutex> lk(mu_);
    for (;;) {
      cv_.wait(lk, [this] { return job_ != nullptr || stop_; });
      if (stop_) return;
      const auto* job = job_;
      const int64_t b = job_begin_, e = job_end_;
      lk.unlock();
      (*job)(b, e);
      lk.lock();
      job_ = nullptr;
      done_ = true;
      cv_.notify_all();
    }
  });
}

HalfWorker::~HalfWorker() {
  {
    std::lock_guard<std::mutex> lk(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  thread_.join();
}

void HalfWorker::run(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
  const int64_t mid = n / 2;
  {
    std::lock_guard<std::mutex> lk(mu_);
    job_ = &fn;
    job_begin_ = 0;
    job_end_ = mid;
    done_ = false;
  }
  cv_.notify_all();
  fn(mid, n);
  std::unique_lock<std::mutex> lk(mu_);
  cv_.wait(lk, [this] { return done_; });
}

void parallel_rows(int64_t n, int64_t work_per_row,
                   const std::function<void(int64_t, int64_t)>& fn) {
  if (n < 2 || n * work_per_row < 50000) {
    fn(0, n);
    return;
  }
  HalfWorker::instance().run(n, fn);
}

}  // namespace madt
