#pragma once
// Dense n-dimensional value tensor. Storage is shared_ptr so passing tensors
// around is cheap; mutation goes through data() and callers own aliasing.
#include <cstdint>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "madt/common.hpp"

namespace madt {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string r = "(";
  for (size_t i = 0; i < s.size(); ++i) {
    r += std::to_string(s[i]);
    if (i + 1 < s.size()) r += ",";
  }
  return r + ")";
}

// Allocator that skips value-initialization on plain resize; constructors
// with arguments behave normally.
template <class T>
struct NoInitAlloc : std::allocator<T> {
  template <class U>
  struct rebind {
    using other = NoInitAlloc<U>;
  };
  template <class U, class... Args>
  void construct(U* p, Args&&... args) {
    if constexpr (sizeof...(Args) > 0)
      ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
};

using RawStore = std::vector<real, NoInitAlloc<real>>;

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, real fill = real(0)) : shape_(std::move(shape)) {
    data_ = std::make_shared<RawStore>();
    data_->resize(static_cast<size_t>(shape_numel(shape_)));
    std::fill(data_->begin(), data_->end(), fill);
  }
  Tensor(Shape shape, std::vector<real> values) : shape_(std::move(shape)) {
    if (static_cast<int64_t>(values.size()) != shape_numel(shape_))
      throw_data(ErrCode::ShapeMismatch, "tensor data length does not match shape " + shape_str(shape_));
    data_ = std::make_shared<RawStore>();
    data_->assign(values.begin(), values.end());
  }

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor full(Shape s, real v) { return Tensor(std::move(s), v); }
  static Tensor scalar(real v) { return Tensor(Shape{1}, std::vector<real>{v}); }
  // Elements are unspecified until written; only for kernels that fully
  // overwrite their output.
  static Tensor uninitialized(Shape s) {
    Tensor t;
    t.shape_ = std::move(s);
    t.data_ = std::make_shared<RawStore>();
    t.data_->resize(static_cast<size_t>(shape_numel(t.shape_)));
    return t;
  }

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return shape_; }
  int64_t dim(size_t i) const { return shape_[i]; }
  size_t rank() const { return shape_.size(); }
  int64_t numel() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }

  real* data() { return data_->data(); }
  const real* data() const { return data_->data(); }
  real& operator[](int64_t i) { return (*data_)[static_cast<size_t>(i)]; }
  real operator[](int64_t i) const { return (*data_)[static_cast<size_t>(i)]; }

  // 4-D accessors (NCHW); used by kernels and tests.
  real& at4(int64_t n, int64_t c, int64_t y, int64_t x) {
    return (*data_)[((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }
  real at4(int64_t n, int64_t c, int64_t y, int64_t x) const {
    return (*data_)[((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }

  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = std::make_shared<RawStore>(*data_);
    return t;
  }

  Tensor reshaped(Shape s) const {
    if (shape_numel(s) != numel())
      throw_data(ErrCode::ShapeMismatch, "reshape " + shape_str(shape_) + " -> " + shape_str(s));
    Tensor t = *this;
    t.shape_ = std::move(s);
    return t;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

 private:
  Shape shape_;
  std::shared_ptr<RawStore> data_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw_data(ErrCode::ShapeMismatch, std::string(op) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace madt
