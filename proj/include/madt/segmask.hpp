#pragma once
// Semantic segmentation grids, one-hot views, alignment masks and the
// class-to-category table used by the class-conditional metric.
//
// One-hot channel tensors are materialized lazily; the alignment mask is
// computed directly from class ids, which is identical to max over channels
// of the one-hot Hadamard product.
#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "madt/tensor.hpp"

namespace madt {

struct ClassGrid {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<uint16_t> ids;  // row-major

  ClassGrid() = default;
  ClassGrid(int64_t h, int64_t w, uint16_t fill = 0)
      : height(h), width(w), ids(static_cast<size_t>(h * w), fill) {
    if (h <= 0 || w <= 0) throw_data(ErrCode::ShapeMismatch, "ClassGrid needs positive dims");
  }
  uint16_t at(int64_t y, int64_t x) const { return ids[static_cast<size_t>(y * width + x)]; }
  uint16_t& at(int64_t y, int64_t x) { return ids[static_cast<size_t>(y * width + x)]; }
  uint16_t max_id() const;
};

struct OneHotSegmentation {
  int64_t d = 0;  // channel count
  ClassGrid grid;

  // (1, d, h, w) 0/1 tensor.
  Tensor to_tensor() const;
};

OneHotSegmentation onehot(const ClassGrid& grid, int64_t d);
ClassGrid argmax_channels(const Tensor& onehot_nchw);

struct AlignmentMask {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<uint8_t> bits;

  AlignmentMask() = default;
  AlignmentMask(int64_t h, int64_t w) : height(h), width(w), bits(static_cast<size_t>(h * w), 0) {}
  uint8_t at(int64_t y, int64_t x) const { return bits[static_cast<size_t>(y * width + x)]; }
  uint8_t& at(int64_t y, int64_t x) { return bits[static_cast<size_t>(y * width + x)]; }
  Tensor to_tensor() const;  // (1,1,h,w)
};

AlignmentMask alignment_mask(const OneHotSegmentation& ca, const OneHotSegmentation& cb);

// Alignment between two equally sized windows of (possibly different) grids.
AlignmentMask window_alignment(const ClassGrid& a, int64_t ay, int64_t ax, const ClassGrid& b,
                               int64_t by, int64_t bx, int64_t h, int64_t w);

struct Window {
  int64_t y = 0, x = 0, h = 0, w = 0;
};

double overlap_fraction(const AlignmentMask& mask, const Window& win);

enum class CkvdCategory : uint8_t {
  Sky = 0,
  Ground,
  Road,
  Terrain,
  Vegetation,
  Building,
  RoadsideObj,
  Person,
  Vehicle,
  Rest,
};
constexpr size_t kCkvdCategoryCount = 10;
const char* ckvd_category_name(CkvdCategory c);
CkvdCategory ckvd_category_from_name(const std::string& name);

class CkvdClassMap {
 public:
  static CkvdClassMap builtin();
  // Override/extend entries; unknown ids keep mapping to Rest.
  void set(uint16_t id, CkvdCategory cat) { entries_[id] = cat; }
  CkvdCategory map(uint16_t id) const {
    auto it = entries_.find(id);
    return it == entries_.end() ? CkvdCategory::Rest : it->second;
  }
  const std::map<uint16_t, CkvdCategory>& entries() const { return entries_; }

 private:
  std::map<uint16_t, CkvdCategory> entries_;
};

inline CkvdCategory map_class(uint16_t id, const CkvdClassMap& m) { return m.map(id); }

}  // namespace madt
