#include "madt/segmask.hpp"

#include <algorithm>

namespace madt {

uint16_t ClassGrid::max_id() const {
  uint16_t m = 0;
  for (uint16_t v : ids) m = std::max(m, v);
  return m;
}

Tensor OneHotSegmentation::to_tensor() const {
  Tensor t({1, d, grid.height, grid.width});
  for (int64_t y = 0; y < grid.height; ++y)
    for (int64_t x = 0; x < grid.width; ++x) t.at4(0, grid.at(y, x), y, x) = real(1);
  return t;
}

OneHotSegmentation onehot(const ClassGrid& grid, int64_t d) {
  for (int64_t i = 0; i < grid.height * grid.width; ++i) {
    if (grid.ids[static_cast<size_t>(i)] >= d)
      throw_data(ErrCode::IdOutOfRange, "class id " + std::to_string(grid.ids[static_cast<size_t>(i)]) +
                                            " >= channel count " + std::to_string(d));
  }
  return OneHotSegmentation{d, grid};
}

ClassGrid argmax_channels(const Tensor& t) {
  const int64_t d = t.dim(1), h = t.dim(2), w = t.dim(3);
  ClassGrid g(h, w);
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      int64_t best = 0;
      real bv = t.at4(0, 0, y, x);
      for (int64_t c = 1; c < d; ++c) {
        const real v = t.at4(0, c, y, x);
        if (v > bv) {
          bv = v;
          best = c;
        }
      }
      g.at(y, x) = static_cast<uint16_t>(best);
    }
  return g;
}

Tensor AlignmentMask::to_tensor() const {
  Tensor t({1, 1, height, width});
  for (int64_t i = 0; i < height * width; ++i) t[i] = static_cast<real>(bits[static_cast<size_t>(i)]);
  return t;
}

AlignmentMask alignment_mask(const OneHotSegmentation& ca, const OneHotSegmentation& cb) {
  if (ca.grid.height != cb.grid.height || ca.grid.width != cb.grid.width || ca.d != cb.d)
    throw_data(ErrCode::ShapeMismatch, "alignment_mask: segmentation shapes differ");
  return window_alignment(ca.grid, 0, 0, cb.grid, 0, 0, ca.grid.height, ca.grid.width);
}

AlignmentMask window_alignment(const ClassGrid& a, int64_t ay, int64_t ax, const ClassGrid& b,
                               int64_t by, int64_t bx, int64_t h, int64_t w) {
  if (ay < 0 || ax < 0 || ay + h > a.height || ax + w > a.width || by < 0 || bx < 0 ||
      by + h > b.height || bx + w > b.width)
    throw_data(ErrCode::WindowOutOfBounds, "window_alignment outside grid bounds");
  AlignmentMask m(h, w);
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x)
      m.at(y, x) = a.at(ay + y, ax + x) == b.at(by + y, bx + x) ? 1 : 0;
  return m;
}

double overlap_fraction(const AlignmentMask& mask, const Window& win) {
  if (win.h <= 0 || win.w <= 0 || win.y < 0 || win.x < 0 || win.y + win.h > mask.height ||
      win.x + win.w > mask.width)
    throw_data(ErrCode::WindowOutOfBounds, "overlap_fraction window outside mask");
  int64_t count = 0;
  for (int64_t y = 0; y < win.h; ++y)
    for (int64_t x = 0; x < win.w; ++x) count += mask.at(win.y + y, win.x + x);
  return static_cast<double>(count) / static_cast<double>(win.h * win.w);
}

const char* ckvd_category_name(CkvdCategory c) {
  static const std::array<const char*, kCkvdCategoryCount> names = {
      "sky",     "ground",        "road",   "terrain", "vegetation",
      "building", "roadside-obj.", "person", "vehicle", "rest"};
  return names[static_cast<size_t>(c)];
}

CkvdCategory ckvd_category_from_name(const std::string& name) {
  for (size_t i = 0; i < kCkvdCategoryCount; ++i)
    if (name == ckvd_category_name(static_cast<CkvdCategory>(i))) return static_cast<CkvdCategory>(i);
  throw_config(ErrCode::RangeError, "unknown cKVD category: " + name);
}

CkvdClassMap CkvdClassMap::builtin() {
  CkvdClassMap m;
  auto put = [&m](std::initializer_list<uint16_t> ids, CkvdCategory c) {
    for (uint16_t id : ids) m.set(id, c);
  };
  put({142}, CkvdCategory::Sky);
  put({94, 95, 97, 100, 101}, CkvdCategory::Ground);
  put({98}, CkvdCategory::Road);
  put({102}, CkvdCategory::Terrain);
  put({174}, CkvdCategory::Vegetation);
  put({31, 32, 33, 35, 36}, CkvdCategory::Building);
  put({130, 131, 132, 133, 134, 135, 136, 137, 138, 139, 140, 141}, CkvdCategory::RoadsideObj);
  put({125, 126, 127, 128}, CkvdCategory::Person);
  put({175, 176, 177, 178, 180, 181, 182, 183, 185}, CkvdCategory::Vehicle);
  return m;
}

}  // namespace madt
