#include "madt/sampling.hpp"

#include <algorithm>
#include <cmath>

namespace madt {

void SamplerConfig::validate() const {
  if (threshold < 0 || threshold >= 1)
    throw_config(ErrCode::RangeError, "overlap threshold must be in [0,1)");
  if (global_crop * local_ratio < 4)
    throw_config(ErrCode::RangeError, "global_crop*local_ratio must be >= 4");
  if (max_retries < 1) throw_config(ErrCode::RangeError, "max_retries must be >= 1");
  if (local_batch < 1) throw_config(ErrCode::RangeError, "local_batch must be >= 1");
  if (base_height < 1) throw_config(ErrCode::RangeError, "base_height must be >= 1");
}

Tensor resize_image_bilinear(const Tensor& img, int64_t oh, int64_t ow) {
  const int64_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
  if (oh == H && ow == W) return img;
  Tensor out({C, oh, ow});
  const double ry = static_cast<double>(H) / oh;
  const double rx = static_cast<double>(W) / ow;
  for (int64_t c = 0; c < C; ++c)
    for (int64_t y = 0; y < oh; ++y) {
      double sy = (y + 0.5) * ry - 0.5;
      if (sy < 0) sy = 0;
      const int64_t y0 = std::min<int64_t>(static_cast<int64_t>(sy), H - 1);
      const int64_t y1 = std::min<int64_t>(y0 + 1, H - 1);
      const double ty = sy - static_cast<double>(y0);
      for (int64_t x = 0; x < ow; ++x) {
        double sx = (x + 0.5) * rx - 0.5;
        if (sx < 0) sx = 0;
        const int64_t x0 = std::min<int64_t>(static_cast<int64_t>(sx), W - 1);
        const int64_t x1 = std::min<int64_t>(x0 + 1, W - 1);
        const double tx = sx - static_cast<double>(x0);
        const double v00 = img[(c * H + y0) * W + x0], v01 = img[(c * H + y0) * W + x1];
        const double v10 = img[(c * H + y1) * W + x0], v11 = img[(c * H + y1) * W + x1];
        out[(c * oh + y) * ow + x] = static_cast<real>((1 - ty) * ((1 - tx) * v00 + tx * v01) +
                                                       ty * ((1 - tx) * v10 + tx * v11));
      }
    }
  return out;
}

ClassGrid resize_grid_nearest(const ClassGrid& g, int64_t oh, int64_t ow) {
  if (oh == g.height && ow == g.width) return g;
  ClassGrid out(oh, ow);
  for (int64_t y = 0; y < oh; ++y) {
    const int64_t sy = std::min(y * g.height / oh, g.height - 1);
    for (int64_t x = 0; x < ow; ++x)
      out.at(y, x) = g.at(sy, std::min(x * g.width / ow, g.width - 1));
  }
  return out;
}

Tensor crop_image(const Tensor& img, const Window& w) {
  const int64_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
  if (w.y < 0 || w.x < 0 || w.y + w.h > H || w.x + w.w > W)
    throw_data(ErrCode::WindowOutOfBounds, "crop_image window outside image");
  Tensor out({C, w.h, w.w});
  for (int64_t c = 0; c < C; ++c)
    for (int64_t y = 0; y < w.h; ++y)
      for (int64_t x = 0; x < w.w; ++x) out[(c * w.h + y) * w.w + x] = img[(c * H + w.y + y) * W + w.x + x];
  return out;
}

ClassGrid crop_grid(const ClassGrid& g, const Window& w) {
  if (w.y < 0 || w.x < 0 || w.y + w.h > g.height || w.x + w.w > g.width)
    throw_data(ErrCode::WindowOutOfBounds, "crop_grid window outside grid");
  ClassGrid out(w.h, w.w);
  for (int64_t y = 0; y < w.h; ++y)
    for (int64_t x = 0; x < w.w; ++x) out.at(y, x) = g.at(w.y + y, w.x + x);
  return out;
}

namespace {
Tensor flip_image(const Tensor& img) {
  const int64_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
  Tensor out({C, H, W});
  for (int64_t c = 0; c < C; ++c)
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x) out[(c * H + y) * W + x] = img[(c * H + y) * W + (W - 1 - x)];
  return out;
}

ClassGrid flip_grid(const ClassGrid& g) {
  ClassGrid out(g.height, g.width);
  for (int64_t y = 0; y < g.height; ++y)
    for (int64_t x = 0; x < g.width; ++x) out.at(y, x) = g.at(y, g.width - 1 - x);
  return out;
}
}  // namespace

std::pair<Tensor, ClassGrid> preprocess(const Tensor& image, const ClassGrid& seg,
                                        int64_t base_height, int64_t partner_width, bool flip_coin) {
  if (image.rank() != 3 || image.dim(1) != seg.height || image.dim(2) != seg.width)
    throw_data(ErrCode::ShapeMismatch, "preprocess: image and segmentation dimensions differ");
  const int64_t H = image.dim(1), W = image.dim(2);
  const int64_t new_w = static_cast<int64_t>(std::llround(static_cast<double>(W) * base_height / H));
  Tensor img = resize_image_bilinear(image, base_height, new_w);
  ClassGrid grid = resize_grid_nearest(seg, base_height, new_w);
  if (new_w < partner_width)
    throw_data(ErrCode::PartnerWiderThanImage,
               "resized width " + std::to_string(new_w) + " < partner width " + std::to_string(partner_width));
  if (new_w > partner_width) {
    const int64_t x0 = (new_w - partner_width) / 2;
    img = crop_image(img, {0, x0, base_height, partner_width});
    grid = crop_grid(grid, {0, x0, base_height, partner_width});
  }
  if (flip_coin) {
    img = flip_image(img);
    grid = flip_grid(grid);
  }
  return {std::move(img), std::move(grid)};
}

namespace {

CropPair build_pair(const Tensor& Ia, const Tensor& Ib, const ClassGrid& Ca, const ClassGrid& Cb,
                    const ClassGrid& Za, int64_t d, int64_t s, const Window& src, const Window& tgt,
                    AlignmentMask mask) {
  CropPair p;
  p.i_a = crop_image(Ia, src);
  p.i_b = crop_image(Ib, tgt);
  p.c_a = onehot(crop_grid(Ca, src), d);
  p.c_b = onehot(crop_grid(Cb, tgt), d);
  p.z_a = onehot(crop_grid(Za, src), d);
  p.m_ab = std::move(mask);
  p.src = src;
  p.tgt = tgt;
  return p;
}

void check_pair_inputs(const Tensor& Ia, const Tensor& Ib, const ClassGrid& Ca, const ClassGrid& Cb,
                       const ClassGrid& Za, int64_t s) {
  if (Ia.dim(1) != Ca.height || Ia.dim(2) != Ca.width || Ib.dim(1) != Cb.height ||
      Ib.dim(2) != Cb.width || Ia.dim(1) != Ib.dim(1) || Ia.dim(2) != Ib.dim(2) ||
      Za.height != Ca.height || Za.width != Ca.width)
    throw_data(ErrCode::ShapeMismatch, "sampler inputs must share preprocessed dimensions");
  if (Ia.dim(1) < s || Ia.dim(2) < s)
    throw_data(ErrCode::ShapeMismatch, "inputs smaller than the global crop");
}

}  // namespace

CropPair sample_global_pair(const Tensor& Ia, const Tensor& Ib, const ClassGrid& Ca,
                            const ClassGrid& Cb, const ClassGrid& Za, int64_t d,
                            const SamplerConfig& cfg, Rng& rng) {
  cfg.validate();
  const int64_t s = cfg.global_crop;
  check_pair_inputs(Ia, Ib, Ca, Cb, Za, s);
  const int64_t ry = Ca.height - s + 1, rx = Ca.width - s + 1;
  for (int64_t attempt = 0; attempt < cfg.max_retries; ++attempt) {
    const int64_t sy = rng.below(ry), sx = rng.below(rx);
    const int64_t ty = rng.below(ry), tx = rng.below(rx);
    AlignmentMask m = window_alignment(Ca, sy, sx, Cb, ty, tx, s, s);
    if (overlap_fraction(m, {0, 0, s, s}) > cfg.threshold)
      return build_pair(Ia, Ib, Ca, Cb, Za, d, s, {sy, sx, s, s}, {ty, tx, s, s}, std::move(m));
  }
  throw_data(ErrCode::SamplerExhausted,
             "no crop pair above threshold after " + std::to_string(cfg.max_retries) + " draws");
}

CropPair random_crop_pair(const Tensor& Ia, const Tensor& Ib, const ClassGrid& Ca,
                          const ClassGrid& Cb, const ClassGrid& Za, int64_t d,
                          const SamplerConfig& cfg, Rng& rng) {
  cfg.validate();
  const int64_t s = cfg.global_crop;
  check_pair_inputs(Ia, Ib, Ca, Cb, Za, s);
  const int64_t ry = Ca.height - s + 1, rx = Ca.width - s + 1;
  const int64_t sy = rng.below(ry), sx = rng.below(rx);
  const int64_t ty = rng.below(ry), tx = rng.below(rx);
  AlignmentMask m = window_alignment(Ca, sy, sx, Cb, ty, tx, s, s);
  return build_pair(Ia, Ib, Ca, Cb, Za, d, s, {sy, sx, s, s}, {ty, tx, s, s}, std::move(m));
}

PatchBatch sample_local_patches(const CropPair& pair, const SamplerConfig& cfg, Rng& rng) {
  cfg.validate();
  const int64_t s = pair.size();
  const int64_t p = static_cast<int64_t>(std::llround(s * cfg.local_ratio));
  if (p < 1 || p > s) throw_config(ErrCode::RangeError, "local patch size out of range");
  const int64_t range = s - p + 1;
  PatchBatch batch;
  batch.size = p;
  const int64_t budget = cfg.max_retries * cfg.local_batch;
  int64_t draws = 0;
  while (static_cast<int64_t>(batch.patches.size()) < cfg.local_batch) {
    if (draws >= budget)
      throw_data(ErrCode::SamplerExhausted,
                 "local patch sampling exhausted after " + std::to_string(budget) + " draws");
    ++draws;
    const int64_t wy = rng.below(range), wx = rng.below(range);
    if (overlap_fraction(pair.m_ab, {wy, wx, p, p}) > cfg.threshold) {
      Window w{wy, wx, p, p};
      batch.patches.emplace_back(w, w);
    }
  }
  return batch;
}

SampleStats sampling_acceptance(const ClassGrid& Ca, const ClassGrid& Cb, const SamplerConfig& cfg,
                                int64_t n_draws, Rng& rng) {
  const int64_t s = cfg.global_crop;
  const int64_t ry = Ca.height - s + 1, rx = Ca.width - s + 1;
  SampleStats st;
  for (int64_t i = 0; i < n_draws; ++i) {
    const int64_t sy = rng.below(ry), sx = rng.below(rx);
    const int64_t ty = rng.below(ry), tx = rng.below(rx);
    AlignmentMask m = window_alignment(Ca, sy, sx, Cb, ty, tx, s, s);
    ++st.draws;
    if (overlap_fraction(m, {0, 0, s, s}) > cfg.threshold) ++st.accepts;
  }
  return st;
}

std::vector<std::pair<Window, Window>> oracle_valid_pairs(const ClassGrid& Ca, const ClassGrid& Cb,
                                                          int64_t crop, double threshold) {
  std::vector<std::pair<Window, Window>> valid;
  const int64_t ry = Ca.height - crop + 1, rx = Ca.width - crop + 1;
  for (int64_t sy = 0; sy < ry; ++sy)
    for (int64_t sx = 0; sx < rx; ++sx)
      for (int64_t ty = 0; ty < ry; ++ty)
        for (int64_t tx = 0; tx < rx; ++tx) {
          AlignmentMask m = window_alignment(Ca, sy, sx, Cb, ty, tx, crop, crop);
          if (overlap_fraction(m, {0, 0, crop, crop}) > threshold)
            valid.push_back({{sy, sx, crop, crop}, {ty, tx, crop, crop}});
        }
  return valid;
}

double oracle_valid_fraction(const ClassGrid& Ca, const ClassGrid& Cb, int64_t crop,
                             double threshold) {
  const int64_t ry = Ca.height - crop + 1, rx = Ca.width - crop + 1;
  const double total = static_cast<double>(ry * rx) * static_cast<double>(ry * rx);
  return static_cast<double>(oracle_valid_pairs(Ca, Cb, crop, threshold).size()) / total;
}

}  // namespace madt
