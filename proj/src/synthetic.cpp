#include "madt/synthetic.hpp"

#include <algorithm>
#include <cmath>

namespace madt {

BiasSpec BiasSpec::default_spec() {
  BiasSpec s;
  // The biased class's target color sits far from every mixture of the other
  // colors, so a partially converged generator cannot trip the probe's
  // nearest-color classifier by accident.
  s.colors_a = {{real(0.10), real(0.10), real(0.14)},
                {real(0.70), real(0.22), real(0.18)},
                {real(0.18), real(0.55), real(0.70)},
                {real(0.60), real(0.80), real(0.20)}};
  s.colors_b = {{real(0.04), real(0.06), real(0.32)},
                {real(0.70), real(0.30), real(0.10)},
                {real(0.10), real(0.32), real(0.88)},
                {real(0.95), real(0.95), real(0.05)}};
  return s;
}

void BiasSpec::validate() const {
  if (classes < 2) throw_config(ErrCode::RangeError, "BiasSpec needs at least 2 classes");
  if (biased_class < 1 || biased_class >= classes)
    throw_config(ErrCode::RangeError, "biased_class must be a non-background class");
  if (colors_a.size() != static_cast<size_t>(classes) ||
      colors_b.size() != static_cast<size_t>(classes))
    throw_config(ErrCode::ConfigMismatch, "color maps must cover every class");
  if (shapes_min < 1 || shapes_max < shapes_min)
    throw_config(ErrCode::RangeError, "shape count range invalid");
}

namespace {

void draw_rect(ClassGrid& g, int64_t cy, int64_t cx, int64_t hh, int64_t hw, uint16_t cls) {
  const int64_t y0 = std::max<int64_t>(0, cy - hh), y1 = std::min(g.height - 1, cy + hh);
  const int64_t x0 = std::max<int64_t>(0, cx - hw), x1 = std::min(g.width - 1, cx + hw);
  for (int64_t y = y0; y <= y1; ++y)
    for (int64_t x = x0; x <= x1; ++x) g.at(y, x) = cls;
}

void draw_disc(ClassGrid& g, int64_t cy, int64_t cx, int64_t radius, uint16_t cls) {
  const int64_t y0 = std::max<int64_t>(0, cy - radius), y1 = std::min(g.height - 1, cy + radius);
  const int64_t x0 = std::max<int64_t>(0, cx - radius), x1 = std::min(g.width - 1, cx + radius);
  for (int64_t y = y0; y <= y1; ++y)
    for (int64_t x = x0; x <= x1; ++x)
      if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= radius * radius) g.at(y, x) = cls;
}

}  // namespace

LabeledImage render_synthetic_image(const BiasSpec& spec, bool domain_b, int64_t size, Rng& rng) {
  spec.validate();
  if (size < 32) throw_config(ErrCode::RangeError, "synthetic images need size >= 32");
  LabeledImage out;
  out.seg = ClassGrid(size, size, 0);
  for (int64_t cls = 1; cls < spec.classes; ++cls) {
    const bool biased = spec.bias_enabled && domain_b && cls == spec.biased_class;
    if (rng.uniform() >= spec.appear_prob) continue;
    const int64_t count = spec.shapes_min + rng.below(spec.shapes_max - spec.shapes_min + 1);
    for (int64_t k = 0; k < count; ++k) {
      const int64_t extent = 2 + rng.below(size / 6);  // half-extent / radius
      // biased shapes stay fully inside the top half
      const int64_t ymax = biased ? size / 2 - 1 - extent : size - 1 - extent;
      const int64_t ymin = extent;
      if (ymax < ymin) continue;
      const int64_t cy = ymin + rng.below(ymax - ymin + 1);
      const int64_t cx = extent + rng.below(size - 2 * extent);
      bool rect = spec.family == BiasSpec::ShapeFamily::Rectangles ||
                  (spec.family == BiasSpec::ShapeFamily::Mixed && rng.coin());
      if (rect) {
        const int64_t hw = 2 + rng.below(size / 6);
        draw_rect(out.seg, cy, cx, extent, std::min(hw, size / 2 - 1), static_cast<uint16_t>(cls));
      } else {
        draw_disc(out.seg, cy, cx, extent, static_cast<uint16_t>(cls));
      }
    }
  }
  const auto& colors = domain_b ? spec.colors_b : spec.colors_a;
  out.image = Tensor({3, size, size});
  const int64_t hw = size * size;
  for (int64_t p = 0; p < hw; ++p) {
    const auto& col = colors[out.seg.ids[static_cast<size_t>(p)]];
    for (int64_t c = 0; c < 3; ++c) {
      const real v = col[static_cast<size_t>(c)] + static_cast<real>(rng.normal()) * spec.noise_std;
      out.image[c * hw + p] = std::clamp(v, real(0), real(1));
    }
  }
  return out;
}

SyntheticDataset gen_synthetic_dataset(const BiasSpec& spec, int64_t n_images, int64_t size,
                                       Rng& rng) {
  SyntheticDataset ds;
  ds.spec = spec;
  Rng rng_a = rng.substream(0xA);
  Rng rng_b = rng.substream(0xB);
  for (int64_t i = 0; i < n_images; ++i) {
    ds.domain_a.push_back(render_synthetic_image(spec, false, size, rng_a));
    ds.domain_b.push_back(render_synthetic_image(spec, true, size, rng_b));
  }
  return ds;
}

int64_t classify_color_b(const BiasSpec& spec, real r, real g, real b) {
  int64_t best = 0;
  double best_d = 1e300;
  for (int64_t c = 0; c < spec.classes; ++c) {
    const auto& col = spec.colors_b[static_cast<size_t>(c)];
    const double dr = r - col[0], dg = g - col[1], db = b - col[2];
    const double d = dr * dr + dg * dg + db * db;
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

HallucinationReport hallucination_probe(const std::vector<Tensor>& translated,
                                        const std::vector<ClassGrid>& source_segs,
                                        const BiasSpec& spec) {
  if (translated.size() != source_segs.size())
    throw_data(ErrCode::ShapeMismatch, "probe: image/segmentation counts differ");
  HallucinationReport rep;
  rep.per_class.assign(static_cast<size_t>(spec.classes), 0.0);
  for (size_t i = 0; i < translated.size(); ++i) {
    const Tensor& img = translated[i];
    const ClassGrid& seg = source_segs[i];
    if (img.dim(1) != seg.height || img.dim(2) != seg.width)
      throw_data(ErrCode::ShapeMismatch, "probe: image/segmentation shapes differ");
    const int64_t hw = seg.height * seg.width;
    for (int64_t p = 0; p < hw; ++p) {
      const int64_t pred = classify_color_b(spec, img[p], img[hw + p], img[2 * hw + p]);
      const uint16_t src = seg.ids[static_cast<size_t>(p)];
      ++rep.total;
      if (pred == spec.biased_class && src != spec.biased_class) {
        ++rep.offending;
        rep.per_class[src] += 1.0;
      }
    }
  }
  if (rep.total > 0) {
    rep.score = static_cast<double>(rep.offending) / static_cast<double>(rep.total);
    for (auto& v : rep.per_class) v /= static_cast<double>(rep.total);
  }
  return rep;
}

}  // namespace madt
