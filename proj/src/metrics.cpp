#include "madt/metrics.hpp"

#include <cmath>
#include <memory>

#include <json.hpp>

#include "madt/ftc1.hpp"
#include "madt/nn.hpp"
#include "madt/tape.hpp"

namespace madt {

namespace {

double poly3(const std::vector<real>& x, const std::vector<real>& y) {
  double dot = 0;
  for (size_t i = 0; i < x.size(); ++i) dot += static_cast<double>(x[i]) * static_cast<double>(y[i]);
  const double base = dot / static_cast<double>(x.size()) + 1.0;
  return base * base * base;
}

}  // namespace

double mmd2_unbiased(const FeatureSet& X, const FeatureSet& Y) {
  const int64_t n = static_cast<int64_t>(X.size());
  const int64_t m = static_cast<int64_t>(Y.size());
  if (n < 2 || m < 2)
    throw_data(ErrCode::TooFewSamples, "mmd2_unbiased needs at least 2 samples per side");
  if (X.dim() != Y.dim()) throw_data(ErrCode::ShapeMismatch, "feature dimensions differ");
  double xx = 0, yy = 0, xy = 0;
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < n; ++j)
      if (i != j) xx += poly3(X.rows[static_cast<size_t>(i)], X.rows[static_cast<size_t>(j)]);
  xx /= static_cast<double>(n) * static_cast<double>(n - 1);
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < m; ++j)
      if (i != j) yy += poly3(Y.rows[static_cast<size_t>(i)], Y.rows[static_cast<size_t>(j)]);
  yy /= static_cast<double>(m) * static_cast<double>(m - 1);
  if (n == m) {
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < m; ++j)
        if (i != j) xy += poly3(X.rows[static_cast<size_t>(i)], Y.rows[static_cast<size_t>(j)]);
    xy /= static_cast<double>(n) * static_cast<double>(n - 1);
  } else {
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < m; ++j)
        xy += poly3(X.rows[static_cast<size_t>(i)], Y.rows[static_cast<size_t>(j)]);
    xy /= static_cast<double>(n) * static_cast<double>(m);
  }
  return xx + yy - 2 * xy;
}

ImageFeatureFn toy_feature_provider() {
  struct Pyramid {
    std::vector<Conv2dParams> convs;
    Pyramid() {
      Rng rng(splitmix64(0x70f3a7u));
      convs.push_back(make_conv(3, 8, 3, 2, false, rng, real(1.0)));
      convs.push_back(make_conv(8, 16, 3, 2, false, rng, real(1.0)));
      convs.push_back(make_conv(16, 40, 3, 2, false, rng, real(1.0)));
    }
  };
  auto pyr = std::make_shared<Pyramid>();
  return [pyr](const Tensor& crop) {
    if (crop.rank() != 3 || crop.dim(0) != 3)
      throw_data(ErrCode::ShapeMismatch, "toy_feature_provider expects (3,H,W)");
    Tape t;
    Tensor in4 = crop.reshaped({1, 3, crop.dim(1), crop.dim(2)});
    Var h = add_scalar(scale(t.constant(in4), 2), real(-1));  // [0,1] -> [-1,1]
    std::vector<real> out;
    out.reserve(static_cast<size_t>(kToyFeatureDim));
    for (const auto& conv : pyr->convs) {
      Var w = t.constant(conv.weight);
      Var b = t.constant(conv.bias);
      Var y = conv2d_raw(pad2d(h, 1, PadMode::Zero), w, conv.stride);
      Var b4 = broadcast_to(reshape(b, {1, conv.bias.dim(0), 1, 1}), y.value.shape());
      h = leaky_relu(add(y, b4), real(0.2));
      const int64_t C = h.value.dim(1);
      const int64_t hw = h.value.dim(2) * h.value.dim(3);
      for (int64_t c = 0; c < C; ++c) {
        double acc = 0;
        for (int64_t i = 0; i < hw; ++i) acc += h.value[c * hw + i];
        out.push_back(static_cast<real>(acc / static_cast<double>(hw)));
      }
    }
    return out;
  };
}

std::vector<MetricCropPair> sample_metric_crops(const Corpus& src, const Corpus& tgt,
                                                const MetricConfig& cfg) {
  if (src.empty() || tgt.empty()) throw_data(ErrCode::TooFewSamples, "empty corpus");
  Rng rng_src = subseeded(cfg.seed, 0x6372u);
  Rng rng_tgt = subseeded(cfg.seed, 0x6372u);
  std::vector<MetricCropPair> out;
  const int64_t budget = cfg.n_pairs * cfg.max_draw_factor;
  for (int64_t draw = 0; draw < budget && static_cast<int64_t>(out.size()) < cfg.n_pairs; ++draw) {
    const auto& s = src[static_cast<size_t>(rng_src.below(static_cast<int64_t>(src.size())))];
    const auto& g = tgt[static_cast<size_t>(rng_tgt.below(static_cast<int64_t>(tgt.size())))];
    const int64_t cs = static_cast<int64_t>(std::llround(cfg.crop_ratio * s.image.dim(1)));
    const int64_t ct = static_cast<int64_t>(std::llround(cfg.crop_ratio * g.image.dim(1)));
    const int64_t c = std::min(cs, ct);
    if (c < 1 || c > s.image.dim(1) || c > s.image.dim(2) || c > g.image.dim(1) || c > g.image.dim(2))
      continue;
    const int64_t sy = rng_src.below(s.image.dim(1) - c + 1), sx = rng_src.below(s.image.dim(2) - c + 1);
    const int64_t ty = rng_tgt.below(g.image.dim(1) - c + 1), tx = rng_tgt.below(g.image.dim(2) - c + 1);
    AlignmentMask m = window_alignment(s.seg, sy, sx, g.seg, ty, tx, c, c);
    if (!(overlap_fraction(m, {0, 0, c, c}) > cfg.threshold)) continue;
    MetricCropPair p;
    p.src_crop = crop_image(s.image, {sy, sx, c, c});
    p.tgt_crop = crop_image(g.image, {ty, tx, c, c});
    p.src_seg = crop_grid(s.seg, {sy, sx, c, c});
    p.tgt_seg = crop_grid(g.seg, {ty, tx, c, c});
    out.push_back(std::move(p));
  }
  if (out.size() < 2)
    throw_data(ErrCode::TooFewSamples,
               "only " + std::to_string(out.size()) + " aligned crop pairs found");
  return out;
}

Tensor erase_other_categories(const Tensor& crop, const ClassGrid& seg, CkvdCategory keep,
                              const CkvdClassMap& map) {
  if (crop.dim(1) != seg.height || crop.dim(2) != seg.width)
    throw_data(ErrCode::ShapeMismatch, "erase_other_categories: crop/seg shapes differ");
  Tensor out = crop.clone();
  const int64_t hw = seg.height * seg.width;
  for (int64_t p = 0; p < hw; ++p) {
    if (map.map(seg.ids[static_cast<size_t>(p)]) != keep) {
      for (int64_t c = 0; c < 3; ++c) out[c * hw + p] = 0;
    }
  }
  return out;
}

double category_fraction(const ClassGrid& seg, CkvdCategory c, const CkvdClassMap& map) {
  int64_t count = 0;
  for (uint16_t id : seg.ids) count += map.map(id) == c ? 1 : 0;
  return static_cast<double>(count) / static_cast<double>(seg.ids.size());
}

namespace {
void fill_report_config(MetricReport& r, const MetricConfig& cfg) {
  r.crop_ratio = cfg.crop_ratio;
  r.threshold = cfg.threshold;
  r.pixel_threshold = cfg.pixel_threshold;
  r.seed = cfg.seed;
}
}  // namespace

MetricReport kid_from_features(const FeatureSet& X, const FeatureSet& Y,
                               const std::string& provider_name) {
  MetricReport r;
  r.name = "kid";
  r.provider = provider_name;
  r.value_x1000 = mmd2_unbiased(X, Y) * 1000.0;
  r.n_source = static_cast<int64_t>(X.size());
  r.n_target = static_cast<int64_t>(Y.size());
  return r;
}

MetricReport kid(const Corpus& src, const Corpus& tgt, const ImageFeatureFn& features,
                 const std::string& provider_name, const MetricConfig& cfg) {
  FeatureSet X, Y;
  X.provenance = Y.provenance = provider_name;
  for (const auto& s : src) X.rows.push_back(features(s.image));
  for (const auto& g : tgt) Y.rows.push_back(features(g.image));
  MetricReport r = kid_from_features(X, Y, provider_name);
  fill_report_config(r, cfg);
  return r;
}

MetricReport skvd(const Corpus& src, const Corpus& tgt, const ImageFeatureFn& features,
                  const std::string& provider_name, const MetricConfig& cfg) {
  auto pairs = sample_metric_crops(src, tgt, cfg);
  FeatureSet X, Y;
  X.provenance = Y.provenance = provider_name;
  for (const auto& p : pairs) {
    X.rows.push_back(features(p.src_crop));
    Y.rows.push_back(features(p.tgt_crop));
  }
  MetricReport r;
  r.name = "skvd";
  r.provider = provider_name;
  r.value_x1000 = mmd2_unbiased(X, Y) * 1000.0;
  r.n_source = static_cast<int64_t>(X.size());
  r.n_target = static_cast<int64_t>(Y.size());
  fill_report_config(r, cfg);
  return r;
}

MetricReport ckvd(const Corpus& src, const Corpus& tgt, const ImageFeatureFn& features,
                  const std::string& provider_name, const CkvdClassMap& map,
                  const MetricConfig& cfg) {
  auto pairs = sample_metric_crops(src, tgt, cfg);
  MetricReport r;
  r.name = "ckvd";
  r.provider = provider_name;
  fill_report_config(r, cfg);
  r.n_source = r.n_target = static_cast<int64_t>(pairs.size());

  double sum = 0, sum_sp = 0;
  int64_t present = 0, present_sp = 0;
  for (size_t ci = 0; ci < kCkvdCategoryCount; ++ci) {
    const CkvdCategory cat = static_cast<CkvdCategory>(ci);
    FeatureSet X, Y;
    for (const auto& p : pairs) {
      if (category_fraction(p.src_seg, cat, map) > cfg.pixel_threshold)
        X.rows.push_back(features(erase_other_categories(p.src_crop, p.src_seg, cat, map)));
      if (category_fraction(p.tgt_seg, cat, map) > cfg.pixel_threshold)
        Y.rows.push_back(features(erase_other_categories(p.tgt_crop, p.tgt_seg, cat, map)));
    }
    if (X.size() < 2 || Y.size() < 2) {
      r.absent_classes.push_back(ckvd_category_name(cat));
      continue;
    }
    const double v = mmd2_unbiased(X, Y) * 1000.0;
    r.per_class_x1000[ckvd_category_name(cat)] = v;
    sum += v;
    ++present;
    if (cat != CkvdCategory::Sky && cat != CkvdCategory::Person) {
      sum_sp += v;
      ++present_sp;
    }
  }
  if (present > 0) r.avg_x1000 = sum / static_cast<double>(present);
  if (present_sp > 0) r.avg_sp_x1000 = sum_sp / static_cast<double>(present_sp);
  r.value_x1000 = r.avg_x1000.value_or(0.0);
  return r;
}

FeatureSet load_feature_matrix(const std::string& ftc1_path) {
  Tensor t = ftc1_read(ftc1_path);
  if (t.rank() != 2) throw_data(ErrCode::BadFile, ftc1_path + ": expected an n x d matrix");
  FeatureSet fs;
  fs.provenance = ftc1_path;
  const int64_t n = t.dim(0), d = t.dim(1);
  fs.rows.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    fs.rows[static_cast<size_t>(i)].resize(static_cast<size_t>(d));
    for (int64_t j = 0; j < d; ++j) fs.rows[static_cast<size_t>(i)][static_cast<size_t>(j)] = t[i * d + j];
  }
  return fs;
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["name"] = name;
  j["provider"] = provider;
  j["value_x1000"] = value_x1000;
  if (!per_class_x1000.empty()) {
    nlohmann::ordered_json pc;
    for (size_t ci = 0; ci < kCkvdCategoryCount; ++ci) {
      const char* nm = ckvd_category_name(static_cast<CkvdCategory>(ci));
      auto it = per_class_x1000.find(nm);
      if (it != per_class_x1000.end()) pc[nm] = it->second;
    }
    j["per_class_x1000"] = pc;
  }
  if (avg_x1000) j["avg_x1000"] = *avg_x1000;
  if (avg_sp_x1000) j["avg_sp_x1000"] = *avg_sp_x1000;
  j["absent_classes"] = absent_classes;
  j["n_source"] = n_source;
  j["n_target"] = n_target;
  j["config"] = {{"crop_ratio", crop_ratio},
                 {"threshold", threshold},
                 {"pixel_threshold", pixel_threshold},
                 {"seed", seed}};
  return j.dump(2);
}

}  // namespace madt
