#pragma once
// Kernel two-sample metrics: the unbiased polynomial-kernel MMD core, the
// segmentation-matched crop variant (sKVD), and the class-filtered variant
// (cKVD) with its 5% pixel threshold and x1000 reporting.
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "madt/rng.hpp"
#include "madt/sampling.hpp"
#include "madt/segmask.hpp"

namespace madt {

struct FeatureSet {
  std::vector<std::vector<real>> rows;
  std::string provenance;
  size_t size() const { return rows.size(); }
  size_t dim() const { return rows.empty() ? 0 : rows[0].size(); }
};

// Cubic polynomial kernel (x.y/d + 1)^3 on the rows. Unbiased estimator:
// off-diagonal means for the within-set terms; for equally sized sets the
// cross term is the paired U-statistic (i != j), which vanishes exactly on
// identical feature sets, otherwise the plain cross mean.
double mmd2_unbiased(const FeatureSet& X, const FeatureSet& Y);

struct CorpusItem {
  Tensor image;  // (3,H,W) in [0,1]
  ClassGrid seg;
};
using Corpus = std::vector<CorpusItem>;

using ImageFeatureFn = std::function<std::vector<real>(const Tensor&)>;

// Frozen random conv pyramid pooled to a 64-dim vector; deterministic.
ImageFeatureFn toy_feature_provider();
constexpr int64_t kToyFeatureDim = 64;

struct MetricConfig {
  double crop_ratio = 1.0 / 8.0;
  double threshold = 0.5;
  double pixel_threshold = 0.05;
  int64_t n_pairs = 256;
  int64_t max_draw_factor = 200;  // draw budget = n_pairs * factor
  uint64_t seed = 0;
};

struct MetricReport {
  std::string name;
  std::string provider;
  double value_x1000 = 0;
  std::map<std::string, double> per_class_x1000;
  std::vector<std::string> absent_classes;
  std::optional<double> avg_x1000, avg_sp_x1000;
  int64_t n_source = 0, n_target = 0;
  double crop_ratio = 0, threshold = 0, pixel_threshold = 0;
  uint64_t seed = 0;
  std::string to_json() const;
};

// One aligned crop pair drawn for metric evaluation.
struct MetricCropPair {
  Tensor src_crop, tgt_crop;
  ClassGrid src_seg, tgt_seg;
};

// Rejection-samples crop pairs whose (unmasked) segmentation windows overlap
// strictly above the threshold. Throws TooFewSamples if fewer than 2 accept.
// Each side draws from its own stream; both streams derive identically from
// cfg.seed, so running a corpus against itself reproduces the same crops on
// both sides and the estimator cancels exactly.
std::vector<MetricCropPair> sample_metric_crops(const Corpus& src, const Corpus& tgt,
                                                const MetricConfig& cfg);

// Zeroes image pixels whose class maps to a category other than `keep`.
Tensor erase_other_categories(const Tensor& crop, const ClassGrid& seg, CkvdCategory keep,
                              const CkvdClassMap& map);
double category_fraction(const ClassGrid& seg, CkvdCategory c, const CkvdClassMap& map);

MetricReport kid(const Corpus& src, const Corpus& tgt, const ImageFeatureFn& features,
                 const std::string& provider_name, const MetricConfig& cfg);
MetricReport skvd(const Corpus& src, const Corpus& tgt, const ImageFeatureFn& features,
                  const std::string& provider_name, const MetricConfig& cfg);
MetricReport ckvd(const Corpus& src, const Corpus& tgt, const ImageFeatureFn& features,
                  const std::string& provider_name, const CkvdClassMap& map,
                  const MetricConfig& cfg);

// Precomputed feature matrices (one n x d FTC1 per corpus) for external
// backbones; KID only.
MetricReport kid_from_features(const FeatureSet& X, const FeatureSet& Y,
                               const std::string& provider_name);
FeatureSet load_feature_matrix(const std::string& ftc1_path);

}  // namespace madt
