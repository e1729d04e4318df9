#pragma once
// Preprocessing and similarity-based crop sampling.
//
// Global crop pairs are drawn by rejection: source and target window origins
// are sampled independently and uniformly, and a pair is accepted when the
// alignment between the two windows exceeds the threshold (strict). Local
// patches reuse the accepted pair's mask with a single window per draw,
// sampled with replacement.
#include <utility>
#include <vector>

#include "madt/rng.hpp"
#include "madt/segmask.hpp"
#include "madt/tensor.hpp"

namespace madt {

struct SamplerConfig {
  int64_t global_crop = 352;
  double local_ratio = 1.0 / 8.0;
  double threshold = 0.5;
  int64_t max_retries = 100;
  int64_t local_batch = 32;
  int64_t base_height = 526;

  int64_t local_patch() const { return static_cast<int64_t>(std::llround(global_crop * local_ratio)); }
  void validate() const;
};

struct CropPair {
  Tensor i_a, i_b;  // (3,s,s) in [0,1]
  OneHotSegmentation c_a, c_b, z_a;
  AlignmentMask m_ab;
  Window src, tgt;  // window origins in the preprocessed inputs

  int64_t size() const { return src.h; }
};

struct PatchBatch {
  std::vector<std::pair<Window, Window>> patches;  // (source window, target window)
  int64_t size = 0;                                // patch edge in pixels
};

// Aspect-preserving resize to base_height, center-crop width to partner_width,
// optional horizontal flip applied to image and segmentation identically.
std::pair<Tensor, ClassGrid> preprocess(const Tensor& image, const ClassGrid& seg,
                                        int64_t base_height, int64_t partner_width, bool flip_coin);

CropPair sample_global_pair(const Tensor& Ia, const Tensor& Ib, const ClassGrid& Ca,
                            const ClassGrid& Cb, const ClassGrid& Za, int64_t d,
                            const SamplerConfig& cfg, Rng& rng);

CropPair random_crop_pair(const Tensor& Ia, const Tensor& Ib, const ClassGrid& Ca,
                          const ClassGrid& Cb, const ClassGrid& Za, int64_t d,
                          const SamplerConfig& cfg, Rng& rng);

PatchBatch sample_local_patches(const CropPair& pair, const SamplerConfig& cfg, Rng& rng);

// Acceptance statistics over n single-proposal draws.
struct SampleStats {
  int64_t draws = 0;
  int64_t accepts = 0;
  double accept_rate() const { return draws ? static_cast<double>(accepts) / draws : 0.0; }
};
SampleStats sampling_acceptance(const ClassGrid& Ca, const ClassGrid& Cb, const SamplerConfig& cfg,
                                int64_t n_draws, Rng& rng);

// Exhaustive enumeration of valid (source, target) origin pairs.
double oracle_valid_fraction(const ClassGrid& Ca, const ClassGrid& Cb, int64_t crop,
                             double threshold);
std::vector<std::pair<Window, Window>> oracle_valid_pairs(const ClassGrid& Ca, const ClassGrid& Cb,
                                                          int64_t crop, double threshold);

// Plain (untaped) resizes used by preprocessing.
Tensor resize_image_bilinear(const Tensor& img, int64_t out_h, int64_t out_w);  // (C,H,W)
ClassGrid resize_grid_nearest(const ClassGrid& g, int64_t out_h, int64_t out_w);

Tensor crop_image(const Tensor& img, const Window& w);  // (C,H,W) -> (C,h,w)
ClassGrid crop_grid(const ClassGrid& g, const Window& w);

}  // namespace madt
