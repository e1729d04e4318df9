#pragma once
// Synthetic two-domain dataset with a controllable spatial bias, plus the
// hallucination probe that scores translated images against the known
// domain-B color map.
//
// Both domains share the class vocabulary and shape statistics; they differ
// in the per-class color maps (the style gap) and in one biased class that
// domain B only ever places in the top half of the image.
#include <array>
#include <vector>

#include "madt/rng.hpp"
#include "madt/segmask.hpp"
#include "madt/tensor.hpp"

namespace madt {

struct BiasSpec {
  int64_t classes = 4;      // ids 0..classes-1, 0 is background
  int64_t biased_class = 3;  // confined to the top half in domain B
  bool bias_enabled = true;
  double appear_prob = 1.0;  // per non-background class per image
  int64_t shapes_min = 1, shapes_max = 2;
  enum class ShapeFamily { Rectangles, Discs, Mixed } family = ShapeFamily::Mixed;
  std::vector<std::array<real, 3>> colors_a, colors_b;  // size == classes
  real noise_std = real(0.02);

  static BiasSpec default_spec();
  void validate() const;
};

struct LabeledImage {
  Tensor image;  // (3,H,W) in [0,1]
  ClassGrid seg;
};

struct SyntheticDataset {
  std::vector<LabeledImage> domain_a, domain_b;
  BiasSpec spec;
};

LabeledImage render_synthetic_image(const BiasSpec& spec, bool domain_b, int64_t size, Rng& rng);
SyntheticDataset gen_synthetic_dataset(const BiasSpec& spec, int64_t n_images, int64_t size,
                                       Rng& rng);

// Nearest domain-B class color per pixel; a pixel offends when it classifies
// as the biased class while the source grid disagrees.
int64_t classify_color_b(const BiasSpec& spec, real r, real g, real b);

struct HallucinationReport {
  double score = 0;                  // offending pixel mass / total pixels
  std::vector<double> per_class;     // offending mass split by source class
  int64_t offending = 0, total = 0;
};

HallucinationReport hallucination_probe(const std::vector<Tensor>& translated,
                                        const std::vector<ClassGrid>& source_segs,
                                        const BiasSpec& spec);

}  // namespace madt
