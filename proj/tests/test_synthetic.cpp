#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "madt/synthetic.hpp"

using namespace madt;

TEST_CASE("default color maps classify their own classes and A maps to same class") {
  BiasSpec spec = BiasSpec::default_spec();
  for (int64_t c = 0; c < spec.classes; ++c) {
    const auto& cb = spec.colors_b[static_cast<size_t>(c)];
    CHECK(classify_color_b(spec, cb[0], cb[1], cb[2]) == c);
    // each A color's nearest B color is the same class, so an untranslated
    // image cannot spuriously trip the biased-class detector
    const auto& ca = spec.colors_a[static_cast<size_t>(c)];
    CHECK(classify_color_b(spec, ca[0], ca[1], ca[2]) == c);
  }
}

TEST_CASE("segmentation matches rendered shapes exactly") {
  BiasSpec spec = BiasSpec::default_spec();
  spec.noise_std = 0;
  Rng rng(1);
  LabeledImage im = render_synthetic_image(spec, true, 32, rng);
  const int64_t hw = 32 * 32;
  for (int64_t p = 0; p < hw; ++p) {
    const auto& col = spec.colors_b[im.seg.ids[static_cast<size_t>(p)]];
    CHECK(im.image[p] == col[0]);
    CHECK(im.image[hw + p] == col[1]);
    CHECK(im.image[2 * hw + p] == col[2]);
  }
}

TEST_CASE("biased class is confined to the top half of domain B") {
  BiasSpec spec = BiasSpec::default_spec();
  Rng rng(2);
  int64_t b_bottom = 0, b_top = 0, a_bottom = 0;
  for (int i = 0; i < 500; ++i) {
    LabeledImage b = render_synthetic_image(spec, true, 32, rng);
    LabeledImage a = render_synthetic_image(spec, false, 32, rng);
    for (int64_t y = 0; y < 32; ++y)
      for (int64_t x = 0; x < 32; ++x) {
        if (b.seg.at(y, x) == spec.biased_class) (y < 16 ? b_top : b_bottom) += 1;
        if (a.seg.at(y, x) == spec.biased_class && y >= 16) ++a_bottom;
      }
  }
  CHECK(b_bottom == 0);
  CHECK(b_top > 0);
  CHECK(a_bottom > 0);  // domain A places it anywhere
}

TEST_CASE("biased-class row histogram concentrates in the top half (chi-square)") {
  BiasSpec spec = BiasSpec::default_spec();
  Rng rng(3);
  std::vector<double> rows(32, 0.0);
  double total = 0;
  for (int i = 0; i < 500; ++i) {
    LabeledImage b = render_synthetic_image(spec, true, 32, rng);
    for (int64_t y = 0; y < 32; ++y)
      for (int64_t x = 0; x < 32; ++x)
        if (b.seg.at(y, x) == spec.biased_class) {
          rows[static_cast<size_t>(y)] += 1;
          total += 1;
        }
  }
  REQUIRE(total > 0);
  // chi-square against the uniform-row null; dof=31, 0.999 quantile ~ 61.1
  double chi2 = 0;
  const double expect = total / 32.0;
  for (double o : rows) chi2 += (o - expect) * (o - expect) / expect;
  CHECK(chi2 > 61.1);
  double top_mass = 0;
  for (int y = 0; y < 16; ++y) top_mass += rows[static_cast<size_t>(y)];
  CHECK(top_mass == doctest::Approx(total));
}

TEST_CASE("disabling the bias gives domains differing only in colors") {
  BiasSpec spec = BiasSpec::default_spec();
  spec.bias_enabled = false;
  Rng r1(7), r2(7);
  LabeledImage a = render_synthetic_image(spec, false, 32, r1);
  LabeledImage b = render_synthetic_image(spec, true, 32, r2);
  CHECK(a.seg.ids == b.seg.ids);  // identical stream, identical placement
}

TEST_CASE("dataset generation is deterministic and sized") {
  BiasSpec spec = BiasSpec::default_spec();
  Rng r1(5), r2(5);
  SyntheticDataset d1 = gen_synthetic_dataset(spec, 8, 32, r1);
  SyntheticDataset d2 = gen_synthetic_dataset(spec, 8, 32, r2);
  REQUIRE(d1.domain_a.size() == 8);
  REQUIRE(d1.domain_b.size() == 8);
  for (size_t i = 0; i < 8; ++i) {
    CHECK(d1.domain_a[i].seg.ids == d2.domain_a[i].seg.ids);
    for (int64_t j = 0; j < d1.domain_a[i].image.numel(); ++j)
      CHECK(d1.domain_a[i].image[j] == d2.domain_a[i].image[j]);
  }
}

TEST_CASE("probe scores a perfect recolor as zero") {
  BiasSpec spec = BiasSpec::default_spec();
  Rng rng(6);
  LabeledImage a = render_synthetic_image(spec, false, 32, rng);
  Tensor recolored({3, 32, 32});
  const int64_t hw = 32 * 32;
  for (int64_t p = 0; p < hw; ++p) {
    const auto& col = spec.colors_b[a.seg.ids[static_cast<size_t>(p)]];
    for (int64_t c = 0; c < 3; ++c) recolored[c * hw + p] = col[static_cast<size_t>(c)];
  }
  HallucinationReport rep = hallucination_probe({recolored}, {a.seg}, spec);
  CHECK(rep.score == 0.0);
  CHECK(rep.offending == 0);
  CHECK(rep.total == hw);
}

TEST_CASE("probe on an all-biased-color image counts the non-biased source mass") {
  BiasSpec spec = BiasSpec::default_spec();
  Rng rng(8);
  LabeledImage a = render_synthetic_image(spec, false, 32, rng);
  const auto& biased_col = spec.colors_b[static_cast<size_t>(spec.biased_class)];
  Tensor flat({3, 32, 32});
  const int64_t hw = 32 * 32;
  for (int64_t p = 0; p < hw; ++p)
    for (int64_t c = 0; c < 3; ++c) flat[c * hw + p] = biased_col[static_cast<size_t>(c)];
  int64_t non_biased = 0;
  for (auto id : a.seg.ids) non_biased += id != spec.biased_class ? 1 : 0;
  HallucinationReport rep = hallucination_probe({flat}, {a.seg}, spec);
  CHECK(rep.score == doctest::Approx(static_cast<double>(non_biased) / hw));
}

TEST_CASE("probe detects an injected 5% corruption exactly") {
  BiasSpec spec = BiasSpec::default_spec();
  Rng rng(9);
  LabeledImage a = render_synthetic_image(spec, false, 32, rng);
  const int64_t hw = 32 * 32;
  Tensor img({3, 32, 32});
  for (int64_t p = 0; p < hw; ++p) {
    const auto& col = spec.colors_b[a.seg.ids[static_cast<size_t>(p)]];
    for (int64_t c = 0; c < 3; ++c) img[c * hw + p] = col[static_cast<size_t>(c)];
  }
  // corrupt exactly 5% of pixels with the biased color
  const int64_t k = hw / 20;
  std::set<int64_t> corrupted;
  Rng pick(10);
  while (static_cast<int64_t>(corrupted.size()) < k) corrupted.insert(pick.below(hw));
  const auto& bc = spec.colors_b[static_cast<size_t>(spec.biased_class)];
  int64_t applicable = 0;
  for (int64_t p : corrupted) {
    for (int64_t c = 0; c < 3; ++c) img[c * hw + p] = bc[static_cast<size_t>(c)];
    if (a.seg.ids[static_cast<size_t>(p)] != spec.biased_class) ++applicable;
  }
  HallucinationReport rep = hallucination_probe({img}, {a.seg}, spec);
  const double expect = static_cast<double>(applicable) / hw;
  CHECK(rep.score == doctest::Approx(expect).epsilon(1e-12));
  CHECK(std::abs(rep.score - expect) <= 0.005);  // the looser stated band
  // per-class contributions sum to the score
  double sum = 0;
  for (double v : rep.per_class) sum += v;
  CHECK(sum == doctest::Approx(rep.score).epsilon(1e-12));
}
