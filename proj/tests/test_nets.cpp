#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "madt/nets.hpp"
#include "madt/segmask.hpp"

using namespace madt;

namespace {
Tensor random_tensor(Shape s, Rng& rng, real scl = 1) {
  Tensor t(std::move(s));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<real>(rng.normal()) * scl;
  return t;
}

Tensor random_onehot(int64_t d, int64_t h, int64_t w, Rng& rng) {
  ClassGrid g(h, w);
  for (auto& v : g.ids) v = static_cast<uint16_t>(rng.below(d));
  return onehot(g, d).to_tensor();
}

std::vector<int64_t> channels_with_prefix(const std::vector<LayerDesc>& desc,
                                          const std::string& prefix, const std::string& suffix) {
  std::map<int, int64_t> by_index;
  for (const auto& l : desc) {
    if (l.name.rfind(prefix, 0) != 0) continue;
    const std::string rest = l.name.substr(prefix.size());
    const size_t dot = rest.find('.');
    const std::string idx = dot == std::string::npos ? rest : rest.substr(0, dot);
    const std::string tail = dot == std::string::npos ? "" : rest.substr(dot + 1);
    if (!suffix.empty() && tail != suffix) continue;
    by_index[std::stoi(idx)] = l.out_ch;
  }
  std::vector<int64_t> out;
  for (auto& [i, c] : by_index) out.push_back(c);
  return out;
}
}  // namespace

TEST_CASE("descriptor filter lists match the configured widths") {
  for (double w : {1.0, 0.5}) {
    GeneratorConfig gc;
    gc.width_multiplier = w;
    gc.cond_channels = 8;
    auto desc = describe_generator(gc);
    auto blocks = channels_with_prefix(desc, "gen_block.", "conv1");
    std::vector<int64_t> expect_blocks;
    for (int64_t f : {1024, 1024, 1024, 512, 256, 128, 64, 64}) expect_blocks.push_back(llround(f * w));
    CHECK(blocks == expect_blocks);
    auto refine = channels_with_prefix(desc, "refine_block.", "conv1");
    CHECK(refine == std::vector<int64_t>{llround(64 * w), llround(64 * w)});
    auto enc = channels_with_prefix(desc, "gen_enc.", "");
    CHECK(enc == std::vector<int64_t>{llround(256 * w), llround(512 * w), llround(1024 * w)});
    auto cenc = channels_with_prefix(desc, "content_enc.", "");
    CHECK(cenc == std::vector<int64_t>{llround(64 * w), llround(64 * w)});
    auto cblocks = channels_with_prefix(desc, "content_block.", "conv1");
    std::vector<int64_t> expect_content;
    for (int64_t f : {64, 128, 256, 512, 1024, 1024, 1024, 1024}) expect_content.push_back(llround(f * w));
    CHECK(cblocks == expect_content);

    DiscriminatorConfig dc;
    dc.width_multiplier = w;
    dc.cond_channels = 8;
    auto ddesc = describe_discriminator(dc);
    auto downs = channels_with_prefix(ddesc, "down.", "");
    std::vector<int64_t> expect_down;
    for (int64_t f : {64, 128, 256, 512, 512}) expect_down.push_back(llround(f * w));
    CHECK(downs == expect_down);
    auto lats = channels_with_prefix(ddesc, "lateral.", "");
    CHECK(lats.size() == 4);
    for (int64_t c : lats) CHECK(c == llround(256 * w));
  }
}

TEST_CASE("built parameter shapes equal the descriptor closed form") {
  Rng rng(1);
  GeneratorConfig gc;
  gc.width_multiplier = 1.0 / 16;
  gc.cond_channels = 6;
  for (bool fate : {false, true}) {
    gc.use_fate = fate;
    GeneratorParams gp = build_generator(gc, rng);
    CHECK(gp.param_count() == closed_form_param_count(describe_generator(gc)));
  }
  DiscriminatorConfig dc;
  dc.width_multiplier = 1.0 / 16;
  dc.cond_channels = 6;
  DiscriminatorParams dp = build_discriminator(dc, rng);
  CHECK(dp.param_count() == closed_form_param_count(describe_discriminator(dc)));
}

TEST_CASE("desk-width FADE generator stays under two million parameters") {
  GeneratorConfig gc;
  gc.width_multiplier = 1.0 / 16;
  gc.cond_channels = 8;
  gc.use_fate = false;
  CHECK(closed_form_param_count(describe_generator(gc)) <= 2000000);
}

TEST_CASE("width 1/2 halves every filter count exactly") {
  GeneratorConfig full, half;
  full.cond_channels = half.cond_channels = 4;
  full.width_multiplier = 1.0;
  half.width_multiplier = 0.5;
  auto fd = describe_generator(full);
  auto hd = describe_generator(half);
  REQUIRE(fd.size() == hd.size());
  for (size_t i = 0; i < fd.size(); ++i) {
    if (fd[i].name == "to_rgb") continue;  // fixed 3-channel output
    CHECK(hd[i].out_ch * 2 == fd[i].out_ch);
  }
}

TEST_CASE("generator forward: output matches input size and is inside (-1,1)") {
  Rng rng(2);
  GeneratorConfig gc;
  gc.width_multiplier = 1.0 / 16;
  gc.cond_channels = 4;
  GeneratorParams gp = build_generator(gc, rng);
  for (int64_t s : {int64_t(16), int64_t(24)}) {
    Tape t;
    GeneratorBound gb = bind_generator(t, gp, false);
    Var img = t.leaf(random_tensor({1, 3, s, s}, rng, real(0.3)));
    Var cond = t.leaf(random_onehot(4, s, s, rng));
    Var out = generator_forward(gb, img, cond);
    CHECK(out.value.shape() == Shape{1, 3, s, s});
    for (int64_t i = 0; i < out.value.numel(); ++i) {
      CHECK(out.value[i] > -1);
      CHECK(out.value[i] < 1);
    }
  }
}

TEST_CASE("generator rejects sizes not divisible by the downsampling factor") {
  Rng rng(3);
  GeneratorConfig gc;
  gc.width_multiplier = 1.0 / 16;
  gc.cond_channels = 4;
  GeneratorParams gp = build_generator(gc, rng);
  Tape t;
  GeneratorBound gb = bind_generator(t, gp, false);
  Var img = t.leaf(random_tensor({1, 3, 12, 12}, rng));
  Var cond = t.leaf(random_onehot(4, 12, 12, rng));
  CHECK_THROWS_AS(generator_forward(gb, img, cond), Error);
}

TEST_CASE("generator forward is deterministic") {
  Rng rng(4);
  GeneratorConfig gc;
  gc.width_multiplier = 1.0 / 16;
  gc.cond_channels = 4;
  GeneratorParams gp = build_generator(gc, rng);
  Tensor img = random_tensor({1, 3, 16, 16}, rng, real(0.5));
  Tensor cond = random_onehot(4, 16, 16, rng);
  auto run = [&] {
    Tape t;
    GeneratorBound gb = bind_generator(t, gp, false);
    return generator_forward(gb, t.leaf(img), t.leaf(cond)).value;
  };
  Tensor a = run(), b = run();
  for (int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("generator wraparound shift equivariance") {
  // With circular padding the whole network commutes with cyclic shifts that
  // are multiples of the total downsampling factor.
  Rng rng(5);
  GeneratorConfig gc;
  gc.width_multiplier = 1.0 / 32;
  gc.cond_channels = 3;
  GeneratorParams gp = build_generator(gc, rng);
  const int64_t s = 16, shift = 8;
  Tensor img = random_tensor({1, 3, s, s}, rng, real(0.4));
  Tensor cond = random_onehot(3, s, s, rng);
  auto roll = [s, shift](const Tensor& t) {
    Tensor out(t.shape());
    for (int64_t c = 0; c < t.dim(1); ++c)
      for (int64_t y = 0; y < s; ++y)
        for (int64_t x = 0; x < s; ++x)
          out.at4(0, c, (y + shift) % s, (x + shift) % s) = t.at4(0, c, y, x);
    return out;
  };
  Tape t1, t2;
  Var o1 = generator_forward(bind_generator(t1, gp, false), t1.leaf(img), t1.leaf(cond),
                             PadMode::Circular);
  Var o2 = generator_forward(bind_generator(t2, gp, false), t2.leaf(roll(img)), t2.leaf(roll(cond)),
                             PadMode::Circular);
  Tensor rolled = roll(o1.value);
  for (int64_t i = 0; i < rolled.numel(); ++i)
    CHECK(std::abs(rolled[i] - o2.value[i]) <= 1e-3);
}

TEST_CASE("tiny generator gradcheck") {
  Rng rng(6);
  GeneratorConfig gc;
  gc.width_multiplier = 1.0 / 32;
  gc.cond_channels = 2;
  GeneratorParams gp = build_generator(gc, rng);
  Tensor cond = random_onehot(2, 16, 16, rng);
  Tensor img0 = random_tensor({1, 3, 16, 16}, rng, real(0.3));
  auto f = [&](Tape& t, const Var& img) {
    GeneratorBound gb = bind_generator(t, gp, false);
    return mean_all(square(generator_forward(gb, img, t.constant(cond))));
  };
  CHECK(finite_diff_check(f, img0, 1e-5) <= 1e-4);
}

TEST_CASE("discriminator emits exactly three maps with doubling sizes") {
  Rng rng(7);
  DiscriminatorConfig dc;
  dc.width_multiplier = 1.0 / 16;
  dc.cond_channels = 4;
  DiscriminatorParams dp = build_discriminator(dc, rng);
  Tape t;
  DiscriminatorBound db = bind_discriminator(t, dp, false);
  Var img = t.leaf(random_tensor({1, 3, 64, 64}, rng, real(0.4)));
  Var cond = t.leaf(random_onehot(4, 64, 64, rng));
  PredictionSet ps = discriminator_forward(db, img, cond);
  REQUIRE(ps.maps.size() == 3);
  CHECK(ps.maps[0].value.shape() == Shape{1, 1, 4, 4});
  CHECK(ps.maps[1].value.shape() == Shape{1, 1, 8, 8});
  CHECK(ps.maps[2].value.shape() == Shape{1, 1, 16, 16});
}

TEST_CASE("discriminator works on tiny local patches") {
  Rng rng(8);
  DiscriminatorConfig dc;
  dc.width_multiplier = 1.0 / 16;
  dc.cond_channels = 4;
  DiscriminatorParams dp = build_discriminator(dc, rng);
  Tape t;
  DiscriminatorBound db = bind_discriminator(t, dp, false);
  Var img = t.leaf(random_tensor({5, 3, 4, 4}, rng, real(0.4)));
  Var cond = t.leaf(Tensor::full({5, 4, 4, 4}, real(0.25)));
  PredictionSet ps = discriminator_forward(db, img, cond);
  CHECK(ps.maps.size() == 3);
  for (auto& m : ps.maps) CHECK(m.value.dim(0) == 5);
}

TEST_CASE("zeroing the segmentation branch leaves the plain score path") {
  Rng rng(9);
  DiscriminatorConfig dc;
  dc.width_multiplier = 1.0 / 16;
  dc.cond_channels = 4;
  DiscriminatorParams dp = build_discriminator(dc, rng);
  for (auto& c : dp.seg_convs) {
    for (int64_t i = 0; i < c.weight.numel(); ++i) c.weight[i] = 0;
    for (int64_t i = 0; i < c.bias.numel(); ++i) c.bias[i] = 0;
  }
  Tensor img = random_tensor({1, 3, 32, 32}, rng, real(0.4));
  Tensor cond1 = random_onehot(4, 32, 32, rng);
  Tensor cond2 = random_onehot(4, 32, 32, rng);
  Tape t;
  DiscriminatorBound db = bind_discriminator(t, dp, false);
  PredictionSet a = discriminator_forward(db, t.leaf(img), t.leaf(cond1));
  PredictionSet b = discriminator_forward(db, t.leaf(img), t.leaf(cond2));
  for (size_t l = 0; l < a.maps.size(); ++l)
    for (int64_t i = 0; i < a.maps[l].value.numel(); ++i)
      CHECK(a.maps[l].value[i] == doctest::Approx(b.maps[l].value[i]).epsilon(1e-12));
}

TEST_CASE("condition permutation with matching embed permutation keeps scores") {
  // Relabeling classes while permuting the embed conv's input channels the
  // same way must leave every score unchanged.
  Rng rng(10);
  DiscriminatorConfig dc;
  dc.width_multiplier = 1.0 / 16;
  dc.cond_channels = 2;
  DiscriminatorParams dp = build_discriminator(dc, rng);
  Tensor img = random_tensor({1, 3, 32, 32}, rng, real(0.4));
  ClassGrid g(32, 32);
  for (auto& v : g.ids) v = static_cast<uint16_t>(rng.below(2));
  Tensor cond = onehot(g, 2).to_tensor();
  Tape t;
  DiscriminatorBound db = bind_discriminator(t, dp, false);
  PredictionSet base = discriminator_forward(db, t.leaf(img), t.leaf(cond));

  // swap classes 0 and 1 in both the condition and the embed weights
  ClassGrid swapped(32, 32);
  for (size_t i = 0; i < g.ids.size(); ++i) swapped.ids[i] = static_cast<uint16_t>(1 - g.ids[i]);
  DiscriminatorParams dp2 = dp;
  Tensor w = dp.seg_embed.weight.clone();
  const int64_t co = w.dim(0);
  for (int64_t o = 0; o < co; ++o) {
    const real tmp = w.at4(o, 0, 0, 0);
    w.at4(o, 0, 0, 0) = w.at4(o, 1, 0, 0);
    w.at4(o, 1, 0, 0) = tmp;
  }
  dp2.seg_embed.weight = w;
  Tape t2;
  DiscriminatorBound db2 = bind_discriminator(t2, dp2, false);
  PredictionSet perm = discriminator_forward(db2, t2.leaf(img), t2.leaf(onehot(swapped, 2).to_tensor()));
  for (size_t l = 0; l < base.maps.size(); ++l)
    for (int64_t i = 0; i < base.maps[l].value.numel(); ++i)
      CHECK(base.maps[l].value[i] == doctest::Approx(perm.maps[l].value[i]).epsilon(1e-9));
}

TEST_CASE("discriminator scores depend on the condition") {
  Rng rng(11);
  DiscriminatorConfig dc;
  dc.width_multiplier = 1.0 / 16;
  dc.cond_channels = 3;
  DiscriminatorParams dp = build_discriminator(dc, rng);
  Tensor img = random_tensor({1, 3, 32, 32}, rng, real(0.4));
  ClassGrid g(32, 32);
  for (auto& v : g.ids) v = static_cast<uint16_t>(rng.below(3));
  ClassGrid permuted(32, 32);
  for (size_t i = 0; i < g.ids.size(); ++i) permuted.ids[i] = static_cast<uint16_t>((g.ids[i] + 1) % 3);
  Tape t;
  DiscriminatorBound db = bind_discriminator(t, dp, false);
  PredictionSet a = discriminator_forward(db, t.leaf(img), t.leaf(onehot(g, 3).to_tensor()));
  PredictionSet b = discriminator_forward(db, t.leaf(img), t.leaf(onehot(permuted, 3).to_tensor()));
  double delta = 0;
  for (size_t l = 0; l < a.maps.size(); ++l)
    for (int64_t i = 0; i < a.maps[l].value.numel(); ++i)
      delta += std::abs(a.maps[l].value[i] - b.maps[l].value[i]);
  CHECK(delta > 0);
}

TEST_CASE("tiny discriminator gradcheck through all three levels") {
  Rng rng(12);
  DiscriminatorConfig dc;
  dc.width_multiplier = 1.0 / 32;
  dc.cond_channels = 2;
  DiscriminatorParams dp = build_discriminator(dc, rng);
  Tensor cond = random_onehot(2, 16, 16, rng);
  Tensor img0 = random_tensor({1, 3, 16, 16}, rng, real(0.4));
  auto f = [&](Tape& t, const Var& img) {
    DiscriminatorBound db = bind_discriminator(t, dp, false);
    PredictionSet ps = discriminator_forward(db, img, t.constant(cond));
    Var total = mean_all(ps.maps[0]);
    for (size_t l = 1; l < ps.maps.size(); ++l) total = add(total, mean_all(ps.maps[l]));
    return sum_all(square(total));
  };
  CHECK(finite_diff_check(f, img0, 1e-5) <= 1e-4);
}

TEST_CASE("two_scale_views halves sizes and preserves binary masks") {
  Rng rng(13);
  Tape t;
  Var img = t.leaf(random_tensor({1, 3, 32, 32}, rng, real(0.4)));
  ClassGrid g(32, 32);
  for (auto& v : g.ids) v = static_cast<uint16_t>(rng.below(3));
  Var cond = t.leaf(onehot(g, 3).to_tensor());
  AlignmentMask m(32, 32);
  for (auto& b : m.bits) b = rng.coin() ? 1 : 0;
  Var mask = t.leaf(m.to_tensor());
  auto views = two_scale_views(img, cond, mask);
  REQUIRE(views.size() == 2);
  CHECK(views[0].image.value.dim(2) == 32);
  CHECK(views[1].image.value.dim(2) == 16);
  for (int64_t i = 0; i < views[1].mask.value.numel(); ++i) {
    const real v = views[1].mask.value[i];
    CHECK((v == 0 || v == 1));
  }
  // one-hot survives nearest downscale
  for (int64_t y = 0; y < 16; ++y)
    for (int64_t x = 0; x < 16; ++x) {
      real sum = 0;
      for (int64_t c = 0; c < 3; ++c) sum += views[1].cond.value.at4(0, c, y, x);
      CHECK(sum == doctest::Approx(1.0));
    }
  // constant image unchanged by either resample
  Var flat = t.leaf(Tensor::full({1, 3, 8, 8}, real(0.25)));
  auto fv = two_scale_views(flat, flat, flat);
  for (int64_t i = 0; i < fv[1].image.value.numel(); ++i)
    CHECK(fv[1].image.value[i] == doctest::Approx(0.25));
}
