#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <chrono>
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "madt/imageio.hpp"
#include "madt/training.hpp"

using namespace madt;
namespace fs = std::filesystem;

namespace {
struct TempDir {
  fs::path path;
  explicit TempDir(const char* tag) {
    path = fs::temp_directory_path() / (std::string("madt_train_") + tag + "_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.steps = 3;
  cfg.seed = 7;
  cfg.width_multiplier = 1.0 / 32;
  cfg.use_fate = false;
  cfg.global_crop = 16;
  cfg.local_ratio = 0.25;  // 4px patches
  cfg.local_batch = 4;
  cfg.checkpoint_every = 1000;
  cfg.epoch_len = 4;
  return cfg;
}

SyntheticDataset tiny_data(int n = 4, int64_t size = 32) {
  Rng rng(99);
  return gen_synthetic_dataset(BiasSpec::default_spec(), n, size, rng);
}
}  // namespace

TEST_CASE("lr schedule follows the closed form") {
  TrainConfig cfg;
  cfg.decay_every = 3;
  cfg.epoch_len = 10;
  CHECK(lr_schedule(0, 10, cfg) == doctest::Approx(1e-4));
  CHECK(lr_schedule(29, 10, cfg) == doctest::Approx(1e-4));   // epoch 2
  CHECK(lr_schedule(30, 10, cfg) == doctest::Approx(5e-5));   // epoch 3 -> halved
  CHECK(lr_schedule(60, 10, cfg) == doctest::Approx(2.5e-5));
  CHECK(lr_schedule(90, 10, cfg) == doctest::Approx(1.25e-5));
  CHECK(lr_schedule(120, 10, cfg) == doctest::Approx(1.25e-5));  // floor reached
  CHECK(lr_schedule(100000, 10, cfg) == doctest::Approx(1.25e-5));
}

TEST_CASE("lr sequence equals iterated halving for ten thousand steps") {
  TrainConfig cfg;
  cfg.decay_every = 3;
  const int64_t epoch_len = 7;
  for (int64_t step = 0; step < 10000; step += 97) {
    const int64_t halvings = (step / epoch_len) / cfg.decay_every;
    double lr = 1e-4;
    for (int64_t i = 0; i < halvings; ++i) lr = std::max(1.25e-5, lr * 0.5);
    CHECK(lr_schedule(step, epoch_len, cfg) == doctest::Approx(lr).epsilon(1e-15));
  }
}

TEST_CASE("a few training steps run and produce finite telemetry") {
  SyntheticDataset ds = tiny_data();
  Trainer tr(tiny_config(), ds.domain_a, ds.domain_b);
  for (int64_t s = 0; s < 3; ++s) {
    StepTelemetry tel = tr.step(s);
    CHECK(std::isfinite(tel.d_global));
    CHECK(std::isfinite(tel.g_global));
    CHECK(std::isfinite(tel.perc));
    CHECK(std::isfinite(tel.r1));
    CHECK(tel.r1 >= 0);
    CHECK(tel.lr == doctest::Approx(1e-4));
  }
}

TEST_CASE("training is deterministic across runs") {
  SyntheticDataset ds = tiny_data();
  auto run = [&] {
    Trainer tr(tiny_config(), ds.domain_a, ds.domain_b);
    std::string all;
    for (int64_t s = 0; s < 3; ++s) all += tr.step(s).to_json() + "\n";
    return all;
  };
  CHECK(run() == run());
}

TEST_CASE("random sampling mode and unmasked mode also step") {
  SyntheticDataset ds = tiny_data();
  TrainConfig cfg = tiny_config();
  cfg.sampling = TrainConfig::Sampling::Random;
  cfg.mask_discriminator = false;
  cfg.use_local_discriminator = false;
  cfg.steps = 2;
  Trainer tr(cfg, ds.domain_a, ds.domain_b);
  for (int64_t s = 0; s < 2; ++s) {
    StepTelemetry tel = tr.step(s);
    CHECK(std::isfinite(tel.d_global));
    CHECK(tel.d_local == 0.0);
    CHECK(tel.g_local == 0.0);
  }
}

TEST_CASE("run writes telemetry and checkpoints; checkpoints reload") {
  TempDir td("ckpt");
  SyntheticDataset ds = tiny_data();
  TrainConfig cfg = tiny_config();
  cfg.steps = 2;
  cfg.checkpoint_every = 1;
  Trainer tr(cfg, ds.domain_a, ds.domain_b);
  tr.run((td.path / "out").string());
  CHECK(fs::exists(td.path / "out" / "telemetry.jsonl"));
  CHECK(fs::exists(td.path / "out" / "ckpt_1" / "manifest.json"));
  CHECK(fs::exists(td.path / "out" / "ckpt_final" / "manifest.json"));

  Checkpoint ck = load_checkpoint((td.path / "out" / "ckpt_final").string());
  CHECK(ck.step == 2);
  CHECK(ck.cond_channels == tr.cond_channels());
  // reloaded parameters equal the trainer's
  ParamList a = tr.generator().params();
  ParamList b = ck.gen.params();
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].tensor->shape() == b[i].tensor->shape());
    for (int64_t j = 0; j < a[i].tensor->numel(); ++j)
      CHECK((*a[i].tensor)[j] == (*b[i].tensor)[j]);
  }
}

TEST_CASE("translate matches direct forward on pad-free inputs and pads otherwise") {
  SyntheticDataset ds = tiny_data(2, 32);
  TrainConfig cfg = tiny_config();
  cfg.steps = 1;
  Trainer tr(cfg, ds.domain_a, ds.domain_b);
  tr.step(0);
  GeneratorParams& gen = tr.generator();

  const LabeledImage& im = ds.domain_a[0];
  Tensor out = translate_image(gen, im.image, im.seg);
  CHECK(out.shape() == im.image.shape());
  Tensor out2 = translate_image(gen, im.image, im.seg);
  for (int64_t i = 0; i < out.numel(); ++i) CHECK(out[i] == out2[i]);

  // direct forward without padding must agree bitwise for pad-free sizes
  Tape t;
  GeneratorBound g = bind_generator(t, gen, false);
  Tensor pm1 = im.image.clone();
  for (int64_t i = 0; i < pm1.numel(); ++i) pm1[i] = pm1[i] * 2 - 1;
  Var fwd = generator_forward(g, t.constant(pm1.reshaped({1, 3, 32, 32})),
                              t.constant(onehot(im.seg, gen.cfg.cond_channels).to_tensor()));
  const int64_t hw = 32 * 32;
  for (int64_t i = 0; i < 3 * hw; ++i) {
    const real direct = std::clamp((fwd.value[i] + 1) / 2, real(0), real(1));
    CHECK(out[i] == direct);
  }

  // non-divisible size goes through padding and returns the original size
  Tensor odd({3, 30, 29});
  for (int64_t i = 0; i < odd.numel(); ++i) odd[i] = real(0.4);
  ClassGrid oseg(30, 29, 1);
  Tensor oout = translate_image(gen, odd, oseg);
  CHECK(oout.shape() == Shape{3, 30, 29});
}

TEST_CASE("skipped pairs are counted and do not update parameters") {
  // disjoint class sets: similarity sampling can never accept
  Rng rng(5);
  SyntheticDataset ds = tiny_data();
  std::vector<LabeledImage> b = ds.domain_b;
  for (auto& im : b)
    for (auto& id : im.seg.ids) id = static_cast<uint16_t>(id + 4);
  TrainConfig cfg = tiny_config();
  cfg.steps = 1;
  Trainer tr(cfg, ds.domain_a, b);
  Tensor before = tr.generator().to_rgb.weight.clone();
  StepTelemetry tel = tr.step(0);
  CHECK(tel.skipped);
  CHECK(tr.skipped_pairs() == 1);
  for (int64_t i = 0; i < before.numel(); ++i) CHECK(tr.generator().to_rgb.weight[i] == before[i]);
}

TEST_CASE("a 200-step tiny run finishes within a minute") {
  SyntheticDataset ds = tiny_data(8, 32);
  TrainConfig cfg = tiny_config();
  cfg.steps = 200;
  cfg.global_crop = 32;
  cfg.local_ratio = 1.0 / 8;
  cfg.local_batch = 32;
  const auto t0 = std::chrono::steady_clock::now();
  Trainer tr(cfg, ds.domain_a, ds.domain_b);
  for (int64_t s = 0; s < cfg.steps; ++s) tr.step(s);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(secs < 60.0);
}

TEST_CASE("dataset directory round-trip") {
  TempDir td("data");
  SyntheticDataset ds = tiny_data(2, 32);
  for (const std::string domain : {"domainA", "domainB"}) {
    fs::create_directories(td.path / domain / "images");
    fs::create_directories(td.path / domain / "segs");
  }
  auto dump = [&](const std::vector<LabeledImage>& v, const std::string& domain) {
    for (size_t i = 0; i < v.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "%04zu", i);
      write_ppm((td.path / domain / "images" / (std::string(name) + ".ppm")).string(), v[i].image);
      write_pgm((td.path / domain / "segs" / (std::string(name) + ".pgm")).string(), v[i].seg);
    }
  };
  dump(ds.domain_a, "domainA");
  dump(ds.domain_b, "domainB");
  auto a = load_domain_dir(td.path.string(), "domainA");
  REQUIRE(a.size() == 2);
  CHECK(a[0].seg.ids == ds.domain_a[0].seg.ids);
  for (int64_t i = 0; i < a[0].image.numel(); ++i)
    CHECK(std::abs(a[0].image[i] - ds.domain_a[0].image[i]) <= real(0.5) / 255 + real(1e-9));
}
