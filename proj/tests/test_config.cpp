#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "madt/config.hpp"

using namespace madt;

TEST_CASE("minimal config fills documented defaults") {
  TrainConfig c = parse_train_config("{\"version\":1}");
  CHECK(c.global_crop == 352);
  CHECK(c.threshold == 0.5);
  CHECK(c.local_ratio == doctest::Approx(1.0 / 8));
  CHECK(c.local_batch == 32);
  CHECK(c.lr0 == doctest::Approx(1e-4));
  CHECK(c.lr_floor == doctest::Approx(1.25e-5));
  CHECK(c.decay_every == 3);
  CHECK(c.weights.madv_global == doctest::Approx(1.0));
  CHECK(c.weights.adv_local == doctest::Approx(1.0));
  CHECK(c.weights.perc == doctest::Approx(1.0));
  CHECK(c.weights.rp == doctest::Approx(0.03));
  CHECK(c.adam.beta1 == doctest::Approx(0.9));
  CHECK(c.adam.beta2 == doctest::Approx(0.999));
  CHECK(c.use_fate);
  CHECK(c.mask_discriminator);
  CHECK(c.sampling == TrainConfig::Sampling::Similarity);
}

TEST_CASE("unknown key is rejected by name") {
  try {
    parse_train_config("{\"version\":1,\"threshold_typo\":0.5}");
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrCode::UnknownKey);
    CHECK(std::string(e.what()).find("threshold_typo") != std::string::npos);
    CHECK(e.exit_code() == 2);
  }
}

TEST_CASE("out-of-range threshold raises RangeError") {
  try {
    parse_train_config("{\"version\":1,\"overlap_threshold\":1.5}");
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.code() == ErrCode::RangeError);
  }
}

TEST_CASE("bad version and bad json are config errors") {
  CHECK_THROWS_AS(parse_train_config("{\"version\":3}"), Error);
  CHECK_THROWS_AS(parse_train_config("not json"), Error);
}

TEST_CASE("round-trip through to_json preserves every field") {
  TrainConfig c;
  c.seed = 1234;
  c.steps = 77;
  c.width_multiplier = 0.25;
  c.use_fate = false;
  c.global_crop = 64;
  c.local_ratio = 0.25;
  c.threshold = 0.4;
  c.mask_discriminator = false;
  c.sampling = TrainConfig::Sampling::Random;
  c.weights.rp = real(0.05);
  c.checkpoint_every = 10;
  TrainConfig back = TrainConfig::from_json(c.to_json());
  CHECK(back.seed == c.seed);
  CHECK(back.steps == c.steps);
  CHECK(back.width_multiplier == c.width_multiplier);
  CHECK(back.use_fate == c.use_fate);
  CHECK(back.global_crop == c.global_crop);
  CHECK(back.local_ratio == c.local_ratio);
  CHECK(back.threshold == c.threshold);
  CHECK(back.mask_discriminator == c.mask_discriminator);
  CHECK((back.sampling == c.sampling));
  CHECK(back.weights.rp == doctest::Approx(c.weights.rp));
  CHECK(back.checkpoint_every == c.checkpoint_every);
}

TEST_CASE("default schema lists every known key") {
  const std::string schema = default_train_config_json();
  for (const char* key :
       {"version", "seed", "steps", "width_multiplier", "denorm", "global_crop", "local_ratio",
        "overlap_threshold", "max_retries", "local_batch", "base_height", "mask_discriminator",
        "use_local_discriminator", "sampling", "lr0", "lr_floor", "decay_every_epochs", "epoch_len",
        "adam_beta1", "adam_beta2", "adam_eps", "lambda_madv_global", "lambda_adv_local",
        "lambda_perc", "lambda_rp", "checkpoint_every"}) {
    CHECK(schema.find("\"" + std::string(key) + "\"") != std::string::npos);
  }
}
