#include "madt/config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

namespace madt {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

ordered_json config_to_ordered_json(const TrainConfig& c) {
  ordered_json j;
  j["version"] = 1;
  j["seed"] = c.seed;
  j["steps"] = c.steps;
  j["width_multiplier"] = c.width_multiplier;
  j["denorm"] = c.use_fate ? "fate" : "fade";
  j["global_crop"] = c.global_crop;
  j["local_ratio"] = c.local_ratio;
  j["overlap_threshold"] = c.threshold;
  j["max_retries"] = c.max_retries;
  j["local_batch"] = c.local_batch;
  j["base_height"] = c.base_height;
  j["mask_discriminator"] = c.mask_discriminator;
  j["use_local_discriminator"] = c.use_local_discriminator;
  j["sampling"] = c.sampling == TrainConfig::Sampling::Similarity ? "similarity" : "random";
  j["lr0"] = static_cast<double>(c.lr0);
  j["lr_floor"] = static_cast<double>(c.lr_floor);
  j["decay_every_epochs"] = c.decay_every;
  j["epoch_len"] = c.epoch_len;
  j["adam_beta1"] = static_cast<double>(c.adam.beta1);
  j["adam_beta2"] = static_cast<double>(c.adam.beta2);
  j["adam_eps"] = static_cast<double>(c.adam.eps);
  j["lambda_madv_global"] = static_cast<double>(c.weights.madv_global);
  j["lambda_adv_local"] = static_cast<double>(c.weights.adv_local);
  j["lambda_perc"] = static_cast<double>(c.weights.perc);
  j["lambda_rp"] = static_cast<double>(c.weights.rp);
  j["checkpoint_every"] = c.checkpoint_every;
  return j;
}

}  // namespace

std::string TrainConfig::to_json() const { return config_to_ordered_json(*this).dump(2); }

std::string default_train_config_json() { return TrainConfig{}.to_json(); }

TrainConfig parse_train_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw_config(ErrCode::BadFile, std::string("config parse error: ") + e.what());
  }
  if (!j.is_object()) throw_config(ErrCode::BadFile, "config must be a JSON object");

  const std::set<std::string> known = {
      "version",          "seed",          "steps",
      "width_multiplier", "denorm",        "global_crop",
      "local_ratio",      "overlap_threshold", "max_retries",
      "local_batch",      "base_height",   "mask_discriminator",
      "use_local_discriminator", "sampling", "lr0",
      "lr_floor",         "decay_every_epochs", "epoch_len",
      "adam_beta1",       "adam_beta2",    "adam_eps",
      "lambda_madv_global", "lambda_adv_local", "lambda_perc",
      "lambda_rp",        "checkpoint_every"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key()))
      throw_config(ErrCode::UnknownKey, "unknown config key: \"" + it.key() + "\"");
  }
  if (j.contains("version") && j["version"].get<int64_t>() != 1)
    throw_config(ErrCode::RangeError, "unsupported config schema version");

  TrainConfig c;
  auto get = [&j](const char* key, auto& out) {
    if (j.contains(key)) out = j[key].get<std::decay_t<decltype(out)>>();
  };
  get("seed", c.seed);
  get("steps", c.steps);
  get("width_multiplier", c.width_multiplier);
  if (j.contains("denorm")) {
    const std::string d = j["denorm"].get<std::string>();
    if (d == "fate")
      c.use_fate = true;
    else if (d == "fade")
      c.use_fate = false;
    else
      throw_config(ErrCode::RangeError, "denorm must be \"fate\" or \"fade\"");
  }
  get("global_crop", c.global_crop);
  get("local_ratio", c.local_ratio);
  get("overlap_threshold", c.threshold);
  get("max_retries", c.max_retries);
  get("local_batch", c.local_batch);
  get("base_height", c.base_height);
  get("mask_discriminator", c.mask_discriminator);
  get("use_local_discriminator", c.use_local_discriminator);
  if (j.contains("sampling")) {
    const std::string s = j["sampling"].get<std::string>();
    if (s == "similarity")
      c.sampling = TrainConfig::Sampling::Similarity;
    else if (s == "random")
      c.sampling = TrainConfig::Sampling::Random;
    else
      throw_config(ErrCode::RangeError, "sampling must be \"similarity\" or \"random\"");
  }
  double lr0 = c.lr0, lr_floor = c.lr_floor;
  get("lr0", lr0);
  get("lr_floor", lr_floor);
  c.lr0 = static_cast<real>(lr0);
  c.lr_floor = static_cast<real>(lr_floor);
  get("decay_every_epochs", c.decay_every);
  get("epoch_len", c.epoch_len);
  double b1 = c.adam.beta1, b2 = c.adam.beta2, eps = c.adam.eps;
  get("adam_beta1", b1);
  get("adam_beta2", b2);
  get("adam_eps", eps);
  c.adam.beta1 = static_cast<real>(b1);
  c.adam.beta2 = static_cast<real>(b2);
  c.adam.eps = static_cast<real>(eps);
  double wg = c.weights.madv_global, wl = c.weights.adv_local, wp = c.weights.perc, wr = c.weights.rp;
  get("lambda_madv_global", wg);
  get("lambda_adv_local", wl);
  get("lambda_perc", wp);
  get("lambda_rp", wr);
  c.weights.madv_global = static_cast<real>(wg);
  c.weights.adv_local = static_cast<real>(wl);
  c.weights.perc = static_cast<real>(wp);
  c.weights.rp = static_cast<real>(wr);
  get("checkpoint_every", c.checkpoint_every);

  c.validate();
  return c;
}

TrainConfig TrainConfig::from_json(const std::string& text) { return parse_train_config(text); }

TrainConfig load_train_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw_config(ErrCode::BadFile, "cannot open config file " + path);
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return parse_train_config(text);
}

}  // namespace madt
