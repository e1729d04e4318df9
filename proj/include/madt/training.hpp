#pragma once
// End-to-end training: per-step D then G updates with the masked global loss
// on two scales, the local patch loss, the perceptual loss and the gradient
// penalty; stepwise-halved learning rate; JSONL telemetry; checkpoints as
// FTC1 tensor directories with a JSON manifest.
#include <optional>
#include <string>
#include <vector>

#include "madt/nets.hpp"
#include "madt/objectives.hpp"
#include "madt/synthetic.hpp"

namespace madt {

struct TrainConfig {
  int64_t steps = 20000;
  real lr0 = real(1e-4);
  real lr_floor = real(1.25e-5);
  int64_t decay_every = 3;  // epochs between halvings
  int64_t epoch_len = 0;    // 0 -> dataset size in image pairs
  int64_t global_crop = 352;
  double local_ratio = 1.0 / 8.0;
  double threshold = 0.5;
  int64_t max_retries = 100;
  int64_t local_batch = 32;
  int64_t base_height = 0;  // 0 -> inputs already share dimensions
  uint64_t seed = 0;
  double width_multiplier = 1.0 / 16.0;
  bool use_fate = true;
  bool mask_discriminator = true;
  bool use_local_discriminator = true;
  enum class Sampling { Similarity, Random } sampling = Sampling::Similarity;
  LossWeights weights;
  AdamConfig adam;
  int64_t checkpoint_every = 1000;

  void validate() const;
  SamplerConfig sampler() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
};

// lr = max(lr_floor, lr0 * 0.5^floor(epoch / decay_every))
real lr_schedule(int64_t step, int64_t epoch_len, const TrainConfig& cfg);

struct StepTelemetry {
  int64_t step = 0;
  double d_global = 0, d_local = 0, g_global = 0, g_local = 0, perc = 0, r1 = 0;
  double lr = 0;
  bool skipped = false;
  std::string to_json() const;
};

class Trainer {
 public:
  Trainer(TrainConfig cfg, std::vector<LabeledImage> domain_a, std::vector<LabeledImage> domain_b);

  StepTelemetry step(int64_t step_index);
  // Runs cfg.steps steps; writes telemetry.jsonl and periodic checkpoints
  // under out_dir (empty -> no files).
  void run(const std::string& out_dir);

  GeneratorParams& generator() { return gen_; }
  const TrainConfig& config() const { return cfg_; }
  int64_t skipped_pairs() const { return skipped_; }
  int64_t cond_channels() const { return d_; }
  void save_checkpoint(const std::string& dir, int64_t step);

 private:
  TrainConfig cfg_;
  std::vector<LabeledImage> dom_a_, dom_b_;
  int64_t d_ = 0;
  int64_t epoch_len_ = 0;
  GeneratorParams gen_;
  DiscriminatorParams d_full_, d_half_, d_local_;
  Adam opt_g_, opt_d_;
  FeatureProvider perc_;
  int64_t skipped_ = 0;

  ParamList gen_params_();
  ParamList disc_params_();
};

// Checkpoint I/O. The manifest records the config, step, lr, rng state and
// the tensor name -> file mapping.
struct Checkpoint {
  TrainConfig cfg;
  int64_t cond_channels = 0;
  int64_t step = 0;
  double lr = 0;
  std::string rng_state;
  GeneratorParams gen;
};

Checkpoint load_checkpoint(const std::string& dir);

// Full-image inference: pads to the generator's divisibility factor
// (edge replication), forwards, unpads; input and output are [0,1].
Tensor translate_image(GeneratorParams& gen, const Tensor& image01, const ClassGrid& seg,
                       AttentionTrace* trace = nullptr);

// Dataset directory layout: <root>/domainA/{images,segs}, matching stems.
std::vector<LabeledImage> load_domain_dir(const std::string& root, const std::string& domain);

}  // namespace madt
