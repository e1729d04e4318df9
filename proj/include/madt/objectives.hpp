#pragma once
// Adversarial objectives: masked global hinge loss on two scales, unmasked
// local patch loss, perceptual loss over a pluggable feature provider, the
// gradient penalty on real inputs, and the weighted total.
#include <functional>
#include <string>
#include <vector>

#include "madt/nets.hpp"
#include "madt/sampling.hpp"

namespace madt {

struct LossWeights {
  real madv_global = real(1.0);
  real adv_local = real(1.0);
  real perc = real(1.0);
  real rp = real(0.03);
  void validate() const {
    if (madv_global < 0 || adv_local < 0 || perc < 0 || rp < 0)
      throw_config(ErrCode::RangeError, "loss weights must be non-negative");
  }
};

// Hadamard-masks an image/condition pair; masked pixels become exactly zero.
std::pair<Var, Var> mask_pair(const Var& x, const Var& c, const Var& m);

Var hinge_d_loss(const PredictionSet& real_scores, const PredictionSet& fake_scores);
Var hinge_g_loss(const PredictionSet& fake_scores);

// The pair of global discriminators, one per scale.
struct GlobalDiscriminators {
  DiscriminatorBound full, half;
};

struct AdvLosses {
  Var d_loss, g_loss;
};

// Masked conditional adversarial loss at two scales (hinge form). Real
// branch: (i_b, c_b) masked; fake branch: (f_b, c_a) masked. The fake input
// to the d-loss is detached; the g-loss keeps the full tape. Scale losses are
// averaged.
AdvLosses masked_global_adv(const GlobalDiscriminators& d, const Var& f_b, const Var& i_b,
                            const Var& c_a, const Var& c_b, const Var& m_ab, bool want_d = true,
                            bool want_g = true);

// Unmasked local loss over a batch of patch windows cut from the crops.
AdvLosses local_adv(const DiscriminatorBound& d_local, const PatchBatch& batch, const Var& f_b,
                    const Var& i_b, const Var& c_a, const Var& c_b, bool want_d = true,
                    bool want_g = true);

// Stacks patch crops along the batch axis.
Var stack_patches(const Var& x, const std::vector<Window>& windows);

struct FeatureProvider {
  std::string name;
  std::vector<real> layer_weights;
  std::function<std::vector<Var>(Tape&, const Var&)> features;
};

// Frozen random 3-level convolutional pyramid; deterministic for a seed.
FeatureProvider default_feature_pyramid(uint64_t seed);
FeatureProvider identity_feature_provider();

// sum_l w_l * mean |phi_l(f_b) - phi_l(i_a)|
Var perceptual_loss(const FeatureProvider& provider, const Var& f_b, const Var& i_a);

// lambda_rp * mean over samples of squared gradient norm of the score sum
// w.r.t. the (masked) real image input. `forward` maps the taped image leaf
// to a PredictionSet.
Var r1_penalty(Tape& t, const std::function<PredictionSet(const Var&)>& forward,
               const Tensor& real_image, real lambda_rp);

struct GeneratorLossParts {
  Var madv_global, adv_local, perc;
};
Var total_g_loss(const GeneratorLossParts& parts, const LossWeights& w);

}  // namespace madt
