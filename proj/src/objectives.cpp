#include "madt/objectives.hpp"

#include <memory>

namespace madt {

std::pair<Var, Var> mask_pair(const Var& x, const Var& c, const Var& m) {
  if (x.value.dim(2) != m.value.dim(2) || x.value.dim(3) != m.value.dim(3) ||
      c.value.dim(2) != m.value.dim(2) || c.value.dim(3) != m.value.dim(3))
    throw_data(ErrCode::ShapeMismatch, "mask_pair: spatial shapes differ");
  Var mx = broadcast_to(m, x.value.shape());
  Var mc = broadcast_to(m, c.value.shape());
  return {mul(x, mx), mul(c, mc)};
}

Var hinge_d_loss(const PredictionSet& real_scores, const PredictionSet& fake_scores) {
  if (real_scores.maps.size() != fake_scores.maps.size())
    throw_data(ErrCode::ShapeMismatch, "hinge_d_loss: level counts differ");
  Var total;
  for (size_t l = 0; l < real_scores.maps.size(); ++l) {
    Var real_term = mean_all(relu(add_scalar(neg(real_scores.maps[l]), real(1))));
    Var fake_term = mean_all(relu(add_scalar(fake_scores.maps[l], real(1))));
    Var level = add(real_term, fake_term);
    total = total.defined() ? add(total, level) : level;
  }
  return scale(total, real(1) / static_cast<real>(real_scores.maps.size()));
}

Var hinge_g_loss(const PredictionSet& fake_scores) {
  Var total;
  for (const Var& map : fake_scores.maps) {
    Var level = mean_all(neg(map));
    total = total.defined() ? add(total, level) : level;
  }
  return scale(total, real(1) / static_cast<real>(fake_scores.maps.size()));
}

AdvLosses masked_global_adv(const GlobalDiscriminators& d, const Var& f_b, const Var& i_b,
                            const Var& c_a, const Var& c_b, const Var& m_ab, bool want_d,
                            bool want_g) {
  auto [ib_m, cb_m] = mask_pair(i_b, c_b, m_ab);
  auto [fb_m, ca_m] = mask_pair(f_b, c_a, m_ab);
  auto real_views = two_scale_views(ib_m, cb_m, m_ab);
  auto fake_views = two_scale_views(fb_m, ca_m, m_ab);

  AdvLosses out;
  const DiscriminatorBound* discs[2] = {&d.full, &d.half};
  if (want_d) {
    Var dl;
    for (size_t s = 0; s < 2; ++s) {
      PredictionSet real_scores = discriminator_forward(*discs[s], real_views[s].image, real_views[s].cond);
      PredictionSet fake_scores =
          discriminator_forward(*discs[s], stop_grad(fake_views[s].image), fake_views[s].cond);
      Var loss = hinge_d_loss(real_scores, fake_scores);
      dl = dl.defined() ? add(dl, loss) : loss;
    }
    out.d_loss = scale(dl, real(0.5));
  }
  if (want_g) {
    Var gl;
    for (size_t s = 0; s < 2; ++s) {
      PredictionSet fake_scores = discriminator_forward(*discs[s], fake_views[s].image, fake_views[s].cond);
      Var loss = hinge_g_loss(fake_scores);
      gl = gl.defined() ? add(gl, loss) : loss;
    }
    out.g_loss = scale(gl, real(0.5));
  }
  return out;
}

Var stack_patches(const Var& x, const std::vector<Window>& windows) {
  const int64_t B = static_cast<int64_t>(windows.size());
  Var acc;
  for (int64_t i = 0; i < B; ++i) {
    const Window& w = windows[static_cast<size_t>(i)];
    Var patch = crop2d(x, w.y, w.x, w.h, w.w);
    Var placed = insert_axis(patch, 0, i, B);
    acc = acc.defined() ? add(acc, placed) : placed;
  }
  return acc;
}

AdvLosses local_adv(const DiscriminatorBound& d_local, const PatchBatch& batch, const Var& f_b,
                    const Var& i_b, const Var& c_a, const Var& c_b, bool want_d, bool want_g) {
  std::vector<Window> src, tgt;
  for (const auto& [ws, wt] : batch.patches) {
    src.push_back(ws);
    tgt.push_back(wt);
  }
  Var real_img = stack_patches(i_b, tgt);
  Var real_cond = stack_patches(c_b, tgt);
  Var fake_img = stack_patches(f_b, src);
  Var fake_cond = stack_patches(c_a, src);

  AdvLosses out;
  if (want_d) {
    PredictionSet real_scores = discriminator_forward(d_local, real_img, real_cond);
    PredictionSet fake_scores = discriminator_forward(d_local, stop_grad(fake_img), fake_cond);
    out.d_loss = hinge_d_loss(real_scores, fake_scores);
  }
  if (want_g) {
    PredictionSet fake_scores = discriminator_forward(d_local, fake_img, fake_cond);
    out.g_loss = hinge_g_loss(fake_scores);
  }
  return out;
}

FeatureProvider default_feature_pyramid(uint64_t seed) {
  auto convs = std::make_shared<std::vector<Conv2dParams>>();
  Rng rng(splitmix64(seed));
  convs->push_back(make_conv(3, 8, 3, 2, false, rng, real(1.0)));
  convs->push_back(make_conv(8, 16, 3, 2, false, rng, real(1.0)));
  convs->push_back(make_conv(16, 32, 3, 2, false, rng, real(1.0)));
  FeatureProvider p;
  p.name = "pyramid3:" + std::to_string(seed);
  p.layer_weights = {real(1.0 / 3), real(1.0 / 3), real(1.0 / 3)};
  p.features = [convs](Tape& t, const Var& x) {
    std::vector<Var> feats;
    Var h = x;
    for (const auto& conv : *convs) {
      Var w = t.constant(conv.weight);
      Var b = t.constant(conv.bias);
      Var y = conv2d_raw(pad2d(h, 1, PadMode::Zero), w, conv.stride);
      Var b4 = broadcast_to(reshape(b, {1, conv.bias.dim(0), 1, 1}), y.value.shape());
      h = leaky_relu(add(y, b4), real(0.2));
      feats.push_back(h);
    }
    return feats;
  };
  return p;
}

FeatureProvider identity_feature_provider() {
  FeatureProvider p;
  p.name = "identity";
  p.layer_weights = {real(1)};
  p.features = [](Tape&, const Var& x) { return std::vector<Var>{x}; };
  return p;
}

Var perceptual_loss(const FeatureProvider& provider, const Var& f_b, const Var& i_a) {
  require_same_shape(f_b.value, i_a.value, "perceptual_loss");
  Tape& t = *f_b.tape;
  auto fa = provider.features(t, f_b);
  auto fb = provider.features(t, i_a);
  if (fa.size() != provider.layer_weights.size())
    throw_data(ErrCode::ShapeMismatch, "feature provider layer/weight count mismatch");
  Var total;
  for (size_t l = 0; l < fa.size(); ++l) {
    Var term = scale(mean_all(vabs(sub(fa[l], fb[l]))), provider.layer_weights[l]);
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

Var r1_penalty(Tape& t, const std::function<PredictionSet(const Var&)>& forward,
               const Tensor& real_image, real lambda_rp) {
  Var x = t.leaf(real_image.clone());
  PredictionSet scores = forward(x);
  Var total;
  for (const Var& map : scores.maps) {
    Var s = sum_all(map);
    total = total.defined() ? add(total, s) : s;
  }
  Var g = t.gradients(total, {x})[0];
  const int64_t n_samples = real_image.dim(0);
  return scale(sum_all(square(g)), lambda_rp / static_cast<real>(n_samples));
}

Var total_g_loss(const GeneratorLossParts& parts, const LossWeights& w) {
  w.validate();
  Var total = scale(parts.madv_global, w.madv_global);
  total = add(total, scale(parts.adv_local, w.adv_local));
  total = add(total, scale(parts.perc, w.perc));
  return total;
}

}  // namespace madt
