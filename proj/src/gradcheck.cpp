#include "madt/gradcheck.hpp"

#include <functional>

#include "madt/denorm.hpp"
#include "madt/nets.hpp"
#include "madt/objectives.hpp"

namespace madt {

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

struct Suite {
  int seeds;
  std::vector<GradCheckEntry> entries;

  void check(const std::string& name, Shape xshape, real xscale,
             const std::function<Var(Tape&, const Var&, Rng&)>& f, double eps = 1e-5,
             double tol = 1e-4) {
    GradCheckEntry e;
    e.name = name;
    e.tolerance = tol;
    for (int s = 0; s < seeds; ++s) {
      Rng rng(subseeded(0xc0ffee, static_cast<uint64_t>(s)).bits());
      Tensor x0 = random_tensor(xshape, rng, xscale);
      Rng aux = rng.substream(1);
      auto g = [&f, &aux](Tape& t, const Var& x) {
        Rng local = aux;  // identical params for every probe evaluation
        return f(t, x, local);
      };
      e.max_rel_err = std::max(e.max_rel_err, finite_diff_check(g, x0, eps));
    }
    e.pass = e.max_rel_err <= e.tolerance;
    entries.push_back(e);
  }
};

}  // namespace

std::vector<GradCheckEntry> gradcheck_all(int seeds) {
  Suite suite{seeds, {}};

  suite.check("elementwise_chain", {2, 5}, 1, [](Tape& t, const Var& x, Rng&) {
    Var q = add(square(x), scale(vabs(x), real(0.5)));
    return sum_all(mul(q, add_scalar(x, real(0.25))));
  });
  suite.check("sigmoid_tanh_exp", {3, 3}, real(0.5), [](Tape& t, const Var& x, Rng&) {
    return sum_all(mul(sigmoid(x), add(vtanh(x), vexp(scale(x, real(-0.5))))));
  });
  suite.check("relu_leaky", {4, 4}, 1, [](Tape& t, const Var& x, Rng&) {
    return sum_all(add(relu(x), leaky_relu(x, real(0.2))));
  });
  suite.check("reduce_broadcast", {2, 3, 4, 4}, 1, [](Tape& t, const Var& x, Rng&) {
    Var m = mean_axes(x, (1u << 2) | (1u << 3));
    return sum_all(square(sub(x, broadcast_to(m, x.value.shape()))));
  });
  suite.check("conv2d_k3_s1", {1, 2, 6, 6}, 1, [](Tape& t, const Var& x, Rng& rng) {
    Var w = t.constant(random_tensor({3, 2, 3, 3}, rng));
    return sum_all(vtanh(conv2d_raw(pad2d(x, 1, PadMode::Zero), w, 1)));
  });
  suite.check("conv2d_k3_s2", {1, 2, 6, 6}, 1, [](Tape& t, const Var& x, Rng& rng) {
    Var w = t.constant(random_tensor({3, 2, 3, 3}, rng));
    return sum_all(vtanh(conv2d_raw(pad2d(x, 1, PadMode::Zero), w, 2)));
  });
  suite.check("conv2d_k1", {1, 3, 5, 5}, 1, [](Tape& t, const Var& x, Rng& rng) {
    Var w = t.constant(random_tensor({2, 3, 1, 1}, rng));
    return sum_all(square(conv2d_raw(x, w, 1)));
  });
  suite.check("conv2d_weight_grad", {3, 2, 3, 3}, real(0.5), [](Tape& t, const Var& w, Rng& rng) {
    Var x = t.constant(random_tensor({1, 2, 6, 6}, rng));
    return sum_all(vtanh(conv2d_raw(pad2d(x, 1, PadMode::Zero), w, 1)));
  });
  suite.check("pad_circular", {1, 2, 4, 4}, 1, [](Tape& t, const Var& x, Rng&) {
    return sum_all(square(pad2d(x, 2, PadMode::Circular)));
  });
  suite.check("resize_nearest", {1, 2, 4, 4}, 1, [](Tape& t, const Var& x, Rng&) {
    return sum_all(square(add(resample(x, 2.0, ResizeMode::Nearest),
                              broadcast_to(t.constant(Tensor::zeros({1, 1, 8, 8})), {1, 2, 8, 8}))));
  });
  suite.check("resize_bilinear", {1, 2, 4, 4}, 1, [](Tape& t, const Var& x, Rng&) {
    Var up = resample(x, 2.0, ResizeMode::Bilinear);
    return sum_all(square(resample(up, 0.5, ResizeMode::Bilinear)));
  });
  suite.check("matmul_transpose", {3, 4}, 1, [](Tape& t, const Var& a, Rng& rng) {
    Var b = t.constant(random_tensor({2, 4}, rng));
    return sum_all(square(matmul(a, transpose2(b))));
  });
  suite.check("instance_norm", {2, 2, 4, 4}, 2, [](Tape& t, const Var& x, Rng&) {
    return sum_all(square(instance_norm(x)));
  });
  suite.check("batch_norm", {2, 2, 4, 4}, 2, [](Tape& t, const Var& x, Rng&) {
    return sum_all(square(batch_norm(x)));
  });
  suite.check("spectral_conv", {1, 2, 5, 5}, 1, [](Tape& t, const Var& x, Rng& rng) {
    Conv2dParams p = make_conv(2, 3, 3, 1, true, rng, real(0.4));
    for (int i = 0; i < 4; ++i) power_iteration(p);
    ConvVars cv = bind_conv(t, p, false);
    return sum_all(square(conv_apply(x, cv, p)));
  });
  suite.check("fade", {1, 2, 4, 4}, 1, [](Tape& t, const Var& h, Rng& rng) {
    FadeParams p = make_fade(2, 2, rng);
    Var f = t.constant(random_tensor({1, 2, 4, 4}, rng));
    return sum_all(square(fade(h, f, bind(t, p, false), NormKind::Instance)));
  });
  suite.check("attention", {1, 2, 4, 4}, 1, [](Tape& t, const Var& h, Rng& rng) {
    AttentionParams p = make_attention(2, 2, rng);
    Var f = t.constant(random_tensor({1, 2, 4, 4}, rng));
    return sum_all(square(attention_map(h, f, bind(t, p, false))));
  });
  suite.check("fate", {1, 2, 4, 4}, 1, [](Tape& t, const Var& h, Rng& rng) {
    FadeParams p = make_fade(2, 2, rng);
    AttentionParams a = make_attention(2, 2, rng);
    Var f = t.constant(random_tensor({1, 2, 4, 4}, rng));
    return sum_all(square(fate(h, f, bind(t, p, false), bind(t, a, false), NormKind::Batch)));
  });
  suite.check("fate_resblock", {1, 2, 4, 4}, 1, [](Tape& t, const Var& h, Rng& rng) {
    FateResBlockParams p = make_fate_resblock(2, 3, 2, true, NormKind::Batch, rng);
    Var f = t.constant(random_tensor({1, 2, 4, 4}, rng));
    return sum_all(square(fate_resblock(h, f, bind(t, p, false))));
  });
  suite.check("conv_hinge_pipeline", {1, 3, 8, 8}, real(0.4), [](Tape& t, const Var& x, Rng& rng) {
    Var w = t.constant(random_tensor({1, 3, 3, 3}, rng));
    PredictionSet fake;
    fake.maps.push_back(conv2d_raw(pad2d(x, 1, PadMode::Zero), w, 1));
    PredictionSet real_scores;
    real_scores.maps.push_back(t.constant(random_tensor({1, 1, 8, 8}, rng)));
    return add(hinge_d_loss(real_scores, fake), hinge_g_loss(fake));
  });
  suite.check("masked_global_adv_g", {1, 3, 8, 8}, real(0.4), [](Tape& t, const Var& fb, Rng& rng) {
    DiscriminatorConfig dc;
    dc.width_multiplier = 1.0 / 32;
    dc.cond_channels = 2;
    DiscriminatorParams full = build_discriminator(dc, rng);
    DiscriminatorParams half = build_discriminator(dc, rng);
    GlobalDiscriminators gd{bind_discriminator(t, full, false), bind_discriminator(t, half, false)};
    Var ib = t.constant(random_tensor({1, 3, 8, 8}, rng, real(0.4)));
    Var ca = t.constant(random_onehot(2, 8, 8, rng));
    Var cb = t.constant(random_onehot(2, 8, 8, rng));
    Tensor m({1, 1, 8, 8});
    for (int64_t i = 0; i < m.numel(); ++i) m[i] = rng.coin() ? 1 : 0;
    AdvLosses l = masked_global_adv(gd, fb, ib, ca, cb, t.constant(m), false, true);
    return l.g_loss;
  });
  suite.check("local_adv_g", {1, 3, 8, 8}, real(0.4), [](Tape& t, const Var& fb, Rng& rng) {
    DiscriminatorConfig dc;
    dc.width_multiplier = 1.0 / 32;
    dc.cond_channels = 2;
    DiscriminatorParams dp = build_discriminator(dc, rng);
    DiscriminatorBound db = bind_discriminator(t, dp, false);
    PatchBatch batch;
    batch.size = 4;
    for (int i = 0; i < 3; ++i) {
      Window w{rng.below(5), rng.below(5), 4, 4};
      batch.patches.push_back({w, w});
    }
    Var ib = t.constant(random_tensor({1, 3, 8, 8}, rng, real(0.4)));
    Var ca = t.constant(random_onehot(2, 8, 8, rng));
    Var cb = t.constant(random_onehot(2, 8, 8, rng));
    AdvLosses l = local_adv(db, batch, fb, ib, ca, cb, false, true);
    return l.g_loss;
  });
  suite.check("perceptual", {1, 3, 8, 8}, real(0.4), [](Tape& t, const Var& fb, Rng& rng) {
    FeatureProvider p = default_feature_pyramid(rng.bits());
    Var ia = t.constant(random_tensor({1, 3, 8, 8}, rng, real(0.4)));
    return perceptual_loss(p, fb, ia);
  });
  // second-order: penalty differentiated w.r.t. a discriminator weight
  suite.check(
      "r1_penalty", {2, 3, 3, 3}, real(0.3),
      [](Tape& t, const Var& w, Rng& rng) {
        Tensor img = random_tensor({1, 3, 10, 10}, rng, real(0.4));
        auto d_fn = [&](const Var& x) {
          PredictionSet p;
          p.maps.push_back(leaky_relu(conv2d_raw(pad2d(x, 1, PadMode::Zero), w, 1), real(0.2)));
          return p;
        };
        return r1_penalty(t, d_fn, img, real(0.03));
      },
      1e-6);
  return suite.entries;
}

}  // namespace madt
