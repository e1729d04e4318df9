#include "madt/denorm.hpp"

#include <algorithm>

namespace madt {

FadeParams make_fade(int64_t f_ch, int64_t h_ch, Rng& rng, real gain) {
  FadeParams p;
  p.gamma_conv = make_conv(f_ch, h_ch, 3, 1, false, rng, gain);
  p.beta_conv = make_conv(f_ch, h_ch, 3, 1, false, rng, gain);
  return p;
}

AttentionParams make_attention(int64_t f_ch, int64_t h_ch, Rng& rng, real gain) {
  AttentionParams p;
  p.conv1 = make_conv(h_ch + f_ch, h_ch, 3, 1, false, rng, gain);
  p.conv2 = make_conv(h_ch, h_ch, 3, 1, false, rng, gain);
  return p;
}

BoundConv bind(Tape& t, Conv2dParams& p, bool update_power) {
  return {bind_conv(t, p, update_power), &p};
}
BoundFade bind(Tape& t, FadeParams& p, bool update_power) {
  return {bind(t, p.gamma_conv, update_power), bind(t, p.beta_conv, update_power)};
}
BoundAttention bind(Tape& t, AttentionParams& p, bool update_power) {
  return {bind(t, p.conv1, update_power), bind(t, p.conv2, update_power)};
}

Var apply_conv(const Var& x, const BoundConv& c, PadMode pm) { return conv_apply(x, c.v, *c.p, pm); }

namespace {
void require_aligned(const Var& h, const Var& f, const char* op) {
  if (h.value.dim(2) != f.value.dim(2) || h.value.dim(3) != f.value.dim(3) ||
      h.value.dim(0) != f.value.dim(0))
    throw_data(ErrCode::ShapeMismatch, std::string(op) + ": h " + shape_str(h.value.shape()) +
                                           " vs f " + shape_str(f.value.shape()));
}
}  // namespace

Var fade(const Var& h, const Var& f, const BoundFade& p, NormKind norm, PadMode pm) {
  require_aligned(h, f, "fade");
  Var nh = apply_norm(h, norm);
  Var gamma = apply_conv(f, p.gamma, pm);
  Var beta = apply_conv(f, p.beta, pm);
  return add(mul(nh, gamma), beta);
}

Var attention_map(const Var& h, const Var& f, const BoundAttention& a, PadMode pm) {
  require_aligned(h, f, "attention");
  Var z = concat_channels({h, f});
  Var hidden = leaky_relu(apply_conv(z, a.c1, pm), real(0.2));
  return sigmoid(apply_conv(hidden, a.c2, pm));
}

Var fate(const Var& h, const Var& f, const BoundFade& p, const BoundAttention& a, NormKind norm,
         PadMode pm) {
  require_aligned(h, f, "fate");
  Var nh = apply_norm(h, norm);
  Var att = attention_map(h, f, a, pm);
  Var gamma = apply_conv(f, p.gamma, pm);
  Var beta = apply_conv(f, p.beta, pm);
  return add(mul(mul(nh, att), gamma), mul(att, beta));
}

void FateResBlockParams::collect(const std::string& prefix, ParamList& out) {
  conv0.collect(prefix + ".conv0", out);
  conv1.collect(prefix + ".conv1", out);
  conv_skip.collect(prefix + ".skip", out);
  fade0.collect(prefix + ".fade0", out);
  fade1.collect(prefix + ".fade1", out);
  fade_skip.collect(prefix + ".fadeS", out);
  if (use_attention) {
    att0.collect(prefix + ".att0", out);
    att1.collect(prefix + ".att1", out);
    att_skip.collect(prefix + ".attS", out);
  }
}

FateResBlockParams make_fate_resblock(int64_t in_ch, int64_t out_ch, int64_t f_ch,
                                      bool use_attention, NormKind norm, Rng& rng, real gain) {
  FateResBlockParams p;
  p.in_ch = in_ch;
  p.out_ch = out_ch;
  p.mid_ch = std::min(in_ch, out_ch);
  p.f_ch = f_ch;
  p.use_attention = use_attention;
  p.norm = norm;
  p.conv0 = make_conv(in_ch, p.mid_ch, 3, 1, true, rng, gain);
  p.conv1 = make_conv(p.mid_ch, out_ch, 3, 1, true, rng, gain);
  p.conv_skip = make_conv(in_ch, out_ch, 1, 1, true, rng, gain);
  p.fade0 = make_fade(f_ch, in_ch, rng, gain);
  p.fade1 = make_fade(f_ch, p.mid_ch, rng, gain);
  p.fade_skip = make_fade(f_ch, in_ch, rng, gain);
  if (use_attention) {
    p.att0 = make_attention(f_ch, in_ch, rng, gain);
    p.att1 = make_attention(f_ch, p.mid_ch, rng, gain);
    p.att_skip = make_attention(f_ch, in_ch, rng, gain);
  }
  return p;
}

BoundFateBlock bind(Tape& t, FateResBlockParams& p, bool update_power) {
  BoundFateBlock b;
  b.p = &p;
  b.conv0 = bind(t, p.conv0, update_power);
  b.conv1 = bind(t, p.conv1, update_power);
  b.conv_skip = bind(t, p.conv_skip, update_power);
  b.fade0 = bind(t, p.fade0, update_power);
  b.fade1 = bind(t, p.fade1, update_power);
  b.fade_skip = bind(t, p.fade_skip, update_power);
  if (p.use_attention) {
    b.att0 = bind(t, p.att0, update_power);
    b.att1 = bind(t, p.att1, update_power);
    b.att_skip = bind(t, p.att_skip, update_power);
  }
  return b;
}

namespace {
Var denorm_unit(const Var& h, const Var& f, const BoundFade& fd, const BoundAttention& at,
                bool use_attention, NormKind norm, PadMode pm, AttentionTrace* trace,
                const std::string& name) {
  if (!use_attention) return fade(h, f, fd, norm, pm);
  Var a = attention_map(h, f, at, pm);
  if (trace) trace->maps.emplace_back(name, a.value);
  Var nh = apply_norm(h, norm);
  Var gamma = apply_conv(f, fd.gamma, pm);
  Var beta = apply_conv(f, fd.beta, pm);
  return add(mul(mul(nh, a), gamma), mul(a, beta));
}
}  // namespace

void collect_leaves(const BoundConv& c, std::vector<Var>& out) {
  out.push_back(c.v.w_raw);
  out.push_back(c.v.b);
}
void collect_leaves(const BoundFade& f, std::vector<Var>& out) {
  collect_leaves(f.gamma, out);
  collect_leaves(f.beta, out);
}
void collect_leaves(const BoundAttention& a, std::vector<Var>& out) {
  collect_leaves(a.c1, out);
  collect_leaves(a.c2, out);
}
void collect_leaves(const BoundFateBlock& b, std::vector<Var>& out) {
  collect_leaves(b.conv0, out);
  collect_leaves(b.conv1, out);
  collect_leaves(b.conv_skip, out);
  collect_leaves(b.fade0, out);
  collect_leaves(b.fade1, out);
  collect_leaves(b.fade_skip, out);
  if (b.p->use_attention) {
    collect_leaves(b.att0, out);
    collect_leaves(b.att1, out);
    collect_leaves(b.att_skip, out);
  }
}

Var fate_resblock(const Var& h, const Var& f, const BoundFateBlock& b, PadMode pm,
                  AttentionTrace* trace, const std::string& trace_name) {
  require_aligned(h, f, "fate_resblock");
  const FateResBlockParams& p = *b.p;
  Var d0 = denorm_unit(h, f, b.fade0, b.att0, p.use_attention, p.norm, pm, trace, trace_name + ".0");
  Var m0 = apply_conv(leaky_relu(d0, real(0.2)), b.conv0, pm);
  Var d1 = denorm_unit(m0, f, b.fade1, b.att1, p.use_attention, p.norm, pm, trace, trace_name + ".1");
  Var m1 = apply_conv(leaky_relu(d1, real(0.2)), b.conv1, pm);
  Var ds = denorm_unit(h, f, b.fade_skip, b.att_skip, p.use_attention, p.norm, pm, trace,
                       trace_name + ".s");
  Var sk = apply_conv(ds, b.conv_skip, pm);
  return add(m1, sk);
}

}  // namespace madt
