#pragma once
// Feature-adaptive denormalization (FADE), its attention-gated extension
// (FATE), and the residual block built from them.
//
// The attention CNN takes concat(h, f), uses a hidden width equal to h's
// channel count, 3x3 kernels, and a final sigmoid. One attention map gates
// both gamma and beta.
#include <string>
#include <vector>

#include "madt/nn.hpp"

namespace madt {

struct FadeParams {
  Conv2dParams gamma_conv;  // 3x3, Cf -> Ch
  Conv2dParams beta_conv;   // 3x3, Cf -> Ch
  void collect(const std::string& prefix, ParamList& out) {
    gamma_conv.collect(prefix + ".gamma", out);
    beta_conv.collect(prefix + ".beta", out);
  }
};

struct AttentionParams {
  Conv2dParams conv1;  // 3x3, (Ch+Cf) -> Ch
  Conv2dParams conv2;  // 3x3, Ch -> Ch
  void collect(const std::string& prefix, ParamList& out) {
    conv1.collect(prefix + ".c1", out);
    conv2.collect(prefix + ".c2", out);
  }
};

FadeParams make_fade(int64_t f_ch, int64_t h_ch, Rng& rng, real gain = real(0.02));
AttentionParams make_attention(int64_t f_ch, int64_t h_ch, Rng& rng, real gain = real(0.02));

struct BoundConv {
  ConvVars v;
  const Conv2dParams* p = nullptr;
};
struct BoundFade {
  BoundConv gamma, beta;
};
struct BoundAttention {
  BoundConv c1, c2;
};

BoundConv bind(Tape& t, Conv2dParams& p, bool update_power);
BoundFade bind(Tape& t, FadeParams& p, bool update_power);
BoundAttention bind(Tape& t, AttentionParams& p, bool update_power);

Var apply_conv(const Var& x, const BoundConv& c, PadMode pm = PadMode::Zero);

// N(h) * gamma(f) + beta(f)
Var fade(const Var& h, const Var& f, const BoundFade& p, NormKind norm,
         PadMode pm = PadMode::Zero);
// sigmoid(conv2(lrelu(conv1(concat(h, f))))), values strictly in (0,1)
Var attention_map(const Var& h, const Var& f, const BoundAttention& a, PadMode pm = PadMode::Zero);
// N(h) * A(h,f) * gamma(f) + A(h,f) * beta(f)
Var fate(const Var& h, const Var& f, const BoundFade& p, const BoundAttention& a, NormKind norm,
         PadMode pm = PadMode::Zero);

// Residual block: main path (denorm -> lrelu(0.2) -> 3x3 conv) twice, skip
// path denorm -> 1x1 conv. Attention units present only in FATE mode.
struct FateResBlockParams {
  int64_t in_ch = 0, out_ch = 0, mid_ch = 0, f_ch = 0;
  bool use_attention = true;
  NormKind norm = NormKind::Batch;
  Conv2dParams conv0, conv1, conv_skip;
  FadeParams fade0, fade1, fade_skip;
  AttentionParams att0, att1, att_skip;
  void collect(const std::string& prefix, ParamList& out);
};

FateResBlockParams make_fate_resblock(int64_t in_ch, int64_t out_ch, int64_t f_ch,
                                      bool use_attention, NormKind norm, Rng& rng,
                                      real gain = real(0.02));

struct BoundFateBlock {
  const FateResBlockParams* p = nullptr;
  BoundConv conv0, conv1, conv_skip;
  BoundFade fade0, fade1, fade_skip;
  BoundAttention att0, att1, att_skip;
};

BoundFateBlock bind(Tape& t, FateResBlockParams& p, bool update_power);

// Attention maps produced during a forward pass, for diagnostics dumps.
struct AttentionTrace {
  std::vector<std::pair<std::string, Tensor>> maps;
};

Var fate_resblock(const Var& h, const Var& f, const BoundFateBlock& b, PadMode pm = PadMode::Zero,
                  AttentionTrace* trace = nullptr, const std::string& trace_name = {});

// Parameter leaves of a bound structure, in the same order as the matching
// params struct's collect() emits its trainable entries.
void collect_leaves(const BoundConv& c, std::vector<Var>& out);
void collect_leaves(const BoundFade& f, std::vector<Var>& out);
void collect_leaves(const BoundAttention& a, std::vector<Var>& out);
void collect_leaves(const BoundFateBlock& b, std::vector<Var>& out);

}  // namespace madt
