#include "madt/nets.hpp"

#include <algorithm>
#include <cmath>

namespace madt {

int64_t scaled_channels(int64_t paper_count, double width_multiplier) {
  return std::max<int64_t>(1, std::llround(paper_count * width_multiplier));
}

namespace {

// Generator stream scale schedule: blocks 0..4 at 1/8, then nearest x2
// before blocks 5, 6 and 7; blocks 7..9 run at full resolution.
constexpr int kInjected = 8;
constexpr int kRefine = 2;

bool upsample_before_block(int k) { return k == 5 || k == 6 || k == 7; }

// Content stream: nearest x0.5 after blocks 0, 1, 2 (features are taken
// before the downsample, so f[0] is full resolution, f[3..7] are 1/8).
bool downsample_after_block(int k) { return k <= 2; }

void desc_conv(std::vector<LayerDesc>& out, const std::string& name, int64_t ci, int64_t co,
               int64_t k, int64_t stride = 1) {
  out.push_back({name, ci, co, k, stride});
}

void desc_plain_block(std::vector<LayerDesc>& out, const std::string& name, int64_t ci, int64_t co) {
  const int64_t cm = std::min(ci, co);
  desc_conv(out, name + ".conv0", ci, cm, 3);
  desc_conv(out, name + ".conv1", cm, co, 3);
  desc_conv(out, name + ".skip", ci, co, 1);
}

void desc_fade(std::vector<LayerDesc>& out, const std::string& name, int64_t cf, int64_t ch) {
  desc_conv(out, name + ".gamma", cf, ch, 3);
  desc_conv(out, name + ".beta", cf, ch, 3);
}

void desc_attention(std::vector<LayerDesc>& out, const std::string& name, int64_t cf, int64_t ch) {
  desc_conv(out, name + ".c1", ch + cf, ch, 3);
  desc_conv(out, name + ".c2", ch, ch, 3);
}

void desc_fate_block(std::vector<LayerDesc>& out, const std::string& name, int64_t ci, int64_t co,
                     int64_t cf, bool fate) {
  const int64_t cm = std::min(ci, co);
  desc_conv(out, name + ".conv0", ci, cm, 3);
  desc_conv(out, name + ".conv1", cm, co, 3);
  desc_conv(out, name + ".skip", ci, co, 1);
  desc_fade(out, name + ".fade0", cf, ci);
  desc_fade(out, name + ".fade1", cf, cm);
  desc_fade(out, name + ".fadeS", cf, ci);
  if (fate) {
    desc_attention(out, name + ".att0", cf, ci);
    desc_attention(out, name + ".att1", cf, cm);
    desc_attention(out, name + ".attS", cf, ci);
  }
}

}  // namespace

std::vector<LayerDesc> describe_generator(const GeneratorConfig& cfg) {
  if (cfg.cond_channels <= 0) throw_config(ErrCode::ConfigMismatch, "cond_channels must be set");
  if (cfg.gen_block_filters.size() != kInjected + kRefine ||
      cfg.content_filters.size() != kInjected)
    throw_config(ErrCode::ConfigMismatch, "filter list lengths do not match the block layout");
  std::vector<LayerDesc> out;
  const int64_t in_ch = 3 + cfg.cond_channels;
  int64_t c = in_ch;
  for (size_t i = 0; i < cfg.content_encoder_filters.size(); ++i) {
    const int64_t co = cfg.scaled(cfg.content_encoder_filters[i]);
    desc_conv(out, "content_enc." + std::to_string(i), c, co, 3);
    c = co;
  }
  for (size_t i = 0; i < cfg.content_filters.size(); ++i) {
    const int64_t co = cfg.scaled(cfg.content_filters[i]);
    desc_plain_block(out, "content_block." + std::to_string(i), c, co);
    c = co;
  }
  c = in_ch;
  for (size_t i = 0; i < cfg.gen_encoder_filters.size(); ++i) {
    const int64_t co = cfg.scaled(cfg.gen_encoder_filters[i]);
    desc_conv(out, "gen_enc." + std::to_string(i), c, co, 3, 2);
    c = co;
  }
  for (int k = 0; k < kInjected; ++k) {
    const int64_t co = cfg.scaled(cfg.gen_block_filters[static_cast<size_t>(k)]);
    const int64_t cf = cfg.scaled(cfg.content_filters[static_cast<size_t>(kInjected - 1 - k)]);
    if (cf != c)
      throw_config(ErrCode::ConfigMismatch,
                   "content filters misaligned with generator stream at block " + std::to_string(k));
    desc_fate_block(out, "gen_block." + std::to_string(k), c, co, cf, cfg.use_fate);
    c = co;
  }
  for (int k = 0; k < kRefine; ++k) {
    const int64_t co = cfg.scaled(cfg.gen_block_filters[static_cast<size_t>(kInjected + k)]);
    desc_plain_block(out, "refine_block." + std::to_string(k), c, co);
    c = co;
  }
  desc_conv(out, "to_rgb", c, 3, 3);
  return out;
}

std::vector<LayerDesc> describe_discriminator(const DiscriminatorConfig& cfg) {
  if (cfg.cond_channels <= 0) throw_config(ErrCode::ConfigMismatch, "cond_channels must be set");
  if (cfg.down_filters.size() != 5 || cfg.lateral_filters.size() != 4 || cfg.levels != 3 ||
      cfg.predict_filters.size() != 3 || cfg.seg_filters.size() != 3)
    throw_config(ErrCode::ConfigMismatch, "discriminator filter lists do not match the layout");
  std::vector<LayerDesc> out;
  int64_t c = 3;
  for (size_t i = 0; i < cfg.down_filters.size(); ++i) {
    const int64_t co = cfg.scaled(cfg.down_filters[i]);
    desc_conv(out, "down." + std::to_string(i), c, co, 3, 2);
    c = co;
  }
  for (size_t i = 0; i < cfg.lateral_filters.size(); ++i) {
    const int64_t ci = cfg.scaled(cfg.down_filters[i + 1]);
    desc_conv(out, "lateral." + std::to_string(i), ci, cfg.scaled(cfg.lateral_filters[i]), 1);
  }
  const int64_t lat = cfg.scaled(cfg.lateral_filters[0]);
  for (int64_t i = 0; i < cfg.levels; ++i) {
    const int64_t pf = cfg.scaled(cfg.predict_filters[static_cast<size_t>(i)]);
    desc_conv(out, "pred." + std::to_string(i), lat, pf, 3);
    desc_conv(out, "seg." + std::to_string(i), pf, cfg.scaled(cfg.seg_filters[static_cast<size_t>(i)]), 3);
    desc_conv(out, "score." + std::to_string(i), pf, 1, 3);
  }
  desc_conv(out, "seg_embed", cfg.cond_channels, cfg.scaled(cfg.seg_embed_filters), 1);
  return out;
}

int64_t closed_form_param_count(const std::vector<LayerDesc>& layers) {
  int64_t total = 0;
  for (const auto& l : layers) total += l.in_ch * l.out_ch * l.k * l.k + l.out_ch;
  return total;
}

void PlainResBlockParams::collect(const std::string& prefix, ParamList& out) {
  conv0.collect(prefix + ".conv0", out);
  conv1.collect(prefix + ".conv1", out);
  conv_skip.collect(prefix + ".skip", out);
}

namespace {
PlainResBlockParams make_plain_block(int64_t ci, int64_t co, NormKind norm, Rng& rng) {
  PlainResBlockParams p;
  p.in_ch = ci;
  p.out_ch = co;
  p.mid_ch = std::min(ci, co);
  p.norm = norm;
  p.conv0 = make_conv(ci, p.mid_ch, 3, 1, true, rng);
  p.conv1 = make_conv(p.mid_ch, co, 3, 1, true, rng);
  p.conv_skip = make_conv(ci, co, 1, 1, true, rng);
  return p;
}
}  // namespace

GeneratorParams build_generator(const GeneratorConfig& cfg, Rng& rng) {
  describe_generator(cfg);  // validates alignment
  GeneratorParams g;
  g.cfg = cfg;
  const int64_t in_ch = 3 + cfg.cond_channels;
  int64_t c = in_ch;
  for (int64_t f : cfg.content_encoder_filters) {
    g.content_enc.push_back(make_conv(c, cfg.scaled(f), 3, 1, true, rng));
    c = cfg.scaled(f);
  }
  for (int64_t f : cfg.content_filters) {
    g.content_blocks.push_back(make_plain_block(c, cfg.scaled(f), NormKind::Instance, rng));
    c = cfg.scaled(f);
  }
  c = in_ch;
  for (int64_t f : cfg.gen_encoder_filters) {
    g.gen_enc.push_back(make_conv(c, cfg.scaled(f), 3, 2, true, rng));
    c = cfg.scaled(f);
  }
  for (int k = 0; k < kInjected; ++k) {
    const int64_t co = cfg.scaled(cfg.gen_block_filters[static_cast<size_t>(k)]);
    const int64_t cf = cfg.scaled(cfg.content_filters[static_cast<size_t>(kInjected - 1 - k)]);
    g.gen_blocks.push_back(make_fate_resblock(c, co, cf, cfg.use_fate, NormKind::Batch, rng));
    c = co;
  }
  for (int k = 0; k < kRefine; ++k) {
    const int64_t co = cfg.scaled(cfg.gen_block_filters[static_cast<size_t>(kInjected + k)]);
    g.refine_blocks.push_back(make_plain_block(c, co, NormKind::Batch, rng));
    c = co;
  }
  g.to_rgb = make_conv(c, 3, 3, 1, false, rng);
  return g;
}

ParamList GeneratorParams::params() {
  ParamList out;
  for (size_t i = 0; i < content_enc.size(); ++i)
    content_enc[i].collect("content_enc." + std::to_string(i), out);
  for (size_t i = 0; i < content_blocks.size(); ++i)
    content_blocks[i].collect("content_block." + std::to_string(i), out);
  for (size_t i = 0; i < gen_enc.size(); ++i) gen_enc[i].collect("gen_enc." + std::to_string(i), out);
  for (size_t i = 0; i < gen_blocks.size(); ++i)
    gen_blocks[i].collect("gen_block." + std::to_string(i), out);
  for (size_t i = 0; i < refine_blocks.size(); ++i)
    refine_blocks[i].collect("refine_block." + std::to_string(i), out);
  to_rgb.collect("to_rgb", out);
  return out;
}

namespace {
int64_t count_trainable(ParamList list) {
  int64_t n = 0;
  for (auto& p : list)
    if (p.trainable) n += p.tensor->numel();
  return n;
}
}  // namespace

int64_t GeneratorParams::param_count() { return count_trainable(params()); }
int64_t DiscriminatorParams::param_count() { return count_trainable(params()); }

GeneratorBound bind_generator(Tape& t, GeneratorParams& p, bool update_power) {
  GeneratorBound b;
  b.p = &p;
  for (auto& cconv : p.content_enc) b.content_enc.push_back(bind(t, cconv, update_power));
  for (auto& blk : p.content_blocks) {
    BoundPlainBlock pb;
    pb.p = &blk;
    pb.conv0 = bind(t, blk.conv0, update_power);
    pb.conv1 = bind(t, blk.conv1, update_power);
    pb.conv_skip = bind(t, blk.conv_skip, update_power);
    b.content_blocks.push_back(pb);
  }
  for (auto& cconv : p.gen_enc) b.gen_enc.push_back(bind(t, cconv, update_power));
  for (auto& blk : p.gen_blocks) b.gen_blocks.push_back(bind(t, blk, update_power));
  for (auto& blk : p.refine_blocks) {
    BoundPlainBlock pb;
    pb.p = &blk;
    pb.conv0 = bind(t, blk.conv0, update_power);
    pb.conv1 = bind(t, blk.conv1, update_power);
    pb.conv_skip = bind(t, blk.conv_skip, update_power);
    b.refine_blocks.push_back(pb);
  }
  b.to_rgb = bind(t, p.to_rgb, update_power);
  return b;
}

namespace {
Var plain_resblock(const Var& x, const BoundPlainBlock& b, PadMode pm) {
  const NormKind norm = b.p->norm;
  Var m0 = apply_conv(leaky_relu(apply_norm(x, norm), real(0.2)), b.conv0, pm);
  Var m1 = apply_conv(leaky_relu(apply_norm(m0, norm), real(0.2)), b.conv1, pm);
  Var sk = apply_conv(apply_norm(x, norm), b.conv_skip, pm);
  return add(m1, sk);
}

Var encoder_conv(const Var& x, const BoundConv& c, PadMode pm) {
  return leaky_relu(instance_norm(apply_conv(x, c, pm)), real(0.2));
}

Var match_size(const Var& f, int64_t h, int64_t w) {
  if (f.value.dim(2) == h && f.value.dim(3) == w) return f;
  return resize2d(f, ResizeMode::Nearest, h, w);
}
}  // namespace

Var generator_forward(const GeneratorBound& g, const Var& image, const Var& cond, PadMode pm,
                      AttentionTrace* trace) {
  const GeneratorConfig& cfg = g.p->cfg;
  if (image.value.rank() != 4 || cond.value.rank() != 4 ||
      image.value.dim(2) != cond.value.dim(2) || image.value.dim(3) != cond.value.dim(3))
    throw_data(ErrCode::ShapeMismatch, "generator_forward: image/condition shapes differ");
  const int64_t H = image.value.dim(2), W = image.value.dim(3);
  if (H % GeneratorConfig::kDownFactor != 0 || W % GeneratorConfig::kDownFactor != 0)
    throw_data(ErrCode::DivisibilityError,
               "generator input size must be divisible by " + std::to_string(GeneratorConfig::kDownFactor));

  Var x = concat_channels({image, cond});
  Var cs = x;
  for (const auto& c : g.content_enc) cs = encoder_conv(cs, c, pm);
  std::vector<Var> feats;
  for (size_t i = 0; i < g.content_blocks.size(); ++i) {
    cs = plain_resblock(cs, g.content_blocks[i], pm);
    feats.push_back(cs);
    if (downsample_after_block(static_cast<int>(i)))
      cs = resize2d(cs, ResizeMode::Nearest, cs.value.dim(2) / 2, cs.value.dim(3) / 2);
  }

  Var h = x;
  for (const auto& c : g.gen_enc) h = encoder_conv(h, c, pm);
  for (int k = 0; k < kInjected; ++k) {
    if (upsample_before_block(k))
      h = resize2d(h, ResizeMode::Nearest, h.value.dim(2) * 2, h.value.dim(3) * 2);
    Var f = match_size(feats[static_cast<size_t>(kInjected - 1 - k)], h.value.dim(2), h.value.dim(3));
    h = fate_resblock(h, f, g.gen_blocks[static_cast<size_t>(k)], pm, trace,
                      "gen_block." + std::to_string(k));
  }
  for (const auto& blk : g.refine_blocks) h = plain_resblock(h, blk, pm);
  return vtanh(apply_conv(leaky_relu(h, real(0.2)), g.to_rgb, pm));
}

DiscriminatorParams build_discriminator(const DiscriminatorConfig& cfg, Rng& rng) {
  describe_discriminator(cfg);  // validates
  DiscriminatorParams d;
  d.cfg = cfg;
  int64_t c = 3;
  for (int64_t f : cfg.down_filters) {
    d.downs.push_back(make_conv(c, cfg.scaled(f), 3, 2, true, rng));
    c = cfg.scaled(f);
  }
  for (size_t i = 0; i < cfg.lateral_filters.size(); ++i)
    d.laterals.push_back(make_conv(cfg.scaled(cfg.down_filters[i + 1]),
                                   cfg.scaled(cfg.lateral_filters[i]), 1, 1, true, rng));
  const int64_t lat = cfg.scaled(cfg.lateral_filters[0]);
  for (int64_t i = 0; i < cfg.levels; ++i) {
    const int64_t pf = cfg.scaled(cfg.predict_filters[static_cast<size_t>(i)]);
    d.pred_convs.push_back(make_conv(lat, pf, 3, 1, true, rng));
    d.seg_convs.push_back(make_conv(pf, cfg.scaled(cfg.seg_filters[static_cast<size_t>(i)]), 3, 1, true, rng));
    d.score_convs.push_back(make_conv(pf, 1, 3, 1, true, rng));
  }
  d.seg_embed = make_conv(cfg.cond_channels, cfg.scaled(cfg.seg_embed_filters), 1, 1, true, rng);
  return d;
}

ParamList DiscriminatorParams::params() {
  ParamList out;
  for (size_t i = 0; i < downs.size(); ++i) downs[i].collect("down." + std::to_string(i), out);
  for (size_t i = 0; i < laterals.size(); ++i) laterals[i].collect("lateral." + std::to_string(i), out);
  for (size_t i = 0; i < pred_convs.size(); ++i) {
    pred_convs[i].collect("pred." + std::to_string(i), out);
    seg_convs[i].collect("seg." + std::to_string(i), out);
    score_convs[i].collect("score." + std::to_string(i), out);
  }
  seg_embed.collect("seg_embed", out);
  return out;
}

DiscriminatorBound bind_discriminator(Tape& t, DiscriminatorParams& p, bool update_power) {
  DiscriminatorBound b;
  b.p = &p;
  for (auto& c : p.downs) b.downs.push_back(bind(t, c, update_power));
  for (auto& c : p.laterals) b.laterals.push_back(bind(t, c, update_power));
  for (auto& c : p.pred_convs) b.pred_convs.push_back(bind(t, c, update_power));
  for (auto& c : p.seg_convs) b.seg_convs.push_back(bind(t, c, update_power));
  for (auto& c : p.score_convs) b.score_convs.push_back(bind(t, c, update_power));
  b.seg_embed = bind(t, p.seg_embed, update_power);
  return b;
}

PredictionSet discriminator_forward(const DiscriminatorBound& d, const Var& image, const Var& cond) {
  if (image.value.dim(2) != cond.value.dim(2) || image.value.dim(3) != cond.value.dim(3) ||
      image.value.dim(0) != cond.value.dim(0))
    throw_data(ErrCode::ShapeMismatch, "discriminator_forward: image/condition shapes differ");
  std::vector<Var> down_feats;
  Var x = image;
  for (const auto& c : d.downs) {
    x = leaky_relu(instance_norm(apply_conv(x, c)), real(0.2));
    down_feats.push_back(x);
  }
  std::vector<Var> lats;
  for (size_t i = 0; i < d.laterals.size(); ++i)
    lats.push_back(apply_conv(down_feats[i + 1], d.laterals[i]));

  PredictionSet out;
  Var u = lats.back();
  for (int64_t level = 0; level < d.p->cfg.levels; ++level) {
    const Var& lat = lats[lats.size() - 2 - static_cast<size_t>(level)];
    Var up = resize2d(u, ResizeMode::Bilinear, lat.value.dim(2), lat.value.dim(3));
    u = add(up, lat);
    Var p = leaky_relu(instance_norm(apply_conv(u, d.pred_convs[static_cast<size_t>(level)])), real(0.2));
    Var score = apply_conv(p, d.score_convs[static_cast<size_t>(level)]);
    Var seg_feat = apply_conv(p, d.seg_convs[static_cast<size_t>(level)]);
    // nearest keeps the condition one-hot before it is embedded
    Var cond_level = resize2d(cond, ResizeMode::Nearest, p.value.dim(2), p.value.dim(3));
    Var embed = apply_conv(cond_level, d.seg_embed);
    Var gated = reduce_sum_keepdim(mul(seg_feat, embed), 1u << 1);  // collapse channels
    out.maps.push_back(add(score, gated));
  }
  return out;
}

std::vector<ScaledView> two_scale_views(const Var& image, const Var& cond, const Var& mask) {
  std::vector<ScaledView> views;
  views.push_back({image, cond, mask});
  views.push_back({resample(image, 0.5, ResizeMode::Bilinear), resample(cond, 0.5, ResizeMode::Nearest),
                   resample(mask, 0.5, ResizeMode::Nearest)});
  return views;
}

void collect_leaves(const BoundPlainBlock& b, std::vector<Var>& out) {
  collect_leaves(b.conv0, out);
  collect_leaves(b.conv1, out);
  collect_leaves(b.conv_skip, out);
}

void collect_leaves(const GeneratorBound& g, std::vector<Var>& out) {
  for (const auto& c : g.content_enc) collect_leaves(c, out);
  for (const auto& b : g.content_blocks) collect_leaves(b, out);
  for (const auto& c : g.gen_enc) collect_leaves(c, out);
  for (const auto& b : g.gen_blocks) collect_leaves(b, out);
  for (const auto& b : g.refine_blocks) collect_leaves(b, out);
  collect_leaves(g.to_rgb, out);
}

void collect_leaves(const DiscriminatorBound& d, std::vector<Var>& out) {
  for (const auto& c : d.downs) collect_leaves(c, out);
  for (const auto& c : d.laterals) collect_leaves(c, out);
  for (size_t i = 0; i < d.pred_convs.size(); ++i) {
    collect_leaves(d.pred_convs[i], out);
    collect_leaves(d.seg_convs[i], out);
    collect_leaves(d.score_convs[i], out);
  }
  collect_leaves(d.seg_embed, out);
}

}  // namespace madt
