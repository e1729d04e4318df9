#pragma once
// Generator and discriminator builders, forwards, and shape descriptors.
//
// Generator: a content stream encoder and content stream produce features at
// decreasing resolution; the generator stream encoder compresses the input by
// 8x and ten residual blocks decode it back, the first eight modulated by the
// content features, the last two refining at full resolution. All spatial
// I/O is NCHW in [-1,1].
//
// Discriminator: five stride-2 downsampling convolutions, 1x1 laterals on the
// last four, a bilinear upsampling path, and predictions on three levels,
// each combining a plain score map with a segmentation-conditioned term.
#include <string>
#include <vector>

#include "madt/denorm.hpp"

namespace madt {

int64_t scaled_channels(int64_t paper_count, double width_multiplier);

struct GeneratorConfig {
  double width_multiplier = 1.0 / 16.0;
  std::vector<int64_t> gen_encoder_filters = {256, 512, 1024};
  std::vector<int64_t> gen_block_filters = {1024, 1024, 1024, 512, 256, 128, 64, 64, 64, 64};
  std::vector<int64_t> content_encoder_filters = {64, 64};
  std::vector<int64_t> content_filters = {64, 128, 256, 512, 1024, 1024, 1024, 1024};
  bool use_fate = true;  // FATE when true, FADE otherwise
  int64_t cond_channels = 0;

  int64_t scaled(int64_t c) const { return scaled_channels(c, width_multiplier); }
  static constexpr int64_t kDownFactor = 8;
};

struct DiscriminatorConfig {
  double width_multiplier = 1.0 / 16.0;
  std::vector<int64_t> down_filters = {64, 128, 256, 512, 512};
  std::vector<int64_t> lateral_filters = {256, 256, 256, 256};
  std::vector<int64_t> predict_filters = {128, 128, 128};
  std::vector<int64_t> seg_filters = {128, 128, 128};
  int64_t seg_embed_filters = 128;
  int64_t levels = 3;
  int64_t cond_channels = 0;

  int64_t scaled(int64_t c) const { return scaled_channels(c, width_multiplier); }
};

// One row per convolution; the closed-form parameter count of a network is
// the sum of in*out*k*k + out over its rows.
struct LayerDesc {
  std::string name;
  int64_t in_ch = 0, out_ch = 0, k = 0, stride = 1;
};

std::vector<LayerDesc> describe_generator(const GeneratorConfig& cfg);
std::vector<LayerDesc> describe_discriminator(const DiscriminatorConfig& cfg);
int64_t closed_form_param_count(const std::vector<LayerDesc>& layers);

struct PlainResBlockParams {
  int64_t in_ch = 0, out_ch = 0, mid_ch = 0;
  NormKind norm = NormKind::Instance;
  Conv2dParams conv0, conv1, conv_skip;
  void collect(const std::string& prefix, ParamList& out);
};

struct GeneratorParams {
  GeneratorConfig cfg;
  std::vector<Conv2dParams> content_enc;
  std::vector<PlainResBlockParams> content_blocks;
  std::vector<Conv2dParams> gen_enc;
  std::vector<FateResBlockParams> gen_blocks;   // 8, content-modulated
  std::vector<PlainResBlockParams> refine_blocks;  // 2, full resolution
  Conv2dParams to_rgb;
  ParamList params();
  int64_t param_count();
};

GeneratorParams build_generator(const GeneratorConfig& cfg, Rng& rng);

struct BoundPlainBlock {
  const PlainResBlockParams* p = nullptr;
  BoundConv conv0, conv1, conv_skip;
};

struct GeneratorBound {
  GeneratorParams* p = nullptr;
  std::vector<BoundConv> content_enc, gen_enc;
  std::vector<BoundPlainBlock> content_blocks, refine_blocks;
  std::vector<BoundFateBlock> gen_blocks;
  BoundConv to_rgb;
};

GeneratorBound bind_generator(Tape& t, GeneratorParams& p, bool update_power);

// image (1,3,H,W) in [-1,1], cond (1,d,H,W) one-hot; H,W divisible by 8.
Var generator_forward(const GeneratorBound& g, const Var& image, const Var& cond,
                      PadMode pm = PadMode::Zero, AttentionTrace* trace = nullptr);

struct DiscriminatorParams {
  DiscriminatorConfig cfg;
  std::vector<Conv2dParams> downs;     // 5
  std::vector<Conv2dParams> laterals;  // 4
  std::vector<Conv2dParams> pred_convs, seg_convs, score_convs;  // 3 each
  Conv2dParams seg_embed;
  ParamList params();
  int64_t param_count();
};

DiscriminatorParams build_discriminator(const DiscriminatorConfig& cfg, Rng& rng);

struct DiscriminatorBound {
  DiscriminatorParams* p = nullptr;
  std::vector<BoundConv> downs, laterals, pred_convs, seg_convs, score_convs;
  BoundConv seg_embed;
};

DiscriminatorBound bind_discriminator(Tape& t, DiscriminatorParams& p, bool update_power);

// Score maps coarse-to-fine, each (N,1,h,w).
struct PredictionSet {
  std::vector<Var> maps;
};

PredictionSet discriminator_forward(const DiscriminatorBound& d, const Var& image, const Var& cond);

// Full view plus a half-scale view: bilinear for images, nearest for
// conditions and masks (keeps them one-hot / binary).
struct ScaledView {
  Var image, cond, mask;
};
std::vector<ScaledView> two_scale_views(const Var& image, const Var& cond, const Var& mask);

void collect_leaves(const BoundPlainBlock& b, std::vector<Var>& out);
void collect_leaves(const GeneratorBound& g, std::vector<Var>& out);
void collect_leaves(const DiscriminatorBound& d, std::vector<Var>& out);

}  // namespace madt
