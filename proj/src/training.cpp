#include "madt/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "madt/ftc1.hpp"
#include "madt/imageio.hpp"
#include "madt/sampling.hpp"

namespace fs = std::filesystem;

namespace madt {

void TrainConfig::validate() const {
  if (steps < 1) throw_config(ErrCode::RangeError, "steps must be >= 1");
  if (lr0 < lr_floor) throw_config(ErrCode::RangeError, "lr0 must be >= lr_floor");
  if (decay_every < 1) throw_config(ErrCode::RangeError, "decay_every must be >= 1");
  if (checkpoint_every < 1) throw_config(ErrCode::RangeError, "checkpoint_every must be >= 1");
  if (global_crop % GeneratorConfig::kDownFactor != 0 || global_crop % 2 != 0)
    throw_config(ErrCode::RangeError, "global_crop must be even and divisible by 8");
  if (width_multiplier <= 0 || width_multiplier > 1)
    throw_config(ErrCode::RangeError, "width_multiplier must be in (0,1]");
  sampler().validate();
  weights.validate();
}

SamplerConfig TrainConfig::sampler() const {
  SamplerConfig s;
  s.global_crop = global_crop;
  s.local_ratio = local_ratio;
  s.threshold = threshold;
  s.max_retries = max_retries;
  s.local_batch = local_batch;
  s.base_height = base_height > 0 ? base_height : 526;
  return s;
}

real lr_schedule(int64_t step, int64_t epoch_len, const TrainConfig& cfg) {
  if (epoch_len < 1) epoch_len = 1;
  const int64_t epoch = step / epoch_len;
  const int64_t halvings = epoch / cfg.decay_every;
  real lr = cfg.lr0;
  for (int64_t i = 0; i < halvings; ++i) {
    lr *= real(0.5);
    if (lr <= cfg.lr_floor) return cfg.lr_floor;
  }
  return std::max(cfg.lr_floor, lr);
}

std::string StepTelemetry::to_json() const {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "{\"step\":%lld,\"d_global\":%.17g,\"d_local\":%.17g,\"g_global\":%.17g,"
                "\"g_local\":%.17g,\"perc\":%.17g,\"r1\":%.17g,\"lr\":%.17g,\"skipped\":%s}",
                static_cast<long long>(step), d_global, d_local, g_global, g_local, perc, r1, lr,
                skipped ? "true" : "false");
  return buf;
}

namespace {

int64_t dataset_class_count(const std::vector<LabeledImage>& a, const std::vector<LabeledImage>& b) {
  uint16_t m = 0;
  for (const auto& im : a) m = std::max(m, im.seg.max_id());
  for (const auto& im : b) m = std::max(m, im.seg.max_id());
  return static_cast<int64_t>(m) + 1;
}

Tensor to_pm1(const Tensor& img01) {
  Tensor t = img01.clone();
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = t[i] * 2 - 1;
  return t.reshaped({1, img01.dim(0), img01.dim(1), img01.dim(2)});
}

std::vector<Tensor> values_of(const std::vector<Var>& vars) {
  std::vector<Tensor> out;
  out.reserve(vars.size());
  for (const auto& v : vars) out.push_back(v.value);
  return out;
}

}  // namespace

Trainer::Trainer(TrainConfig cfg, std::vector<LabeledImage> domain_a,
                 std::vector<LabeledImage> domain_b)
    : cfg_(std::move(cfg)), dom_a_(std::move(domain_a)), dom_b_(std::move(domain_b)) {
  cfg_.validate();
  if (dom_a_.empty() || dom_b_.empty()) throw_data(ErrCode::TooFewSamples, "empty training domain");
  d_ = dataset_class_count(dom_a_, dom_b_);
  epoch_len_ = cfg_.epoch_len > 0 ? cfg_.epoch_len
                                  : static_cast<int64_t>(std::max(dom_a_.size(), dom_b_.size()));
  Rng init_g = subseeded(cfg_.seed, 0x47454eu);
  Rng init_d = subseeded(cfg_.seed, 0x444953u);
  GeneratorConfig gc;
  gc.width_multiplier = cfg_.width_multiplier;
  gc.use_fate = cfg_.use_fate;
  gc.cond_channels = d_;
  gen_ = build_generator(gc, init_g);
  DiscriminatorConfig dc;
  dc.width_multiplier = cfg_.width_multiplier;
  dc.cond_channels = d_;
  d_full_ = build_discriminator(dc, init_d);
  d_half_ = build_discriminator(dc, init_d);
  d_local_ = build_discriminator(dc, init_d);
  opt_g_ = Adam(cfg_.adam);
  opt_d_ = Adam(cfg_.adam);
  opt_g_.attach(gen_params_());
  opt_d_.attach(disc_params_());
  perc_ = default_feature_pyramid(splitmix64(cfg_.seed ^ 0x706572u));
}

ParamList Trainer::gen_params_() { return gen_.params(); }

ParamList Trainer::disc_params_() {
  ParamList out;
  {
    ParamList p = d_full_.params();
    for (auto& e : p) out.push_back({"full." + e.name, e.tensor, e.trainable});
  }
  {
    ParamList p = d_half_.params();
    for (auto& e : p) out.push_back({"half." + e.name, e.tensor, e.trainable});
  }
  {
    ParamList p = d_local_.params();
    for (auto& e : p) out.push_back({"local." + e.name, e.tensor, e.trainable});
  }
  return out;
}

StepTelemetry Trainer::step(int64_t step_index) {
  StepTelemetry tel;
  tel.step = step_index;
  const real lr = lr_schedule(step_index, epoch_len_, cfg_);
  tel.lr = static_cast<double>(lr);

  Rng srng = subseeded(cfg_.seed ^ 0x53544550ULL, static_cast<uint64_t>(step_index));
  const auto& raw_a = dom_a_[static_cast<size_t>(srng.below(static_cast<int64_t>(dom_a_.size())))];
  const auto& raw_b = dom_b_[static_cast<size_t>(srng.below(static_cast<int64_t>(dom_b_.size())))];
  const bool flip_a = srng.coin(), flip_b = srng.coin();

  Tensor img_a = raw_a.image;
  ClassGrid seg_a = raw_a.seg;
  Tensor img_b = raw_b.image;
  ClassGrid seg_b = raw_b.seg;
  if (cfg_.base_height > 0) {
    const int64_t partner = std::min(
        static_cast<int64_t>(std::llround(static_cast<double>(img_a.dim(2)) * cfg_.base_height / img_a.dim(1))),
        static_cast<int64_t>(std::llround(static_cast<double>(img_b.dim(2)) * cfg_.base_height / img_b.dim(1))));
    auto [ia, sa] = preprocess(img_a, seg_a, cfg_.base_height, partner, flip_a);
    auto [ib, sb] = preprocess(img_b, seg_b, cfg_.base_height, partner, flip_b);
    img_a = std::move(ia);
    seg_a = std::move(sa);
    img_b = std::move(ib);
    seg_b = std::move(sb);
  } else {
    auto [ia, sa] = preprocess(img_a, seg_a, img_a.dim(1), img_a.dim(2), flip_a);
    auto [ib, sb] = preprocess(img_b, seg_b, img_b.dim(1), img_b.dim(2), flip_b);
    img_a = std::move(ia);
    seg_a = std::move(sa);
    img_b = std::move(ib);
    seg_b = std::move(sb);
  }

  SamplerConfig scfg = cfg_.sampler();
  CropPair pair;
  PatchBatch patches;
  try {
    if (cfg_.sampling == TrainConfig::Sampling::Similarity)
      pair = sample_global_pair(img_a, img_b, seg_a, seg_b, seg_a, d_, scfg, srng);
    else
      pair = random_crop_pair(img_a, img_b, seg_a, seg_b, seg_a, d_, scfg, srng);
    if (cfg_.use_local_discriminator) patches = sample_local_patches(pair, scfg, srng);
  } catch (const Error& e) {
    if (e.code() != ErrCode::SamplerExhausted) throw;
    ++skipped_;
    tel.skipped = true;
    return tel;
  }

  const Tensor ia_data = to_pm1(pair.i_a);
  const Tensor ib_data = to_pm1(pair.i_b);
  const Tensor ca_data = pair.c_a.to_tensor();
  const Tensor cb_data = pair.c_b.to_tensor();
  const Tensor za_data = pair.z_a.to_tensor();
  const Tensor mask_data = cfg_.mask_discriminator
                               ? pair.m_ab.to_tensor()
                               : Tensor::full({1, 1, pair.size(), pair.size()}, real(1));

  // --- discriminator step ---------------------------------------------------
  Tensor fb_data;
  {
    Tape scratch;
    GeneratorBound g = bind_generator(scratch, gen_, false);
    fb_data = generator_forward(g, scratch.constant(ia_data), scratch.constant(za_data)).value;
  }
  {
    Tape t;
    GlobalDiscriminators gd{bind_discriminator(t, d_full_, true), bind_discriminator(t, d_half_, true)};
    DiscriminatorBound dl;
    if (cfg_.use_local_discriminator) dl = bind_discriminator(t, d_local_, true);

    Var fb = t.constant(fb_data);
    Var ib = t.constant(ib_data);
    Var ca = t.constant(ca_data);
    Var cb = t.constant(cb_data);
    Var m = t.constant(mask_data);

    AdvLosses global = masked_global_adv(gd, fb, ib, ca, cb, m, true, false);
    tel.d_global = static_cast<double>(global.d_loss.value[0]);

    // gradient penalty per global scale on the masked real branch
    auto [ibm, cbm] = mask_pair(ib, cb, m);
    auto views = two_scale_views(ibm, cbm, m);
    const DiscriminatorBound* discs[2] = {&gd.full, &gd.half};
    Var r1_total;
    for (size_t s = 0; s < 2; ++s) {
      Var cond_view = views[s].cond;
      Var pen = r1_penalty(
          t, [&](const Var& x) { return discriminator_forward(*discs[s], x, cond_view); },
          views[s].image.value, cfg_.weights.rp);
      r1_total = r1_total.defined() ? add(r1_total, pen) : pen;
    }
    r1_total = scale(r1_total, real(0.5));

    Var d_total = add(scale(global.d_loss, cfg_.weights.madv_global), r1_total);
    if (cfg_.use_local_discriminator) {
      AdvLosses local = local_adv(dl, patches, fb, ib, ca, cb, true, false);
      tel.d_local = static_cast<double>(local.d_loss.value[0]);
      std::vector<Window> tgt;
      for (const auto& [ws, wt] : patches.patches) tgt.push_back(wt);
      Var real_patches = stack_patches(ib, tgt);
      Var cond_patches = stack_patches(cb, tgt);
      Var pen = r1_penalty(
          t, [&](const Var& x) { return discriminator_forward(dl, x, cond_patches); },
          real_patches.value, cfg_.weights.rp);
      r1_total = add(r1_total, pen);
      d_total = add(d_total, add(scale(local.d_loss, cfg_.weights.adv_local), pen));
    }
    tel.r1 = static_cast<double>(r1_total.value[0]);

    std::vector<Var> leaves;
    collect_leaves(gd.full, leaves);
    collect_leaves(gd.half, leaves);
    if (cfg_.use_local_discriminator) collect_leaves(dl, leaves);
    std::vector<Var> grads = t.gradients(d_total, leaves);
    if (cfg_.use_local_discriminator) {
      opt_d_.step(values_of(grads), lr);
    } else {
      // pad zero grads for the local discriminator's slots
      std::vector<Tensor> gv = values_of(grads);
      ParamList lp = d_local_.params();
      for (auto& e : lp)
        if (e.trainable) gv.push_back(Tensor::zeros(e.tensor->shape()));
      opt_d_.step(gv, lr);
    }
  }

  // --- generator step --------------------------------------------------------
  {
    Tape t;
    GeneratorBound g = bind_generator(t, gen_, true);
    GlobalDiscriminators gd{bind_discriminator(t, d_full_, false), bind_discriminator(t, d_half_, false)};
    DiscriminatorBound dl;
    if (cfg_.use_local_discriminator) dl = bind_discriminator(t, d_local_, false);

    Var ia = t.constant(ia_data);
    Var za = t.constant(za_data);
    Var ib = t.constant(ib_data);
    Var ca = t.constant(ca_data);
    Var cb = t.constant(cb_data);
    Var m = t.constant(mask_data);

    Var fb = generator_forward(g, ia, za);
    AdvLosses global = masked_global_adv(gd, fb, ib, ca, cb, m, false, true);
    tel.g_global = static_cast<double>(global.g_loss.value[0]);

    Var g_local = t.scalar(0);
    if (cfg_.use_local_discriminator) {
      AdvLosses local = local_adv(dl, patches, fb, ib, ca, cb, false, true);
      g_local = local.g_loss;
      tel.g_local = static_cast<double>(g_local.value[0]);
    }
    Var perc = perceptual_loss(perc_, fb, ia);
    tel.perc = static_cast<double>(perc.value[0]);

    Var g_total = total_g_loss({global.g_loss, g_local, perc}, cfg_.weights);
    std::vector<Var> leaves;
    collect_leaves(g, leaves);
    std::vector<Var> grads = t.gradients(g_total, leaves);
    opt_g_.step(values_of(grads), lr);
  }
  return tel;
}

void Trainer::save_checkpoint(const std::string& dir, int64_t step) {
  fs::create_directories(dir);
  ParamList tensors;
  {
    ParamList g = gen_.params();
    for (auto& e : g) tensors.push_back({"gen." + e.name, e.tensor, e.trainable});
  }
  {
    ParamList d = disc_params_();
    for (auto& e : d) tensors.push_back({"disc." + e.name, e.tensor, e.trainable});
  }
  opt_g_.collect_state("adam_g", tensors);
  opt_d_.collect_state("adam_d", tensors);

  nlohmann::ordered_json manifest;
  manifest["format"] = "madt-ckpt";
  manifest["version"] = 1;
  manifest["step"] = step;
  manifest["lr"] = static_cast<double>(lr_schedule(step, epoch_len_, cfg_));
  manifest["cond_channels"] = d_;
  manifest["rng_state"] = "stepwise:" + std::to_string(cfg_.seed) + ":" + std::to_string(step);
  manifest["config"] = nlohmann::ordered_json::parse(cfg_.to_json());
  nlohmann::ordered_json tens;
  int idx = 0;
  for (auto& e : tensors) {
    const std::string file = "t" + std::to_string(idx++) + ".ftc1";
    ftc1_write((fs::path(dir) / file).string(), *e.tensor);
    tens[e.name] = file;
  }
  manifest["tensors"] = tens;
  std::ofstream os(fs::path(dir) / "manifest.json");
  os << manifest.dump(2) << "\n";
}

void Trainer::run(const std::string& out_dir) {
  std::ofstream telemetry;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    telemetry.open(fs::path(out_dir) / "telemetry.jsonl");
  }
  for (int64_t s = 0; s < cfg_.steps; ++s) {
    StepTelemetry tel = step(s);
    if (telemetry.is_open()) telemetry << tel.to_json() << "\n";
    if (!out_dir.empty() && (s + 1) % cfg_.checkpoint_every == 0)
      save_checkpoint((fs::path(out_dir) / ("ckpt_" + std::to_string(s + 1))).string(), s + 1);
  }
  if (!out_dir.empty()) save_checkpoint((fs::path(out_dir) / "ckpt_final").string(), cfg_.steps);
}

Checkpoint load_checkpoint(const std::string& dir) {
  std::ifstream is(fs::path(dir) / "manifest.json");
  if (!is) throw_data(ErrCode::BadFile, "missing manifest.json in " + dir);
  nlohmann::json manifest = nlohmann::json::parse(is);
  if (manifest.value("format", "") != "madt-ckpt")
    throw_data(ErrCode::BadFile, dir + ": not a checkpoint directory");
  Checkpoint ck;
  ck.cfg = TrainConfig::from_json(manifest["config"].dump());
  ck.cond_channels = manifest["cond_channels"].get<int64_t>();
  ck.step = manifest["step"].get<int64_t>();
  ck.lr = manifest["lr"].get<double>();
  ck.rng_state = manifest["rng_state"].get<std::string>();

  Rng dummy(0);
  GeneratorConfig gc;
  gc.width_multiplier = ck.cfg.width_multiplier;
  gc.use_fate = ck.cfg.use_fate;
  gc.cond_channels = ck.cond_channels;
  ck.gen = build_generator(gc, dummy);

  ParamList params = ck.gen.params();
  const auto& tens = manifest["tensors"];
  for (auto& e : params) {
    const std::string key = "gen." + e.name;
    if (!tens.contains(key)) throw_data(ErrCode::BadFile, "checkpoint missing tensor " + key);
    Tensor loaded = ftc1_read((fs::path(dir) / tens[key].get<std::string>()).string());
    if (loaded.shape() != e.tensor->shape())
      throw_data(ErrCode::ShapeMismatch, "checkpoint tensor shape mismatch for " + key);
    *e.tensor = loaded;
  }
  return ck;
}

namespace {
Tensor pad_replicate(const Tensor& img, int64_t ph, int64_t pw) {
  const int64_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
  Tensor out({C, H + ph, W + pw});
  for (int64_t c = 0; c < C; ++c)
    for (int64_t y = 0; y < H + ph; ++y)
      for (int64_t x = 0; x < W + pw; ++x)
        out[(c * (H + ph) + y) * (W + pw) + x] = img[(c * H + std::min(y, H - 1)) * W + std::min(x, W - 1)];
  return out;
}
}  // namespace

Tensor translate_image(GeneratorParams& gen, const Tensor& image01, const ClassGrid& seg,
                       AttentionTrace* trace) {
  if (image01.dim(1) != seg.height || image01.dim(2) != seg.width)
    throw_data(ErrCode::ShapeMismatch, "translate: image/segmentation shapes differ");
  const int64_t f = GeneratorConfig::kDownFactor;
  const int64_t H = image01.dim(1), W = image01.dim(2);
  const int64_t ph = (f - H % f) % f, pw = (f - W % f) % f;
  Tensor padded = ph || pw ? pad_replicate(image01, ph, pw) : image01;
  ClassGrid pseg(H + ph, W + pw);
  for (int64_t y = 0; y < H + ph; ++y)
    for (int64_t x = 0; x < W + pw; ++x) pseg.at(y, x) = seg.at(std::min(y, H - 1), std::min(x, W - 1));

  Tape t;
  GeneratorBound g = bind_generator(t, gen, false);
  Var img = t.constant(to_pm1(padded));
  Var cond = t.constant(onehot(pseg, gen.cfg.cond_channels).to_tensor());
  Var out = generator_forward(g, img, cond, PadMode::Zero, trace);

  Tensor result({3, H, W});
  const int64_t Wp = W + pw;
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x)
        result[(c * H + y) * W + x] =
            std::clamp((out.value[(c * (H + ph) + y) * Wp + x] + 1) / 2, real(0), real(1));
  return result;
}

std::vector<LabeledImage> load_domain_dir(const std::string& root, const std::string& domain) {
  const fs::path images = fs::path(root) / domain / "images";
  const fs::path segs = fs::path(root) / domain / "segs";
  if (!fs::is_directory(images) || !fs::is_directory(segs))
    throw_data(ErrCode::BadFile, "expected " + images.string() + " and " + segs.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(images))
    if (entry.path().extension() == ".ppm") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw_data(ErrCode::BadFile, "no .ppm images under " + images.string());
  std::vector<LabeledImage> out;
  for (const auto& p : files) {
    LabeledImage im;
    im.image = read_ppm(p.string());
    const fs::path segp = segs / (p.stem().string() + ".pgm");
    if (!fs::exists(segp)) throw_data(ErrCode::BadFile, "missing segmentation " + segp.string());
    im.seg = read_pgm(segp.string());
    if (im.seg.height != im.image.dim(1) || im.seg.width != im.image.dim(2))
      throw_data(ErrCode::ShapeMismatch, p.string() + ": image and segmentation sizes differ");
    out.push_back(std::move(im));
  }
  return out;
}

}  // namespace madt
