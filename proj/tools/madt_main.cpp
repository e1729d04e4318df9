// madt: masked-discriminator domain translation toolkit.
//
// Subcommands: gen-data, sample-stats, train, translate, eval, gradcheck,
// config-schema. All randomized paths take an explicit --seed and are
// deterministic for a given value.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "madt/config.hpp"
#include "madt/ftc1.hpp"
#include "madt/imageio.hpp"
#include "madt/metrics.hpp"
#include "madt/nn.hpp"
#include "madt/training.hpp"

namespace fs = std::filesystem;
using namespace madt;

namespace {

void write_dataset(const std::string& out, const SyntheticDataset& ds) {
  auto dump = [&](const std::vector<LabeledImage>& v, const std::string& domain) {
    fs::create_directories(fs::path(out) / domain / "images");
    fs::create_directories(fs::path(out) / domain / "segs");
    for (size_t i = 0; i < v.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "%05zu", i);
      write_ppm((fs::path(out) / domain / "images" / (std::string(name) + ".ppm")).string(),
                v[i].image);
      write_pgm((fs::path(out) / domain / "segs" / (std::string(name) + ".pgm")).string(), v[i].seg);
    }
  };
  dump(ds.domain_a, "domainA");
  dump(ds.domain_b, "domainB");
}

int cmd_gen_data(const std::string& out, int64_t n, int64_t size, uint64_t seed, bool no_bias) {
  BiasSpec spec = BiasSpec::default_spec();
  spec.bias_enabled = !no_bias;
  Rng rng(splitmix64(seed));
  SyntheticDataset ds = gen_synthetic_dataset(spec, n, size, rng);
  write_dataset(out, ds);
  nlohmann::ordered_json j;
  j["n_images"] = n;
  j["size"] = size;
  j["seed"] = seed;
  j["classes"] = spec.classes;
  j["biased_class"] = spec.biased_class;
  j["bias_enabled"] = spec.bias_enabled;
  std::ofstream os(fs::path(out) / "dataset.json");
  os << j.dump(2) << "\n";
  std::printf("wrote %lld image pairs to %s\n", static_cast<long long>(n), out.c_str());
  return 0;
}

int cmd_sample_stats(const std::string& data, int64_t pairs, int64_t draws, int64_t crop, double t,
                     uint64_t seed, bool oracle) {
  auto dom_a = load_domain_dir(data, "domainA");
  auto dom_b = load_domain_dir(data, "domainB");
  SamplerConfig cfg;
  cfg.global_crop = crop;
  cfg.threshold = t;
  cfg.local_ratio = std::max(0.5, 4.0 / static_cast<double>(crop));
  Rng rng(splitmix64(seed));
  for (int64_t p = 0; p < pairs; ++p) {
    const auto& a = dom_a[static_cast<size_t>(rng.below(static_cast<int64_t>(dom_a.size())))];
    const auto& b = dom_b[static_cast<size_t>(rng.below(static_cast<int64_t>(dom_b.size())))];
    SampleStats st = sampling_acceptance(a.seg, b.seg, cfg, draws, rng);
    nlohmann::ordered_json j;
    j["pair"] = p;
    j["accept_rate"] = st.accept_rate();
    j["draws"] = st.draws;
    if (oracle) j["valid_fraction_oracle"] = oracle_valid_fraction(a.seg, b.seg, crop, t);
    std::cout << j.dump() << "\n";
  }
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data, const std::string& out) {
  TrainConfig cfg = load_train_config_file(config_path);
  auto dom_a = load_domain_dir(data, "domainA");
  auto dom_b = load_domain_dir(data, "domainB");
  Trainer trainer(cfg, std::move(dom_a), std::move(dom_b));
  trainer.run(out);
  std::printf("trained %lld steps (%lld skipped pairs); output in %s\n",
              static_cast<long long>(cfg.steps), static_cast<long long>(trainer.skipped_pairs()),
              out.c_str());
  return 0;
}

int cmd_translate(const std::string& ckpt, const std::string& in, const std::string& seg_path,
                  const std::string& out, const std::string& dump_attention) {
  Checkpoint ck = load_checkpoint(ckpt);
  Tensor img = read_ppm(in);
  ClassGrid seg = read_class_grid(seg_path);
  AttentionTrace trace;
  Tensor result = translate_image(ck.gen, img, seg, dump_attention.empty() ? nullptr : &trace);
  write_ppm(out, result);
  if (!dump_attention.empty()) {
    fs::create_directories(dump_attention);
    for (auto& [name, map] : trace.maps) {
      std::string fname = name;
      for (auto& c : fname)
        if (c == '.') c = '_';
      ftc1_write((fs::path(dump_attention) / (fname + ".ftc1")).string(), map);
    }
    std::printf("wrote %zu attention maps to %s\n", trace.maps.size(), dump_attention.c_str());
  }
  std::printf("translated %s -> %s\n", in.c_str(), out.c_str());
  return 0;
}

Corpus load_corpus(const std::string& dir) {
  Corpus c;
  std::vector<fs::path> files;
  const fs::path images = fs::path(dir) / "images";
  const fs::path base = fs::is_directory(images) ? images : fs::path(dir);
  for (const auto& e : fs::directory_iterator(base))
    if (e.path().extension() == ".ppm") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw_data(ErrCode::BadFile, "no .ppm images under " + base.string());
  const fs::path segs = fs::is_directory(images) ? fs::path(dir) / "segs" : fs::path(dir) / "segs";
  for (const auto& p : files) {
    CorpusItem item;
    item.image = read_ppm(p.string());
    const fs::path sp = segs / (p.stem().string() + ".pgm");
    if (!fs::exists(sp)) throw_data(ErrCode::BadFile, "missing segmentation " + sp.string());
    item.seg = read_pgm(sp.string());
    c.push_back(std::move(item));
  }
  return c;
}

int cmd_eval(const std::string& metric, const std::string& src, const std::string& tgt,
             const std::string& features, const std::string& out, uint64_t seed, int64_t n_pairs,
             const std::string& class_map_path) {
  MetricConfig cfg;
  cfg.seed = seed;
  cfg.n_pairs = n_pairs;
  MetricReport report;
  if (features.rfind("ftc1:", 0) == 0) {
    if (metric != "kid")
      throw_config(ErrCode::RangeError,
                   "precomputed features support only --metric kid (crop metrics need pixels)");
    FeatureSet X = load_feature_matrix(src);
    FeatureSet Y = load_feature_matrix(tgt);
    report = kid_from_features(X, Y, features);
  } else if (features == "toy") {
    ImageFeatureFn f = toy_feature_provider();
    Corpus cs = load_corpus(src);
    Corpus ct = load_corpus(tgt);
    if (metric == "kid") {
      report = kid(cs, ct, f, "toy", cfg);
    } else if (metric == "skvd") {
      report = skvd(cs, ct, f, "toy", cfg);
    } else if (metric == "ckvd") {
      CkvdClassMap map = CkvdClassMap::builtin();
      if (!class_map_path.empty()) {
        std::ifstream is(class_map_path);
        if (!is) throw_config(ErrCode::BadFile, "cannot open class map " + class_map_path);
        nlohmann::json j = nlohmann::json::parse(is);
        for (auto it = j.begin(); it != j.end(); ++it)
          map.set(static_cast<uint16_t>(std::stoi(it.key())),
                  ckvd_category_from_name(it.value().get<std::string>()));
      }
      report = ckvd(cs, ct, f, "toy", map, cfg);
    } else {
      throw_config(ErrCode::RangeError, "metric must be kid, skvd or ckvd");
    }
  } else {
    throw_config(ErrCode::RangeError, "--features must be 'toy' or 'ftc1:<tag>'");
  }
  const std::string text = report.to_json();
  if (out.empty()) {
    std::cout << text << "\n";
  } else {
    std::ofstream os(out);
    os << text << "\n";
    std::printf("wrote %s\n", out.c_str());
  }
  return 0;
}

// Gradient check battery over every differentiable primitive and composite
// block. Returns the number of failures; the hidden defect injection flips
// the sign of the conv input-gradient to prove the harness catches a broken
// backward rule.
int cmd_gradcheck(int seeds, const std::string& inject_defect);

}  // namespace

#include "gradcheck_suite.hpp"

int main(int argc, char** argv) {
  CLI::App app{"masked-discriminator unpaired image translation toolkit"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic biased two-domain dataset");
  std::string gen_out = "data";
  int64_t gen_n = 64, gen_size = 32;
  uint64_t gen_seed = 0;
  bool gen_no_bias = false;
  gen->add_option("--out", gen_out, "output dataset directory")->capture_default_str();
  gen->add_option("--n", gen_n, "images per domain")->capture_default_str();
  gen->add_option("--size", gen_size, "image edge in pixels")->capture_default_str();
  gen->add_option("--seed", gen_seed, "rng seed")->capture_default_str();
  gen->add_flag("--no-bias", gen_no_bias, "disable the spatial bias in domain B");

  auto* stats = app.add_subcommand("sample-stats", "acceptance statistics of the crop sampler");
  std::string stats_data = "data";
  int64_t stats_pairs = 4, stats_draws = 1000, stats_crop = 16;
  double stats_t = 0.5;
  uint64_t stats_seed = 0;
  bool stats_oracle = false;
  stats->add_option("--data", stats_data, "dataset directory")->capture_default_str();
  stats->add_option("--pairs", stats_pairs, "image pairs to sample")->capture_default_str();
  stats->add_option("--draws", stats_draws, "proposal draws per pair")->capture_default_str();
  stats->add_option("--crop", stats_crop, "crop size in pixels")->capture_default_str();
  stats->add_option("--threshold", stats_t, "overlap threshold")->capture_default_str();
  stats->add_option("--seed", stats_seed, "rng seed")->capture_default_str();
  stats->add_flag("--oracle", stats_oracle, "also compute the exhaustive valid fraction");

  auto* train = app.add_subcommand("train", "train a translation model");
  std::string train_config, train_data = "data", train_out = "run";
  train->add_option("--config", train_config, "JSON config file")->required();
  train->add_option("--data", train_data, "dataset directory")->capture_default_str();
  train->add_option("--out", train_out, "output directory")->capture_default_str();

  auto* tr = app.add_subcommand("translate", "translate one image with a checkpoint");
  std::string tr_ckpt, tr_in, tr_seg, tr_out = "out.ppm", tr_dump;
  tr->add_option("--ckpt", tr_ckpt, "checkpoint directory")->required();
  tr->add_option("--in", tr_in, "input PPM image")->required();
  tr->add_option("--seg", tr_seg, "input PGM class grid")->required();
  tr->add_option("--out", tr_out, "output PPM image")->capture_default_str();
  tr->add_option("--dump-attention", tr_dump, "directory for per-layer attention FTC1 dumps");

  auto* ev = app.add_subcommand("eval", "compute kid/skvd/ckvd between two corpora");
  std::string ev_metric = "skvd", ev_src, ev_tgt, ev_features = "toy", ev_out, ev_classmap;
  uint64_t ev_seed = 0;
  int64_t ev_pairs = 256;
  ev->add_option("--metric", ev_metric, "kid|skvd|ckvd")->capture_default_str();
  ev->add_option("--src", ev_src, "source corpus dir (or FTC1 feature matrix)")->required();
  ev->add_option("--tgt", ev_tgt, "target corpus dir (or FTC1 feature matrix)")->required();
  ev->add_option("--features", ev_features, "toy | ftc1:<tag>")->capture_default_str();
  ev->add_option("--out", ev_out, "report path (stdout when empty)");
  ev->add_option("--seed", ev_seed, "rng seed")->capture_default_str();
  ev->add_option("--pairs", ev_pairs, "crop pairs to sample")->capture_default_str();
  ev->add_option("--class-map", ev_classmap, "JSON {\"<id>\": \"<category>\"} overrides");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference checks of every primitive");
  int gc_seeds = 5;
  std::string gc_defect;
  gc->add_option("--seeds", gc_seeds, "random seeds per op")->capture_default_str();
  gc->add_option("--inject-defect", gc_defect, "test fixture: conv_dx_sign")
      ->group("");  // hidden

  auto* schema = app.add_subcommand("config-schema", "print the train config schema with defaults");

  try {
    app.parse(argc, argv);
    if (gen->parsed()) return cmd_gen_data(gen_out, gen_n, gen_size, gen_seed, gen_no_bias);
    if (stats->parsed())
      return cmd_sample_stats(stats_data, stats_pairs, stats_draws, stats_crop, stats_t, stats_seed,
                              stats_oracle);
    if (train->parsed()) return cmd_train(train_config, train_data, train_out);
    if (tr->parsed()) return cmd_translate(tr_ckpt, tr_in, tr_seg, tr_out, tr_dump);
    if (ev->parsed())
      return cmd_eval(ev_metric, ev_src, ev_tgt, ev_features, ev_out, ev_seed, ev_pairs, ev_classmap);
    if (gc->parsed()) return cmd_gradcheck(gc_seeds, gc_defect);
    if (schema->parsed()) {
      std::cout << default_train_config_json() << "\n";
      return 0;
    }
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
