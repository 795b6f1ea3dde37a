// dtvit — dual-task ViT laboratory: synthesize phantoms, preprocess scans,
// train, evaluate, predict, and inspect models.
//
// Exit codes: 0 success, 1 input/data error, 2 configuration error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dtvit/checkpoint.hpp"
#include "dtvit/config.hpp"
#include "dtvit/datapipe.hpp"
#include "dtvit/metrics.hpp"
#include "dtvit/morphology.hpp"
#include "dtvit/phantom.hpp"
#include "dtvit/raster.hpp"
#include "dtvit/trainer.hpp"
#include "dtvit/vit.hpp"

namespace fs = std::filesystem;
using namespace dtvit;

namespace {

// flag overrides land in the same store as --config file values
struct Override {
  std::string key, value;
};

void apply_overrides(Config& cfg, const std::string& config_path,
                     const std::vector<Override>& overrides) {
  if (!config_path.empty()) cfg.load_file(config_path);
  for (const Override& o : overrides) cfg.set(o.key, o.value);
}

ModelConfig model_from(const Config& cfg) {
  const std::string& preset = cfg.get_string("model.preset");
  ModelConfig m;
  if (preset == "tiny") m = ModelConfig::tiny();
  else if (preset == "large") m = ModelConfig::large();
  else throw ConfigError("config: model.preset must be tiny or large, got '" + preset + "'");
  m.validate();
  return m;
}

PhantomSpec phantom_from(const Config& cfg) {
  PhantomSpec s;
  s.h = s.w = cfg.get_int("phantom.size");
  s.head_ax_frac = cfg.get_double("phantom.head_ax_frac");
  s.head_by_frac = cfg.get_double("phantom.head_by_frac");
  s.jitter = cfg.get_double("phantom.jitter");
  s.brain_scale = cfg.get_double("phantom.brain_scale");
  s.skull_level = cfg.get_double("phantom.skull_level");
  s.brain_level = cfg.get_double("phantom.brain_level");
  s.noise_amp = cfg.get_double("phantom.noise_amp");
  s.blob_delta = cfg.get_double("phantom.blob_delta");
  s.blob_rmin_frac = cfg.get_double("phantom.blob_rmin_frac");
  s.blob_rmax_frac = cfg.get_double("phantom.blob_rmax_frac");
  s.deep_rr_max = cfg.get_double("phantom.deep_rr_max");
  s.lobar_rr_min = cfg.get_double("phantom.lobar_rr_min");
  s.lobar_rr_max = cfg.get_double("phantom.lobar_rr_max");
  s.lobar_half_angle_deg = cfg.get_double("phantom.lobar_half_angle");
  s.sub_rr_min = cfg.get_double("phantom.sub_rr_min");
  s.sub_rr_max = cfg.get_double("phantom.sub_rr_max");
  s.sub_half_angle_deg = cfg.get_double("phantom.sub_half_angle");
  s.sub_min_drop = cfg.get_double("phantom.sub_min_drop");
  s.brace_scale = cfg.get_double("phantom.brace_scale");
  s.brace_level = cfg.get_double("phantom.brace_level");
  s.brace_thickness_frac = cfg.get_double("phantom.brace_thickness_frac");
  s.brace_half_angle_deg = cfg.get_double("phantom.brace_half_angle");
  s.retries = static_cast<int>(cfg.get_int("phantom.retries"));
  try {
    s.validate();
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  return s;
}

MorphParams morph_from(const Config& cfg) {
  MorphParams p;
  p.binarize_threshold = cfg.get_double("morph.threshold");
  p.erosion_radius = static_cast<int>(cfg.get_int("morph.erosion_radius"));
  p.edge_columns = static_cast<int>(cfg.get_int("morph.edge_columns"));
  p.fill_connectivity = static_cast<int>(cfg.get_int("morph.fill_connectivity"));
  if (!cfg.get_string("morph.window").empty()) {
    std::vector<double> w = cfg.get_doubles("morph.window", 2);
    p.window = {w[0], w[1]};
  }
  if (p.erosion_radius < 0) throw ConfigError("config: morph.erosion_radius must be >= 0");
  if (p.edge_columns < 0) throw ConfigError("config: morph.edge_columns must be >= 0");
  if (p.fill_connectivity != 4 && p.fill_connectivity != 8)
    throw ConfigError("config: morph.fill_connectivity must be 4 or 8");
  return p;
}

AugmentConfig aug_from(const Config& cfg, const ModelConfig& model) {
  AugmentConfig a;
  a.crop_size = cfg.get_int("aug.crop_size");
  if (a.crop_size == 0) a.crop_size = model.image;
  a.max_rotation_degrees = cfg.get_double("aug.max_rotation_degrees");
  a.sharpness_factor = cfg.get_double("aug.sharpness_factor");
  a.sharpness_probability = cfg.get_double("aug.sharpness_probability");
  std::vector<double> mean = cfg.get_doubles("aug.channel_mean", 3);
  std::vector<double> sd = cfg.get_doubles("aug.channel_std", 3);
  for (int i = 0; i < 3; ++i) {
    a.channel_mean[static_cast<size_t>(i)] = mean[static_cast<size_t>(i)];
    a.channel_std[static_cast<size_t>(i)] = sd[static_cast<size_t>(i)];
    if (sd[static_cast<size_t>(i)] <= 0)
      throw ConfigError("config: aug.channel_std components must be positive");
  }
  return a;
}

TrainConfig train_from(const Config& cfg) {
  TrainConfig t;
  t.epochs = cfg.get_int("train.epochs");
  t.batch_train = cfg.get_int("train.batch_train");
  t.batch_val = cfg.get_int("train.batch_val");
  t.batch_test = cfg.get_int("train.batch_test");
  t.lr = cfg.get_double("train.lr");
  t.weight_decay = cfg.get_double("train.weight_decay");
  t.beta1 = cfg.get_double("train.beta1");
  t.beta2 = cfg.get_double("train.beta2");
  t.eps = cfg.get_double("train.eps");
  t.balance = cfg.get_bool("data.balance");
  t.augment = cfg.get_bool("data.augment");
  const std::string& sched = cfg.get_string("train.schedule");
  if (sched == "cosine") t.cosine = true;
  else if (sched == "constant") t.cosine = false;
  else throw ConfigError("config: train.schedule must be constant or cosine, got '" + sched +
                         "'");
  t.seed = cfg.get_u64("seed");
  try {
    t.validate();
  } catch (const std::runtime_error& e) {
    throw ConfigError(e.what());
  }
  return t;
}

std::array<int64_t, 4> parse_counts(const std::string& s) {
  std::array<int64_t, 4> counts{};
  std::istringstream is(s);
  std::string item;
  size_t i = 0;
  while (std::getline(is, item, ',')) {
    if (i >= 4) throw ConfigError("synth: --counts wants 4 comma-separated values");
    try {
      counts[i++] = std::stoll(item);
    } catch (const std::exception&) {
      throw ConfigError("synth: bad count '" + item + "'");
    }
  }
  if (i != 4) throw ConfigError("synth: --counts wants 4 comma-separated values");
  return counts;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) failf("cannot open '", path, "' for writing");
  f << text;
  if (!f) failf("write failed for '", path, "'");
}

int cmd_synth(const Config& cfg, const std::string& out, const std::string& counts_str) {
  std::array<int64_t, 4> counts = parse_counts(counts_str);
  if (counts[0] + counts[1] + counts[2] + counts[3] <= 0)
    throw ConfigError("synth: empty dataset (all counts zero)");
  PhantomSpec spec = phantom_from(cfg);
  uint64_t seed = cfg.get_u64("seed");
  std::vector<Record> recs = generate_dataset(counts, spec, seed, out);
  for (int cls = 0; cls < 4; ++cls)
    std::printf("%s %lld\n", phantom_class_name(cls),
                static_cast<long long>(counts[static_cast<size_t>(cls)]));
  std::printf("total %zu\n", recs.size());
  std::printf("index %s\n", (fs::path(out) / "index.txt").string().c_str());
  return 0;
}

int cmd_preprocess(const Config& cfg, const std::string& index_path, const std::string& out) {
  MorphParams mp = morph_from(cfg);
  std::vector<Record> recs = read_index(index_path);
  std::string in_dir = fs::path(index_path).parent_path().string();
  fs::create_directories(out);
  auto t0 = std::chrono::steady_clock::now();
  std::vector<Record> out_recs;
  int64_t failures = 0;
  for (const Record& r : recs) {
    std::string src = (fs::path(in_dir) / r.path).string();
    try {
      RawScan scan = read_scan(src);
      Image8 img = preprocess(scan, mp);
      Record nr = r;
      nr.path = r.id + ".pgm";
      write_pgm8((fs::path(out) / nr.path).string(), img);
      out_recs.push_back(std::move(nr));
    } catch (const std::runtime_error& e) {
      std::fprintf(stderr, "error: %s: %s\n", src.c_str(), e.what());
      ++failures;
    }
  }
  if (!out_recs.empty()) write_index((fs::path(out) / "index.txt").string(), out_recs);
  auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - t0)
                .count();
  std::printf("processed %zu of %zu images (%lld failed) in %lld ms\n", out_recs.size(),
              recs.size(), static_cast<long long>(failures), static_cast<long long>(ms));
  return failures == 0 ? 0 : 1;
}

int cmd_train(Config& cfg, const std::string& index_path, const std::string& out) {
  ModelConfig model = model_from(cfg);
  if (cfg.get_int("model.reference_head") != 0)
    throw ConfigError("train: model.reference_head is only for inspect");
  AugmentConfig aug = aug_from(cfg, model);
  TrainConfig tc = train_from(cfg);
  std::vector<double> ratios = cfg.get_doubles("data.split", 3);

  std::vector<Record> recs = read_index(index_path);
  SplitResult sp = split(recs, {ratios[0], ratios[1], ratios[2]}, tc.seed);
  if (sp.train.empty()) fail("train: empty split");
  std::string data_dir = fs::path(index_path).parent_path().string();
  std::vector<Sample> train_set = load_samples(sp.train, data_dir);
  std::vector<Sample> val_set = load_samples(sp.val, data_dir);

  Params<float> params = init_params<float>(model, tc.seed);
  const std::string& pre = cfg.get_string("train.pretrained");
  fs::create_directories(out);
  if (!pre.empty()) {
    PretrainReport rep = load_pretrained(pre, params);
    std::ostringstream rp;
    rp << "loaded " << rep.loaded.size() << " tensors\n";
    for (const auto& n : rep.loaded) rp << "  loaded " << n << "\n";
    rp << "initialized " << rep.initialized.size() << " tensors\n";
    for (const auto& n : rep.initialized) rp << "  initialized " << n << "\n";
    rp << "ignored " << rep.ignored.size() << " tensors\n";
    for (const auto& n : rep.ignored) rp << "  ignored " << n << "\n";
    write_text((fs::path(out) / "pretrained-report.txt").string(), rp.str());
    std::printf("pretrained: loaded %zu, initialized %zu, ignored %zu (see %s)\n",
                rep.loaded.size(), rep.initialized.size(), rep.ignored.size(),
                (fs::path(out) / "pretrained-report.txt").string().c_str());
  }

  TrainResult<float> result = train(params, train_set, val_set, tc, aug);

  std::vector<std::pair<std::string, std::string>> meta;
  meta.emplace_back("model.channels", std::to_string(model.channels));
  meta.emplace_back("model.image", std::to_string(model.image));
  meta.emplace_back("model.patch", std::to_string(model.patch));
  meta.emplace_back("model.dim", std::to_string(model.dim));
  meta.emplace_back("model.heads", std::to_string(model.heads));
  meta.emplace_back("model.mlp_dim", std::to_string(model.mlp_dim));
  meta.emplace_back("model.layers", std::to_string(model.layers));
  meta.emplace_back("model.head_hidden", std::to_string(model.head_hidden));
  meta.emplace_back("rng.state", std::to_string(tc.seed));
  meta.emplace_back("best_epoch", std::to_string(result.best_epoch));
  for (const ConfigKey& k : cfg.registry())
    meta.emplace_back("config." + k.key, cfg.get_string(k.key));

  save_checkpoint((fs::path(out) / "checkpoint.dtv").string(), result.best, meta);
  write_text((fs::path(out) / "history.txt").string(), result.history);
  write_text((fs::path(out) / "effective-config.txt").string(), cfg.render());
  std::fputs(result.history.c_str(), stdout);
  if (result.best_epoch > 0)
    std::printf("best epoch %lld by validation combined loss\n",
                static_cast<long long>(result.best_epoch));
  else
    std::printf("kept final weights (no validation split)\n");
  std::printf("checkpoint %s\n", (fs::path(out) / "checkpoint.dtv").string().c_str());
  return 0;
}

Params<float> load_model(const std::string& ckpt) {
  CheckpointInfo info = read_checkpoint_info(ckpt);
  ModelConfig model = model_config_from_meta(info);
  Params<float> params = init_params<float>(model, 0);
  load_checkpoint(ckpt, params);
  return params;
}

int cmd_eval(const Config& cfg, const std::string& ckpt, const std::string& index_path,
             const std::string& scope) {
  if (scope != "ich-only" && scope != "all")
    throw ConfigError("eval: --scope must be ich-only or all");
  Params<float> params = load_model(ckpt);
  AugmentConfig aug = aug_from(cfg, params.cfg);
  std::vector<Record> recs = read_index(index_path);
  if (recs.empty()) fail("eval: empty index");
  std::vector<Sample> samples =
      load_samples(recs, fs::path(index_path).parent_path().string());
  EvalResult ev = evaluate(params, samples, aug, cfg.get_int("train.batch_test"));
  std::printf("samples %lld (ich %lld)  loss1 %s  loss2 %s  combined %s\n",
              static_cast<long long>(ev.n), static_cast<long long>(ev.n_ich),
              fmt12(ev.loss1).c_str(), fmt12(ev.loss2).c_str(), fmt12(ev.combined).c_str());
  std::fputs(render_report(ev.cm_presence, {"Normal", "ICH"}, "task1").c_str(), stdout);
  if (scope == "ich-only") {
    std::fputs(render_report(ev.cm_ich, {"Deep", "Lobar", "Subtentorial"}, "task2").c_str(),
               stdout);
    std::fputs(render_dual_report(ev.cm_presence, ev.cm_ich, scope).c_str(), stdout);
  } else {
    std::fputs(render_report(ev.cm_all, {"Deep", "Lobar", "Subtentorial", "None"}, "task2")
                   .c_str(),
               stdout);
    std::fputs(render_dual_report(ev.cm_presence, ev.cm_all, scope).c_str(), stdout);
  }
  return 0;
}

int cmd_predict(const Config& cfg, const std::string& ckpt, const std::string& image_path) {
  Params<float> params = load_model(ckpt);
  AugmentConfig aug = aug_from(cfg, params.cfg);
  ImageF img = to_float(read_image8(image_path));
  Tensor<float> input = to_model_input<float>(center_crop(img, aug.crop_size), aug);
  auto [l1, l2] = forward_logits(params, input);
  Prediction p = predict_from_logits(l1, l2);
  if (p.presence == kNormal) std::printf("NORMAL\n");
  else std::printf("ICH %s\n", location_name(p.location));
  std::vector<double> v1(l1.data.begin(), l1.data.end());
  std::vector<double> v2(l2.data.begin(), l2.data.end());
  std::vector<double> s1 = softmax_vec(v1), s2 = softmax_vec(v2);
  std::printf("presence softmax: %s %s\n", fmt12(s1[0]).c_str(), fmt12(s1[1]).c_str());
  std::printf("location softmax: %s %s %s\n", fmt12(s2[0]).c_str(), fmt12(s2[1]).c_str(),
              fmt12(s2[2]).c_str());
  return 0;
}

int cmd_inspect(const Config& cfg, const std::string& ckpt) {
  if (!ckpt.empty()) {
    CheckpointInfo info = read_checkpoint_info(ckpt);
    int64_t total = 0;
    for (const CheckpointTensor& t : info.tensors) {
      std::printf("%-24s %-12s %lld\n", t.name.c_str(),
                  detail::shape_token(t.shape).c_str(), static_cast<long long>(t.numel()));
      total += t.numel();
    }
    std::printf("total %lld\n", static_cast<long long>(total));
    return 0;
  }
  ModelConfig model = model_from(cfg);
  int64_t ref = cfg.get_int("model.reference_head");
  if (ref < 0) throw ConfigError("config: model.reference_head must be >= 0");
  std::vector<TensorSpec> manifest = shape_manifest(model, ref == 0, ref);
  int64_t total = 0;
  for (const TensorSpec& t : manifest) {
    std::printf("%-24s %-12s %lld\n", t.name.c_str(), detail::shape_token(t.shape).c_str(),
                static_cast<long long>(t.numel()));
    total += t.numel();
  }
  std::printf("total %lld\n", static_cast<long long>(total));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dual-task ViT laboratory"};
  app.require_subcommand(1);

  Config cfg = default_config();
  std::string config_path;
  std::vector<Override> overrides;

  // shared --config/--seed plus a per-command set of key overrides
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "configuration file (key = value lines)");
    auto add_key = [&, sub](const std::string& flag, const std::string& key,
                            const std::string& doc) {
      sub->add_option_function<std::string>(
          flag, [&overrides, key](const std::string& v) { overrides.push_back({key, v}); },
          doc);
    };
    add_key("--seed", "seed", "base seed for all derived random streams");
    return add_key;
  };

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic phantom dataset");
  std::string synth_out, synth_counts = "100,100,100,100";
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--counts", synth_counts, "normal,deep,lobar,subtentorial counts");
  {
    auto add_key = add_common(synth);
    add_key("--size", "phantom.size", "square phantom extent, pixels");
  }

  CLI::App* prep = app.add_subcommand("preprocess", "brace-removal preprocessing");
  std::string prep_index, prep_out;
  prep->add_option("--index", prep_index, "dataset index file")->required();
  prep->add_option("--out", prep_out, "output directory")->required();
  {
    auto add_key = add_common(prep);
    add_key("--threshold", "morph.threshold", "binarization threshold (-1 = auto)");
    add_key("--erosion-radius", "morph.erosion_radius", "mask erosion disk radius");
    add_key("--edge-columns", "morph.edge_columns", "columns zeroed per side");
    add_key("--fill-connectivity", "morph.fill_connectivity", "hole-fill connectivity");
    add_key("--window", "morph.window", "intensity window 'center,width'");
  }

  CLI::App* tr = app.add_subcommand("train", "train a model");
  std::string tr_index, tr_out = "run";
  tr->add_option("--index", tr_index, "dataset index file")->required();
  tr->add_option("--out", tr_out, "run directory");
  {
    auto add_key = add_common(tr);
    add_key("--preset", "model.preset", "model geometry: tiny | large");
    add_key("--epochs", "train.epochs", "training epochs");
    add_key("--lr", "train.lr", "AdamW learning rate");
    add_key("--batch-train", "train.batch_train", "train batch size (0 = auto)");
    add_key("--weight-decay", "train.weight_decay", "AdamW weight decay");
    add_key("--schedule", "train.schedule", "constant | cosine");
    add_key("--split", "data.split", "train,val,test ratios");
    add_key("--balance", "data.balance", "balance the train split (true/false)");
    add_key("--augment", "data.augment", "augment the train split (true/false)");
    add_key("--pretrained", "train.pretrained", "checkpoint to seed encoder weights");
  }

  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ev_ckpt, ev_index, ev_scope = "ich-only";
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
  ev->add_option("--index", ev_index, "dataset index file")->required();
  ev->add_option("--scope", ev_scope, "task-2 scope: ich-only | all");
  {
    auto add_key = add_common(ev);
    add_key("--batch-test", "train.batch_test", "evaluation batch size");
  }

  CLI::App* pr = app.add_subcommand("predict", "classify one image");
  std::string pr_ckpt, pr_image;
  pr->add_option("--checkpoint", pr_ckpt, "checkpoint file")->required();
  pr->add_option("--image", pr_image, "8-bit raster to classify")->required();
  add_common(pr);

  CLI::App* in = app.add_subcommand("inspect", "print the parameter table");
  std::string in_ckpt;
  in->add_option("--checkpoint", in_ckpt, "checkpoint to inspect instead of a preset");
  {
    auto add_key = add_common(in);
    add_key("--preset", "model.preset", "model geometry: tiny | large");
    add_key("--reference-head", "model.reference_head",
            "classes of a single reference readout (0 = dual heads)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp")
      return app.exit(e);
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  }

  try {
    apply_overrides(cfg, config_path, overrides);
    if (synth->parsed()) return cmd_synth(cfg, synth_out, synth_counts);
    if (prep->parsed()) return cmd_preprocess(cfg, prep_index, prep_out);
    if (tr->parsed()) return cmd_train(cfg, tr_index, tr_out);
    if (ev->parsed()) return cmd_eval(cfg, ev_ckpt, ev_index, ev_scope);
    if (pr->parsed()) return cmd_predict(cfg, pr_ckpt, pr_image);
    if (in->parsed()) return cmd_inspect(cfg, in_ckpt);
    std::fprintf(stderr, "config error: no subcommand\n");
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
