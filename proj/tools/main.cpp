// Command-line front end: train both models, run the two-stage wrinkle
// removal on single images, evaluate, and generate the synthetic toy set.
// Exit codes: 0 success, 1 usage/config error, 2 runtime failure.

#include <torch/torch.h>

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>

#include "wrinkles/config.hpp"
#include "wrinkles/data.hpp"
#include "wrinkles/eval.hpp"
#include "wrinkles/losses.hpp"
#include "wrinkles/pipeline.hpp"
#include "wrinkles/png_io.hpp"
#include "wrinkles/segnet.hpp"
#include "wrinkles/toydata.hpp"
#include "wrinkles/trainer_inpaint.hpp"
#include "wrinkles/types.hpp"

namespace fs = std::filesystem;
using namespace wrinkles;

namespace {

struct CommonOpts {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::optional<std::string> output;
  std::optional<std::string> device;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "run configuration file")->required();
  cmd->add_option("--seed", o.seed, "override the config seed");
  cmd->add_option("--output", o.output, "override output_dir");
  cmd->add_option("--device", o.device, "override the device (cpu/cuda)");
}

// Loads + validates the config and applies flag overrides. Throws
// std::invalid_argument on any config-level problem.
RunConfig load_config(const CommonOpts& o) {
  auto cfg = parse_config(o.config_path);
  if (o.seed) apply_seed(cfg, *o.seed);
  if (o.output) cfg.output_dir = *o.output;
  if (o.device) cfg.device = *o.device;
  wrinkles::detail::require(cfg.device == "cpu" || torch::cuda::is_available(),
                  "device '" + cfg.device + "' requested but CUDA is not available");
  if (cfg.threads > 0) torch::set_num_threads(cfg.threads);
  return cfg;
}

std::string manifest_path(const RunConfig& cfg) {
  return cfg.data.manifest.empty() ? (fs::path(cfg.data.root) / "manifest.txt").string()
                                   : cfg.data.manifest;
}

// Loads the dataset and applies the seeded split. Both halves may be used as
// (train, val); val is empty when val_fraction is 0.
std::pair<std::vector<Sample>, std::vector<Sample>> load_split(const RunConfig& cfg) {
  wrinkles::detail::require(fs::exists(cfg.data.root), "dataset root not found: " + cfg.data.root);
  auto ids = read_manifest(manifest_path(cfg));
  if (cfg.data.val_fraction <= 0.0) return {load_dataset(cfg.data.root, ids), {}};
  auto [train_ids, val_ids] = split_dataset(ids, cfg.data.val_fraction, cfg.seed);
  return {load_dataset(cfg.data.root, train_ids), load_dataset(cfg.data.root, val_ids)};
}

void write_json(const std::string& path, const nlohmann::json& j) {
  fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path);
  wrinkles::detail::require(out.good(), "cannot write " + path);
  out << j.dump(2) << "\n";
}

int cmd_train_seg(const CommonOpts& opts) {
  auto cfg = load_config(opts);
  auto [train, val] = load_split(cfg);
  auto result = train_segmentation(train, val, cfg.seg_train, cfg.augment);

  fs::create_directories(cfg.output_dir);
  const auto ckpt_path = (fs::path(cfg.output_dir) / "seg.ckpt").string();
  save_seg_checkpoint(ckpt_path, result.model);
  write_json((fs::path(cfg.output_dir) / "seg_history.json").string(),
             {{"config_hash", config_hash(cfg)},
              {"seed", cfg.seed},
              {"best_val_iou", result.best_val_iou},
              {"history", seg_history_json(result.history)}});
  std::printf("segmentation done: %zu epochs, best val IoU %.4f, checkpoint %s\n",
              result.history.size(), result.best_val_iou, ckpt_path.c_str());
  return 0;
}

int cmd_train_inpaint(const CommonOpts& opts) {
  auto cfg = load_config(opts);
  wrinkles::detail::require(!cfg.inpaint_train.seg_checkpoint.empty() &&
                      fs::exists(cfg.inpaint_train.seg_checkpoint),
                  "seg_checkpoint not found: " + cfg.inpaint_train.seg_checkpoint);
  auto [train, val] = load_split(cfg);
  auto result = train_inpainting(train, val, cfg.inpaint_train, cfg.augment);

  fs::create_directories(cfg.output_dir);
  const auto gen_path = (fs::path(cfg.output_dir) / "gen.ckpt").string();
  save_generator_checkpoint(gen_path, result.gen);
  save_discriminator_checkpoint((fs::path(cfg.output_dir) / "disc.ckpt").string(), result.disc);
  nlohmann::json best;
  if (std::isfinite(result.best_val_lpips)) best = result.best_val_lpips;
  write_json((fs::path(cfg.output_dir) / "inpaint_history.json").string(),
             {{"config_hash", config_hash(cfg)},
              {"seed", cfg.seed},
              {"loss_weights", cfg.inpaint_train.weights.to_json()},
              {"best_val_lpips", best},
              {"history", inpaint_history_json(result.history)}});
  if (!result.val_previews.empty())
    fs::create_directories(fs::path(cfg.output_dir) / "previews");
  for (size_t i = 0; i < result.val_previews.size(); ++i) {
    char name[48];
    std::snprintf(name, sizeof(name), "preview_val_%03zu.png", i);
    png::save_rgb((fs::path(cfg.output_dir) / "previews" / name).string(),
                  result.val_previews[i].t);
  }
  std::printf("inpainting done: %zu epochs, best val LPIPS %.4f, checkpoint %s\n",
              result.history.size(), result.best_val_lpips, gen_path.c_str());
  return 0;
}

int cmd_infer(const CommonOpts& opts, const std::string& image_path,
              const std::string& out_path, const std::string& mask_override_path) {
  auto cfg = load_config(opts);
  wrinkles::detail::require(fs::exists(cfg.checkpoints.seg),
                  "seg checkpoint not found: " + cfg.checkpoints.seg);
  wrinkles::detail::require(fs::exists(cfg.checkpoints.gen),
                  "generator checkpoint not found: " + cfg.checkpoints.gen);
  auto seg = load_seg_checkpoint(cfg.checkpoints.seg);
  auto gen = load_generator_checkpoint(cfg.checkpoints.gen);

  auto image = Image::create(png::load_rgb(image_path));
  auto pipe_opts = cfg.pipeline;
  if (!mask_override_path.empty()) {
    auto gray = png::load_gray(mask_override_path);
    pipe_opts.mask_override = Mask::create((gray > 0.5f).to(torch::kFloat32));
  }
  auto out = remove_wrinkles(image, seg, gen, pipe_opts);

  if (fs::path(out_path).has_parent_path())
    fs::create_directories(fs::path(out_path).parent_path());
  png::save_rgb(out_path, out.x_hat.t);
  auto mask_path = fs::path(out_path);
  mask_path.replace_extension(".mask.png");
  png::save_gray(mask_path.string(), out.mask.t);
  std::printf("wrote %s and %s\n", out_path.c_str(), mask_path.string().c_str());
  return 0;
}

void print_report(const char* title, const MetricsReport& r) {
  std::printf("%-10s | %-12s | %s\n", title, "metric", "value");
  auto row = [](const char* name, const std::optional<double>& v) {
    if (v.has_value())
      std::printf("%-10s | %-12s | %.6f\n", "", name, *v);
    else
      std::printf("%-10s | %-12s | n/a\n", "", name);
  };
  row("iou", r.iou);
  row("lpips_mean", r.lpips_mean);
  row("fid", r.fid);
  std::printf("%-10s | %-12s | %d (skipped %d)\n", "", "n_samples", r.n_samples, r.n_skipped);
}

int cmd_eval(const CommonOpts& opts, bool eval_seg, bool eval_inpaint) {
  auto cfg = load_config(opts);
  wrinkles::detail::require(eval_seg || eval_inpaint, "pass --seg and/or --inpaint");
  auto [train, val] = load_split(cfg);
  // evaluate on the held-out split when there is one
  const auto& eval_set = val.empty() ? train : val;
  fs::create_directories(cfg.output_dir);

  if (eval_seg) {
    wrinkles::detail::require(fs::exists(cfg.checkpoints.seg),
                    "seg checkpoint not found: " + cfg.checkpoints.seg);
    auto seg = load_seg_checkpoint(cfg.checkpoints.seg);
    auto report = evaluate_segmentation(seg, eval_set);
    report.mask_seed = cfg.seed;
    report.config_hash = config_hash(cfg);
    write_json((fs::path(cfg.output_dir) / "metrics_seg.json").string(), report.to_json());
    print_report("seg", report);
  }
  if (eval_inpaint) {
    wrinkles::detail::require(fs::exists(cfg.checkpoints.gen),
                    "generator checkpoint not found: " + cfg.checkpoints.gen);
    auto gen = load_generator_checkpoint(cfg.checkpoints.gen);
    DilatedConvExtractor feat(3, cfg.inpaint_train.hrf_width, cfg.inpaint_train.hrf_layers,
                              cfg.inpaint_train.hrf_seed);
    if (!cfg.inpaint_train.hrf_checkpoint.empty())
      feat.load_checkpoint(cfg.inpaint_train.hrf_checkpoint);
    auto report = evaluate_inpainting(gen, eval_set, cfg.mask_policy, feat, cfg.seed);
    report.config_hash = config_hash(cfg);
    write_json((fs::path(cfg.output_dir) / "metrics_inpaint.json").string(), report.to_json());
    print_report("inpaint", report);
  }
  return 0;
}

int cmd_make_toy(const std::string& output, int n, int size, uint64_t seed) {
  write_toy_dataset(output, ToyConfig{n, size, seed});
  std::printf("wrote %d %dx%d samples under %s\n", n, size, size, output.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-stage facial wrinkle removal: segmentation + FFC inpainting"};
  app.require_subcommand(1);

  CommonOpts train_seg_opts, train_inpaint_opts, infer_opts, eval_opts;
  auto* train_seg = app.add_subcommand("train-seg", "train the wrinkle segmentation model");
  add_common(train_seg, train_seg_opts);

  auto* train_inpaint = app.add_subcommand("train-inpaint", "train the inpainting GAN");
  add_common(train_inpaint, train_inpaint_opts);

  std::string image_path, out_path, mask_override_path;
  auto* infer = app.add_subcommand("infer", "remove wrinkles from one image");
  add_common(infer, infer_opts);
  infer->add_option("image", image_path, "input PNG")->required();
  infer->add_option("out", out_path, "output PNG path")->required();
  infer->add_option("--mask-override", mask_override_path,
                    "binary PNG replacing the predicted wrinkle mask");

  bool eval_seg = false, eval_inpaint = false;
  auto* eval_cmd = app.add_subcommand("eval", "compute IoU / LPIPS / FID reports");
  add_common(eval_cmd, eval_opts);
  eval_cmd->add_flag("--seg", eval_seg, "evaluate segmentation IoU");
  eval_cmd->add_flag("--inpaint", eval_inpaint, "evaluate inpainting LPIPS/FID");

  std::string toy_output = "data/toy";
  int toy_n = 16, toy_size = 64;
  uint64_t toy_seed = 7;
  auto* make_toy = app.add_subcommand("make-toy", "generate the synthetic toy dataset");
  make_toy->add_option("--output", toy_output, "dataset root to create");
  make_toy->add_option("--n", toy_n, "number of samples");
  make_toy->add_option("--size", toy_size, "sample size in px");
  make_toy->add_option("--seed", toy_seed, "generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*train_seg) return cmd_train_seg(train_seg_opts);
    if (*train_inpaint) return cmd_train_inpaint(train_inpaint_opts);
    if (*infer) return cmd_infer(infer_opts, image_path, out_path, mask_override_path);
    if (*eval_cmd) return cmd_eval(eval_opts, eval_seg, eval_inpaint);
    if (*make_toy) return cmd_make_toy(toy_output, toy_n, toy_size, toy_seed);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
