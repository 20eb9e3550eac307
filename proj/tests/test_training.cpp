#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN

#include <torch/torch.h>

#include <cmath>
#include <filesystem>

#include "test_util.hpp"
#include "wrinkles/toydata.hpp"
#include "wrinkles/trainer_inpaint.hpp"

using namespace wrinkles;
using testutil::rand_tensor;

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / "wrinkles_train_test") {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string write_tiny_seg(const fs::path& dir) {
  SegArch a;
  a.encoder_depth = 2;
  a.base_channels = 4;
  torch::manual_seed(606);
  SegModel seg(a);
  auto path = (dir / "seg.ckpt").string();
  save_seg_checkpoint(path, seg);
  return path;
}

InpaintTrainConfig tiny_config(const std::string& seg_ckpt) {
  InpaintTrainConfig cfg;
  cfg.epochs = 2;
  cfg.lr_gen = 1e-3;
  cfg.lr_disc = 1e-3;
  cfg.batch_size = 2;
  cfg.crop_size = 64;
  cfg.seed = 11;
  cfg.mask_policy = testutil::toy_policy();
  cfg.seg_checkpoint = seg_ckpt;
  cfg.gen_arch.base_channels = 8;
  cfg.gen_arch.n_blocks = 1;
  cfg.disc_arch = DiscArch{8, 2, 4};  // receptive field 16, fits 64px crops
  cfg.hrf_width = 8;
  cfg.hrf_layers = 2;
  cfg.val_every = 1;
  return cfg;
}

struct Batch {
  torch::Tensor images;  // Bx3xHxW
  torch::Tensor masks;   // Bx1xHxW
};

Batch toy_batch(uint64_t seed) {
  std::vector<torch::Tensor> imgs, masks;
  for (int i = 0; i < 2; ++i) {
    auto s = make_toy_sample(64, seed + i);
    imgs.push_back(s.image.t);
    masks.push_back(s.wrinkle_mask.t.unsqueeze(0));
  }
  return {torch::stack(imgs), torch::stack(masks)};
}

std::vector<std::pair<std::string, torch::Tensor>> named_state(const torch::nn::Module& m) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& p : m.named_parameters()) out.emplace_back(p.key(), p.value().detach().clone());
  for (const auto& b : m.named_buffers()) out.emplace_back(b.key(), b.value().detach().clone());
  return out;
}

bool state_equal(const torch::nn::Module& m,
                 const std::vector<std::pair<std::string, torch::Tensor>>& state) {
  auto now = named_state(m);
  if (now.size() != state.size()) return false;
  for (size_t i = 0; i < now.size(); ++i) {
    if (now[i].first != state[i].first) return false;
    if (!torch::equal(now[i].second, state[i].second)) return false;
  }
  return true;
}

bool log_finite(const StepLog& log) {
  return std::isfinite(log.terms.adv) && std::isfinite(log.terms.hrfpl) &&
         std::isfinite(log.terms.discpl) && std::isfinite(log.terms.r1) &&
         std::isfinite(log.terms.ffl) && std::isfinite(log.terms.wrinkle) &&
         std::isfinite(log.d_loss) && std::isfinite(log.d_total) && std::isfinite(log.g_total);
}

}  // namespace

TEST_CASE("make_train_context loads and freezes the segmentation model") {
  TempDir tmp;
  auto cfg = tiny_config(write_tiny_seg(tmp.path));
  torch::manual_seed(21);
  auto ctx = make_train_context(cfg);
  CHECK_FALSE(ctx.seg->is_training());
  for (const auto& p : ctx.seg->parameters()) CHECK_FALSE(p.requires_grad());
  CHECK(ctx.step == 0);
  CHECK(ctx.hrf != nullptr);
}

TEST_CASE("make_train_context rejects missing or unset checkpoints") {
  TempDir tmp;
  auto cfg = tiny_config((tmp.path / "absent.ckpt").string());
  CHECK_THROWS_AS(make_train_context(cfg), std::runtime_error);
  cfg.seg_checkpoint = "";
  CHECK_THROWS_AS(make_train_context(cfg), std::invalid_argument);
}

TEST_CASE("a train step moves both networks and logs finite terms") {
  TempDir tmp;
  auto cfg = tiny_config(write_tiny_seg(tmp.path));
  torch::manual_seed(22);
  auto ctx = make_train_context(cfg);
  auto gen_before = named_state(*ctx.gen);
  auto disc_before = named_state(*ctx.disc);

  auto batch = toy_batch(400);
  auto log = train_step(ctx, batch.images, batch.masks, 31);
  CHECK(log_finite(log));
  CHECK(ctx.step == 1);
  CHECK_FALSE(state_equal(*ctx.gen, gen_before));
  CHECK_FALSE(state_equal(*ctx.disc, disc_before));
  // The generator step must not have left the discriminator grad-less.
  for (const auto& p : ctx.disc->parameters()) CHECK(p.requires_grad());
}

TEST_CASE("training steps are deterministic given the same seeds") {
  TempDir tmp;
  auto seg_ckpt = write_tiny_seg(tmp.path);
  auto run = [&]() {
    auto cfg = tiny_config(seg_ckpt);
    torch::manual_seed(23);
    auto ctx = make_train_context(cfg);
    std::vector<StepLog> logs;
    for (uint64_t s = 0; s < 2; ++s) {
      auto batch = toy_batch(500 + 10 * s);
      logs.push_back(train_step(ctx, batch.images, batch.masks, s));
    }
    return std::make_pair(std::move(logs), named_state(*ctx.gen));
  };
  auto [logs_a, gen_a] = run();
  auto [logs_b, gen_b] = run();
  for (size_t i = 0; i < logs_a.size(); ++i) {
    CHECK(logs_a[i].g_total == logs_b[i].g_total);
    CHECK(logs_a[i].d_total == logs_b[i].d_total);
    CHECK(logs_a[i].terms.hrfpl == logs_b[i].terms.hrfpl);
  }
  for (size_t i = 0; i < gen_a.size(); ++i) CHECK(torch::equal(gen_a[i].second, gen_b[i].second));
}

TEST_CASE("zero-weight terms are skipped exactly") {
  TempDir tmp;
  auto cfg = tiny_config(write_tiny_seg(tmp.path));
  cfg.weights.lambda_ffl = 0.0;
  cfg.weights.lambda_s = 0.0;
  cfg.weights.lambda_r1 = 0.0;
  torch::manual_seed(24);
  auto ctx = make_train_context(cfg);
  auto batch = toy_batch(600);
  auto log = train_step(ctx, batch.images, batch.masks, 0);
  CHECK(log.terms.ffl == 0.0);
  CHECK(log.terms.wrinkle == 0.0);
  CHECK(log.terms.r1 == 0.0);
  CHECK(log.d_total == log.d_loss);
  CHECK(log.terms.hrfpl > 0.0);
}

TEST_CASE("with every generator weight at zero only the discriminator moves") {
  TempDir tmp;
  auto cfg = tiny_config(write_tiny_seg(tmp.path));
  cfg.weights = LossWeights{0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  cfg.gen_arch.norm = "none";  // batch-norm buffers would update in the fwd pass
  torch::manual_seed(25);
  auto ctx = make_train_context(cfg);
  auto gen_before = named_state(*ctx.gen);
  auto disc_before = named_state(*ctx.disc);
  auto batch = toy_batch(700);
  auto log = train_step(ctx, batch.images, batch.masks, 0);
  CHECK(log.g_total == 0.0);
  CHECK(state_equal(*ctx.gen, gen_before));
  CHECK_FALSE(state_equal(*ctx.disc, disc_before));
}

TEST_CASE("an hrfpl-only step reproduces the standalone backward pass") {
  // With one active term the step's generator gradients must match a direct
  // backward of that loss through an identical copy of the network.
  TempDir tmp;
  auto cfg = tiny_config(write_tiny_seg(tmp.path));
  cfg.weights = LossWeights{0.0, 1.0, 0.0, 0.0, 0.0, 0.0};
  cfg.mask_policy.n_strokes = {0, 0};  // no random holes: the mask is exactly m_w
  cfg.gen_arch.norm = "none";          // keep the step's two forwards identical
  torch::manual_seed(26);
  auto ctx = make_train_context(cfg);

  auto snapshot = (tmp.path / "gen_before.ckpt").string();
  save_generator_checkpoint(snapshot, ctx.gen);

  auto batch = toy_batch(800);
  train_step(ctx, batch.images, batch.masks, 0);

  auto replica = load_generator_checkpoint(snapshot);
  replica->train();
  auto x_prime = torch::cat({batch.images * (1.0f - batch.masks), batch.masks}, 1);
  auto x_hat = composite_batched(batch.images, replica->forward(x_prime), batch.masks);
  hrfpl(batch.images, x_hat, batch.masks, *ctx.hrf).backward();

  auto got = ctx.gen->named_parameters();
  auto want = replica->named_parameters();
  REQUIRE(got.size() == want.size());
  for (const auto& p : got) {
    auto* q = want.find(p.key());
    REQUIRE(q != nullptr);
    REQUIRE(p.value().grad().defined());
    REQUIRE(q->grad().defined());
    CHECK(testutil::max_abs_diff(p.value().grad(), q->grad()) <= 1e-12);
  }
}

TEST_CASE("the segmentation model never moves during inpainting training") {
  TempDir tmp;
  auto cfg = tiny_config(write_tiny_seg(tmp.path));
  cfg.weights.lambda_s = 0.5;
  torch::manual_seed(27);
  auto ctx = make_train_context(cfg);
  auto seg_before = named_state(*ctx.seg);
  for (uint64_t s = 0; s < 3; ++s) {
    auto batch = toy_batch(900 + 10 * s);
    train_step(ctx, batch.images, batch.masks, s);
  }
  CHECK(state_equal(*ctx.seg, seg_before));
}

TEST_CASE("train_inpainting runs end to end on toy data") {
  TempDir tmp;
  auto cfg = tiny_config(write_tiny_seg(tmp.path));

  ToyConfig toy;
  toy.n_samples = 6;
  toy.seed = 40;
  auto all = make_toy_dataset(toy);
  std::vector<Sample> train(all.begin(), all.begin() + 4);
  std::vector<Sample> val(all.begin() + 4, all.end());

  auto result = train_inpainting(train, val, cfg);
  REQUIRE(result.history.size() == 2);
  for (const auto& rec : result.history) {
    CHECK(std::isfinite(rec.g_total));
    CHECK(std::isfinite(rec.d_total));
    CHECK(std::isfinite(rec.val_lpips));  // val_every = 1
  }
  CHECK(std::isfinite(result.best_val_lpips));
  CHECK(result.best_val_lpips <= result.history.front().val_lpips + 1e-12);
  REQUIRE(result.val_previews.size() == 2);
  for (const auto& img : result.val_previews)
    CHECK(img.t.sizes() == torch::IntArrayRef({3, 64, 64}));
}

TEST_CASE("train_inpainting is reproducible") {
  TempDir tmp;
  auto cfg = tiny_config(write_tiny_seg(tmp.path));
  cfg.epochs = 1;

  ToyConfig toy;
  toy.n_samples = 4;
  toy.seed = 41;
  auto all = make_toy_dataset(toy);
  std::vector<Sample> train(all.begin(), all.begin() + 3);
  std::vector<Sample> val(all.begin() + 3, all.end());

  auto a = train_inpainting(train, val, cfg);
  auto b = train_inpainting(train, val, cfg);
  CHECK(inpaint_history_json(a.history).dump() == inpaint_history_json(b.history).dump());
  CHECK(torch::equal(a.val_previews[0].t, b.val_previews[0].t));
}

TEST_CASE("inpaint history serializes missing validation as null") {
  InpaintEpochRecord rec;
  rec.epoch = 3;
  rec.g_total = 1.5;
  auto j = inpaint_history_json({rec});
  REQUIRE(j.is_array());
  CHECK(j[0].at("val_lpips").is_null());
  CHECK(j[0].at("epoch") == 3);

  rec.val_lpips = 0.25;
  auto j2 = inpaint_history_json({rec});
  CHECK(j2[0].at("val_lpips") == doctest::Approx(0.25));
}

TEST_CASE("train_segmentation learns, decays the rate once, and reproduces") {
  ToyConfig toy;
  toy.n_samples = 6;
  toy.seed = 42;
  auto all = make_toy_dataset(toy);
  std::vector<Sample> train(all.begin(), all.begin() + 4);
  std::vector<Sample> val(all.begin() + 4, all.end());

  SegTrainConfig cfg;
  cfg.epochs = 3;
  cfg.lr = 1e-3;
  cfg.lr_decay_epoch = 1;
  cfg.lr_decay_factor = 0.5;
  cfg.input_size = 64;
  cfg.batch_size = 2;
  cfg.seed = 5;
  cfg.arch.encoder_depth = 2;
  cfg.arch.base_channels = 4;

  auto result = train_segmentation(train, val, cfg);
  REQUIRE(result.history.size() == 3);
  CHECK(result.history[0].lr == 1e-3);
  CHECK(result.history[1].lr == 0.5e-3);
  CHECK(result.history[2].lr == 0.5e-3);
  for (const auto& rec : result.history) {
    CHECK(std::isfinite(rec.train_loss));
    CHECK(rec.val_iou >= 0.0);
    CHECK(rec.val_iou <= 1.0);
  }
  CHECK(result.best_val_iou >= 0.0);

  auto again = train_segmentation(train, val, cfg);
  CHECK(seg_history_json(result.history).dump() == seg_history_json(again.history).dump());
}

TEST_CASE("seg history omits val_iou when there is no validation set") {
  ToyConfig toy;
  toy.n_samples = 2;
  toy.seed = 43;
  auto train = make_toy_dataset(toy);

  SegTrainConfig cfg;
  cfg.epochs = 1;
  cfg.input_size = 64;
  cfg.batch_size = 2;
  cfg.arch.encoder_depth = 2;
  cfg.arch.base_channels = 4;

  auto result = train_segmentation(train, {}, cfg);
  auto j = seg_history_json(result.history);
  CHECK_FALSE(j.at("epochs")[0].contains("val_iou"));
  CHECK(result.best_val_iou == 0.0);
}
