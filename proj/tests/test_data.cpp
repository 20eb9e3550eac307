#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>

#include "test_util.hpp"
#include "wrinkles/checkpoint.hpp"
#include "wrinkles/config.hpp"
#include "wrinkles/data.hpp"
#include "wrinkles/png_io.hpp"
#include "wrinkles/toydata.hpp"

using namespace wrinkles;
namespace fs = std::filesystem;
using testutil::rand_tensor;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

// Values already on the 8-bit grid survive a PNG round trip exactly.
torch::Tensor quantized(std::vector<int64_t> shape, uint64_t seed) {
  auto t = rand_tensor(std::move(shape), seed);
  return torch::round(t * 255.0f) / 255.0f;
}

}  // namespace

// ---------------------------------------------------------------------------
// Core value types
// ---------------------------------------------------------------------------

TEST_CASE("image creation validates shape and range") {
  CHECK_NOTHROW(Image::create(rand_tensor({3, 32, 32}, 601)));
  CHECK_THROWS_AS(Image::create(rand_tensor({1, 32, 32}, 602)), std::invalid_argument);
  CHECK_THROWS_AS(Image::create(rand_tensor({3, 16, 16}, 603)), std::invalid_argument);
  CHECK_THROWS_AS(Image::create(rand_tensor({3, 32, 32}, 604) + 1.0f), std::invalid_argument);
  auto with_nan = rand_tensor({3, 32, 32}, 605);
  with_nan[0][0][0] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(Image::create(with_nan), std::invalid_argument);
}

TEST_CASE("mask creation demands binary values") {
  CHECK_NOTHROW(Mask::create(torch::ones({8, 8})));
  CHECK_THROWS_AS(Mask::create(torch::full({8, 8}, 0.5f)), std::invalid_argument);
  CHECK_THROWS_AS(Mask::create(torch::ones({1, 8, 8})), std::invalid_argument);
}

TEST_CASE("spatial mismatch errors carry both sizes") {
  CHECK_THROWS_WITH_AS(require_same_hw(torch::zeros({4, 4}), torch::zeros({4, 5}), "op"),
                       doctest::Contains("4x5"), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// PNG io
// ---------------------------------------------------------------------------

TEST_CASE("rgb png round trip is exact on the 8-bit grid") {
  TempDir dir("wrk_png_rgb");
  auto img = quantized({3, 40, 56}, 611);
  png::save_rgb(dir.file("x.png"), img);
  auto back = png::load_rgb(dir.file("x.png"));
  CHECK(torch::equal(back, img));
}

TEST_CASE("grayscale png round trip is exact on the 8-bit grid") {
  TempDir dir("wrk_png_gray");
  auto map = quantized({24, 31}, 612).squeeze();
  png::save_gray(dir.file("m.png"), map);
  auto back = png::load_gray(dir.file("m.png"));
  CHECK(torch::equal(back, map));
}

TEST_CASE("png loader names the missing file") {
  CHECK_THROWS_WITH_AS(png::load_rgb("/nonexistent/p.png"), doctest::Contains("/nonexistent/p.png"),
                       std::runtime_error);
}

// ---------------------------------------------------------------------------
// Sample loading
// ---------------------------------------------------------------------------

TEST_CASE("paired samples binarize the mask and keep dimensions") {
  TempDir dir("wrk_pairs");
  png::save_rgb(dir.file("img.png"), quantized({3, 32, 32}, 621));
  // Values straddling the 127/255 threshold.
  auto soft = torch::zeros({32, 32});
  soft[0][0] = 127.0f / 255.0f;  // not > 127: off
  soft[0][1] = 128.0f / 255.0f;  // on
  soft[1][0] = 1.0f;
  png::save_gray(dir.file("mask.png"), soft);

  auto s = load_sample(dir.file("img.png"), dir.file("mask.png"));
  CHECK(s.id == "img");
  CHECK(s.wrinkle_mask.t[0][0].item<float>() == 0.0f);
  CHECK(s.wrinkle_mask.t[0][1].item<float>() == 1.0f);
  CHECK(s.wrinkle_mask.t[1][0].item<float>() == 1.0f);
}

TEST_CASE("mismatched pair dimensions are rejected with both names") {
  TempDir dir("wrk_mismatch");
  png::save_rgb(dir.file("img.png"), quantized({3, 32, 32}, 622));
  png::save_gray(dir.file("mask.png"), torch::zeros({33, 32}));
  CHECK_THROWS_WITH_AS(load_sample(dir.file("img.png"), dir.file("mask.png")),
                       doctest::Contains("mismatch"), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

TEST_CASE("identity augmentation is bit-exact") {
  auto s = make_toy_sample(64, 3);
  auto out = augment(s, AugmentConfig{}, 12345);
  CHECK(torch::equal(out.image.t, s.image.t));
  CHECK(torch::equal(out.wrinkle_mask.t, s.wrinkle_mask.t));
}

TEST_CASE("augmentation is deterministic per seed") {
  auto s = make_toy_sample(64, 4);
  AugmentConfig cfg;
  cfg.flip_horizontal = 0.5;
  cfg.flip_vertical = 0.5;
  cfg.random_shift_px = 4;
  cfg.crop_size = 48;
  auto a = augment(s, cfg, 7);
  auto b = augment(s, cfg, 7);
  CHECK(torch::equal(a.image.t, b.image.t));
  CHECK(torch::equal(a.wrinkle_mask.t, b.wrinkle_mask.t));

  bool any_differs = false;
  for (uint64_t seed = 0; seed < 8 && !any_differs; ++seed)
    any_differs = !torch::equal(augment(s, cfg, seed).image.t, a.image.t);
  CHECK(any_differs);
}

TEST_CASE("certain flips mirror image and mask together") {
  auto s = make_toy_sample(64, 5);
  AugmentConfig cfg;
  cfg.flip_horizontal = 1.0;
  auto out = augment(s, cfg, 9);
  CHECK(torch::equal(out.image.t, s.image.t.flip(-1)));
  CHECK(torch::equal(out.wrinkle_mask.t, s.wrinkle_mask.t.flip(-1)));
}

TEST_CASE("image and mask stay aligned through flips, shifts and crops") {
  // An image whose channels replicate the mask makes misalignment visible as
  // an exact mismatch (rotation excluded: it resamples the two differently).
  auto mask = make_toy_sample(64, 6).wrinkle_mask;
  auto s = Sample{Image::create(mask.t.expand({3, 64, 64}).contiguous()), mask, "aligned"};
  AugmentConfig cfg;
  cfg.flip_horizontal = 0.5;
  cfg.flip_vertical = 0.5;
  cfg.random_shift_px = 5;
  cfg.crop_size = 40;
  for (uint64_t seed = 0; seed < 6; ++seed) {
    auto out = augment(s, cfg, seed);
    CHECK(torch::equal(out.image.t[0], out.wrinkle_mask.t));
    CHECK(out.image.t.size(1) == 40);
    CHECK(out.image.t.size(2) == 40);
  }
}

TEST_CASE("rotation keeps the mask binary") {
  auto s = make_toy_sample(64, 7);
  AugmentConfig cfg;
  cfg.rotation_deg_max = 20.0;
  auto out = augment(s, cfg, 11);
  CHECK((out.wrinkle_mask.t.eq(0) | out.wrinkle_mask.t.eq(1)).all().item<bool>());
  CHECK(out.image.t.min().item<double>() >= 0.0);
  CHECK(out.image.t.max().item<double>() <= 1.0);
}

TEST_CASE("oversized crops are rejected") {
  auto s = make_toy_sample(32, 8);
  AugmentConfig cfg;
  cfg.crop_size = 64;
  CHECK_THROWS_AS(augment(s, cfg, 1), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Splits and manifests
// ---------------------------------------------------------------------------

TEST_CASE("dataset split covers all ids exactly once") {
  std::vector<std::string> ids;
  for (int i = 0; i < 10; ++i) ids.push_back("s" + std::to_string(i));

  auto [train, val] = split_dataset(ids, 0.2, 42);
  CHECK(val.size() == 2);
  CHECK(train.size() == 8);

  std::set<std::string> all(train.begin(), train.end());
  all.insert(val.begin(), val.end());
  CHECK(all.size() == 10);

  auto [train2, val2] = split_dataset(ids, 0.2, 42);
  CHECK(train == train2);
  CHECK(val == val2);

  auto [train3, val3] = split_dataset(ids, 0.2, 43);
  CHECK(train != train3);
}

TEST_CASE("split rejects duplicates and degenerate fractions") {
  std::vector<std::string> dup{"a", "b", "a"};
  CHECK_THROWS_WITH_AS(split_dataset(dup, 0.5, 1), doctest::Contains("duplicate"),
                       std::invalid_argument);
  std::vector<std::string> ok{"a", "b"};
  CHECK_THROWS_AS(split_dataset(ok, 0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(split_dataset(ok, 1.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(split_dataset(std::vector<std::string>{}, 0.5, 1), std::invalid_argument);
}

TEST_CASE("manifests skip comments and blank lines") {
  TempDir dir("wrk_manifest");
  {
    std::ofstream out(dir.file("manifest.txt"));
    out << "# header comment\n"
        << "alpha\n"
        << "\n"
        << "  beta  # trailing note\n"
        << "\t\n"
        << "gamma\n";
  }
  auto ids = read_manifest(dir.file("manifest.txt"));
  CHECK(ids == std::vector<std::string>{"alpha", "beta", "gamma"});
  CHECK_THROWS_AS(read_manifest(dir.file("missing.txt")), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Toy dataset
// ---------------------------------------------------------------------------

TEST_CASE("toy samples are deterministic textured patches with stroke masks") {
  auto a = make_toy_sample(64, 11);
  auto b = make_toy_sample(64, 11);
  CHECK(torch::equal(a.image.t, b.image.t));
  CHECK(torch::equal(a.wrinkle_mask.t, b.wrinkle_mask.t));
  CHECK_FALSE(torch::equal(a.image.t, make_toy_sample(64, 12).image.t));

  const double cov = a.wrinkle_mask.t.mean().item<double>();
  CHECK(cov >= 0.01);
  CHECK(cov <= 0.10);
  CHECK(a.image.t.min().item<double>() >= 0.0);
  CHECK(a.image.t.max().item<double>() <= 1.0);

  // Strokes darken the texture: masked pixels are dimmer than the mean.
  auto m = a.wrinkle_mask.t.unsqueeze(0).expand({3, 64, 64}) > 0.5f;
  CHECK(a.image.t.masked_select(m).mean().item<double>() <
        a.image.t.masked_select(~m).mean().item<double>());
}

TEST_CASE("toy dataset writes the on-disk layout the loaders expect") {
  TempDir dir("wrk_toyset");
  ToyConfig cfg;
  cfg.n_samples = 4;
  cfg.size = 64;
  cfg.seed = 3;
  write_toy_dataset(dir.str(), cfg);

  auto ids = read_manifest(dir.file("manifest.txt"));
  REQUIRE(ids.size() == 4);
  auto loaded = load_dataset(dir.str(), ids);
  auto made = make_toy_dataset(cfg);
  for (size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].id == made[i].id);
    CHECK(torch::equal(loaded[i].wrinkle_mask.t, made[i].wrinkle_mask.t));
    // Images pass through 8-bit quantization on disk.
    CHECK(testutil::max_abs_diff(loaded[i].image.t, made[i].image.t) <= 0.5f / 255.0f + 1e-7);
  }
}

// ---------------------------------------------------------------------------
// Checkpoint container
// ---------------------------------------------------------------------------

TEST_CASE("checkpoint container round trips tensors and config") {
  TempDir dir("wrk_ckpt");
  torch::nn::Sequential net(torch::nn::Conv2d(torch::nn::Conv2dOptions(3, 4, 3)),
                            torch::nn::BatchNorm2d(4));
  const auto path = dir.file("net.ckpt");
  ckpt::save(path, *net, {{"kind", "demo"}, {"width", 4}});

  auto snapshot = ckpt::read_config(path);
  CHECK(snapshot.at("kind") == "demo");
  CHECK(snapshot.at("width") == 4);

  torch::nn::Sequential other(torch::nn::Conv2d(torch::nn::Conv2dOptions(3, 4, 3)),
                              torch::nn::BatchNorm2d(4));
  ckpt::load_into(path, *other);
  auto want = net->named_parameters();
  for (const auto& p : other->named_parameters()) CHECK(torch::equal(p.value(), *want.find(p.key())));
  auto want_buf = net->named_buffers();
  for (const auto& b : other->named_buffers()) CHECK(torch::equal(b.value(), *want_buf.find(b.key())));
}

TEST_CASE("checkpoint mismatches name the offending tensor") {
  TempDir dir("wrk_ckpt_bad");
  torch::nn::Sequential net(torch::nn::Conv2d(torch::nn::Conv2dOptions(3, 4, 3)));
  const auto path = dir.file("net.ckpt");
  ckpt::save(path, *net, {});

  torch::nn::Sequential widened(torch::nn::Conv2d(torch::nn::Conv2dOptions(3, 8, 3)));
  CHECK_THROWS_WITH_AS(ckpt::load_into(path, *widened), doctest::Contains("mismatch"),
                       std::runtime_error);
  CHECK_THROWS_AS(ckpt::read_config(dir.file("missing.ckpt")), std::runtime_error);
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

TEST_CASE("run config json round trip is the identity") {
  RunConfig c;
  c.seed = 11;
  c.output_dir = "runs/demo";
  c.data.root = "data/toy";
  c.data.val_fraction = 0.25;
  c.checkpoints.seg = "runs/seg/seg.ckpt";
  c.inpaint_train.seg_checkpoint = c.checkpoints.seg;
  c.seg_train.seed = 11;
  c.inpaint_train.seed = 11;

  auto j = config_to_json(c);
  auto back = config_from_json(j);
  CHECK(config_to_json(back).dump() == j.dump());
}

TEST_CASE("shared config sections feed the trainers") {
  nlohmann::json j{{"seed", 99},
                   {"data", {{"root", "data/x"}}},
                   {"checkpoints", {{"seg", "runs/s/seg.ckpt"}}},
                   {"mask_policy", {{"n_strokes", {1, 2}}, {"thickness_px", {1, 2}}}},
                   {"loss_weights", {{"lambda_ffl", 0.0}, {"lambda_s", 2.5}}}};
  auto c = config_from_json(j);
  CHECK(c.seg_train.seed == 99);
  CHECK(c.inpaint_train.seed == 99);
  CHECK(c.inpaint_train.seg_checkpoint == "runs/s/seg.ckpt");
  CHECK(c.inpaint_train.mask_policy.n_strokes.max == 2);
  CHECK(c.inpaint_train.mask_policy.thickness_px.max == 2);
  CHECK(c.inpaint_train.weights.lambda_ffl == 0.0);
  CHECK(c.inpaint_train.weights.lambda_s == 2.5);

  RunConfig c2 = c;
  apply_seed(c2, 7);
  CHECK(c2.seg_train.seed == 7);
  CHECK(c2.inpaint_train.seed == 7);
}

TEST_CASE("config hash ignores artifact locations only") {
  RunConfig a;
  a.data.root = "data/toy";
  RunConfig b = a;
  b.output_dir = "elsewhere/out";
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a).size() == 16);

  RunConfig c = a;
  c.seed = 1;
  apply_seed(c, 1);
  CHECK(config_hash(c) != config_hash(a));

  RunConfig d = a;
  d.inpaint_train.weights.lambda_ffl = 0.0;
  CHECK(config_hash(d) != config_hash(a));
}

TEST_CASE("config files parse with the path in every error") {
  TempDir dir("wrk_cfg");
  {
    std::ofstream out(dir.file("good.json"));
    out << R"({"seed": 5, "data": {"root": "data/toy"}})";
  }
  auto c = parse_config(dir.file("good.json"));
  CHECK(c.seed == 5);
  CHECK(c.data.root == "data/toy");

  {
    std::ofstream out(dir.file("broken.json"));
    out << "{ not json";
  }
  CHECK_THROWS_WITH_AS(parse_config(dir.file("broken.json")), doctest::Contains("broken.json"),
                       std::invalid_argument);

  {
    std::ofstream out(dir.file("invalid.json"));
    out << R"({"inpaint_train": {"crop_size": 37}})";
  }
  CHECK_THROWS_WITH_AS(parse_config(dir.file("invalid.json")), doctest::Contains("invalid.json"),
                       std::invalid_argument);
  CHECK_THROWS_AS(parse_config(dir.file("absent.json")), std::invalid_argument);
}
