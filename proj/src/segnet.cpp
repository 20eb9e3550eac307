#include "wrinkles/segnet.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <random>

#include "wrinkles/checkpoint.hpp"
#include "wrinkles/losses.hpp"

namespace wrinkles {

namespace F = torch::nn::functional;

namespace {

torch::nn::Conv2d conv3x3(int64_t in, int64_t out, int64_t groups = 1) {
  return torch::nn::Conv2d(
      torch::nn::Conv2dOptions(in, out, 3).padding(1).groups(groups).bias(false));
}

torch::nn::Conv2d conv1x1(int64_t in, int64_t out) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 1).bias(false));
}

// conv-bn-relu x2
struct PlainBlockImpl : torch::nn::Module {
  PlainBlockImpl(int64_t in, int64_t out) {
    c1 = register_module("c1", conv3x3(in, out));
    b1 = register_module("b1", torch::nn::BatchNorm2d(out));
    c2 = register_module("c2", conv3x3(out, out));
    b2 = register_module("b2", torch::nn::BatchNorm2d(out));
  }
  torch::Tensor forward(const torch::Tensor& x) {
    auto h = torch::relu(b1(c1(x)));
    return torch::relu(b2(c2(h)));
  }
  torch::nn::Conv2d c1{nullptr}, c2{nullptr};
  torch::nn::BatchNorm2d b1{nullptr}, b2{nullptr};
};
TORCH_MODULE(PlainBlock);

// Grouped bottleneck: 1x1 reduce, grouped 3x3, 1x1 expand, projection skip.
struct ResNeXtBlockImpl : torch::nn::Module {
  ResNeXtBlockImpl(int64_t in, int64_t out, int64_t cardinality = 8) {
    int64_t mid = std::max<int64_t>(out / 2, 1);
    int64_t groups = std::gcd(mid, cardinality);
    c1 = register_module("c1", conv1x1(in, mid));
    b1 = register_module("b1", torch::nn::BatchNorm2d(mid));
    c2 = register_module("c2", conv3x3(mid, mid, groups));
    b2 = register_module("b2", torch::nn::BatchNorm2d(mid));
    c3 = register_module("c3", conv1x1(mid, out));
    b3 = register_module("b3", torch::nn::BatchNorm2d(out));
    if (in != out) {
      proj = register_module("proj", conv1x1(in, out));
      bproj = register_module("bproj", torch::nn::BatchNorm2d(out));
    }
  }
  torch::Tensor forward(const torch::Tensor& x) {
    auto h = torch::relu(b1(c1(x)));
    h = torch::relu(b2(c2(h)));
    h = b3(c3(h));
    auto skip = proj ? bproj(proj(x)) : x;
    return torch::relu(h + skip);
  }
  torch::nn::Conv2d c1{nullptr}, c2{nullptr}, c3{nullptr}, proj{nullptr};
  torch::nn::BatchNorm2d b1{nullptr}, b2{nullptr}, b3{nullptr}, bproj{nullptr};
};
TORCH_MODULE(ResNeXtBlock);

torch::nn::AnyModule make_block(const std::string& style, int64_t in, int64_t out) {
  if (style == "resnext") return torch::nn::AnyModule(ResNeXtBlock(in, out));
  if (style == "plain") return torch::nn::AnyModule(PlainBlock(in, out));
  detail::fail("unknown encoder_style '" + style + "'");
}

torch::Tensor up2(const torch::Tensor& x) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .scale_factor(std::vector<double>{2.0, 2.0})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

}  // namespace

nlohmann::json SegArch::to_json() const {
  return {{"encoder_depth", encoder_depth},
          {"base_channels", base_channels},
          {"encoder_style", encoder_style}};
}

SegArch SegArch::from_json(const nlohmann::json& j) {
  SegArch a;
  a.encoder_depth = j.value("encoder_depth", a.encoder_depth);
  a.base_channels = j.value("base_channels", a.base_channels);
  a.encoder_style = j.value("encoder_style", a.encoder_style);
  return a;
}

SegModelImpl::SegModelImpl(SegArch arch_) : arch(arch_) {
  detail::require(arch.encoder_depth >= 1 && arch.encoder_depth <= 6, "encoder_depth out of range");
  detail::require(arch.base_channels >= 1, "base_channels must be positive");
  const int L = arch.encoder_depth;

  channels.resize(L + 1);
  for (int i = 0; i <= L; ++i)
    channels[i] = static_cast<int64_t>(arch.base_channels) * (1LL << std::min(i, 4));

  pool = register_module("pool", torch::nn::MaxPool2d(torch::nn::MaxPool2dOptions(2)));

  encoder.reserve(L + 1);
  for (int i = 0; i <= L; ++i) {
    auto block = make_block(arch.encoder_style, i == 0 ? 3 : channels[i - 1], channels[i]);
    register_module("enc" + std::to_string(i), block.ptr());
    encoder.push_back(block);
  }

  nested.resize(L);
  for (int i = 0; i < L; ++i) {
    for (int j = 1; j <= L - i; ++j) {
      int64_t in = static_cast<int64_t>(j) * channels[i] + channels[i + 1];
      // Nested fusion nodes stay plain conv blocks regardless of encoder style.
      auto block = make_block("plain", in, channels[i]);
      register_module("node" + std::to_string(i) + "_" + std::to_string(j), block.ptr());
      nested[i].push_back(block);
    }
  }

  head = register_module("head", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels[0], 1, 1)));
}

torch::Tensor SegModelImpl::forward(const torch::Tensor& x) {
  detail::require(x.dim() == 4 && x.size(1) == 3, "segnet expects Bx3xHxW input");
  const int factor = arch.downsample_factor();
  detail::require(x.size(2) % factor == 0 && x.size(3) % factor == 0,
                  "segnet input dims must be divisible by " + std::to_string(factor));
  const int L = arch.encoder_depth;

  // grid[i][j]; column 0 is the encoder backbone.
  std::vector<std::vector<torch::Tensor>> grid(L + 1);
  grid[0].push_back(encoder[0].forward(x));
  for (int i = 1; i <= L; ++i) grid[i].push_back(encoder[i].forward(pool(grid[i - 1][0])));

  for (int j = 1; j <= L; ++j) {
    for (int i = 0; i <= L - j; ++i) {
      std::vector<torch::Tensor> cat(grid[i].begin(), grid[i].end());
      cat.push_back(up2(grid[i + 1][j - 1]));
      grid[i].push_back(nested[i][j - 1].forward(torch::cat(cat, 1)));
    }
  }
  return head(grid[0][L]);
}

SegModel build_seg_model(const nlohmann::json& config_snapshot) {
  return SegModel(SegArch::from_json(config_snapshot));
}

void save_seg_checkpoint(const std::string& path, const SegModel& model) {
  ckpt::save(path, *model, {{"kind", "seg"}, {"arch", model->arch.to_json()}});
}

SegModel load_seg_checkpoint(const std::string& path) {
  auto snapshot = ckpt::read_config(path);
  detail::require(snapshot.value("kind", "") == "seg",
                  path + ": not a segmentation checkpoint");
  auto model = build_seg_model(snapshot.at("arch"));
  ckpt::load_into(path, *model);
  return model;
}

ProbMap seg_forward(SegModel& model, const Image& image) {
  torch::NoGradGuard no_grad;
  model->eval();
  auto logits = model->forward(image.t.unsqueeze(0));
  return ProbMap::create(torch::sigmoid(logits).squeeze(0).squeeze(0));
}

torch::Tensor seg_forward_padded(SegModel& model, const torch::Tensor& x) {
  const int factor = model->arch.downsample_factor();
  int64_t h = x.size(2), w = x.size(3);
  int64_t ph = (factor - h % factor) % factor;
  int64_t pw = (factor - w % factor) % factor;
  auto input = x;
  if (ph > 0 || pw > 0) {
    // Reflection padding needs pad < dim; fall back to replicate for tiny inputs.
    if (ph < h && pw < w)
      input = F::pad(x, F::PadFuncOptions({0, pw, 0, ph}).mode(torch::kReflect));
    else
      input = F::pad(x, F::PadFuncOptions({0, pw, 0, ph}).mode(torch::kReplicate));
  }
  auto probs = torch::sigmoid(model->forward(input));
  if (ph > 0 || pw > 0) probs = probs.slice(2, 0, h).slice(3, 0, w);
  return probs;
}

Mask threshold_mask(const ProbMap& p, double t) {
  detail::require(t > 0 && t < 1, "threshold must lie in (0,1)");
  return Mask{p.t.gt(t).to(torch::kFloat32)};
}

double iou(const Mask& m, const Mask& m_hat) {
  require_same_hw(m.t, m_hat.t, "iou");
  double inter = torch::minimum(m.t, m_hat.t).sum().item<double>();
  double uni = torch::maximum(m.t, m_hat.t).sum().item<double>();
  if (uni == 0.0) return 1.0;
  return inter / uni;
}

void SegTrainConfig::validate() const {
  detail::require(epochs >= 1, "epochs must be >= 1");
  detail::require(lr > 0, "lr must be positive");
  detail::require(lr_decay_factor > 0 && lr_decay_factor <= 1, "lr_decay_factor must be in (0,1]");
  detail::require(batch_size >= 1, "batch_size must be >= 1");
  detail::require(input_size >= 32, "input_size must be >= 32");
}

namespace {

std::pair<torch::Tensor, torch::Tensor> to_batch(const std::vector<Sample>& samples,
                                                 const std::vector<size_t>& idx, int input_size,
                                                 const AugmentConfig& aug, uint64_t seed,
                                                 bool train_mode) {
  std::vector<torch::Tensor> imgs, masks;
  imgs.reserve(idx.size());
  for (size_t k = 0; k < idx.size(); ++k) {
    const auto& s = samples[idx[k]];
    Sample a = (train_mode && !aug.is_identity()) ? augment(s, aug, seed + idx[k]) : s;
    auto img = resize_image(a.image.t, input_size, input_size);
    auto msk = resize_mask_nearest(a.wrinkle_mask.t, input_size, input_size);
    imgs.push_back(img);
    masks.push_back(msk.unsqueeze(0));
  }
  return {torch::stack(imgs), torch::stack(masks)};
}

double validation_iou(SegModel& model, const std::vector<Sample>& val, int input_size) {
  if (val.empty()) return std::numeric_limits<double>::quiet_NaN();
  torch::NoGradGuard no_grad;
  model->eval();
  double acc = 0.0;
  for (const auto& s : val) {
    auto img = resize_image(s.image.t, input_size, input_size);
    auto msk = resize_mask_nearest(s.wrinkle_mask.t, input_size, input_size);
    auto probs = seg_forward_padded(model, img.unsqueeze(0)).squeeze(0).squeeze(0);
    auto pred = threshold_mask(ProbMap{probs}, 0.5);
    acc += iou(Mask{msk}, pred);
  }
  return acc / static_cast<double>(val.size());
}

}  // namespace

SegTrainResult train_segmentation(const std::vector<Sample>& train,
                                  const std::vector<Sample>& val, const SegTrainConfig& cfg,
                                  const AugmentConfig& aug) {
  cfg.validate();
  detail::require(!train.empty(), "train_segmentation: empty training set");

  torch::manual_seed(cfg.seed);
  SegModel model(cfg.arch);
  model->train();

  torch::optim::Adam opt(model->parameters(), torch::optim::AdamOptions(cfg.lr));

  SegTrainResult result;
  std::vector<size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  double best_iou = -1.0;
  std::vector<torch::Tensor> best_state;
  auto snapshot_state = [&]() {
    best_state.clear();
    for (const auto& p : model->parameters()) best_state.push_back(p.detach().clone());
    for (const auto& b : model->buffers()) best_state.push_back(b.detach().clone());
  };

  double lr = cfg.lr;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (epoch == cfg.lr_decay_epoch && cfg.lr_decay_factor != 1.0) {
      lr *= cfg.lr_decay_factor;
      for (auto& group : opt.param_groups())
        static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
    }

    std::mt19937 shuffle_rng(static_cast<uint32_t>(cfg.seed + 1 + epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    model->train();
    double epoch_loss = 0.0;
    int n_batches = 0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<size_t> idx(order.begin() + start,
                              order.begin() + std::min(order.size(), start + cfg.batch_size));
      auto [images, masks] =
          to_batch(train, idx, cfg.input_size, aug, cfg.seed * 1315423911ull + epoch * 2654435761ull, true);
      auto logits = model->forward(images);
      auto loss = dice_loss_batched(masks, torch::sigmoid(logits));
      if (!std::isfinite(loss.item<double>()))
        throw std::runtime_error("train_segmentation: non-finite loss at epoch " +
                                 std::to_string(epoch));
      opt.zero_grad();
      loss.backward();
      opt.step();
      epoch_loss += loss.item<double>();
      ++n_batches;
    }
    epoch_loss /= std::max(1, n_batches);

    double viou = validation_iou(model, val, cfg.input_size);
    result.history.push_back({epoch, epoch_loss, viou, lr});

    if (!val.empty() && (best_state.empty() || viou > best_iou)) {
      best_iou = viou;
      snapshot_state();
    }
  }

  if (!best_state.empty()) {
    torch::NoGradGuard no_grad;
    size_t k = 0;
    for (auto& p : model->parameters()) p.copy_(best_state[k++]);
    for (auto& b : model->buffers()) b.copy_(best_state[k++]);
    result.best_val_iou = best_iou;
  }
  result.model = model;
  return result;
}

nlohmann::json seg_history_json(const std::vector<SegEpochRecord>& history) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& r : history) {
    nlohmann::json e{{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"lr", r.lr}};
    if (std::isfinite(r.val_iou)) e["val_iou"] = r.val_iou;
    epochs.push_back(e);
  }
  return nlohmann::json{{"epochs", epochs}};
}

}  // namespace wrinkles
