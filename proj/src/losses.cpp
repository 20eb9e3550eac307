#include "wrinkles/losses.hpp"

#include <cmath>
#include <nlohmann/json.hpp>
#include <random>
#include <stdexcept>

#include "wrinkles/checkpoint.hpp"

namespace wrinkles {

namespace {

constexpr double kDiceEps = 1e-6;
constexpr double kLogEps = 1e-8;

torch::Tensor safe_log(const torch::Tensor& t) {
  return torch::log(torch::clamp_min(t, kLogEps));
}

torch::Tensor resize_nearest_like(const torch::Tensor& m, int64_t h, int64_t w) {
  if (m.size(2) == h && m.size(3) == w) return m;
  namespace F = torch::nn::functional;
  return F::interpolate(
      m, F::InterpolateFuncOptions().size(std::vector<int64_t>{h, w}).mode(torch::kNearest));
}

void require_image_batch(const torch::Tensor& t, const char* what) {
  detail::require(t.dim() == 4, std::string(what) + ": expected a BxCxHxW tensor");
}

void require_matching(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  detail::require(a.sizes() == b.sizes(), std::string(what) + ": tensor shapes differ");
}

void require_mask_batch(const torch::Tensor& m, const torch::Tensor& x, const char* what) {
  detail::require(m.dim() == 4 && m.size(1) == 1, std::string(what) + ": mask must be Bx1xHxW");
  detail::require(m.size(0) == x.size(0) && m.size(2) == x.size(2) && m.size(3) == x.size(3),
                  std::string(what) + ": mask dims do not match the images");
}

// Two-stage mean: per-layer mean of weighted squared differences, then the
// mean across layers. keep_mask may be undefined (no exclusion).
torch::Tensor feature_l2(const std::vector<torch::Tensor>& fx,
                         const std::vector<torch::Tensor>& fxh,
                         const std::vector<double>& layer_weights,
                         const torch::Tensor& keep_mask) {
  detail::require(fx.size() == fxh.size() && !fx.empty(),
                  "feature loss: extractor returned mismatched layer lists");
  detail::require(layer_weights.empty() || layer_weights.size() == fx.size(),
                  "feature loss: layer_weights size does not match layer count");
  torch::Tensor acc;
  for (size_t l = 0; l < fx.size(); ++l) {
    auto diff2 = (fx[l].detach() - fxh[l]).pow(2);
    if (keep_mask.defined()) {
      diff2 = diff2 * (1.0 - resize_nearest_like(keep_mask, diff2.size(2), diff2.size(3)));
    }
    auto layer = diff2.mean();
    if (!layer_weights.empty()) layer = layer * layer_weights[l];
    acc = acc.defined() ? acc + layer : layer;
  }
  return acc / static_cast<double>(fx.size());
}

}  // namespace

// ---------------------------------------------------------------------------
// LossWeights
// ---------------------------------------------------------------------------

void LossWeights::validate() const {
  const double vals[] = {lambda_adv, lambda_hrfpl, lambda_discpl,
                         lambda_r1,  lambda_ffl,   lambda_s};
  for (double v : vals)
    detail::require(std::isfinite(v) && v >= 0.0,
                    "loss weights must be finite and non-negative");
}

nlohmann::json LossWeights::to_json() const {
  return {{"lambda_adv", lambda_adv},   {"lambda_hrfpl", lambda_hrfpl},
          {"lambda_discpl", lambda_discpl}, {"lambda_r1", lambda_r1},
          {"lambda_ffl", lambda_ffl},   {"lambda_s", lambda_s}};
}

LossWeights LossWeights::from_json(const nlohmann::json& j) {
  LossWeights w;
  w.lambda_adv = j.value("lambda_adv", w.lambda_adv);
  w.lambda_hrfpl = j.value("lambda_hrfpl", w.lambda_hrfpl);
  w.lambda_discpl = j.value("lambda_discpl", w.lambda_discpl);
  w.lambda_r1 = j.value("lambda_r1", w.lambda_r1);
  w.lambda_ffl = j.value("lambda_ffl", w.lambda_ffl);
  w.lambda_s = j.value("lambda_s", w.lambda_s);
  w.validate();
  return w;
}

// ---------------------------------------------------------------------------
// Feature extractors
// ---------------------------------------------------------------------------

std::vector<torch::Tensor> IdentityExtractor::features(const torch::Tensor& bchw) const {
  require_image_batch(bchw, "IdentityExtractor");
  return {bchw};
}

struct DilatedConvExtractor::Net : torch::nn::Module {
  std::vector<torch::nn::Conv2d> convs;
};

DilatedConvExtractor::DilatedConvExtractor(int in_channels, int width, int n_layers,
                                           uint64_t seed)
    : net_(std::make_shared<Net>()) {
  detail::require(in_channels >= 1 && width >= 1 && n_layers >= 1,
                  "DilatedConvExtractor: channels and layer count must be positive");
  // Weights drawn from a private generator so construction never disturbs the
  // torch RNG used by training.
  std::mt19937_64 rng(seed);
  torch::NoGradGuard ng;
  int64_t c_in = in_channels;
  int dilation = 1;
  for (int i = 0; i < n_layers; ++i) {
    auto conv = torch::nn::Conv2d(
        torch::nn::Conv2dOptions(c_in, width, 3).padding(dilation).dilation(dilation));
    std::normal_distribution<double> nd(0.0, std::sqrt(2.0 / (static_cast<double>(c_in) * 9.0)));
    std::vector<float> draw(static_cast<size_t>(conv->weight.numel()));
    for (auto& v : draw) v = static_cast<float>(nd(rng));
    conv->weight.copy_(torch::from_blob(draw.data(), conv->weight.sizes(), torch::kFloat32));
    conv->bias.zero_();
    net_->convs.push_back(conv);
    net_->register_module("conv" + std::to_string(i), conv);
    c_in = width;
    dilation *= 2;
  }
  for (auto& p : net_->parameters()) p.set_requires_grad(false);
  net_->eval();
}

std::vector<torch::Tensor> DilatedConvExtractor::features(const torch::Tensor& bchw) const {
  require_image_batch(bchw, "DilatedConvExtractor");
  std::vector<torch::Tensor> out;
  auto h = bchw;
  for (auto conv : net_->convs) {  // holder copy shares the impl
    h = torch::relu(conv->forward(h));
    out.push_back(h);
  }
  return out;
}

void DilatedConvExtractor::load_checkpoint(const std::string& path) {
  ckpt::load_into(path, *net_);
  for (auto& p : net_->parameters()) p.set_requires_grad(false);
}

void DilatedConvExtractor::to_dtype(torch::Dtype d) { net_->to(d); }

std::shared_ptr<torch::nn::Module> DilatedConvExtractor::net() const { return net_; }

// ---------------------------------------------------------------------------
// Dice
// ---------------------------------------------------------------------------

torch::Tensor dice_loss(const torch::Tensor& m, const torch::Tensor& m_hat) {
  require_matching(m, m_hat, "dice_loss");
  auto num = 2.0 * (m * m_hat).sum() + kDiceEps;
  auto den = m.pow(2).sum() + m_hat.pow(2).sum() + kDiceEps;
  return 1.0 - num / den;
}

torch::Tensor dice_loss_batched(const torch::Tensor& m, const torch::Tensor& m_hat) {
  require_matching(m, m_hat, "dice_loss");
  detail::require(m.dim() == 4, "dice_loss_batched: expected Bx1xHxW tensors");
  auto num = 2.0 * (m * m_hat).flatten(1).sum(1) + kDiceEps;
  auto den = m.pow(2).flatten(1).sum(1) + m_hat.pow(2).flatten(1).sum(1) + kDiceEps;
  return (1.0 - num / den).mean();
}

// ---------------------------------------------------------------------------
// HRFPL
// ---------------------------------------------------------------------------

torch::Tensor hrfpl(const torch::Tensor& x, const torch::Tensor& x_hat,
                    const torch::Tensor& m_w, const FeatureExtractor& phi) {
  require_image_batch(x, "hrfpl");
  require_matching(x, x_hat, "hrfpl");
  require_mask_batch(m_w, x, "hrfpl");
  std::vector<torch::Tensor> fx;
  {
    torch::NoGradGuard ng;
    fx = phi.features(x);
  }
  auto fxh = phi.features(x_hat);
  return feature_l2(fx, fxh, phi.layer_weights, m_w);
}

// ---------------------------------------------------------------------------
// Adversarial triple
// ---------------------------------------------------------------------------

torch::Tensor discriminator_loss(PatchDiscriminator& d, const torch::Tensor& x,
                                 const torch::Tensor& x_hat, const torch::Tensor& m) {
  require_image_batch(x, "discriminator_loss");
  require_matching(x, x_hat, "discriminator_loss");
  require_mask_batch(m, x, "discriminator_loss");
  auto p_real = torch::sigmoid(d->forward(x).score_map);
  auto p_fake = torch::sigmoid(d->forward(x_hat.detach()).score_map);
  auto ms = resize_nearest_like(m, p_fake.size(2), p_fake.size(3));
  return -safe_log(p_real).mean() - (safe_log(1.0 - p_fake) * ms).mean() -
         (safe_log(p_fake) * (1.0 - ms)).mean();
}

torch::Tensor generator_adv_loss(PatchDiscriminator& d, const torch::Tensor& x_hat) {
  require_image_batch(x_hat, "generator_adv_loss");
  return -safe_log(torch::sigmoid(d->forward(x_hat).score_map)).mean();
}

AdvLosses adversarial_losses(PatchDiscriminator& d, const torch::Tensor& x,
                             const torch::Tensor& x_hat, const torch::Tensor& m) {
  return {discriminator_loss(d, x, x_hat, m), generator_adv_loss(d, x_hat)};
}

// ---------------------------------------------------------------------------
// R1 gradient penalty
// ---------------------------------------------------------------------------

torch::Tensor r1_penalty(const std::function<torch::Tensor(const torch::Tensor&)>& score_fn,
                         const torch::Tensor& x, bool create_graph) {
  require_image_batch(x, "r1_penalty");
  auto xr = x.detach().clone().requires_grad_(true);
  auto s = score_fn(xr).sum();
  auto grads = torch::autograd::grad({s}, {xr}, {}, /*retain_graph=*/c10::nullopt,
                                     /*create_graph=*/create_graph);
  return grads[0].pow(2).flatten(1).sum(1).mean();
}

torch::Tensor r1_penalty(PatchDiscriminator& d, const torch::Tensor& x, bool create_graph) {
  return r1_penalty(
      [&d](const torch::Tensor& t) { return d->forward(t).score_map; }, x, create_graph);
}

// ---------------------------------------------------------------------------
// Discriminator feature matching
// ---------------------------------------------------------------------------

torch::Tensor disc_feature_matching(PatchDiscriminator& d, const torch::Tensor& x,
                                    const torch::Tensor& x_hat) {
  require_image_batch(x, "disc_feature_matching");
  require_matching(x, x_hat, "disc_feature_matching");
  std::vector<torch::Tensor> fx;
  {
    torch::NoGradGuard ng;
    fx = d->forward(x).features;
  }
  auto fxh = d->forward(x_hat).features;
  return feature_l2(fx, fxh, {}, torch::Tensor());
}

// ---------------------------------------------------------------------------
// Focal frequency loss
// ---------------------------------------------------------------------------

torch::Tensor ffl(const torch::Tensor& x, const torch::Tensor& x_hat) {
  require_image_batch(x, "ffl");
  require_matching(x, x_hat, "ffl");
  auto fx = torch::fft::fft2(x, c10::nullopt, {-2, -1});
  auto fxh = torch::fft::fft2(x_hat, c10::nullopt, {-2, -1});
  auto diff = torch::view_as_real(fx - fxh);
  auto sq = diff.pow(2).sum(-1);            // |F_x - F_xhat|^2
  auto w = sq.detach().sqrt();              // focal weight, gradient locked
  return (w * sq).mean();
}

// ---------------------------------------------------------------------------
// Wrinkle loss
// ---------------------------------------------------------------------------

torch::Tensor wrinkle_loss(SegModel& seg, const torch::Tensor& x_hat) {
  require_image_batch(x_hat, "wrinkle_loss");
  for (auto& p : seg->parameters()) p.set_requires_grad(false);
  seg->eval();
  return seg_forward_padded(seg, x_hat).mean();
}

// ---------------------------------------------------------------------------
// Weighted total
// ---------------------------------------------------------------------------

double total_loss(const LossTerms& terms, const LossWeights& w) {
  w.validate();
  const std::pair<const char*, double> named[] = {
      {"adv", terms.adv}, {"hrfpl", terms.hrfpl},   {"discpl", terms.discpl},
      {"r1", terms.r1},   {"ffl", terms.ffl},       {"wrinkle", terms.wrinkle}};
  for (const auto& [name, v] : named) {
    if (!std::isfinite(v))
      throw std::runtime_error(std::string("total_loss: non-finite term '") + name + "'");
  }
  return w.lambda_adv * terms.adv + w.lambda_hrfpl * terms.hrfpl +
         w.lambda_discpl * terms.discpl + w.lambda_r1 * terms.r1 +
         w.lambda_ffl * terms.ffl + w.lambda_s * terms.wrinkle;
}

}  // namespace wrinkles
