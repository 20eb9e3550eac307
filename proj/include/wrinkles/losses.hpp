#ifndef WRINKLES_LOSSES_HPP
#define WRINKLES_LOSSES_HPP

#include <torch/torch.h>

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "wrinkles/inpaintnet.hpp"
#include "wrinkles/segnet.hpp"

namespace wrinkles {

struct LossWeights {
  double lambda_adv = 10.0;
  double lambda_hrfpl = 30.0;
  double lambda_discpl = 100.0;
  double lambda_r1 = 0.001;
  double lambda_ffl = 1.0;
  double lambda_s = 0.1;

  void validate() const;  // all finite and >= 0
  nlohmann::json to_json() const;
  static LossWeights from_json(const nlohmann::json& j);
};

// Frozen feature stack for perceptual losses. layer_weights empty means all 1.
struct FeatureExtractor {
  virtual ~FeatureExtractor() = default;
  virtual std::vector<torch::Tensor> features(const torch::Tensor& bchw) const = 0;
  std::vector<double> layer_weights;
};

// Single layer: the image itself. Turns the perceptual losses into plain MSE.
struct IdentityExtractor final : FeatureExtractor {
  std::vector<torch::Tensor> features(const torch::Tensor& bchw) const override;
};

// Stack of 3x3 convolutions with dilations 1,2,4,... (ReLU between) giving a
// receptive field that grows exponentially with depth. Weights are seeded
// Kaiming draws, never trained; a checkpoint can replace them.
struct DilatedConvExtractor final : FeatureExtractor {
  DilatedConvExtractor(int in_channels = 3, int width = 24, int n_layers = 4,
                       uint64_t seed = 17);
  std::vector<torch::Tensor> features(const torch::Tensor& bchw) const override;
  void load_checkpoint(const std::string& path);
  void to_dtype(torch::Dtype d);

  std::shared_ptr<torch::nn::Module> net() const;

 private:
  struct Net;
  std::shared_ptr<Net> net_;
};

// --- Segmentation objective -------------------------------------------------

// 1 - (2*sum(m*m_hat)+eps) / (sum(m^2)+sum(m_hat^2)+eps), eps = 1e-6,
// over all elements. Differentiable in m_hat.
torch::Tensor dice_loss(const torch::Tensor& m, const torch::Tensor& m_hat);

// Per-sample dice over Bx1xHxW, averaged across the batch.
torch::Tensor dice_loss_batched(const torch::Tensor& m, const torch::Tensor& m_hat);

// --- Inpainting objectives (all batched: images Bx3xHxW, masks Bx1xHxW) -----

// Perceptual loss with the wrinkle regions excluded: per layer, mean over all
// entries of (phi_l(x)-phi_l(x_hat))^2 * (1 - resize_nearest(m_w)); then the
// mean across layers. Only m_w is excluded; random holes stay supervised.
torch::Tensor hrfpl(const torch::Tensor& x, const torch::Tensor& x_hat,
                    const torch::Tensor& m_w, const FeatureExtractor& phi);

struct AdvLosses {
  torch::Tensor d_loss;
  torch::Tensor g_loss;
};

// Patch GAN objective on sigmoid(logits), expectations taken as means over the
// full score map. Masked patches are labeled fake, unmasked real; the mask is
// resized to the score grid with nearest-neighbor. Logs clamped at 1e-8.
//   L_D = -E[log D(x)] - E[log(1-D(x_hat)) * m] - E[log D(x_hat) * (1-m)]
//   L_G = -E[log D(x_hat)]
AdvLosses adversarial_losses(PatchDiscriminator& d, const torch::Tensor& x,
                             const torch::Tensor& x_hat, const torch::Tensor& m);

// The two halves separately, for the alternating update steps. The generator
// half runs with gradients attached; the discriminator half detaches x_hat.
torch::Tensor discriminator_loss(PatchDiscriminator& d, const torch::Tensor& x,
                                 const torch::Tensor& x_hat, const torch::Tensor& m);
torch::Tensor generator_adv_loss(PatchDiscriminator& d, const torch::Tensor& x_hat);

// E over the batch of ||d(score sum)/dx||^2 on the raw logits. create_graph
// must be true when the result itself is optimized.
torch::Tensor r1_penalty(PatchDiscriminator& d, const torch::Tensor& x,
                         bool create_graph = true);
torch::Tensor r1_penalty(const std::function<torch::Tensor(const torch::Tensor&)>& score_fn,
                         const torch::Tensor& x, bool create_graph = true);

// Same two-stage mean as hrfpl but over the discriminator's intermediate
// features and with no mask exclusion. Target features are detached.
torch::Tensor disc_feature_matching(PatchDiscriminator& d, const torch::Tensor& x,
                                    const torch::Tensor& x_hat);

// Focal frequency loss: mean over frequencies (and channels/batch) of
// w * |F_x - F_xhat|^2 with F the unnormalized 2-D DFT and w = |F_x - F_xhat|
// held constant (no gradient through w).
torch::Tensor ffl(const torch::Tensor& x, const torch::Tensor& x_hat);

// Spatial mean of the frozen segmentation model's probability map on x_hat.
// Freezes the model's parameters as a side effect; gradients flow to x_hat only.
torch::Tensor wrinkle_loss(SegModel& seg, const torch::Tensor& x_hat);

// --- Weighted total ----------------------------------------------------------

struct LossTerms {
  double adv = 0, hrfpl = 0, discpl = 0, r1 = 0, ffl = 0, wrinkle = 0;
};

// lambda_adv*adv + lambda_hrfpl*hrfpl + lambda_discpl*discpl + lambda_r1*r1
// + lambda_ffl*ffl + lambda_s*wrinkle. Throws naming the first non-finite term.
double total_loss(const LossTerms& terms, const LossWeights& w);

}  // namespace wrinkles

#endif  // WRINKLES_LOSSES_HPP
