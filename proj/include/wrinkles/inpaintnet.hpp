#ifndef WRINKLES_INPAINTNET_HPP
#define WRINKLES_INPAINTNET_HPP

#include <torch/torch.h>

#include <nlohmann/json_fwd.hpp>
#include <string>
#include <utility>
#include <vector>

#include "wrinkles/types.hpp"

namespace wrinkles {

// ---------------------------------------------------------------------------
// Fast Fourier convolution building blocks.
// ---------------------------------------------------------------------------

// Real 2-D FFT over the spatial dims, 1x1 convolution on the stacked
// (real, imaginary) channels, inverse real FFT. Odd widths follow the
// real-FFT convention (W/2+1 frequency bins; inverse takes the target size).
struct FourierUnitImpl : torch::nn::Module {
  FourierUnitImpl(int64_t channels, bool use_norm = true, bool use_act = true);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d conv{nullptr};
  torch::nn::BatchNorm2d bn{nullptr};
  bool use_norm, use_act;
};
TORCH_MODULE(FourierUnit);

// Global branch of an FFC: 1x1 squeeze, Fourier unit with an inner residual,
// 1x1 expand.
struct SpectralTransformImpl : torch::nn::Module {
  SpectralTransformImpl(int64_t in, int64_t out, bool use_norm = true);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr};
  FourierUnit fu{nullptr};
  bool use_norm;
};
TORCH_MODULE(SpectralTransform);

// Four-path FFC: local->local and global->local are spatial 3x3 convolutions,
// local->global a 3x3 convolution, global->global the spectral transform.
// Channels split by the global fraction; outputs are the cross-branch sums.
struct FFCImpl : torch::nn::Module {
  FFCImpl(int64_t in, int64_t out, double global_fraction, bool use_norm = true);
  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& x_l,
                                                  const torch::Tensor& x_g);

  torch::nn::Conv2d conv_ll{nullptr}, conv_lg{nullptr}, conv_gl{nullptr};
  SpectralTransform conv_gg{nullptr};
  int64_t in_local, in_global, out_local, out_global;
};
TORCH_MODULE(FFC);

// FFC followed by per-branch norm + ReLU.
struct FFCBnActImpl : torch::nn::Module {
  FFCBnActImpl(int64_t in, int64_t out, double global_fraction, const std::string& norm);
  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& x_l,
                                                  const torch::Tensor& x_g);

  FFC ffc{nullptr};
  torch::nn::BatchNorm2d bn_l{nullptr}, bn_g{nullptr};
};
TORCH_MODULE(FFCBnAct);

// Residual pair of FFC units; the residual is added per branch.
struct FFCResnetBlockImpl : torch::nn::Module {
  FFCResnetBlockImpl(int64_t channels, double global_fraction, const std::string& norm = "batch");
  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& x_l,
                                                  const torch::Tensor& x_g);

  FFCBnAct c1{nullptr}, c2{nullptr};
  int64_t local_channels, global_channels;
};
TORCH_MODULE(FFCResnetBlock);

// ---------------------------------------------------------------------------
// Generator / discriminator.
// ---------------------------------------------------------------------------

struct GenArch {
  int base_channels = 64;
  int n_blocks = 9;
  double ffc_global_fraction = 0.5;
  std::string norm = "batch";  // "batch" or "none"

  nlohmann::json to_json() const;
  static GenArch from_json(const nlohmann::json& j);
};

// 4-channel input (masked image + mask), 3 strided downsampling convolutions,
// a trunk of FFC residual blocks, 3 transposed upsampling convolutions, and a
// final sigmoid. Fully convolutional: dims only need to divide 8.
struct InpaintGeneratorImpl : torch::nn::Module {
  explicit InpaintGeneratorImpl(GenArch arch = {});
  torch::Tensor forward(const torch::Tensor& x_prime);  // Bx4xHxW -> Bx3xHxW in [0,1]

  GenArch arch;
  torch::nn::Sequential stem{nullptr}, down{nullptr}, up{nullptr}, out{nullptr};
  std::vector<FFCResnetBlock> blocks;
  int64_t trunk_local = 0, trunk_global = 0;
};
TORCH_MODULE(InpaintGenerator);

InpaintGenerator build_generator(const nlohmann::json& config_snapshot);

struct DiscArch {
  int base_channels = 64;
  int n_layers = 4;
  int kernel_size = 4;

  nlohmann::json to_json() const;
  static DiscArch from_json(const nlohmann::json& j);
};

// Strided convolution stack emitting an h'xw' grid of patch logits
// (receptive field 70 px for the default arch) plus the intermediate
// feature maps used by the feature-matching loss.
struct PatchDiscriminatorImpl : torch::nn::Module {
  explicit PatchDiscriminatorImpl(DiscArch arch = {});

  struct Output {
    torch::Tensor score_map;  // Bx1xh'xw' logits
    std::vector<torch::Tensor> features;
  };
  Output forward(const torch::Tensor& x);

  int receptive_field() const;

  DiscArch arch;
  std::vector<torch::nn::Sequential> stages;
  torch::nn::Conv2d head{nullptr};
};
TORCH_MODULE(PatchDiscriminator);

PatchDiscriminator build_discriminator(const nlohmann::json& config_snapshot);

// Checkpoint files carry the architecture snapshot (same container as segnet).
void save_generator_checkpoint(const std::string& path, const InpaintGenerator& gen);
InpaintGenerator load_generator_checkpoint(const std::string& path);
void save_discriminator_checkpoint(const std::string& path, const PatchDiscriminator& d);
PatchDiscriminator load_discriminator_checkpoint(const std::string& path);

// ---------------------------------------------------------------------------
// Input stacking / compositing.
// ---------------------------------------------------------------------------

// 4-channel stack: channels 1-3 the image with hole pixels zeroed, channel 4
// the hole mask.
struct StackedInput {
  torch::Tensor t;  // 4xHxW
};

StackedInput stack_input(const Image& x, const Mask& m_inpaint);

// Single-image inference; dims must divide 8.
Image inpaint_forward(InpaintGenerator& gen, const StackedInput& x_prime);

// x outside the mask, x_raw inside. Bit-exact on unmasked pixels.
Image composite(const Image& x, const Image& x_raw, const Mask& m_inpaint);

// Batched: BxCxHxW everywhere, mask Bx1xHxW.
torch::Tensor composite_batched(const torch::Tensor& x, const torch::Tensor& x_raw,
                                const torch::Tensor& m);

// Reflect-pads to a multiple of 8, runs the generator, crops back.
// Accepts 4-channel stacks of any size; used by pipeline and eval.
torch::Tensor inpaint_forward_padded(InpaintGenerator& gen, const torch::Tensor& x_prime);

PatchDiscriminatorImpl::Output disc_forward(PatchDiscriminator& d, const torch::Tensor& x);

}  // namespace wrinkles

#endif  // WRINKLES_INPAINTNET_HPP
