#include "wrinkles/inpaintnet.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "wrinkles/checkpoint.hpp"

namespace wrinkles {

namespace {

int64_t global_channels_for(int64_t total, double fraction) {
  auto g = static_cast<int64_t>(std::llround(static_cast<double>(total) * fraction));
  return std::clamp<int64_t>(g, 1, total - 1);
}

torch::nn::Conv2d conv1x1(int64_t in, int64_t out, bool bias) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 1).bias(bias));
}

torch::nn::Conv2d conv3x3(int64_t in, int64_t out, bool bias) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).padding(1).bias(bias));
}

}  // namespace

// ---------------------------------------------------------------------------
// FourierUnit
// ---------------------------------------------------------------------------

FourierUnitImpl::FourierUnitImpl(int64_t channels, bool use_norm_, bool use_act_)
    : use_norm(use_norm_), use_act(use_act_) {
  detail::require(channels >= 1, "FourierUnit: channels must be >= 1");
  conv = register_module("conv", conv1x1(2 * channels, 2 * channels, !use_norm));
  if (use_norm) bn = register_module("bn", torch::nn::BatchNorm2d(2 * channels));
}

torch::Tensor FourierUnitImpl::forward(const torch::Tensor& x) {
  detail::require(x.dim() == 4, "FourierUnit: expected BxCxHxW input");
  const int64_t b = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
  auto freq = torch::fft::rfft2(x, c10::nullopt, {-2, -1}, "ortho");
  auto parts = torch::view_as_real(freq);  // BxCxHx(W/2+1)x2
  const int64_t wf = parts.size(3);
  parts = parts.permute({0, 1, 4, 2, 3}).reshape({b, 2 * c, h, wf});
  parts = conv->forward(parts);
  if (use_norm) parts = bn->forward(parts);
  if (use_act) parts = torch::relu(parts);
  parts = parts.reshape({b, c, 2, h, wf}).permute({0, 1, 3, 4, 2}).contiguous();
  auto out = torch::fft::irfft2(torch::view_as_complex(parts),
                                std::vector<int64_t>{h, w}, {-2, -1}, "ortho");
  return out;
}

// ---------------------------------------------------------------------------
// SpectralTransform
// ---------------------------------------------------------------------------

SpectralTransformImpl::SpectralTransformImpl(int64_t in, int64_t out, bool use_norm_)
    : use_norm(use_norm_) {
  detail::require(in >= 1 && out >= 1, "SpectralTransform: channels must be >= 1");
  const int64_t mid = std::max<int64_t>(out / 2, 1);
  conv1 = register_module("conv1", conv1x1(in, mid, !use_norm));
  if (use_norm) bn1 = register_module("bn1", torch::nn::BatchNorm2d(mid));
  fu = register_module("fu", FourierUnit(mid, use_norm, /*use_act=*/true));
  conv2 = register_module("conv2", conv1x1(mid, out, /*bias=*/true));
}

torch::Tensor SpectralTransformImpl::forward(const torch::Tensor& x) {
  auto y = conv1->forward(x);
  if (use_norm) y = bn1->forward(y);
  y = torch::relu(y);
  return conv2->forward(y + fu->forward(y));
}

// ---------------------------------------------------------------------------
// FFC
// ---------------------------------------------------------------------------

FFCImpl::FFCImpl(int64_t in, int64_t out, double global_fraction, bool use_norm) {
  detail::require(in >= 2 && out >= 2, "FFC: needs at least 2 channels per side");
  detail::require(global_fraction > 0.0 && global_fraction < 1.0,
                  "FFC: global fraction must lie strictly between 0 and 1");
  in_global = global_channels_for(in, global_fraction);
  in_local = in - in_global;
  out_global = global_channels_for(out, global_fraction);
  out_local = out - out_global;

  const bool bias = !use_norm;
  conv_ll = register_module("conv_ll", conv3x3(in_local, out_local, bias));
  conv_lg = register_module("conv_lg", conv3x3(in_local, out_global, bias));
  conv_gl = register_module("conv_gl", conv3x3(in_global, out_local, bias));
  conv_gg = register_module("conv_gg", SpectralTransform(in_global, out_global, use_norm));
}

std::pair<torch::Tensor, torch::Tensor> FFCImpl::forward(const torch::Tensor& x_l,
                                                         const torch::Tensor& x_g) {
  detail::require(x_l.size(1) == in_local && x_g.size(1) == in_global,
                  "FFC: branch channel counts do not match the layer");
  auto out_l = conv_ll->forward(x_l) + conv_gl->forward(x_g);
  auto out_g = conv_lg->forward(x_l) + conv_gg->forward(x_g);
  return {out_l, out_g};
}

// ---------------------------------------------------------------------------
// FFCBnAct / FFCResnetBlock
// ---------------------------------------------------------------------------

FFCBnActImpl::FFCBnActImpl(int64_t in, int64_t out, double global_fraction,
                           const std::string& norm) {
  detail::require(norm == "batch" || norm == "none", "FFC norm must be 'batch' or 'none'");
  const bool use_norm = norm == "batch";
  ffc = register_module("ffc", FFC(in, out, global_fraction, use_norm));
  if (use_norm) {
    bn_l = register_module("bn_l", torch::nn::BatchNorm2d(ffc->out_local));
    bn_g = register_module("bn_g", torch::nn::BatchNorm2d(ffc->out_global));
  }
}

std::pair<torch::Tensor, torch::Tensor> FFCBnActImpl::forward(const torch::Tensor& x_l,
                                                              const torch::Tensor& x_g) {
  auto [out_l, out_g] = ffc->forward(x_l, x_g);
  if (bn_l) {
    out_l = bn_l->forward(out_l);
    out_g = bn_g->forward(out_g);
  }
  return {torch::relu(out_l), torch::relu(out_g)};
}

FFCResnetBlockImpl::FFCResnetBlockImpl(int64_t channels, double global_fraction,
                                       const std::string& norm) {
  c1 = register_module("c1", FFCBnAct(channels, channels, global_fraction, norm));
  c2 = register_module("c2", FFCBnAct(channels, channels, global_fraction, norm));
  global_channels = c1->ffc->in_global;
  local_channels = c1->ffc->in_local;
}

std::pair<torch::Tensor, torch::Tensor> FFCResnetBlockImpl::forward(const torch::Tensor& x_l,
                                                                    const torch::Tensor& x_g) {
  auto [h_l, h_g] = c1->forward(x_l, x_g);
  std::tie(h_l, h_g) = c2->forward(h_l, h_g);
  return {x_l + h_l, x_g + h_g};
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

nlohmann::json GenArch::to_json() const {
  return {{"base_channels", base_channels},
          {"n_blocks", n_blocks},
          {"ffc_global_fraction", ffc_global_fraction},
          {"norm", norm}};
}

GenArch GenArch::from_json(const nlohmann::json& j) {
  GenArch a;
  a.base_channels = j.value("base_channels", a.base_channels);
  a.n_blocks = j.value("n_blocks", a.n_blocks);
  a.ffc_global_fraction = j.value("ffc_global_fraction", a.ffc_global_fraction);
  a.norm = j.value("norm", a.norm);
  return a;
}

InpaintGeneratorImpl::InpaintGeneratorImpl(GenArch a) : arch(std::move(a)) {
  detail::require(arch.base_channels >= 4, "generator: base_channels must be >= 4");
  detail::require(arch.n_blocks >= 1, "generator: n_blocks must be >= 1");
  detail::require(arch.ffc_global_fraction > 0.0 && arch.ffc_global_fraction < 1.0,
                  "generator: ffc_global_fraction must lie strictly between 0 and 1");
  detail::require(arch.norm == "batch" || arch.norm == "none",
                  "generator: norm must be 'batch' or 'none'");
  const bool bn = arch.norm == "batch";
  const int64_t cap = static_cast<int64_t>(arch.base_channels) * 8;

  auto add_norm = [&](torch::nn::Sequential& s, int64_t c) {
    if (bn) s->push_back(torch::nn::BatchNorm2d(c));
  };

  int64_t c = arch.base_channels;
  stem = torch::nn::Sequential();
  stem->push_back(torch::nn::ReflectionPad2d(3));
  stem->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(4, c, 7).bias(!bn)));
  add_norm(stem, c);
  stem->push_back(torch::nn::ReLU());
  register_module("stem", stem);

  std::vector<int64_t> widths{c};
  down = torch::nn::Sequential();
  for (int i = 0; i < 3; ++i) {
    const int64_t c2 = std::min(c * 2, cap);
    down->push_back(torch::nn::Conv2d(
        torch::nn::Conv2dOptions(c, c2, 3).stride(2).padding(1).bias(!bn)));
    add_norm(down, c2);
    down->push_back(torch::nn::ReLU());
    widths.push_back(c2);
    c = c2;
  }
  register_module("down", down);

  trunk_global = global_channels_for(c, arch.ffc_global_fraction);
  trunk_local = c - trunk_global;
  for (int i = 0; i < arch.n_blocks; ++i) {
    blocks.push_back(FFCResnetBlock(c, arch.ffc_global_fraction, arch.norm));
    register_module("block" + std::to_string(i), blocks.back());
  }

  up = torch::nn::Sequential();
  for (int i = 2; i >= 0; --i) {
    const int64_t c2 = widths[static_cast<size_t>(i)];
    up->push_back(torch::nn::ConvTranspose2d(torch::nn::ConvTranspose2dOptions(c, c2, 3)
                                                 .stride(2)
                                                 .padding(1)
                                                 .output_padding(1)
                                                 .bias(!bn)));
    add_norm(up, c2);
    up->push_back(torch::nn::ReLU());
    c = c2;
  }
  register_module("up", up);

  out = torch::nn::Sequential();
  out->push_back(torch::nn::ReflectionPad2d(3));
  out->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(c, 3, 7)));
  out->push_back(torch::nn::Sigmoid());
  register_module("out", out);
}

torch::Tensor InpaintGeneratorImpl::forward(const torch::Tensor& x_prime) {
  detail::require(x_prime.dim() == 4 && x_prime.size(1) == 4,
                  "generator: expected Bx4xHxW input");
  const int64_t h = x_prime.size(2), w = x_prime.size(3);
  detail::require(h % 8 == 0 && w % 8 == 0 && h >= 8 && w >= 8,
                  "generator: spatial dims must be positive multiples of 8");
  auto t = down->forward(stem->forward(x_prime));
  auto l = t.narrow(1, 0, trunk_local);
  auto g = t.narrow(1, trunk_local, trunk_global);
  for (auto& block : blocks) std::tie(l, g) = block->forward(l, g);
  return out->forward(up->forward(torch::cat({l, g}, 1)));
}

InpaintGenerator build_generator(const nlohmann::json& config_snapshot) {
  return InpaintGenerator(GenArch::from_json(config_snapshot));
}

// ---------------------------------------------------------------------------
// Discriminator
// ---------------------------------------------------------------------------

nlohmann::json DiscArch::to_json() const {
  return {{"base_channels", base_channels},
          {"n_layers", n_layers},
          {"kernel_size", kernel_size}};
}

DiscArch DiscArch::from_json(const nlohmann::json& j) {
  DiscArch a;
  a.base_channels = j.value("base_channels", a.base_channels);
  a.n_layers = j.value("n_layers", a.n_layers);
  a.kernel_size = j.value("kernel_size", a.kernel_size);
  return a;
}

PatchDiscriminatorImpl::PatchDiscriminatorImpl(DiscArch a) : arch(a) {
  detail::require(arch.n_layers >= 1, "discriminator: n_layers must be >= 1");
  detail::require(arch.kernel_size >= 3, "discriminator: kernel_size must be >= 3");
  detail::require(arch.base_channels >= 1, "discriminator: base_channels must be >= 1");
  const int k = arch.kernel_size, p = (k - 1) / 2;
  int64_t c_in = 3, c = arch.base_channels;
  const int64_t cap = static_cast<int64_t>(arch.base_channels) * 8;
  for (int i = 0; i < arch.n_layers; ++i) {
    const int stride = (i == arch.n_layers - 1) ? 1 : 2;
    torch::nn::Sequential s;
    s->push_back(torch::nn::Conv2d(
        torch::nn::Conv2dOptions(c_in, c, k).stride(stride).padding(p)));
    if (i > 0) s->push_back(torch::nn::InstanceNorm2d(c));
    s->push_back(torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)));
    stages.push_back(s);
    register_module("stage" + std::to_string(i), stages.back());
    c_in = c;
    c = std::min(c * 2, cap);
  }
  head = register_module(
      "head", torch::nn::Conv2d(torch::nn::Conv2dOptions(c_in, 1, k).stride(1).padding(p)));
}

int PatchDiscriminatorImpl::receptive_field() const {
  int rf = 1, jump = 1;
  for (int i = 0; i < arch.n_layers; ++i) {
    rf += (arch.kernel_size - 1) * jump;
    jump *= (i == arch.n_layers - 1) ? 1 : 2;
  }
  rf += (arch.kernel_size - 1) * jump;  // head
  return rf;
}

PatchDiscriminatorImpl::Output PatchDiscriminatorImpl::forward(const torch::Tensor& x) {
  detail::require(x.dim() == 4 && x.size(1) == 3, "discriminator: expected Bx3xHxW input");
  const int rf = receptive_field();
  detail::require(x.size(2) >= rf && x.size(3) >= rf,
                  "discriminator: input smaller than the receptive field (" +
                      std::to_string(rf) + " px)");
  Output o;
  auto h = x;
  for (auto& stage : stages) {
    h = stage->forward(h);
    o.features.push_back(h);
  }
  o.score_map = head->forward(h);
  return o;
}

PatchDiscriminator build_discriminator(const nlohmann::json& config_snapshot) {
  return PatchDiscriminator(DiscArch::from_json(config_snapshot));
}

void save_generator_checkpoint(const std::string& path, const InpaintGenerator& gen) {
  ckpt::save(path, *gen, {{"kind", "inpaint_gen"}, {"arch", gen->arch.to_json()}});
}

InpaintGenerator load_generator_checkpoint(const std::string& path) {
  auto snapshot = ckpt::read_config(path);
  detail::require(snapshot.value("kind", "") == "inpaint_gen",
                  path + ": not an inpainting generator checkpoint");
  auto gen = build_generator(snapshot.at("arch"));
  ckpt::load_into(path, *gen);
  return gen;
}

void save_discriminator_checkpoint(const std::string& path, const PatchDiscriminator& d) {
  ckpt::save(path, *d, {{"kind", "inpaint_disc"}, {"arch", d->arch.to_json()}});
}

PatchDiscriminator load_discriminator_checkpoint(const std::string& path) {
  auto snapshot = ckpt::read_config(path);
  detail::require(snapshot.value("kind", "") == "inpaint_disc",
                  path + ": not a discriminator checkpoint");
  auto d = build_discriminator(snapshot.at("arch"));
  ckpt::load_into(path, *d);
  return d;
}

// ---------------------------------------------------------------------------
// Stacking / compositing
// ---------------------------------------------------------------------------

StackedInput stack_input(const Image& x, const Mask& m_inpaint) {
  require_same_hw(x.t[0], m_inpaint.t, "stack_input");
  auto mf = m_inpaint.t.unsqueeze(0);
  return {torch::cat({x.t * (1.0f - mf), mf}, 0)};
}

Image inpaint_forward(InpaintGenerator& gen, const StackedInput& x_prime) {
  detail::require(x_prime.t.dim() == 3 && x_prime.t.size(0) == 4,
                  "inpaint_forward: expected a 4xHxW stack");
  torch::NoGradGuard ng;
  gen->eval();
  return Image::create(gen->forward(x_prime.t.unsqueeze(0)).squeeze(0));
}

Image composite(const Image& x, const Image& x_raw, const Mask& m_inpaint) {
  require_same_hw(x.t[0], x_raw.t[0], "composite");
  require_same_hw(x.t[0], m_inpaint.t, "composite");
  auto keep = m_inpaint.t.unsqueeze(0) > 0.5f;
  return Image::create(torch::where(keep, x_raw.t, x.t));
}

torch::Tensor composite_batched(const torch::Tensor& x, const torch::Tensor& x_raw,
                                const torch::Tensor& m) {
  detail::require(x.dim() == 4 && x_raw.sizes() == x.sizes(),
                  "composite_batched: image batches must match");
  detail::require(m.dim() == 4 && m.size(1) == 1 && m.size(0) == x.size(0),
                  "composite_batched: mask must be Bx1xHxW");
  return torch::where(m > 0.5f, x_raw, x);
}

torch::Tensor inpaint_forward_padded(InpaintGenerator& gen, const torch::Tensor& x_prime) {
  detail::require(x_prime.dim() == 4 && x_prime.size(1) == 4,
                  "inpaint_forward_padded: expected Bx4xHxW input");
  const int64_t h = x_prime.size(2), w = x_prime.size(3);
  const int64_t ph = (8 - h % 8) % 8, pw = (8 - w % 8) % 8;
  auto padded = x_prime;
  if (ph > 0 || pw > 0) {
    // Reflection needs pad < dim; fall back to replicate for tiny inputs.
    auto opts = torch::nn::functional::PadFuncOptions({0, pw, 0, ph});
    if (ph < h && pw < w)
      opts.mode(torch::kReflect);
    else
      opts.mode(torch::kReplicate);
    padded = torch::nn::functional::pad(x_prime, opts);
  }
  auto y = gen->forward(padded);
  return y.narrow(2, 0, h).narrow(3, 0, w);
}

PatchDiscriminatorImpl::Output disc_forward(PatchDiscriminator& d, const torch::Tensor& x) {
  return d->forward(x);
}

}  // namespace wrinkles
