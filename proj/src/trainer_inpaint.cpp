#include "wrinkles/trainer_inpaint.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <nlohmann/json.hpp>
#include <numeric>
#include <random>
#include <stdexcept>

#include "wrinkles/eval.hpp"

namespace wrinkles {

namespace {

// splitmix64-style mixing so every stochastic site gets its own stream.
uint64_t mix(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

void check_finite(int64_t step, const StepLog& log) {
  const std::pair<const char*, double> named[] = {
      {"adv", log.terms.adv},   {"hrfpl", log.terms.hrfpl}, {"discpl", log.terms.discpl},
      {"r1", log.terms.r1},     {"ffl", log.terms.ffl},     {"wrinkle", log.terms.wrinkle},
      {"d_loss", log.d_loss},   {"g_total", log.g_total}};
  for (const auto& [name, v] : named) {
    if (std::isfinite(v)) continue;
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "train_step %lld: non-finite '%s' (adv=%g hrfpl=%g discpl=%g r1=%g ffl=%g "
                  "wrinkle=%g d_loss=%g)",
                  static_cast<long long>(step), name, log.terms.adv, log.terms.hrfpl,
                  log.terms.discpl, log.terms.r1, log.terms.ffl, log.terms.wrinkle, log.d_loss);
    throw std::runtime_error(buf);
  }
}

struct ValItem {
  torch::Tensor image;  // 3xHxW
  torch::Tensor m_w;    // 1xHxW
  torch::Tensor m_i;    // 1xHxW, wrinkle mask unioned with a fixed random hole
};

using NamedTensors = std::vector<std::pair<std::string, torch::Tensor>>;

NamedTensors snapshot_state(const torch::nn::Module& m) {
  NamedTensors out;
  for (const auto& p : m.named_parameters()) out.emplace_back(p.key(), p.value().detach().clone());
  for (const auto& b : m.named_buffers()) out.emplace_back(b.key(), b.value().detach().clone());
  return out;
}

void restore_state(torch::nn::Module& m, const NamedTensors& state) {
  torch::NoGradGuard ng;
  auto params = m.named_parameters();
  auto buffers = m.named_buffers();
  for (const auto& [name, value] : state) {
    if (auto* p = params.find(name))
      p->copy_(value);
    else if (auto* b = buffers.find(name))
      b->copy_(value);
  }
}

}  // namespace

void InpaintTrainConfig::validate() const {
  detail::require(epochs >= 1, "inpaint config: epochs must be >= 1");
  detail::require(lr_gen > 0.0 && lr_disc > 0.0, "inpaint config: learning rates must be > 0");
  detail::require(batch_size >= 1, "inpaint config: batch_size must be >= 1");
  detail::require(crop_size >= 8 && crop_size % 8 == 0,
                  "inpaint config: crop_size must be a positive multiple of 8");
  detail::require(hrf_width >= 1 && hrf_layers >= 1,
                  "inpaint config: extractor width and depth must be >= 1");
  detail::require(val_every >= 1, "inpaint config: val_every must be >= 1");
  mask_policy.validate();
  weights.validate();
}

TrainContext make_train_context(const InpaintTrainConfig& cfg) {
  cfg.validate();
  detail::require(!cfg.seg_checkpoint.empty(),
                  "inpaint training needs seg_checkpoint (train the segmentation model first)");
  TrainContext ctx;
  ctx.cfg = cfg;
  ctx.gen = InpaintGenerator(cfg.gen_arch);
  ctx.disc = PatchDiscriminator(cfg.disc_arch);
  ctx.seg = load_seg_checkpoint(cfg.seg_checkpoint);
  for (auto& p : ctx.seg->parameters()) p.set_requires_grad(false);
  ctx.seg->eval();
  auto hrf = std::make_shared<DilatedConvExtractor>(3, cfg.hrf_width, cfg.hrf_layers,
                                                    cfg.hrf_seed);
  if (!cfg.hrf_checkpoint.empty()) hrf->load_checkpoint(cfg.hrf_checkpoint);
  ctx.hrf = std::move(hrf);
  ctx.opt_gen = std::make_unique<torch::optim::Adam>(
      ctx.gen->parameters(), torch::optim::AdamOptions(cfg.lr_gen));
  ctx.opt_disc = std::make_unique<torch::optim::Adam>(
      ctx.disc->parameters(), torch::optim::AdamOptions(cfg.lr_disc));
  return ctx;
}

StepLog train_step(TrainContext& ctx, const torch::Tensor& images,
                   const torch::Tensor& wrinkle_masks, uint64_t mask_seed) {
  const auto& w = ctx.cfg.weights;
  detail::require(images.dim() == 4 && images.size(1) == 3, "train_step: images must be Bx3xHxW");
  detail::require(wrinkle_masks.dim() == 4 && wrinkle_masks.size(1) == 1 &&
                      wrinkle_masks.size(0) == images.size(0) &&
                      wrinkle_masks.size(2) == images.size(2) &&
                      wrinkle_masks.size(3) == images.size(3),
                  "train_step: wrinkle masks must be Bx1xHxW matching the images");

  const int64_t batch = images.size(0), h = images.size(2), wd = images.size(3);
  std::vector<torch::Tensor> holes;
  holes.reserve(static_cast<size_t>(batch));
  for (int64_t b = 0; b < batch; ++b)
    holes.push_back(
        generate_polyline_mask(h, wd, ctx.cfg.mask_policy, mix(mask_seed, static_cast<uint64_t>(b))).t);
  auto m_g = torch::stack(holes, 0).unsqueeze(1);
  auto m_i = torch::maximum(wrinkle_masks, m_g);
  auto x_prime = torch::cat({images * (1.0f - m_i), m_i}, 1);

  ctx.gen->train();
  ctx.disc->train();
  StepLog log;

  // Discriminator step: generated composite detached, R1 on real samples.
  torch::Tensor x_hat_d;
  {
    torch::NoGradGuard ng;
    x_hat_d = composite_batched(images, ctx.gen->forward(x_prime), m_i);
  }
  auto l_d = discriminator_loss(ctx.disc, images, x_hat_d, m_i);
  auto r1 = w.lambda_r1 > 0.0 ? r1_penalty(ctx.disc, images, /*create_graph=*/true)
                              : torch::zeros({}, images.options());
  auto d_total = l_d + w.lambda_r1 * r1;
  ctx.opt_disc->zero_grad();
  d_total.backward();
  ctx.opt_disc->step();

  // Generator step against the updated discriminator; its weights take no
  // gradient here, so the step can never touch them.
  for (auto& p : ctx.disc->parameters()) p.set_requires_grad(false);
  auto x_hat = composite_batched(images, ctx.gen->forward(x_prime), m_i);
  auto zero = torch::zeros({}, images.options());
  auto l_g = w.lambda_adv > 0.0 ? generator_adv_loss(ctx.disc, x_hat) : zero;
  auto l_hrf = w.lambda_hrfpl > 0.0 ? hrfpl(images, x_hat, wrinkle_masks, *ctx.hrf) : zero;
  auto l_pl = w.lambda_discpl > 0.0 ? disc_feature_matching(ctx.disc, images, x_hat) : zero;
  auto l_ffl = w.lambda_ffl > 0.0 ? ffl(images, x_hat) : zero;
  auto l_s = w.lambda_s > 0.0 ? wrinkle_loss(ctx.seg, x_hat) : zero;
  auto g_total = w.lambda_adv * l_g + w.lambda_hrfpl * l_hrf + w.lambda_discpl * l_pl +
                 w.lambda_ffl * l_ffl + w.lambda_s * l_s;
  ctx.opt_gen->zero_grad();
  if (g_total.requires_grad()) {
    g_total.backward();
    ctx.opt_gen->step();
  }
  for (auto& p : ctx.disc->parameters()) p.set_requires_grad(true);

  log.terms = {l_g.item<double>(),  l_hrf.item<double>(), l_pl.item<double>(),
               r1.item<double>(),   l_ffl.item<double>(), l_s.item<double>()};
  log.d_loss = l_d.item<double>();
  log.d_total = d_total.item<double>();
  log.g_total = g_total.item<double>();
  check_finite(ctx.step, log);
  ++ctx.step;
  return log;
}

InpaintTrainResult train_inpainting(const std::vector<Sample>& train,
                                    const std::vector<Sample>& val,
                                    const InpaintTrainConfig& cfg, const AugmentConfig& aug) {
  cfg.validate();
  detail::require(!train.empty(), "inpaint training set is empty");
  torch::manual_seed(cfg.seed);
  auto ctx = make_train_context(cfg);

  AugmentConfig crop_aug = aug;
  crop_aug.crop_size = cfg.crop_size;
  AugmentConfig val_crop;  // crop only, no randomized transforms
  val_crop.crop_size = cfg.crop_size;

  std::vector<ValItem> val_items;
  for (size_t j = 0; j < val.size(); ++j) {
    auto s = augment(val[j], val_crop, mix(cfg.seed, 700000 + j));
    auto m_w = s.wrinkle_mask.t.unsqueeze(0);
    auto hole =
        generate_polyline_mask(cfg.crop_size, cfg.crop_size, cfg.mask_policy,
                               mix(cfg.seed, 800000 + j))
            .t.unsqueeze(0);
    val_items.push_back({s.image.t, m_w, torch::maximum(m_w, hole)});
  }

  auto render_val = [&](const ValItem& item) {
    torch::NoGradGuard ng;
    ctx.gen->eval();
    auto x_prime = torch::cat({item.image * (1.0f - item.m_i), item.m_i}, 0).unsqueeze(0);
    auto raw = ctx.gen->forward(x_prime);
    return composite_batched(item.image.unsqueeze(0), raw, item.m_i.unsqueeze(0)).squeeze(0);
  };

  InpaintTrainResult result;
  result.best_val_lpips = std::numeric_limits<double>::quiet_NaN();
  NamedTensors best_state;

  int64_t gstep = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(mix(cfg.seed, 50000 + static_cast<uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    InpaintEpochRecord rec;
    rec.epoch = epoch;
    int n_steps = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      std::vector<torch::Tensor> imgs, masks;
      for (size_t i = start; i < end; ++i) {
        auto s = augment(train[order[i]], crop_aug,
                         mix(cfg.seed, 1315423911ull * (epoch + 1) + order[i]));
        imgs.push_back(s.image.t);
        masks.push_back(s.wrinkle_mask.t.unsqueeze(0));
      }
      auto log = train_step(ctx, torch::stack(imgs, 0), torch::stack(masks, 0),
                            mix(cfg.seed, 777000 + static_cast<uint64_t>(gstep)));
      rec.mean_terms.adv += log.terms.adv;
      rec.mean_terms.hrfpl += log.terms.hrfpl;
      rec.mean_terms.discpl += log.terms.discpl;
      rec.mean_terms.r1 += log.terms.r1;
      rec.mean_terms.ffl += log.terms.ffl;
      rec.mean_terms.wrinkle += log.terms.wrinkle;
      rec.d_loss += log.d_loss;
      rec.d_total += log.d_total;
      rec.g_total += log.g_total;
      ++n_steps;
      ++gstep;
    }
    const double inv = 1.0 / std::max(1, n_steps);
    rec.mean_terms.adv *= inv;
    rec.mean_terms.hrfpl *= inv;
    rec.mean_terms.discpl *= inv;
    rec.mean_terms.r1 *= inv;
    rec.mean_terms.ffl *= inv;
    rec.mean_terms.wrinkle *= inv;
    rec.d_loss *= inv;
    rec.d_total *= inv;
    rec.g_total *= inv;

    const bool validate_now =
        !val_items.empty() && ((epoch + 1) % cfg.val_every == 0 || epoch + 1 == cfg.epochs);
    if (validate_now) {
      double sum = 0.0;
      for (const auto& item : val_items) {
        auto x_hat = render_val(item);
        sum += compute_lpips(Image::create(item.image), Image::create(x_hat), *ctx.hrf);
      }
      rec.val_lpips = sum / static_cast<double>(val_items.size());
      if (!std::isfinite(result.best_val_lpips) || rec.val_lpips < result.best_val_lpips) {
        result.best_val_lpips = rec.val_lpips;
        best_state = snapshot_state(*ctx.gen);
      }
    }
    result.history.push_back(rec);
  }

  if (!best_state.empty()) restore_state(*ctx.gen, best_state);
  for (const auto& item : val_items) result.val_previews.push_back(Image::create(render_val(item)));

  result.gen = ctx.gen;
  result.disc = ctx.disc;
  return result;
}

nlohmann::json inpaint_history_json(const std::vector<InpaintEpochRecord>& history) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : history) {
    nlohmann::json rec{{"epoch", r.epoch},
                       {"adv", r.mean_terms.adv},
                       {"hrfpl", r.mean_terms.hrfpl},
                       {"discpl", r.mean_terms.discpl},
                       {"r1", r.mean_terms.r1},
                       {"ffl", r.mean_terms.ffl},
                       {"wrinkle", r.mean_terms.wrinkle},
                       {"d_loss", r.d_loss},
                       {"d_total", r.d_total},
                       {"g_total", r.g_total}};
    if (std::isfinite(r.val_lpips))
      rec["val_lpips"] = r.val_lpips;
    else
      rec["val_lpips"] = nullptr;
    arr.push_back(std::move(rec));
  }
  return arr;
}

}  // namespace wrinkles
