#include "wrinkles/eval.hpp"

#include <cmath>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "wrinkles/data.hpp"

namespace wrinkles {

namespace {

uint64_t mix(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Channel-unit normalization: f / sqrt(sum_c f^2 + eps).
torch::Tensor unit_normalize(const torch::Tensor& f) {
  auto norm = torch::sqrt(f.pow(2).sum(1, /*keepdim=*/true) + 1e-10);
  return f / norm;
}

void set_optional(nlohmann::json& j, const char* key, const std::optional<double>& v) {
  if (v.has_value())
    j[key] = *v;
  else
    j[key] = nullptr;
}

std::optional<double> get_optional(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j{{"n_samples", n_samples},
                   {"n_skipped", n_skipped},
                   {"mask_seed", mask_seed},
                   {"config_hash", config_hash}};
  set_optional(j, "iou", iou);
  set_optional(j, "lpips_mean", lpips_mean);
  set_optional(j, "fid", fid);
  return j;
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.iou = get_optional(j, "iou");
  r.lpips_mean = get_optional(j, "lpips_mean");
  r.fid = get_optional(j, "fid");
  r.n_samples = j.value("n_samples", 0);
  r.n_skipped = j.value("n_skipped", 0);
  r.mask_seed = j.value("mask_seed", uint64_t{0});
  r.config_hash = j.value("config_hash", "");
  return r;
}

double compute_lpips(const Image& x, const Image& y, const FeatureExtractor& feat,
                     const std::vector<double>& unit_weights) {
  require_same_hw(x.t[0], y.t[0], "compute_lpips");
  torch::NoGradGuard ng;
  auto fx = feat.features(x.t.unsqueeze(0));
  auto fy = feat.features(y.t.unsqueeze(0));
  detail::require(fx.size() == fy.size() && !fx.empty(),
                  "compute_lpips: extractor returned mismatched layer lists");
  double total = 0.0;
  for (size_t l = 0; l < fx.size(); ++l) {
    auto dx = unit_normalize(fx[l]) - unit_normalize(fy[l]);
    auto sq = dx.pow(2);
    if (!unit_weights.empty()) {
      detail::require(static_cast<int64_t>(unit_weights.size()) == sq.size(1),
                      "compute_lpips: unit_weights size does not match channel count");
      auto wt = torch::tensor(unit_weights, sq.options()).view({1, -1, 1, 1});
      sq = sq * wt;
    }
    // channel-summed squared difference, averaged over positions
    total += sq.sum(1).mean().item<double>();
  }
  return total;
}

double compute_fid(const torch::Tensor& features_a, const torch::Tensor& features_b) {
  detail::require(features_a.dim() == 2 && features_b.dim() == 2,
                  "compute_fid: feature sets must be NxD matrices");
  detail::require(features_a.size(1) == features_b.size(1),
                  "compute_fid: feature dimensions differ");
  detail::require(features_a.size(0) >= 2 && features_b.size(0) >= 2,
                  "compute_fid: need at least 2 feature vectors per set");
  auto a = features_a.to(torch::kFloat64);
  auto b = features_b.to(torch::kFloat64);
  detail::require(torch::isfinite(a).all().item<bool>() &&
                      torch::isfinite(b).all().item<bool>(),
                  "compute_fid: non-finite features");

  auto mu_a = a.mean(0);
  auto mu_b = b.mean(0);
  auto ca = a - mu_a;
  auto cb = b - mu_b;
  auto sigma_a = ca.t().mm(ca) / static_cast<double>(a.size(0) - 1);
  auto sigma_b = cb.t().mm(cb) / static_cast<double>(b.size(0) - 1);

  // S_a = sqrt(sigma_a) via eigendecomposition, eigenvalues clipped at 0.
  auto [wa, va] = torch::linalg_eigh(sigma_a, "L");
  auto sa = va.mm(torch::diag(torch::clamp_min(wa, 0.0).sqrt())).mm(va.t());
  // tr((sigma_a sigma_b)^{1/2}) = sum sqrt(eig(S_a sigma_b S_a)), symmetrized.
  auto m = sa.mm(sigma_b).mm(sa);
  m = 0.5 * (m + m.t());
  auto wm = std::get<0>(torch::linalg_eigh(m, "L"));
  const double tr_sqrt = torch::clamp_min(wm, 0.0).sqrt().sum().item<double>();

  const double mean_term = (mu_a - mu_b).pow(2).sum().item<double>();
  return mean_term + sigma_a.trace().item<double>() + sigma_b.trace().item<double>() -
         2.0 * tr_sqrt;
}

torch::Tensor fid_features(const Image& x, const FeatureExtractor& feat) {
  torch::NoGradGuard ng;
  auto layers = feat.features(x.t.unsqueeze(0));
  detail::require(!layers.empty(), "fid_features: extractor returned no layers");
  return layers.back().mean({2, 3}).squeeze(0);  // global average pool -> D
}

MetricsReport evaluate_inpainting_with(const InpaintFn& fn, const std::vector<Sample>& dataset,
                                  const MaskPolicy& policy, const FeatureExtractor& feat,
                                  uint64_t seed) {
  detail::require(!dataset.empty(), "evaluate_inpainting: empty dataset");
  policy.validate();
  MetricsReport report;
  report.mask_seed = seed;

  double lpips_sum = 0.0;
  std::vector<torch::Tensor> feats_orig, feats_inpainted;
  for (size_t i = 0; i < dataset.size(); ++i) {
    const auto& s = dataset[i];
    std::optional<Mask> m_eval;
    try {
      m_eval = synth_eval_masks(s.wrinkle_mask, policy, mix(seed, i));
    } catch (const std::exception&) {
      ++report.n_skipped;
      continue;
    }
    auto raw = fn(s.image.t, m_eval->t);
    auto x_hat = composite(s.image, Image::create(raw), *m_eval);
    lpips_sum += compute_lpips(s.image, x_hat, feat);
    feats_orig.push_back(fid_features(s.image, feat));
    feats_inpainted.push_back(fid_features(x_hat, feat));
    ++report.n_samples;
  }
  detail::require(report.n_samples > 0, "evaluate_inpainting: every sample was skipped");
  report.lpips_mean = lpips_sum / report.n_samples;
  if (report.n_samples >= 2)
    report.fid = compute_fid(torch::stack(feats_orig, 0), torch::stack(feats_inpainted, 0));
  return report;
}

MetricsReport evaluate_inpainting(InpaintGenerator& gen, const std::vector<Sample>& dataset,
                                  const MaskPolicy& policy, const FeatureExtractor& feat,
                                  uint64_t seed) {
  auto fn = [&gen](const torch::Tensor& img, const torch::Tensor& m) {
    torch::NoGradGuard ng;
    gen->eval();
    auto x_prime = torch::cat({img * (1.0f - m.unsqueeze(0)), m.unsqueeze(0)}, 0).unsqueeze(0);
    return inpaint_forward_padded(gen, x_prime).squeeze(0);
  };
  return evaluate_inpainting_with(fn, dataset, policy, feat, seed);
}

MetricsReport evaluate_segmentation(SegModel& seg, const std::vector<Sample>& dataset,
                                    int input_size) {
  detail::require(!dataset.empty(), "evaluate_segmentation: empty dataset");
  MetricsReport report;
  torch::NoGradGuard ng;
  seg->eval();
  double sum = 0.0;
  for (const auto& s : dataset) {
    const int64_t h = s.image.height(), w = s.image.width();
    torch::Tensor input = s.image.t;
    if (input_size > 0) input = resize_image(input, input_size, input_size);
    auto probs = seg_forward_padded(seg, input.unsqueeze(0)).squeeze(0).squeeze(0);
    if (input_size > 0) probs = resize_mask_nearest(probs, h, w);
    auto pred = threshold_mask(ProbMap::create(probs), 0.5);
    sum += iou(s.wrinkle_mask, pred);
    ++report.n_samples;
  }
  report.iou = sum / report.n_samples;
  return report;
}

}  // namespace wrinkles
