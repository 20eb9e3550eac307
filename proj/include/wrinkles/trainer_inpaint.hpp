#ifndef WRINKLES_TRAINER_INPAINT_HPP
#define WRINKLES_TRAINER_INPAINT_HPP

#include <torch/torch.h>

#include <memory>
#include <string>
#include <vector>

#include "wrinkles/data.hpp"
#include "wrinkles/inpaintnet.hpp"
#include "wrinkles/losses.hpp"
#include "wrinkles/maskgen.hpp"
#include "wrinkles/segnet.hpp"

namespace wrinkles {

struct InpaintTrainConfig {
  int epochs = 300;
  double lr_gen = 1e-4;
  double lr_disc = 1e-4;
  int batch_size = 16;
  int crop_size = 256;  // divisible by 8
  uint64_t seed = 0;
  MaskPolicy mask_policy{};
  LossWeights weights{};
  std::string seg_checkpoint;
  GenArch gen_arch{};
  DiscArch disc_arch{};
  int hrf_width = 24;  // perceptual extractor: width/depth/seed of the dilated stack
  int hrf_layers = 4;
  uint64_t hrf_seed = 17;
  std::string hrf_checkpoint;  // optional pretrained extractor weights
  int val_every = 10;          // epochs between validation passes

  void validate() const;
};

// Everything a single alternating update needs. Built once per run so tests
// can drive train_step directly.
struct TrainContext {
  InpaintGenerator gen{nullptr};
  PatchDiscriminator disc{nullptr};
  SegModel seg{nullptr};
  std::shared_ptr<FeatureExtractor> hrf;
  std::unique_ptr<torch::optim::Adam> opt_gen, opt_disc;
  InpaintTrainConfig cfg;
  int64_t step = 0;
};

TrainContext make_train_context(const InpaintTrainConfig& cfg);

struct StepLog {
  LossTerms terms;       // raw (unweighted) term values
  double d_loss = 0.0;   // discriminator GAN loss before the R1 term
  double d_total = 0.0;  // d_loss + lambda_r1 * r1
  double g_total = 0.0;  // weighted generator objective
};

// One alternating update on a batch (images Bx3xHxW, wrinkle masks Bx1xHxW):
// random holes are drawn from cfg.mask_policy, unioned with the wrinkle
// masks, and the composite is rendered; the discriminator minimizes
// L_D + lambda_r1*R1, then the generator minimizes the weighted sum of its
// terms. Zero-weight terms are skipped entirely (exact ablations).
// Throws with the step index and a full term breakdown on non-finite losses.
StepLog train_step(TrainContext& ctx, const torch::Tensor& images,
                   const torch::Tensor& wrinkle_masks, uint64_t mask_seed);

struct InpaintEpochRecord {
  int epoch = 0;
  LossTerms mean_terms;  // means over the epoch's steps
  double d_loss = 0.0;
  double d_total = 0.0;
  double g_total = 0.0;
  double val_lpips = std::numeric_limits<double>::quiet_NaN();
};

struct InpaintTrainResult {
  InpaintGenerator gen{nullptr};  // best-val-LPIPS weights (last epoch without val)
  PatchDiscriminator disc{nullptr};
  std::vector<InpaintEpochRecord> history;
  double best_val_lpips = std::numeric_limits<double>::quiet_NaN();
  std::vector<Image> val_previews;  // fixed val crops rendered by the final model
};

// Adam for both networks; samples are random-cropped to cfg.crop_size (plus
// any configured augmentation). Validation renders fixed crops with fixed
// masks every val_every epochs and tracks mean LPIPS; the returned generator
// carries the best-validation weights.
InpaintTrainResult train_inpainting(const std::vector<Sample>& train,
                                    const std::vector<Sample>& val,
                                    const InpaintTrainConfig& cfg,
                                    const AugmentConfig& aug = {});

nlohmann::json inpaint_history_json(const std::vector<InpaintEpochRecord>& history);

}  // namespace wrinkles

#endif  // WRINKLES_TRAINER_INPAINT_HPP
