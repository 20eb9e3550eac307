#ifndef WRINKLES_SEGNET_HPP
#define WRINKLES_SEGNET_HPP

#include <torch/torch.h>

#include <nlohmann/json_fwd.hpp>
#include <string>
#include <vector>

#include "wrinkles/data.hpp"
#include "wrinkles/types.hpp"

namespace wrinkles {

struct SegArch {
  int encoder_depth = 5;  // number of downsamplings; input dims must divide 2^depth
  int base_channels = 16;
  std::string encoder_style = "resnext";  // "resnext" (grouped bottlenecks) or "plain"

  int downsample_factor() const { return 1 << encoder_depth; }
  nlohmann::json to_json() const;
  static SegArch from_json(const nlohmann::json& j);
};

// Encoder-decoder with nested skip pathways: decoder node (i,j) fuses all
// previous nodes of row i with the upsampled node (i+1, j-1), densely
// bridging the semantic gap between encoder and decoder rows.
struct SegModelImpl : torch::nn::Module {
  explicit SegModelImpl(SegArch arch = {});

  // BxCxHxW in [0,1] -> Bx1xHxW logits. Dims must divide the downsample factor.
  torch::Tensor forward(const torch::Tensor& x);

  SegArch arch;
  std::vector<int64_t> channels;                 // per row
  std::vector<torch::nn::AnyModule> encoder;     // rows 0..depth
  std::vector<std::vector<torch::nn::AnyModule>> nested;  // [row][j-1]
  torch::nn::MaxPool2d pool{nullptr};
  torch::nn::Conv2d head{nullptr};
};
TORCH_MODULE(SegModel);

SegModel build_seg_model(const nlohmann::json& config_snapshot);

// Checkpoint files carry the architecture snapshot, so loading rebuilds the
// model without outside configuration.
void save_seg_checkpoint(const std::string& path, const SegModel& model);
SegModel load_seg_checkpoint(const std::string& path);

// Single-image forward: 3xHxW image -> HxW probability map (sigmoid output).
ProbMap seg_forward(SegModel& model, const Image& image);

// Batched forward that reflect-pads to the model's downsample factor and
// crops the output back; accepts any spatial size >= 1. Returns Bx1xHxW probs.
torch::Tensor seg_forward_padded(SegModel& model, const torch::Tensor& x);

// pixel -> 1 iff p > t (strictly greater).
Mask threshold_mask(const ProbMap& p, double t = 0.5);

// |m AND m_hat| / |m OR m_hat|; 1.0 when both masks are empty.
double iou(const Mask& m, const Mask& m_hat);

struct SegTrainConfig {
  int epochs = 200;
  double lr = 1e-3;
  int lr_decay_epoch = 100;
  double lr_decay_factor = 0.5;
  int input_size = 512;
  int batch_size = 8;
  uint64_t seed = 0;
  SegArch arch{};

  void validate() const;
};

struct SegEpochRecord {
  int epoch;
  double train_loss;
  double val_iou;  // NaN when there is no validation set
  double lr;
};

struct SegTrainResult {
  SegModel model{nullptr};  // best-val-IoU weights (last epoch when no val set)
  std::vector<SegEpochRecord> history;
  double best_val_iou = 0.0;
};

// Minimizes the Dice loss with Adam; lr is scaled once by lr_decay_factor at
// lr_decay_epoch. Aborts with the epoch index if the loss turns non-finite.
SegTrainResult train_segmentation(const std::vector<Sample>& train,
                                  const std::vector<Sample>& val, const SegTrainConfig& cfg,
                                  const AugmentConfig& aug = {});

nlohmann::json seg_history_json(const std::vector<SegEpochRecord>& history);

}  // namespace wrinkles

#endif  // WRINKLES_SEGNET_HPP
