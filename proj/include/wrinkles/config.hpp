#ifndef WRINKLES_CONFIG_HPP
#define WRINKLES_CONFIG_HPP

#include <nlohmann/json_fwd.hpp>
#include <string>

#include "wrinkles/data.hpp"
#include "wrinkles/maskgen.hpp"
#include "wrinkles/pipeline.hpp"
#include "wrinkles/segnet.hpp"
#include "wrinkles/trainer_inpaint.hpp"

namespace wrinkles {

struct DataConfig {
  std::string root;      // expects images/<id>.png + masks/<id>.png
  std::string manifest;  // defaults to <root>/manifest.txt when empty
  double val_fraction = 0.2;
};

struct CheckpointPaths {
  std::string seg;
  std::string gen;
  std::string disc;
};

// One declarative file drives every command. The top-level seed is propagated
// into the training sections at parse time, as are the shared mask_policy and
// loss_weights sections and checkpoints.seg.
struct RunConfig {
  uint64_t seed = 0;
  std::string output_dir = "runs/out";
  std::string device = "cpu";
  int threads = 0;  // 0 keeps the torch default
  DataConfig data;
  CheckpointPaths checkpoints;
  AugmentConfig augment;
  MaskPolicy mask_policy;
  SegTrainConfig seg_train;
  InpaintTrainConfig inpaint_train;
  PipelineOptions pipeline;

  void validate() const;
};

RunConfig parse_config(const std::string& path);
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& c);

// Re-propagates an overridden seed into the training sections.
void apply_seed(RunConfig& c, uint64_t seed);

// FNV-1a 64 over the canonical serialization with output_dir excluded, so
// relocating artifacts does not change a run's identity.
std::string config_hash(const RunConfig& c);

}  // namespace wrinkles

#endif  // WRINKLES_CONFIG_HPP
