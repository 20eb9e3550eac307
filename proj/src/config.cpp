#include "wrinkles/config.hpp"

#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

namespace wrinkles {

namespace {

nlohmann::json augment_to_json(const AugmentConfig& a) {
  return {{"flip_horizontal", a.flip_horizontal},
          {"flip_vertical", a.flip_vertical},
          {"random_shift_px", a.random_shift_px},
          {"rotation_deg_max", a.rotation_deg_max},
          {"crop_size", a.crop_size}};
}

AugmentConfig augment_from_json(const nlohmann::json& j) {
  AugmentConfig a;
  a.flip_horizontal = j.value("flip_horizontal", a.flip_horizontal);
  a.flip_vertical = j.value("flip_vertical", a.flip_vertical);
  a.random_shift_px = j.value("random_shift_px", a.random_shift_px);
  a.rotation_deg_max = j.value("rotation_deg_max", a.rotation_deg_max);
  a.crop_size = j.value("crop_size", a.crop_size);
  return a;
}

nlohmann::json policy_to_json(const MaskPolicy& p) {
  return {{"n_strokes", {p.n_strokes.min, p.n_strokes.max}},
          {"points_per_stroke", {p.points_per_stroke.min, p.points_per_stroke.max}},
          {"step_px", {p.step_px.min, p.step_px.max}},
          {"turn_deg_max", p.turn_deg_max},
          {"thickness_px", {p.thickness_px.min, p.thickness_px.max}},
          {"target_coverage", {p.target_coverage.min, p.target_coverage.max}},
          {"max_tries", p.max_tries}};
}

template <typename T>
Range<T> range_from_json(const nlohmann::json& j, const char* key, Range<T> fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  detail::require(v.is_array() && v.size() == 2,
                  std::string("config: '") + key + "' must be a [min, max] pair");
  return {v[0].get<T>(), v[1].get<T>()};
}

MaskPolicy policy_from_json(const nlohmann::json& j) {
  MaskPolicy p;
  p.n_strokes = range_from_json<int>(j, "n_strokes", p.n_strokes);
  p.points_per_stroke = range_from_json<int>(j, "points_per_stroke", p.points_per_stroke);
  p.step_px = range_from_json<int>(j, "step_px", p.step_px);
  p.turn_deg_max = j.value("turn_deg_max", p.turn_deg_max);
  p.thickness_px = range_from_json<int>(j, "thickness_px", p.thickness_px);
  p.target_coverage = range_from_json<double>(j, "target_coverage", p.target_coverage);
  p.max_tries = j.value("max_tries", p.max_tries);
  return p;
}

nlohmann::json seg_train_to_json(const SegTrainConfig& c) {
  return {{"epochs", c.epochs},
          {"lr", c.lr},
          {"lr_decay_epoch", c.lr_decay_epoch},
          {"lr_decay_factor", c.lr_decay_factor},
          {"input_size", c.input_size},
          {"batch_size", c.batch_size},
          {"arch", c.arch.to_json()}};
}

SegTrainConfig seg_train_from_json(const nlohmann::json& j) {
  SegTrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.lr = j.value("lr", c.lr);
  c.lr_decay_epoch = j.value("lr_decay_epoch", c.lr_decay_epoch);
  c.lr_decay_factor = j.value("lr_decay_factor", c.lr_decay_factor);
  c.input_size = j.value("input_size", c.input_size);
  c.batch_size = j.value("batch_size", c.batch_size);
  if (j.contains("arch")) c.arch = SegArch::from_json(j.at("arch"));
  return c;
}

nlohmann::json inpaint_train_to_json(const InpaintTrainConfig& c) {
  return {{"epochs", c.epochs},
          {"lr_gen", c.lr_gen},
          {"lr_disc", c.lr_disc},
          {"batch_size", c.batch_size},
          {"crop_size", c.crop_size},
          {"gen_arch", c.gen_arch.to_json()},
          {"disc_arch", c.disc_arch.to_json()},
          {"hrf_width", c.hrf_width},
          {"hrf_layers", c.hrf_layers},
          {"hrf_seed", c.hrf_seed},
          {"hrf_checkpoint", c.hrf_checkpoint},
          {"val_every", c.val_every}};
}

InpaintTrainConfig inpaint_train_from_json(const nlohmann::json& j) {
  InpaintTrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.lr_gen = j.value("lr_gen", c.lr_gen);
  c.lr_disc = j.value("lr_disc", c.lr_disc);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.crop_size = j.value("crop_size", c.crop_size);
  if (j.contains("gen_arch")) c.gen_arch = GenArch::from_json(j.at("gen_arch"));
  if (j.contains("disc_arch")) c.disc_arch = DiscArch::from_json(j.at("disc_arch"));
  c.hrf_width = j.value("hrf_width", c.hrf_width);
  c.hrf_layers = j.value("hrf_layers", c.hrf_layers);
  c.hrf_seed = j.value("hrf_seed", c.hrf_seed);
  c.hrf_checkpoint = j.value("hrf_checkpoint", c.hrf_checkpoint);
  c.val_every = j.value("val_every", c.val_every);
  return c;
}

nlohmann::json pipeline_to_json(const PipelineOptions& p) {
  return {{"seg_input_size", p.seg_input_size},
          {"threshold", p.threshold},
          {"dilate_px", p.dilate_px}};
}

PipelineOptions pipeline_from_json(const nlohmann::json& j) {
  PipelineOptions p;
  p.seg_input_size = j.value("seg_input_size", p.seg_input_size);
  p.threshold = j.value("threshold", p.threshold);
  p.dilate_px = j.value("dilate_px", p.dilate_px);
  return p;
}

}  // namespace

void RunConfig::validate() const {
  detail::require(!device.empty(), "config: device must not be empty");
  detail::require(threads >= 0, "config: threads must be >= 0");
  detail::require(data.val_fraction >= 0.0 && data.val_fraction < 1.0,
                  "config: val_fraction must lie in [0, 1)");
  mask_policy.validate();
  seg_train.validate();
  inpaint_train.validate();
  pipeline.validate();
}

void apply_seed(RunConfig& c, uint64_t seed) {
  c.seed = seed;
  c.seg_train.seed = seed;
  c.inpaint_train.seed = seed;
}

RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c;
  c.seed = j.value("seed", c.seed);
  c.output_dir = j.value("output_dir", c.output_dir);
  c.device = j.value("device", c.device);
  c.threads = j.value("threads", c.threads);
  if (j.contains("data")) {
    const auto& d = j.at("data");
    c.data.root = d.value("root", c.data.root);
    c.data.manifest = d.value("manifest", c.data.manifest);
    c.data.val_fraction = d.value("val_fraction", c.data.val_fraction);
  }
  if (j.contains("checkpoints")) {
    const auto& k = j.at("checkpoints");
    c.checkpoints.seg = k.value("seg", c.checkpoints.seg);
    c.checkpoints.gen = k.value("gen", c.checkpoints.gen);
    c.checkpoints.disc = k.value("disc", c.checkpoints.disc);
  }
  if (j.contains("augment")) c.augment = augment_from_json(j.at("augment"));
  if (j.contains("mask_policy")) c.mask_policy = policy_from_json(j.at("mask_policy"));
  if (j.contains("seg_train")) c.seg_train = seg_train_from_json(j.at("seg_train"));
  if (j.contains("inpaint_train"))
    c.inpaint_train = inpaint_train_from_json(j.at("inpaint_train"));
  if (j.contains("loss_weights"))
    c.inpaint_train.weights = LossWeights::from_json(j.at("loss_weights"));
  if (j.contains("pipeline")) c.pipeline = pipeline_from_json(j.at("pipeline"));

  // shared sections feed the trainer
  c.inpaint_train.mask_policy = c.mask_policy;
  c.inpaint_train.seg_checkpoint = c.checkpoints.seg;
  apply_seed(c, c.seed);
  c.validate();
  return c;
}

nlohmann::json config_to_json(const RunConfig& c) {
  return {{"seed", c.seed},
          {"output_dir", c.output_dir},
          {"device", c.device},
          {"threads", c.threads},
          {"data",
           {{"root", c.data.root},
            {"manifest", c.data.manifest},
            {"val_fraction", c.data.val_fraction}}},
          {"checkpoints",
           {{"seg", c.checkpoints.seg}, {"gen", c.checkpoints.gen}, {"disc", c.checkpoints.disc}}},
          {"augment", augment_to_json(c.augment)},
          {"mask_policy", policy_to_json(c.mask_policy)},
          {"seg_train", seg_train_to_json(c.seg_train)},
          {"inpaint_train", inpaint_train_to_json(c.inpaint_train)},
          {"loss_weights", c.inpaint_train.weights.to_json()},
          {"pipeline", pipeline_to_json(c.pipeline)}};
}

RunConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) detail::fail("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    detail::fail(path + ": " + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    detail::fail(path + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    detail::fail(path + ": " + e.what());
  }
}

std::string config_hash(const RunConfig& c) {
  auto j = config_to_json(c);
  j.erase("output_dir");
  const std::string dump = j.dump();
  uint64_t h = 1469598103934665603ull;
  for (unsigned char byte : dump) {
    h ^= byte;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace wrinkles
