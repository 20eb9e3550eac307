#ifndef WRINKLES_CHECKPOINT_HPP
#define WRINKLES_CHECKPOINT_HPP

#include <torch/torch.h>

#include <nlohmann/json_fwd.hpp>
#include <string>

// Self-describing checkpoint container shared by all networks:
//   8-byte magic "WRNKCKP1", u64 header length, JSON header, raw tensor data.
// The header maps tensor names to shape/offset and carries a free-form config
// snapshot so a file can rebuild the architecture it was saved from.

namespace wrinkles::ckpt {

// Saves parameters + buffers of `module` with a config snapshot.
void save(const std::string& path, const torch::nn::Module& module,
          const nlohmann::json& config_snapshot);

// Reads only the config snapshot (to reconstruct the architecture first).
nlohmann::json read_config(const std::string& path);

// Copies stored tensors into `module` by name. Errors mention the checkpoint
// path and the first mismatching or missing tensor.
void load_into(const std::string& path, torch::nn::Module& module);

}  // namespace wrinkles::ckpt

#endif  // WRINKLES_CHECKPOINT_HPP
