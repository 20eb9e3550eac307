#include "wrinkles/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <vector>

namespace wrinkles::ckpt {

namespace {

constexpr char kMagic[8] = {'W', 'R', 'N', 'K', 'C', 'K', 'P', '1'};

[[noreturn]] void fail(const std::string& path, const std::string& why) {
  throw std::runtime_error("checkpoint " + path + ": " + why);
}

struct Header {
  nlohmann::json json;
  uint64_t data_offset = 0;
};

Header read_header(std::ifstream& in, const std::string& path) {
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) fail(path, "bad magic (not a checkpoint file)");
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string buf(len, '\0');
  in.read(buf.data(), static_cast<std::streamsize>(len));
  if (!in) fail(path, "truncated header");
  Header h;
  h.json = nlohmann::json::parse(buf, nullptr, false);
  if (h.json.is_discarded()) fail(path, "corrupt header JSON");
  h.data_offset = 8 + sizeof(len) + len;
  return h;
}

}  // namespace

void save(const std::string& path, const torch::nn::Module& module,
          const nlohmann::json& config_snapshot) {
  nlohmann::json tensors = nlohmann::json::array();
  std::vector<torch::Tensor> flat;
  uint64_t offset = 0;

  auto add = [&](const std::string& name, const torch::Tensor& t) {
    auto c = t.detach().to(torch::kFloat32).contiguous();
    nlohmann::json entry;
    entry["name"] = name;
    entry["shape"] = std::vector<int64_t>(c.sizes().begin(), c.sizes().end());
    entry["dtype"] = "f32";
    entry["offset"] = offset;
    offset += static_cast<uint64_t>(c.numel()) * sizeof(float);
    tensors.push_back(entry);
    flat.push_back(c);
  };

  for (const auto& p : module.named_parameters(/*recurse=*/true)) add(p.key(), p.value());
  for (const auto& b : module.named_buffers(/*recurse=*/true)) add(b.key(), b.value());

  nlohmann::json header;
  header["format"] = 1;
  header["config"] = config_snapshot;
  header["tensors"] = tensors;
  std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path, "cannot open for writing");
  out.write(kMagic, 8);
  uint64_t len = hs.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& t : flat)
    out.write(static_cast<const char*>(t.const_data_ptr()),
              static_cast<std::streamsize>(t.numel() * sizeof(float)));
  if (!out) fail(path, "write failed");
}

nlohmann::json read_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  return read_header(in, path).json.value("config", nlohmann::json::object());
}

void load_into(const std::string& path, torch::nn::Module& module) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  auto header = read_header(in, path);

  std::map<std::string, torch::Tensor> dst;
  for (const auto& p : module.named_parameters(true)) dst[p.key()] = p.value();
  for (const auto& b : module.named_buffers(true)) dst[b.key()] = b.value();

  size_t matched = 0;
  torch::NoGradGuard no_grad;
  for (const auto& entry : header.json.at("tensors")) {
    std::string name = entry.at("name");
    auto it = dst.find(name);
    if (it == dst.end()) fail(path, "tensor '" + name + "' does not exist in the target model");
    std::vector<int64_t> shape = entry.at("shape").get<std::vector<int64_t>>();
    if (shape != it->second.sizes().vec())
      fail(path, "tensor '" + name + "' shape mismatch (model/version mismatch)");
    int64_t numel = 1;
    for (auto s : shape) numel *= s;
    auto t = torch::empty(shape, torch::kFloat32);
    in.seekg(static_cast<std::streamoff>(header.data_offset + entry.at("offset").get<uint64_t>()));
    in.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(numel * sizeof(float)));
    if (!in) fail(path, "truncated data for tensor '" + name + "'");
    it->second.copy_(t.to(it->second.dtype()));
    ++matched;
  }
  if (matched != dst.size())
    fail(path, "checkpoint stores " + std::to_string(matched) + " tensors but the model has " +
                   std::to_string(dst.size()) + " (model/version mismatch)");
}

}  // namespace wrinkles::ckpt
