#include "mdvit/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "mdvit/errors.hpp"

namespace mdvit {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes little-endian");

constexpr char kMagic[8] = {'M', 'D', 'V', 'I', 'T', 'C', 'K', 'P'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw ParseError("truncated checkpoint " + path.string());
  }
  return value;
}

std::string get_string(std::istream& in, uint64_t len, const std::filesystem::path& path) {
  if (len > (uint64_t{1} << 32)) throw ParseError("implausible string length in " + path.string());
  std::string s(len, '\0');
  if (len > 0 && !in.read(s.data(), static_cast<std::streamsize>(len))) {
    throw ParseError("truncated checkpoint " + path.string());
  }
  return s;
}

std::vector<std::pair<std::string, torch::Tensor>> named_tensors(const Model& model,
                                                                 bool with_peers) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& item : model.universal->named_parameters()) {
    out.emplace_back("universal." + item.key(), item.value());
  }
  if (with_peers) {
    for (size_t m = 0; m < model.peers.size(); ++m) {
      for (const auto& item : model.peers[m]->named_parameters()) {
        out.emplace_back("peer" + std::to_string(m) + "." + item.key(), item.value());
      }
    }
  }
  return out;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const CheckpointInfo& info) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());

  auto config = info.config;
  config.model = model.config;
  const auto config_text = serialize_config(config);
  const bool with_peers = info.kind == CheckpointKind::kTraining;
  const auto tensors = named_tensors(model, with_peers);

  out.write(kMagic, sizeof(kMagic));
  put<uint32_t>(out, kVersion);
  put<uint32_t>(out, static_cast<uint32_t>(info.kind));
  put<int64_t>(out, info.trained_domain.value_or(-1));
  put<uint64_t>(out, config_text.size());
  out.write(config_text.data(), static_cast<std::streamsize>(config_text.size()));
  put<uint64_t>(out, tensors.size());
  for (const auto& [name, tensor] : tensors) {
    put<uint32_t>(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<uint32_t>(out, static_cast<uint32_t>(tensor.dim()));
    for (const auto d : tensor.sizes()) put<int64_t>(out, d);
    const auto values = tensor.detach().to(torch::kCPU, torch::kFloat32).contiguous();
    out.write(reinterpret_cast<const char*>(values.data_ptr<float>()),
              static_cast<std::streamsize>(values.numel() * sizeof(float)));
  }
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ParseError(path.string() + " is not a checkpoint (bad magic)");
  }
  if (const auto version = get<uint32_t>(in, path); version != kVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(version));
  }
  CheckpointInfo info;
  const auto kind = get<uint32_t>(in, path);
  if (kind > 1) throw ParseError("unknown checkpoint kind " + std::to_string(kind));
  info.kind = static_cast<CheckpointKind>(kind);
  if (const auto domain = get<int64_t>(in, path); domain >= 0) info.trained_domain = domain;
  info.config = parse_config(get_string(in, get<uint64_t>(in, path), path));

  LoadedCheckpoint loaded{info, Model(info.config.model, 0)};
  auto& model = loaded.model;
  if (info.kind == CheckpointKind::kInference) model.peers.clear();

  std::map<std::string, torch::Tensor> slots;
  for (auto& [name, tensor] : named_tensors(model, true)) slots.emplace(name, tensor);

  const auto count = get<uint64_t>(in, path);
  if (count != slots.size()) {
    throw ShapeError("checkpoint holds " + std::to_string(count) + " tensors, model expects " +
                     std::to_string(slots.size()));
  }
  torch::NoGradGuard no_grad;
  for (uint64_t t = 0; t < count; ++t) {
    const auto name = get_string(in, get<uint32_t>(in, path), path);
    const auto rank = get<uint32_t>(in, path);
    std::vector<int64_t> dims(rank);
    for (auto& d : dims) d = get<int64_t>(in, path);
    const auto it = slots.find(name);
    if (it == slots.end()) throw ShapeError("checkpoint tensor '" + name + "' unknown to model");
    if (!it->second.sizes().equals(dims)) {
      throw ShapeError("checkpoint tensor '" + name + "' has a mismatching shape");
    }
    auto values = torch::empty(dims, torch::kFloat32);
    if (!in.read(reinterpret_cast<char*>(values.data_ptr<float>()),
                 static_cast<std::streamsize>(values.numel() * sizeof(float)))) {
      throw ParseError("truncated checkpoint " + path.string());
    }
    it->second.copy_(values);
  }
  return loaded;
}

}  // namespace mdvit
