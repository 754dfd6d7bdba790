#include "mdvit/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

#include "mdvit/errors.hpp"

namespace mdvit {

namespace {

std::string trim(std::string_view s) {
  const auto* ws = " \t\r\n";
  const auto first = s.find_first_not_of(ws);
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(ws);
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in{std::string(s)};
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  return out;
}

int64_t to_int(const std::string& s, const std::string& key) {
  int64_t v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ParseError("config key '" + key + "': expected integer, got '" + s + "'");
  }
  return v;
}

double to_real(const std::string& s, const std::string& key) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw ParseError("config key '" + key + "': expected real, got '" + s + "'");
  }
  return v;
}

bool to_bool(const std::string& s, const std::string& key) {
  if (s == "true" || s == "1" || s == "on" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "off" || s == "no") return false;
  throw ParseError("config key '" + key + "': expected boolean, got '" + s + "'");
}

template <size_t N>
std::array<int64_t, N> to_int_array(const std::string& s, const std::string& key) {
  const auto items = split_list(s);
  if (items.size() != N) {
    throw ParseError("config key '" + key + "': expected " + std::to_string(N) +
                     " comma-separated integers, got '" + s + "'");
  }
  std::array<int64_t, N> out{};
  for (size_t i = 0; i < N; ++i) out[i] = to_int(items[i], key);
  return out;
}

template <size_t N>
std::string join(const std::array<int64_t, N>& a) {
  std::string out;
  for (size_t i = 0; i < N; ++i) {
    if (i) out += ',';
    out += std::to_string(a[i]);
  }
  return out;
}

// Shortest representation that parses back to the same double.
std::string real_str(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

struct Field {
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

// Ordered: serialization walks this list.
const std::vector<std::pair<std::string, Field>>& fields() {
  using E = ExperimentConfig;
  using S = const std::string&;
  static const std::vector<std::pair<std::string, Field>> table = {
      {"image_size",
       {[](E& c, S v, S k) { c.model.image_size = to_int_array<2>(v, k); },
        [](const E& c) { return join(c.model.image_size); }}},
      {"num_domains",
       {[](E& c, S v, S k) { c.model.num_domains = to_int(v, k); },
        [](const E& c) { return std::to_string(c.model.num_domains); }}},
      {"encoder_channels",
       {[](E& c, S v, S k) { c.model.encoder_channels = to_int_array<4>(v, k); },
        [](const E& c) { return join(c.model.encoder_channels); }}},
      {"layers_per_block",
       {[](E& c, S v, S k) { c.model.layers_per_block = to_int_array<8>(v, k); },
        [](const E& c) { return join(c.model.layers_per_block); }}},
      {"num_heads",
       {[](E& c, S v, S k) { c.model.num_heads = to_int(v, k); },
        [](const E& c) { return std::to_string(c.model.num_heads); }}},
      {"bridge_hidden",
       {[](E& c, S v, S k) { c.model.bridge_hidden = to_int(v, k); },
        [](const E& c) { return std::to_string(c.model.bridge_hidden); }}},
      {"peer_hidden",
       {[](E& c, S v, S k) { c.model.peer_hidden = to_int(v, k); },
        [](const E& c) { return std::to_string(c.model.peer_hidden); }}},
      {"da_reduction",
       {[](E& c, S v, S k) { c.model.da_reduction = to_int(v, k); },
        [](const E& c) { return std::to_string(c.model.da_reduction); }}},
      {"da_enabled",
       {[](E& c, S v, S k) { c.model.da_enabled = to_bool(v, k); },
        [](const E& c) { return bool_str(c.model.da_enabled); }}},
      {"mkd_enabled",
       {[](E& c, S v, S k) { c.model.mkd_enabled = to_bool(v, k); },
        [](const E& c) { return bool_str(c.model.mkd_enabled); }}},
      {"alpha",
       {[](E& c, S v, S k) { c.model.alpha = to_real(v, k); },
        [](const E& c) { return real_str(c.model.alpha); }}},
      {"beta",
       {[](E& c, S v, S k) { c.model.beta = to_real(v, k); },
        [](const E& c) { return real_str(c.model.beta); }}},
      {"paradigm",
       {[](E& c, S v, S) { c.train.paradigm = parse_paradigm(v); },
        [](const E& c) { return std::string(paradigm_name(c.train.paradigm)); }}},
      {"epochs",
       {[](E& c, S v, S k) { c.train.epochs = to_int(v, k); },
        [](const E& c) { return std::to_string(c.train.epochs); }}},
      {"batch_size",
       {[](E& c, S v, S k) { c.train.batch_size = to_int(v, k); },
        [](const E& c) { return std::to_string(c.train.batch_size); }}},
      {"base_lr",
       {[](E& c, S v, S k) { c.train.base_lr = to_real(v, k); },
        [](const E& c) { return real_str(c.train.base_lr); }}},
      {"lr_step",
       {[](E& c, S v, S k) { c.train.lr_step = to_int(v, k); },
        [](const E& c) { return std::to_string(c.train.lr_step); }}},
      {"lr_gamma",
       {[](E& c, S v, S k) { c.train.lr_gamma = to_real(v, k); },
        [](const E& c) { return real_str(c.train.lr_gamma); }}},
      {"weight_decay",
       {[](E& c, S v, S k) { c.train.weight_decay = to_real(v, k); },
        [](const E& c) { return real_str(c.train.weight_decay); }}},
      {"seed",
       {[](E& c, S v, S k) { c.train.seed = static_cast<uint64_t>(to_int(v, k)); },
        [](const E& c) { return std::to_string(c.train.seed); }}},
      {"val_fraction",
       {[](E& c, S v, S k) { c.train.val_fraction = to_real(v, k); },
        [](const E& c) { return real_str(c.train.val_fraction); }}},
      {"fold",
       {[](E& c, S v, S k) { c.train.fold = to_int(v, k); },
        [](const E& c) { return std::to_string(c.train.fold); }}},
      {"max_steps",
       {[](E& c, S v, S k) { c.train.max_steps = to_int(v, k); },
        [](const E& c) { return std::to_string(c.train.max_steps); }}},
      {"augment",
       {[](E& c, S v, S k) { c.train.augment.enabled = to_bool(v, k); },
        [](const E& c) { return bool_str(c.train.augment.enabled); }}},
      {"aug_probability",
       {[](E& c, S v, S k) { c.train.augment.probability = to_real(v, k); },
        [](const E& c) { return real_str(c.train.augment.probability); }}},
      {"aug_scale",
       {[](E& c, S v, S k) { c.train.augment.scale = to_bool(v, k); },
        [](const E& c) { return bool_str(c.train.augment.scale); }}},
      {"aug_scale_min",
       {[](E& c, S v, S k) { c.train.augment.scale_min = to_real(v, k); },
        [](const E& c) { return real_str(c.train.augment.scale_min); }}},
      {"aug_scale_max",
       {[](E& c, S v, S k) { c.train.augment.scale_max = to_real(v, k); },
        [](const E& c) { return real_str(c.train.augment.scale_max); }}},
      {"aug_shift",
       {[](E& c, S v, S k) { c.train.augment.shift = to_bool(v, k); },
        [](const E& c) { return bool_str(c.train.augment.shift); }}},
      {"aug_shift_max",
       {[](E& c, S v, S k) { c.train.augment.shift_max = to_real(v, k); },
        [](const E& c) { return real_str(c.train.augment.shift_max); }}},
      {"aug_rotate",
       {[](E& c, S v, S k) { c.train.augment.rotate = to_bool(v, k); },
        [](const E& c) { return bool_str(c.train.augment.rotate); }}},
      {"aug_rotate_max_deg",
       {[](E& c, S v, S k) { c.train.augment.rotate_max_deg = to_real(v, k); },
        [](const E& c) { return real_str(c.train.augment.rotate_max_deg); }}},
      {"aug_hflip",
       {[](E& c, S v, S k) { c.train.augment.hflip = to_bool(v, k); },
        [](const E& c) { return bool_str(c.train.augment.hflip); }}},
      {"aug_vflip",
       {[](E& c, S v, S k) { c.train.augment.vflip = to_bool(v, k); },
        [](const E& c) { return bool_str(c.train.augment.vflip); }}},
      {"aug_noise",
       {[](E& c, S v, S k) { c.train.augment.noise = to_bool(v, k); },
        [](const E& c) { return bool_str(c.train.augment.noise); }}},
      {"aug_noise_sigma_max",
       {[](E& c, S v, S k) { c.train.augment.noise_sigma_max = to_real(v, k); },
        [](const E& c) { return real_str(c.train.augment.noise_sigma_max); }}},
      {"aug_color",
       {[](E& c, S v, S k) { c.train.augment.color = to_bool(v, k); },
        [](const E& c) { return bool_str(c.train.augment.color); }}},
      {"aug_color_min",
       {[](E& c, S v, S k) { c.train.augment.color_min = to_real(v, k); },
        [](const E& c) { return real_str(c.train.augment.color_min); }}},
      {"aug_color_max",
       {[](E& c, S v, S k) { c.train.augment.color_max = to_real(v, k); },
        [](const E& c) { return real_str(c.train.augment.color_max); }}},
  };
  return table;
}

}  // namespace

void ModelConfig::validate() const {
  const auto [h, w] = image_size;
  if (h <= 0 || w <= 0 || h % 32 != 0 || w % 32 != 0) {
    throw ValidationError("image_size " + std::to_string(h) + "x" + std::to_string(w) +
                          " must be positive and divisible by 32");
  }
  if (num_domains < 1) throw ValidationError("num_domains must be >= 1");
  if (num_heads < 1) throw ValidationError("num_heads must be >= 1");
  for (int i = 0; i < 4; ++i) {
    const auto c = encoder_channels[i];
    if (c <= 0 || c % num_heads != 0) {
      throw ValidationError("encoder_channels[" + std::to_string(i) + "]=" + std::to_string(c) +
                            " must be positive and divisible by num_heads=" +
                            std::to_string(num_heads));
    }
  }
  for (int i = 0; i < 8; ++i) {
    if (layers_per_block[i] < 1) {
      throw ValidationError("layers_per_block[" + std::to_string(i) + "] must be >= 1");
    }
  }
  if (bridge_hidden < 1) throw ValidationError("bridge_hidden must be >= 1");
  if (peer_hidden < 1) throw ValidationError("peer_hidden must be >= 1");
  if (da_reduction < 1) throw ValidationError("da_reduction must be >= 1");
  if (da_enabled) {
    for (int i = 0; i < 4; ++i) {
      if (adapter_dim(i) < 1) {
        throw ValidationError("floor(K/r) is zero at level " + std::to_string(i) +
                              ": per-head width " + std::to_string(head_dim(i)) +
                              " is smaller than da_reduction");
      }
    }
  }
  if (alpha < 0.0) throw ValidationError("alpha must be >= 0");
  if (beta < 0.0) throw ValidationError("beta must be >= 0");
}

int64_t ModelConfig::head_dim(int level) const {
  return encoder_channels.at(static_cast<size_t>(level)) / num_heads;
}

int64_t ModelConfig::adapter_dim(int level) const { return head_dim(level) / da_reduction; }

std::string_view paradigm_name(Paradigm p) {
  switch (p) {
    case Paradigm::kSeparate: return "st";
    case Paradigm::kJoint: return "jt";
    case Paradigm::kMultiDomainAdaptive: return "mat";
  }
  return "?";
}

Paradigm parse_paradigm(std::string_view text) {
  if (text == "st" || text == "ST") return Paradigm::kSeparate;
  if (text == "jt" || text == "JT") return Paradigm::kJoint;
  if (text == "mat" || text == "MAT") return Paradigm::kMultiDomainAdaptive;
  throw ParseError("unknown paradigm '" + std::string(text) + "' (expected st, jt or mat)");
}

void TrainConfig::validate(const ModelConfig& model) const {
  if (epochs < 0) throw ValidationError("epochs must be >= 0");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (paradigm != Paradigm::kSeparate && batch_size % model.num_domains != 0) {
    throw ValidationError("batch_size " + std::to_string(batch_size) +
                          " must be divisible by num_domains " +
                          std::to_string(model.num_domains) + " for balanced sampling");
  }
  if (!(base_lr > 0.0)) throw ValidationError("base_lr must be > 0");
  if (lr_step < 1) throw ValidationError("lr_step must be >= 1");
  if (!(lr_gamma > 0.0 && lr_gamma <= 1.0)) throw ValidationError("lr_gamma must lie in (0, 1]");
  if (weight_decay < 0.0) throw ValidationError("weight_decay must be >= 0");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw ValidationError("val_fraction must lie in [0, 1)");
  }
  if (fold < 0 || fold >= 5) throw ValidationError("fold must lie in [0, 5)");
  if (max_steps < 0) throw ValidationError("max_steps must be >= 0");
  if (augment.probability < 0.0 || augment.probability > 1.0) {
    throw ValidationError("aug_probability must lie in [0, 1]");
  }
  if (!(augment.scale_min > 0.0 && augment.scale_min <= augment.scale_max)) {
    throw ValidationError("aug_scale_min must be > 0 and <= aug_scale_max");
  }
  if (augment.shift_max < 0.0 || augment.rotate_max_deg < 0.0 || augment.noise_sigma_max < 0.0) {
    throw ValidationError("augmentation magnitudes must be >= 0");
  }
  if (!(augment.color_min > 0.0 && augment.color_min <= augment.color_max)) {
    throw ValidationError("aug_color_min must be > 0 and <= aug_color_max");
  }
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig config;
  std::map<std::string, const Field*> lookup;
  for (const auto& [key, field] : fields()) lookup[key] = &field;

  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    auto line = raw.substr(0, raw.find('#'));
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("config line " + std::to_string(line_no) + ": expected key=value, got '" +
                       line + "'");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    const auto it = lookup.find(key);
    if (it == lookup.end()) {
      throw ParseError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    it->second->set(config, value, key);
  }
  config.model.validate();
  config.train.validate(config.model);
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

ExperimentConfig resolve_config(const std::string& path_or_default) {
  std::string path = path_or_default;
  if (path.empty()) {
    if (const char* env = std::getenv("MDVIT_CONFIG"); env != nullptr && *env != '\0') path = env;
  }
  if (path.empty() || path == "default") {
    ExperimentConfig config;
    config.model.validate();
    config.train.validate(config.model);
    return config;
  }
  return load_config(path);
}

std::string serialize_config(const ExperimentConfig& config) {
  std::string out;
  for (const auto& [key, field] : fields()) {
    out += key;
    out += '=';
    out += field.get(config);
    out += '\n';
  }
  return out;
}

int64_t token_count(int block, int64_t height, int64_t width) {
  if (block < 1 || block > 4) {
    throw ShapeError("block index " + std::to_string(block) + " outside 1..4");
  }
  const int64_t stride = int64_t{1} << (block + 1);
  if (height <= 0 || width <= 0 || height % stride != 0 || width % stride != 0) {
    throw ShapeError("image " + std::to_string(height) + "x" + std::to_string(width) +
                     " is not divisible by " + std::to_string(stride) + " at block " +
                     std::to_string(block));
  }
  return (height / stride) * (width / stride);
}

}  // namespace mdvit
