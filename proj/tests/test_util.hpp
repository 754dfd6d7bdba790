#pragma once

#include <torch/torch.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "mdvit/config.hpp"

namespace mdvit::test_util {

/// Small enough to run a forward/backward in milliseconds on one core.
inline ModelConfig tiny_config(int64_t num_domains = 2, int64_t size = 32) {
  ModelConfig c;
  c.image_size = {size, size};
  c.num_domains = num_domains;
  c.encoder_channels = {8, 16, 24, 32};
  c.layers_per_block = {1, 1, 1, 1, 1, 1, 1, 1};
  c.num_heads = 2;
  c.bridge_hidden = 16;
  c.peer_hidden = 8;
  c.da_reduction = 2;
  return c;
}

/// Central difference of a scalar function with respect to one entry.
inline double central_difference(const std::function<double()>& f, torch::Tensor& param,
                                 int64_t flat_index, double h) {
  torch::NoGradGuard no_grad;
  auto flat = param.view({-1});
  const double orig = flat[flat_index].item<double>();
  flat[flat_index] = orig + h;
  const double up = f();
  flat[flat_index] = orig - h;
  const double down = f();
  flat[flat_index] = orig;
  return (up - down) / (2.0 * h);
}

/// |a - n| / max(|a|, |n|, floor).
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("mdvit_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace mdvit::test_util
