#include "mdvit/data.hpp"

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "mdvit/errors.hpp"

namespace mdvit {

namespace fs = std::filesystem;

uint64_t derive_seed(uint64_t base, uint64_t a, uint64_t b, uint64_t c) {
  auto mix = [](uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  auto h = mix(base);
  h = mix(h ^ a);
  h = mix(h ^ b);
  return mix(h ^ c);
}

std::vector<int64_t> DomainDataset::test_indices(int k) const {
  std::vector<int64_t> out;
  for (size_t i = 0; i < folds.size(); ++i) {
    if (folds[i] == k) out.push_back(static_cast<int64_t>(i));
  }
  return out;
}

std::vector<int64_t> DomainDataset::train_indices(int k) const {
  std::vector<int64_t> out;
  for (size_t i = 0; i < folds.size(); ++i) {
    if (folds[i] != k) out.push_back(static_cast<int64_t>(i));
  }
  return out;
}

std::vector<int> assign_folds(size_t n, uint64_t seed) {
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> folds(n, 0);
  for (size_t pos = 0; pos < n; ++pos) folds[order[pos]] = static_cast<int>(pos % kNumFolds);
  return folds;
}

// --- directory IO -----------------------------------------------------------

namespace {

bool is_image_file(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::map<std::string, fs::path> list_by_stem(const fs::path& dir) {
  std::map<std::string, fs::path> out;
  if (!fs::is_directory(dir)) throw DataError("missing directory " + dir.string());
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) {
      out[entry.path().stem().string()] = entry.path();
    }
  }
  return out;
}

torch::Tensor read_image(const fs::path& path, const std::string& id, int64_t h, int64_t w) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw DataError("unreadable image for id '" + id + "': " + path.string());
  cv::Mat rgb, resized, as_float;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  cv::resize(rgb, resized, cv::Size(static_cast<int>(w), static_cast<int>(h)), 0, 0,
             cv::INTER_LINEAR);
  resized.convertTo(as_float, CV_32FC3, 1.0 / 255.0);
  auto hwc = torch::from_blob(as_float.data, {h, w, 3}, torch::kFloat32);
  return hwc.permute({2, 0, 1}).contiguous().clone();
}

torch::Tensor read_mask(const fs::path& path, const std::string& id, int64_t h, int64_t w) {
  cv::Mat gray = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (gray.empty()) throw DataError("unreadable mask for id '" + id + "': " + path.string());
  cv::Mat resized;
  cv::resize(gray, resized, cv::Size(static_cast<int>(w), static_cast<int>(h)), 0, 0,
             cv::INTER_NEAREST);
  auto t = torch::from_blob(resized.data, {1, h, w}, torch::kUInt8).clone();
  return (t > 127).to(torch::kFloat32);
}

std::vector<int> read_fold_file(const fs::path& path, const std::vector<Sample>& samples) {
  std::ifstream in(path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed split file " + path.string() + ": " + e.what());
  }
  std::vector<int> folds;
  folds.reserve(samples.size());
  for (const auto& s : samples) {
    if (!j.contains(s.id)) {
      throw DataError("split file " + path.string() + " has no fold for id '" + s.id + "'");
    }
    const int k = j.at(s.id).get<int>();
    if (k < 0 || k >= kNumFolds) {
      throw DataError("split file " + path.string() + ": fold of '" + s.id + "' out of range");
    }
    folds.push_back(k);
  }
  if (j.size() != samples.size()) {
    throw DataError("split file " + path.string() + " lists ids that are not in the dataset");
  }
  return folds;
}

void write_png(const fs::path& path, const torch::Tensor& chw, bool mask) {
  auto hwc = (chw.permute({1, 2, 0}) * 255.0).round().clamp(0, 255).to(torch::kUInt8).contiguous();
  const int h = static_cast<int>(hwc.size(0));
  const int w = static_cast<int>(hwc.size(1));
  cv::Mat out;
  if (mask) {
    out = cv::Mat(h, w, CV_8UC1, hwc.data_ptr<uint8_t>()).clone();
  } else {
    cv::Mat rgb(h, w, CV_8UC3, hwc.data_ptr<uint8_t>());
    cv::cvtColor(rgb, out, cv::COLOR_RGB2BGR);
  }
  if (!cv::imwrite(path.string(), out)) throw DataError("cannot write " + path.string());
}

}  // namespace

DomainDataset load_domain(const fs::path& dir, const DomainLabel& label,
                          const std::array<int64_t, 2>& image_size, uint64_t seed) {
  const auto [h, w] = image_size;
  const auto images = list_by_stem(dir / "images");
  const auto masks = list_by_stem(dir / "masks");
  for (const auto& [id, path] : masks) {
    if (!images.contains(id)) throw DataError("mask '" + id + "' has no matching image");
  }

  DomainDataset ds;
  ds.name = dir.filename().string();
  ds.domain = label.index;
  for (const auto& [id, path] : images) {
    const auto it = masks.find(id);
    if (it == masks.end()) throw DataError("image '" + id + "' has no matching mask");
    ds.samples.push_back(Sample{read_image(path, id, h, w), read_mask(it->second, id, h, w),
                                label.index, id});
  }
  const auto split_file = dir / "folds.json";
  ds.folds = fs::exists(split_file) ? read_fold_file(split_file, ds.samples)
                                    : assign_folds(ds.samples.size(), derive_seed(seed, 0xf01d,
                                                                                  label.index));
  return ds;
}

std::vector<DomainDataset> load_datasets(const fs::path& root,
                                         const std::array<int64_t, 2>& image_size,
                                         uint64_t seed) {
  if (!fs::is_directory(root)) throw DataError("data root " + root.string() + " not found");
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw DataError("data root " + root.string() + " has no domain folders");
  std::vector<DomainDataset> out;
  const auto m = static_cast<int64_t>(dirs.size());
  for (int64_t i = 0; i < m; ++i) {
    out.push_back(load_domain(dirs[static_cast<size_t>(i)], DomainLabel(i, m), image_size, seed));
  }
  return out;
}

void write_domain(const DomainDataset& dataset, const fs::path& dir) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  nlohmann::json folds = nlohmann::json::object();
  for (size_t i = 0; i < dataset.samples.size(); ++i) {
    const auto& s = dataset.samples[i];
    write_png(dir / "images" / (s.id + ".png"), s.image, false);
    write_png(dir / "masks" / (s.id + ".png"), s.mask, true);
    folds[s.id] = dataset.folds.at(i);
  }
  std::ofstream(dir / "folds.json") << folds.dump(2) << '\n';
}

// --- sampling ---------------------------------------------------------------

BalancedSampler::BalancedSampler(std::vector<std::vector<int64_t>> pools, int64_t batch_size,
                                 uint64_t seed)
    : pools_(std::move(pools)), batch_size_(batch_size), seed_(seed) {
  const auto m = static_cast<int64_t>(pools_.size());
  if (m < 1) throw ContractError("balanced sampler needs at least one domain");
  if (batch_size < 1 || batch_size % m != 0) {
    throw ContractError("batch size " + std::to_string(batch_size) +
                        " is not divisible by the number of domains " + std::to_string(m));
  }
  per_domain_ = batch_size / m;
  size_t largest = 0;
  for (const auto& p : pools_) {
    if (p.empty()) throw ContractError("balanced sampler got an empty domain pool");
    largest = std::max(largest, p.size());
  }
  batches_per_epoch_ = (static_cast<int64_t>(largest) + per_domain_ - 1) / per_domain_;
}

std::vector<std::vector<SampleRef>> BalancedSampler::epoch(int64_t epoch_index) const {
  const auto m = pools_.size();
  const auto needed = static_cast<size_t>(batches_per_epoch_ * per_domain_);
  std::vector<std::vector<int64_t>> streams(m);
  for (size_t d = 0; d < m; ++d) {
    std::mt19937_64 rng(derive_seed(seed_, static_cast<uint64_t>(epoch_index), d));
    auto& stream = streams[d];
    while (stream.size() < needed) {
      auto pass = pools_[d];
      std::shuffle(pass.begin(), pass.end(), rng);
      stream.insert(stream.end(), pass.begin(), pass.end());
    }
  }
  std::vector<std::vector<SampleRef>> batches(static_cast<size_t>(batches_per_epoch_));
  for (int64_t b = 0; b < batches_per_epoch_; ++b) {
    auto& batch = batches[static_cast<size_t>(b)];
    batch.reserve(static_cast<size_t>(batch_size_));
    for (size_t d = 0; d < m; ++d) {
      for (int64_t j = 0; j < per_domain_; ++j) {
        batch.push_back({static_cast<int64_t>(d), streams[d][static_cast<size_t>(b * per_domain_ + j)]});
      }
    }
  }
  return batches;
}

DomainBatch collate(const std::vector<Sample>& samples) {
  if (samples.empty()) throw ContractError("cannot collate an empty batch");
  std::vector<torch::Tensor> images, masks;
  std::vector<int64_t> domains;
  DomainBatch batch;
  for (const auto& s : samples) {
    images.push_back(s.image);
    masks.push_back(s.mask);
    domains.push_back(s.domain);
    batch.ids.push_back(s.id);
  }
  batch.images = torch::stack(images);
  batch.masks = torch::stack(masks);
  batch.domains = torch::tensor(domains, torch::kInt64);
  return batch;
}

DomainBatch collate(const std::vector<DomainDataset>& datasets,
                    const std::vector<SampleRef>& refs) {
  std::vector<Sample> samples;
  samples.reserve(refs.size());
  for (const auto& r : refs) {
    samples.push_back(datasets.at(static_cast<size_t>(r.domain)).samples.at(static_cast<size_t>(r.index)));
  }
  return collate(samples);
}

}  // namespace mdvit
