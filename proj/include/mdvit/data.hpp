#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mdvit/config.hpp"
#include "mdvit/domain_adapter.hpp"

namespace mdvit {

inline constexpr int kNumFolds = 5;

/// One image/mask pair. `image` is (3, H, W) float32 RGB in [0, 1]
/// (channel-first), `mask` is (1, H, W) float32 with values in {0, 1}.
struct Sample {
  torch::Tensor image;
  torch::Tensor mask;
  int64_t domain = 0;
  std::string id;
};

/// All samples of one domain plus their cross-validation fold assignment.
struct DomainDataset {
  std::string name;
  int64_t domain = 0;
  std::vector<Sample> samples;
  std::vector<int> folds;  // folds[i] in [0, kNumFolds) for samples[i]

  size_t size() const { return samples.size(); }
  /// Indices of the samples held out as fold `k`'s test split.
  std::vector<int64_t> test_indices(int k) const;
  /// Complement of test_indices(k).
  std::vector<int64_t> train_indices(int k) const;
};

/// Seeded shuffle of 0..n-1, then position modulo 5. Fold sizes differ by at
/// most one.
std::vector<int> assign_folds(size_t n, uint64_t seed);

/// Reads `dir/images/*.{png,jpg,jpeg}` and `dir/masks/*.png`, paired by file
/// stem. Images are resized bilinearly and masks by nearest neighbour to
/// `image_size` (H, W); mask pixels above 127 become foreground. Folds come
/// from `dir/folds.json` (id -> fold) when present, else from assign_folds.
/// Throws DataError naming the offending id on a missing pair or an
/// unreadable file.
DomainDataset load_domain(const std::filesystem::path& dir, const DomainLabel& label,
                          const std::array<int64_t, 2>& image_size, uint64_t seed);

/// One domain per subdirectory of `root`, in lexicographic order.
std::vector<DomainDataset> load_datasets(const std::filesystem::path& root,
                                         const std::array<int64_t, 2>& image_size,
                                         uint64_t seed);

/// Writes the dataset in the layout load_domain reads, including folds.json.
void write_domain(const DomainDataset& dataset, const std::filesystem::path& dir);

struct SampleRef {
  int64_t domain = 0;  // position in the dataset list
  int64_t index = 0;   // position in that dataset's samples
  bool operator==(const SampleRef&) const = default;
};

/// Epoch-wise balanced batching over M sample pools.
///
/// Every batch holds batch_size / M samples from each pool. An epoch has
/// ceil(largest pool / per-domain share) batches, so it passes over the
/// largest pool once; each pool is drawn from a stream of reshuffled passes,
/// which repeats samples of the smaller pools. Batch contents depend only on
/// (seed, epoch).
class BalancedSampler {
 public:
  /// `pools[m]` lists the usable sample indices of domain m.
  BalancedSampler(std::vector<std::vector<int64_t>> pools, int64_t batch_size, uint64_t seed);

  std::vector<std::vector<SampleRef>> epoch(int64_t epoch_index) const;
  int64_t batches_per_epoch() const { return batches_per_epoch_; }
  int64_t per_domain() const { return per_domain_; }

 private:
  std::vector<std::vector<int64_t>> pools_;
  int64_t batch_size_;
  int64_t per_domain_;
  int64_t batches_per_epoch_;
  uint64_t seed_;
};

/// A stacked mini-batch: images (B, 3, H, W), masks (B, 1, H, W) and
/// domain indices (B) as int64.
struct DomainBatch {
  torch::Tensor images;
  torch::Tensor masks;
  torch::Tensor domains;
  std::vector<std::string> ids;

  int64_t size() const { return images.defined() ? images.size(0) : 0; }
};

DomainBatch collate(const std::vector<Sample>& samples);
DomainBatch collate(const std::vector<DomainDataset>& datasets,
                    const std::vector<SampleRef>& refs);

/// Random scaling, shifting, rotation, flips, Gaussian noise and
/// brightness/contrast, each drawn with `config.probability`. Geometric
/// transforms are applied identically to the mask (nearest neighbour), so
/// it stays binary; the image is clamped to [0, 1]. Deterministic in `seed`.
Sample augment(const Sample& sample, const AugmentConfig& config, uint64_t seed);

/// Ellipse parameters in pixel units.
struct BlobGeometry {
  double cx = 0.0;
  double cy = 0.0;
  double semi_major = 1.0;
  double semi_minor = 1.0;
  double angle = 0.0;  // radians
};

enum class MaskKind { kInterior, kRing };

/// Interior: pixels strictly inside the ellipse. Ring: pixels outside it but
/// inside the ellipse grown by `ring_width` pixels on both axes. The two are
/// disjoint for the same geometry. Returns (1, size, size) float32.
torch::Tensor blob_mask(const BlobGeometry& blob, int64_t size, MaskKind kind,
                        double ring_width);

/// Ring width used by make_synthetic for an image side of `size` pixels.
double synthetic_ring_width(int64_t size);

/// Domain m's label rule under conflict mode: odd domains mark the ring.
MaskKind synthetic_mask_kind(int64_t domain, bool conflict);

/// Desk-scale multi-domain benchmark: M domains of `n_per_domain` images of
/// `size` x `size` pixels, each a textured background with one elliptical
/// blob. Domains differ in palette, noise level and blob eccentricity. With
/// `conflict`, odd domains label the ring around the blob instead of its
/// interior, so the same kind of image maps to contradictory masks across
/// domains. Pure function of the arguments.
std::vector<DomainDataset> make_synthetic(int64_t num_domains, int64_t n_per_domain,
                                          int64_t size, bool conflict, uint64_t seed);

/// splitmix64-style combination used to derive independent sub-seeds.
uint64_t derive_seed(uint64_t base, uint64_t a, uint64_t b = 0, uint64_t c = 0);

}  // namespace mdvit
