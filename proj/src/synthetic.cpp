#include <cmath>
#include <fmt/format.h>
#include <numbers>
#include <random>

#include "mdvit/data.hpp"
#include "mdvit/errors.hpp"

namespace mdvit {

namespace {

struct DomainStyle {
  std::array<double, 3> background;
  std::array<double, 3> foreground;
  double noise_sigma;
  double axis_ratio;  // mean semi-minor / semi-major
};

// Palette centres sit on a small circle around a skin-like base colour; the
// per-image jitter below is larger than the spacing between domains.
DomainStyle style_for(int64_t domain, int64_t num_domains) {
  constexpr std::array<double, 3> base_bg{0.78, 0.60, 0.52};
  constexpr std::array<double, 3> base_fg{0.45, 0.28, 0.22};
  const double phase =
      2.0 * std::numbers::pi * static_cast<double>(domain) / static_cast<double>(num_domains) + 0.3;
  const std::array<double, 3> shift{0.05 * std::cos(phase), 0.05 * std::sin(phase),
                                    -0.05 * std::cos(phase)};
  DomainStyle s;
  for (int c = 0; c < 3; ++c) {
    s.background[c] = base_bg[c] + shift[c];
    s.foreground[c] = base_fg[c] + shift[c];
  }
  s.noise_sigma = 0.02 + 0.015 * static_cast<double>(domain % 3);
  s.axis_ratio = num_domains > 1 ? 0.55 + 0.35 * static_cast<double>(domain) /
                                              static_cast<double>(num_domains - 1)
                                 : 0.75;
  return s;
}

double normalized_radius(const BlobGeometry& g, double x, double y, double grow) {
  const double dx = x - g.cx;
  const double dy = y - g.cy;
  const double c = std::cos(g.angle);
  const double s = std::sin(g.angle);
  const double u = dx * c + dy * s;
  const double v = -dx * s + dy * c;
  const double a = g.semi_major + grow;
  const double b = g.semi_minor + grow;
  return std::sqrt((u / a) * (u / a) + (v / b) * (v / b));
}

}  // namespace

double synthetic_ring_width(int64_t size) {
  return std::max(2.0, 0.09 * static_cast<double>(size));
}

MaskKind synthetic_mask_kind(int64_t domain, bool conflict) {
  return conflict && domain % 2 == 1 ? MaskKind::kRing : MaskKind::kInterior;
}

torch::Tensor blob_mask(const BlobGeometry& blob, int64_t size, MaskKind kind,
                        double ring_width) {
  auto mask = torch::zeros({1, size, size}, torch::kFloat32);
  auto acc = mask.accessor<float, 3>();
  for (int64_t y = 0; y < size; ++y) {
    for (int64_t x = 0; x < size; ++x) {
      const double px = static_cast<double>(x) + 0.5;
      const double py = static_cast<double>(y) + 0.5;
      const double rho = normalized_radius(blob, px, py, 0.0);
      bool fg = false;
      if (kind == MaskKind::kInterior) {
        fg = rho < 1.0;
      } else {
        fg = rho >= 1.0 && normalized_radius(blob, px, py, ring_width) < 1.0;
      }
      acc[0][y][x] = fg ? 1.0f : 0.0f;
    }
  }
  return mask;
}

std::vector<DomainDataset> make_synthetic(int64_t num_domains, int64_t n_per_domain,
                                          int64_t size, bool conflict, uint64_t seed) {
  if (num_domains < 1) throw ContractError("make_synthetic: need at least one domain");
  if (n_per_domain < 1) throw ContractError("make_synthetic: need at least one sample");
  if (size < 16) throw ContractError("make_synthetic: size must be >= 16");

  const double side = static_cast<double>(size);
  const double ring = synthetic_ring_width(size);
  std::vector<DomainDataset> out;
  for (int64_t d = 0; d < num_domains; ++d) {
    const auto style = style_for(d, num_domains);
    DomainDataset ds;
    ds.name = "synth_d" + std::to_string(d);
    ds.domain = d;
    for (int64_t i = 0; i < n_per_domain; ++i) {
      std::mt19937_64 rng(derive_seed(seed, 0x5e7, static_cast<uint64_t>(d), static_cast<uint64_t>(i)));
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

      BlobGeometry g;
      g.semi_major = uniform(0.14, 0.22) * side;
      g.semi_minor = g.semi_major * std::clamp(style.axis_ratio + uniform(-0.07, 0.07), 0.4, 1.0);
      g.angle = uniform(0.0, std::numbers::pi);
      const double margin = g.semi_major + ring + 1.0;
      g.cx = uniform(margin, side - margin);
      g.cy = uniform(margin, side - margin);

      std::array<double, 3> bg{}, fg{};
      for (int c = 0; c < 3; ++c) {
        bg[c] = style.background[c] + uniform(-0.06, 0.06);
        fg[c] = style.foreground[c] + uniform(-0.06, 0.06);
      }
      const double fx = uniform(1.0, 3.0) / side;
      const double fy = uniform(1.0, 3.0) / side;
      const double phase = uniform(0.0, 2.0 * std::numbers::pi);
      std::normal_distribution<double> noise(0.0, style.noise_sigma);

      auto image = torch::empty({3, size, size}, torch::kFloat32);
      auto acc = image.accessor<float, 3>();
      for (int64_t y = 0; y < size; ++y) {
        for (int64_t x = 0; x < size; ++x) {
          const double px = static_cast<double>(x) + 0.5;
          const double py = static_cast<double>(y) + 0.5;
          const double rho = normalized_radius(g, px, py, 0.0);
          const double alpha = std::clamp((1.0 - rho) / 0.12 + 0.5, 0.0, 1.0);
          const double texture =
              0.04 * std::sin(2.0 * std::numbers::pi * (fx * px + fy * py) + phase);
          const double shade = 1.0 - 0.15 * std::max(0.0, 1.0 - rho);
          for (int c = 0; c < 3; ++c) {
            const double back = bg[c] + texture;
            const double value = (1.0 - alpha) * back + alpha * fg[c] * shade + noise(rng);
            acc[c][y][x] = static_cast<float>(std::clamp(value, 0.0, 1.0));
          }
        }
      }
      const auto id = fmt::format("d{}_{:04d}", d, i);
      ds.samples.push_back(
          Sample{image, blob_mask(g, size, synthetic_mask_kind(d, conflict), ring), d, id});
    }
    ds.folds = assign_folds(ds.samples.size(), derive_seed(seed, 0xf01d, static_cast<uint64_t>(d)));
    out.push_back(std::move(ds));
  }
  return out;
}

}  // namespace mdvit
