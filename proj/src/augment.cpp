#include <opencv2/imgproc.hpp>

#include <random>

#include "mdvit/data.hpp"

namespace mdvit {

namespace {

cv::Mat to_mat(const torch::Tensor& chw) {
  auto hwc = chw.permute({1, 2, 0}).contiguous();
  const int h = static_cast<int>(hwc.size(0));
  const int w = static_cast<int>(hwc.size(1));
  const int c = static_cast<int>(hwc.size(2));
  return cv::Mat(h, w, CV_32FC(c), hwc.data_ptr<float>()).clone();
}

torch::Tensor from_mat(const cv::Mat& m) {
  const int c = m.channels();
  auto t = torch::from_blob(m.data, {m.rows, m.cols, c}, torch::kFloat32);
  return t.permute({2, 0, 1}).contiguous().clone();
}

}  // namespace

Sample augment(const Sample& sample, const AugmentConfig& cfg, uint64_t seed) {
  Sample out = sample;
  out.image = sample.image.to(torch::kFloat32).clone();
  out.mask = sample.mask.to(torch::kFloat32).clone();
  if (!cfg.enabled) return out;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto fires = [&] { return unit(rng) < cfg.probability; };
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  const auto h = out.image.size(1);
  const auto w = out.image.size(2);

  // Draw every decision up front so the sequence is fixed per seed.
  const bool do_scale = cfg.scale && fires();
  const double scale = do_scale ? uniform(cfg.scale_min, cfg.scale_max) : 1.0;
  const bool do_shift = cfg.shift && fires();
  const double tx = do_shift ? uniform(-cfg.shift_max, cfg.shift_max) * static_cast<double>(w) : 0.0;
  const double ty = do_shift ? uniform(-cfg.shift_max, cfg.shift_max) * static_cast<double>(h) : 0.0;
  const bool do_rotate = cfg.rotate && fires();
  const double angle = do_rotate ? uniform(-cfg.rotate_max_deg, cfg.rotate_max_deg) : 0.0;
  const bool do_hflip = cfg.hflip && fires();
  const bool do_vflip = cfg.vflip && fires();
  const bool do_noise = cfg.noise && fires();
  const double sigma = do_noise ? uniform(0.0, cfg.noise_sigma_max) : 0.0;
  const bool do_color = cfg.color && fires();
  const double brightness = do_color ? uniform(cfg.color_min, cfg.color_max) : 1.0;
  const double contrast = do_color ? uniform(cfg.color_min, cfg.color_max) : 1.0;

  if (do_scale || do_shift || do_rotate) {
    const cv::Point2f center(static_cast<float>(w) / 2.0f, static_cast<float>(h) / 2.0f);
    cv::Mat affine = cv::getRotationMatrix2D(center, angle, scale);
    affine.at<double>(0, 2) += tx;
    affine.at<double>(1, 2) += ty;
    const cv::Size size(static_cast<int>(w), static_cast<int>(h));
    cv::Mat img = to_mat(out.image), msk = to_mat(out.mask), img_out, msk_out;
    cv::warpAffine(img, img_out, affine, size, cv::INTER_LINEAR, cv::BORDER_REFLECT_101);
    cv::warpAffine(msk, msk_out, affine, size, cv::INTER_NEAREST, cv::BORDER_REFLECT_101);
    out.image = from_mat(img_out);
    out.mask = from_mat(msk_out);
  }
  if (do_hflip) {
    out.image = out.image.flip({2});
    out.mask = out.mask.flip({2});
  }
  if (do_vflip) {
    out.image = out.image.flip({1});
    out.mask = out.mask.flip({1});
  }
  if (do_noise) {
    std::normal_distribution<float> normal(0.0f, static_cast<float>(sigma));
    auto noise = torch::empty_like(out.image);
    auto* p = noise.data_ptr<float>();
    for (int64_t i = 0; i < noise.numel(); ++i) p[i] = normal(rng);
    out.image = out.image + noise;
  }
  if (do_color) {
    const auto mean = out.image.mean();
    out.image = (out.image - mean) * contrast + mean;
    out.image = out.image * brightness;
  }
  out.image = out.image.clamp(0.0, 1.0).contiguous();
  out.mask = (out.mask > 0.5).to(torch::kFloat32).contiguous();
  return out;
}

}  // namespace mdvit
