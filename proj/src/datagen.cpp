#include "pins/datagen.hpp"

#include <algorithm>
#include <string>

namespace pins {

Instance gen_synthetic(std::size_t n, std::uint64_t seed) {
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "gen_synthetic: n must be >= 1");
  Rng rng(seed);
  CostMatrix cost(n, n);
  for (double& c : cost.values()) c = rng.uniform();
  const double w = 1.0 / static_cast<double>(n);
  return Instance{std::move(cost), Marginals{std::vector<double>(n, w), std::vector<double>(n, w)}};
}

std::vector<double> image_to_marginal(const GrayImage& img, double eps) {
  if (!(eps > 0.0)) throw Error(ErrorCode::InvalidArgument, "squeeze eps must be > 0");
  if (img.intensities.empty() || img.intensities.size() != img.width * img.height)
    throw Error(ErrorCode::DimMismatch, "image buffer does not match its dims");
  const double peak = *std::max_element(img.intensities.begin(), img.intensities.end());
  if (!(peak > 0.0)) throw Error(ErrorCode::AllZeroImage, "image has no positive pixel");

  const double floor = eps * peak;
  std::vector<double> out(img.intensities);
  for (double& v : out) v = std::max(v, floor);
  const double total = sum(out);
  for (double& v : out) v /= total;
  return out;
}

CostMatrix pixel_cost(std::size_t width, std::size_t height) {
  const std::size_t count = width * height;
  if (count < 1) throw Error(ErrorCode::InvalidArgument, "pixel_cost: empty grid");
  CostMatrix cost(count, count);
  for (std::size_t p = 0; p < count; ++p) {
    const double px = static_cast<double>(p % width);
    const double py = static_cast<double>(p / width);
    for (std::size_t q = 0; q < count; ++q) {
      const double dx = px - static_cast<double>(q % width);
      const double dy = py - static_cast<double>(q / width);
      cost(p, q) = std::sqrt(dx * dx + dy * dy);
    }
  }
  return cost;
}

GrayImage grid_augment(const std::vector<GrayImage>& images, std::size_t n) {
  if (n < 1 || images.size() != n * n)
    throw Error(ErrorCode::CountMismatch, "grid_augment needs exactly N^2 images, got " +
                                              std::to_string(images.size()));
  const std::size_t w = images.front().width;
  const std::size_t h = images.front().height;
  for (const auto& img : images) {
    if (img.width != w || img.height != h || img.intensities.size() != w * h)
      throw Error(ErrorCode::DimMismatch, "grid_augment inputs differ in dims");
  }

  GrayImage out;
  out.width = n * w;
  out.height = n * h;
  out.intensities.assign(out.width * out.height, 0.0);
  for (std::size_t k = 0; k < images.size(); ++k) {
    const std::size_t x0 = (k % n) * w;
    const std::size_t y0 = (k / n) * h;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        out.intensities[(y0 + y) * out.width + x0 + x] = images[k].at(x, y);
  }
  return out;
}

Instance image_instance(const GrayImage& source, const GrayImage& target, double eps) {
  if (source.width != target.width || source.height != target.height)
    throw Error(ErrorCode::DimMismatch, "source and target images differ in dims");
  auto a = image_to_marginal(source, eps);
  auto b = image_to_marginal(target, eps);
  return Instance{pixel_cost(source.width, source.height),
                  Marginals{std::move(a), std::move(b)}};
}

}  // namespace pins
