#pragma once

#include <cstdint>
#include <vector>

#include "pins/core.hpp"

namespace pins {

/// splitmix64 generator; identical stream on every platform for a given seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> intensities;  // row-major, index = y * width + x

  double at(std::size_t x, std::size_t y) const { return intensities[y * width + x]; }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

inline constexpr double kDefaultSqueeze = 1e-6;

// n x n uniform-cost instance with uniform marginals; costs drawn row-major.
Instance gen_synthetic(std::size_t n, std::uint64_t seed);

// Squeezes intensities below eps * max up to eps * max, then normalizes.
std::vector<double> image_to_marginal(const GrayImage& img, double eps = kDefaultSqueeze);

// Euclidean distances between integer pixel positions, index = y * width + x.
CostMatrix pixel_cost(std::size_t width, std::size_t height);

// Tiles N*N equally sized images row-major into one (N w) x (N h) image.
GrayImage grid_augment(const std::vector<GrayImage>& images, std::size_t n);

// Instance between two equally sized images with pixel-distance costs.
Instance image_instance(const GrayImage& source, const GrayImage& target,
                        double eps = kDefaultSqueeze);

}  // namespace pins
