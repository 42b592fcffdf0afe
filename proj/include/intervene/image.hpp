#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace intervene {

using Bytes = std::vector<std::uint8_t>;

/// 8-bit RGB raster, row-major, 3 bytes per pixel.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  std::uint8_t& at(int x, int y, int channel) { return rgb[(std::size_t(y) * width + x) * 3 + channel]; }
  std::uint8_t at(int x, int y, int channel) const {
    return rgb[(std::size_t(y) * width + x) * 3 + channel];
  }
  bool operator==(const Image&) const = default;
};

struct ImageSize {
  int width = 256;
  int height = 256;
  bool operator==(const ImageSize&) const = default;
};

enum class BaselineVariant { kBlack, kNoise };

/// Standard deviation of baseline and perturbation noise, on the 0..255 scale.
inline constexpr double kDefaultNoiseSigma = 25.0;

struct SynthesizedImage {
  Bytes png;
  /// Seed actually used (drawn when none was supplied); empty for black images.
  std::optional<std::uint64_t> seed;
};

Bytes encode_png(const Image& image);

/// Decodes PNG or JPEG bytes to RGB. Throws ParseError when the bytes are not a
/// decodable raster.
Image decode_image(std::span<const std::uint8_t> bytes);

bool is_png(std::span<const std::uint8_t> bytes);
bool is_jpeg(std::span<const std::uint8_t> bytes);

/// Black image, or zero-mean Gaussian noise rounded and clamped to [0, 255].
/// Same (variant, size, seed, sigma) always yields identical bytes.
SynthesizedImage synthesize_baseline_image(BaselineVariant variant, ImageSize size,
                                           std::optional<std::uint64_t> seed = std::nullopt,
                                           double sigma = kDefaultNoiseSigma);

/// Adds per-channel zero-mean Gaussian noise to an existing image. sigma = 0 is a no-op
/// on the pixels.
Image add_gaussian_noise(const Image& image, double sigma, std::uint64_t seed);

/// Deterministic standard-normal stream. std::normal_distribution is
/// implementation-defined, so golden images would drift across standard libraries.
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed);
  double next();

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

}  // namespace intervene
