#include "intervene/image.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <numbers>

#include <jpeglib.h>
#include <png.h>

#include "intervene/errors.hpp"

namespace intervene {

namespace {

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void on_jpeg_error(j_common_ptr info) {
  auto* err = reinterpret_cast<JpegErrorManager*>(info->err);
  (*info->err->format_message)(info, err->message);
  std::longjmp(err->jump, 1);
}

Image decode_png(std::span<const std::uint8_t> bytes) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
    std::string msg = png.message;
    png_image_free(&png);
    throw ParseError("invalid PNG: " + msg);
  }
  png.format = PNG_FORMAT_RGB;
  Image out;
  out.width = static_cast<int>(png.width);
  out.height = static_cast<int>(png.height);
  out.rgb.resize(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, out.rgb.data(), 0, nullptr)) {
    std::string msg = png.message;
    png_image_free(&png);
    throw ParseError("invalid PNG: " + msg);
  }
  return out;
}

// Only the Image and the byte span are touched after setjmp; both live outside
// the function frame that longjmp unwinds.
bool decode_jpeg_into(std::span<const std::uint8_t> bytes, Image& out, std::string& error) {
  jpeg_decompress_struct cinfo{};
  JpegErrorManager jerr{};
  cinfo.err = jpeg_std_error(&jerr.base);
  jerr.base.error_exit = on_jpeg_error;
  if (setjmp(jerr.jump)) {
    error = jerr.message;
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out.width = static_cast<int>(cinfo.output_width);
  out.height = static_cast<int>(cinfo.output_height);
  out.rgb.assign(std::size_t(out.width) * out.height * 3, 0);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.rgb.data() + std::size_t(cinfo.output_scanline) * out.width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return true;
}

std::uint8_t clamp_round(double value) {
  return static_cast<std::uint8_t>(std::clamp(std::round(value), 0.0, 255.0));
}

}  // namespace

GaussianStream::GaussianStream(std::uint64_t seed) : engine_(seed) {}

double GaussianStream::next() {
  if (spare_) {
    double v = *spare_;
    spare_.reset();
    return v;
  }
  // Box-Muller on 53-bit uniforms in (0, 1].
  auto uniform = [this] { return (double((engine_() >> 11)) + 1.0) * 0x1.0p-53; };
  double u1 = uniform();
  double u2 = uniform();
  double radius = std::sqrt(-2.0 * std::log(u1));
  double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  return radius * std::cos(angle);
}

bool is_png(std::span<const std::uint8_t> bytes) {
  static constexpr std::uint8_t kMagic[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  return bytes.size() >= 8 && std::equal(kMagic, kMagic + 8, bytes.begin());
}

bool is_jpeg(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF;
}

Bytes encode_png(const Image& image) {
  if (image.width < 1 || image.height < 1 ||
      image.rgb.size() != std::size_t(image.width) * image.height * 3) {
    throw InvalidSize("cannot encode image with inconsistent dimensions");
  }
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&png, nullptr, &size, 0, image.rgb.data(), 0, nullptr)) {
    throw Error(std::string("PNG encoding failed: ") + png.message);
  }
  Bytes out(size);
  if (!png_image_write_to_memory(&png, out.data(), &size, 0, image.rgb.data(), 0, nullptr)) {
    throw Error(std::string("PNG encoding failed: ") + png.message);
  }
  out.resize(size);
  return out;
}

Image decode_image(std::span<const std::uint8_t> bytes) {
  if (is_png(bytes)) return decode_png(bytes);
  if (is_jpeg(bytes)) {
    Image out;
    std::string error;
    if (!decode_jpeg_into(bytes, out, error)) throw ParseError("invalid JPEG: " + error);
    return out;
  }
  throw ParseError("not a PNG or JPEG image");
}

SynthesizedImage synthesize_baseline_image(BaselineVariant variant, ImageSize size,
                                           std::optional<std::uint64_t> seed, double sigma) {
  if (size.width < 1 || size.height < 1) {
    throw InvalidSize("baseline image size must be positive, got " + std::to_string(size.width) +
                      "x" + std::to_string(size.height));
  }
  Image image;
  image.width = size.width;
  image.height = size.height;
  image.rgb.assign(std::size_t(size.width) * size.height * 3, 0);
  SynthesizedImage out;
  if (variant == BaselineVariant::kNoise) {
    if (!seed) seed = std::random_device{}();
    GaussianStream gauss(*seed);
    for (auto& channel : image.rgb) channel = clamp_round(sigma * gauss.next());
    out.seed = seed;
  }
  out.png = encode_png(image);
  return out;
}

Image add_gaussian_noise(const Image& image, double sigma, std::uint64_t seed) {
  if (sigma < 0.0) throw Error("noise sigma must be non-negative");
  Image out = image;
  if (sigma == 0.0) return out;
  GaussianStream gauss(seed);
  for (auto& channel : out.rgb) channel = clamp_round(channel + sigma * gauss.next());
  return out;
}

}  // namespace intervene
