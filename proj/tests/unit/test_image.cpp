#include <doctest.h>

#include <numeric>

#include "intervene/base64.hpp"
#include "intervene/errors.hpp"
#include "intervene/image.hpp"

using namespace intervene;

namespace {

// 8x8 JPEG filled with RGB (200, 40, 90).
const char* kSolidJpeg =
    "/9j/4AAQSkZJRgABAQAAAQABAAD/2wBDAAIBAQEBAQIBAQECAgICAgQDAgICAgUEBAMEBgUGBgYFBgYGBwkIBgcJBwYGCAsICQoKCgoKBggLDAsKDAkKCgr/2wBDAQICAgICAgUDAwUKBwYHCgoKCgoKCgoKCgoKCgoKCgoKCgoKCgoKCgoKCgoKCgoKCgoKCgoKCgoKCgoKCgoKCgr/wAARCAAIAAgDASIAAhEBAxEB/8QAHwAAAQUBAQEBAQEAAAAAAAAAAAECAwQFBgcICQoL/8QAtRAAAgEDAwIEAwUFBAQAAAF9AQIDAAQRBRIhMUEGE1FhByJxFDKBkaEII0KxwRVS0fAkM2JyggkKFhcYGRolJicoKSo0NTY3ODk6Q0RFRkdISUpTVFVWV1hZWmNkZWZnaGlqc3R1dnd4eXqDhIWGh4iJipKTlJWWl5iZmqKjpKWmp6ipqrKztLW2t7i5usLDxMXGx8jJytLT1NXW19jZ2uHi4+Tl5ufo6erx8vP09fb3+Pn6/8QAHwEAAwEBAQEBAQEBAQAAAAAAAAECAwQFBgcICQoL/8QAtREAAgECBAQDBAcFBAQAAQJ3AAECAxEEBSExBhJBUQdhcRMiMoEIFEKRobHBCSMzUvAVYnLRChYkNOEl8RcYGRomJygpKjU2Nzg5OkNERUZHSElKU1RVVldYWVpjZGVmZ2hpanN0dXZ3eHl6goOEhYaHiImKkpOUlZaXmJmaoqOkpaanqKmqsrO0tba3uLm6wsPExcbHyMnK0tPU1dbX2Nna4uPk5ebn6Onq8vP09fb3+Pn6/9oADAMBAAIRAxEAPwD53ooornP9MD//2Q==";

double mean_pixel(const Image& img) {
  return std::accumulate(img.rgb.begin(), img.rgb.end(), 0.0) / double(img.rgb.size());
}

}  // namespace

TEST_CASE("black baseline") {
  auto s = synthesize_baseline_image(BaselineVariant::kBlack, {256, 256});
  CHECK_FALSE(s.seed.has_value());
  Image img = decode_image(s.png);
  CHECK(img.width == 256);
  CHECK(img.height == 256);
  CHECK(std::all_of(img.rgb.begin(), img.rgb.end(), [](std::uint8_t v) { return v == 0; }));
}

TEST_CASE("noise baseline is reproducible from its seed") {
  auto a = synthesize_baseline_image(BaselineVariant::kNoise, {256, 256}, 7);
  auto b = synthesize_baseline_image(BaselineVariant::kNoise, {256, 256}, 7);
  CHECK(a.png == b.png);
  CHECK(a.seed == 7u);
  auto c = synthesize_baseline_image(BaselineVariant::kNoise, {256, 256}, 8);
  CHECK(a.png != c.png);
}

TEST_CASE("noise without a seed records the one it drew") {
  auto a = synthesize_baseline_image(BaselineVariant::kNoise, {16, 16});
  REQUIRE(a.seed.has_value());
  CHECK(synthesize_baseline_image(BaselineVariant::kNoise, {16, 16}, *a.seed).png == a.png);
}

TEST_CASE("small noise image golden") {
  Image img = decode_image(synthesize_baseline_image(BaselineVariant::kNoise, {4, 4}, 1).png);
  double mean = mean_pixel(img);
  CHECK(mean >= 0.0);
  CHECK(mean <= 40.0);
  CHECK(mean == 620.0 / 48.0);
}

TEST_CASE("noise is zero-mean before clamping") {
  // Over a mid-grey base nothing clamps, so the sample mean stays near the base.
  Image grey{128, 128, std::vector<std::uint8_t>(128 * 128 * 3, 128)};
  Image noisy = add_gaussian_noise(grey, 25.0, 3);
  CHECK(mean_pixel(noisy) == doctest::Approx(128.0).epsilon(0.005));
  double var = 0.0;
  for (auto v : noisy.rgb) var += (v - 128.0) * (v - 128.0);
  var /= double(noisy.rgb.size());
  CHECK(std::sqrt(var) == doctest::Approx(25.0).epsilon(0.03));
}

TEST_CASE("sigma zero leaves pixels untouched") {
  Image img{3, 2, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18}};
  CHECK(add_gaussian_noise(img, 0.0, 99) == img);
  CHECK(decode_image(encode_png(img)) == img);
}

TEST_CASE("invalid sizes") {
  CHECK_THROWS_AS(synthesize_baseline_image(BaselineVariant::kBlack, {0, 4}), InvalidSize);
  CHECK_THROWS_AS(synthesize_baseline_image(BaselineVariant::kNoise, {4, -1}, 1), InvalidSize);
}

TEST_CASE("jpeg input decodes") {
  Bytes jpeg = base64::decode(kSolidJpeg);
  CHECK(is_jpeg(jpeg));
  CHECK_FALSE(is_png(jpeg));
  Image img = decode_image(jpeg);
  CHECK(img.width == 8);
  CHECK(img.height == 8);
  CHECK(std::abs(int(img.at(3, 3, 0)) - 200) <= 3);
  CHECK(std::abs(int(img.at(3, 3, 1)) - 40) <= 3);
  CHECK(std::abs(int(img.at(3, 3, 2)) - 90) <= 3);
}

TEST_CASE("garbage is rejected") {
  Bytes junk = {1, 2, 3, 4, 5};
  CHECK_THROWS_AS(decode_image(junk), ParseError);
  Bytes truncated = encode_png(Image{2, 2, std::vector<std::uint8_t>(12, 7)});
  truncated.resize(truncated.size() / 2);
  CHECK_THROWS_AS(decode_image(truncated), ParseError);
}

TEST_CASE("gaussian stream moments") {
  GaussianStream g(42);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double x = g.next();
    sum += x;
    sq += x * x;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sq / n - 1.0) < 0.02);
}
