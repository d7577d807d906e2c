#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace dpp::apps {

/// 8-bit RGB raster, rows top to bottom, 3 bytes per pixel.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3) {}

  std::size_t pixels() const { return static_cast<std::size_t>(width) * height; }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// Binary PPM (P6, maxval 255). decode throws IoError on malformed input.
std::vector<std::byte> encode_ppm(const RgbImage& image);
RgbImage decode_ppm(std::span<const std::byte> data);
RgbImage read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const RgbImage& image);

/// 10 log10(255^2 / MSE) over all samples; +infinity for identical images.
/// Throws std::invalid_argument if the dimensions differ.
double psnr(const RgbImage& a, const RgbImage& b);

/// Deterministic test picture: smooth shaded background, soft-edged shapes, a
/// striped patch and light noise.
RgbImage procedural_image(int width, int height, std::uint64_t seed);

}  // namespace dpp::apps
