#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dpp/apps/image.hpp"
#include "dpp/apps/kmeans.hpp"
#include "dpp/client.hpp"

namespace dpp::apps {

struct BlockRecord {
  std::uint8_t mean = 0;
  std::uint8_t sigma = 0;  // deviation = sigma * sigma_step
  std::uint8_t index = 0;  // codebook entry

  friend bool operator==(const BlockRecord&, const BlockRecord&) = default;
};

/// Block-VQ container. Layout, little-endian:
///   "DPVQ", u32 width, u32 height, u16 codebook size, f32 sigma step,
///   codebook (size x 16 f32), one 3-byte record per 4x4 luma block (raster order),
///   Cb plane, Cr plane (u8, width/4 x height/4 each).
struct CompressedImage {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  float sigma_step = 0;
  Codebook codebook;
  std::vector<BlockRecord> records;
  std::vector<std::uint8_t> cb;
  std::vector<std::uint8_t> cr;

  friend bool operator==(const CompressedImage&, const CompressedImage&) = default;
};

std::vector<std::byte> encode_container(const CompressedImage& image);
/// Throws IoError on a malformed container.
CompressedImage decode_container(std::span<const std::byte> data);

struct CodecOptions {
  std::size_t codebook_size = 256;
  std::uint64_t seed = 1;
  double gradient_min = 1.0;  // blocks below this mean gradient magnitude are not used for training
  double sigma_max = 64.0;    // sigma is quantized uniformly over [0, sigma_max] into 256 levels
  int kmeans_iterations = 20;
  Backend backend = LocalBackend{};
};

/// Platform-side analysis of one frame (color transform, chroma downscale,
/// luminance gradient), all in one program run with the whole frame as a chunk.
struct Analysis {
  std::vector<float> luma_blocks;  // 16 values per 4x4 block, blocks in raster order
  std::vector<float> cb;           // width/4 x height/4 box-filtered chroma
  std::vector<float> cr;
  std::vector<float> gradient;     // (dx, dy) per pixel, raster order
};

/// Three-instance analysis program for a width x height frame; free input "0.rgb"
/// (uchar4 per pixel), free outputs "0.lumab", "1.cbs", "1.crs", "2.g".
Program analysis_program(int width, int height);
Analysis analyze(const RgbImage& image, const Backend& backend);

/// Single-instance program mapping normalized blocks ("0.b", float16) to their
/// nearest codebook entry ("0.idx", uchar). The codebook is compiled into the kernel.
Program encode_program(const Codebook& codebook);

/// Throws InputError unless both dimensions are positive multiples of 4.
CompressedImage compress(const RgbImage& image, const CodecOptions& options = {});
RgbImage decompress(const CompressedImage& image);

}  // namespace dpp::apps
