#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace dpp::apps {

using Block = std::array<float, 16>;

struct Codebook {
  std::vector<Block> centroids;

  friend bool operator==(const Codebook&, const Codebook&) = default;
};

struct KMeansResult {
  Codebook codebook;
  std::vector<std::uint32_t> assignment;  // final nearest centroid per block
  std::vector<double> sse_history;        // within-cluster squared error after each assignment step
  int iterations = 0;
};

/// k-means++ seeding from a 64-bit Mersenne Twister seeded with `seed`, then Lloyd
/// iterations until assignments stop changing or `max_iter` is reached. Empty
/// clusters are re-seeded with the point farthest from its centroid. Throws
/// std::invalid_argument if `k` is 0 or exceeds the number of blocks.
KMeansResult kmeans(std::span<const Block> blocks, std::size_t k, std::uint64_t seed, int max_iter = 20);

/// Index of the nearest centroid (lowest index on ties) and its squared distance.
std::pair<std::uint32_t, double> nearest(const Codebook& codebook, const Block& b);

}  // namespace dpp::apps
