#include "dpp/apps/kmeans.hpp"

#include <limits>
#include <random>
#include <stdexcept>

namespace dpp::apps {

namespace {

using Centroid = std::array<double, 16>;

double dist2(const Block& b, const Centroid& c) {
  double s = 0;
  for (int d = 0; d < 16; ++d) {
    const double t = b[d] - c[d];
    s += t * t;
  }
  return s;
}

Centroid to_centroid(const Block& b) {
  Centroid c;
  for (int d = 0; d < 16; ++d) c[d] = b[d];
  return c;
}

// Uniform double in [0, 1) from the top 53 bits; std::uniform_real_distribution
// is not specified bit-exactly across standard libraries.
double uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

std::pair<std::uint32_t, double> nearest(const Codebook& codebook, const Block& b) {
  std::uint32_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < codebook.centroids.size(); ++c) {
    double s = 0;
    for (int d = 0; d < 16; ++d) {
      const double t = static_cast<double>(b[d]) - codebook.centroids[c][d];
      s += t * t;
    }
    if (s < best_d) {
      best_d = s;
      best = static_cast<std::uint32_t>(c);
    }
  }
  return {best, best_d};
}

KMeansResult kmeans(std::span<const Block> blocks, std::size_t k, std::uint64_t seed, int max_iter) {
  const std::size_t n = blocks.size();
  if (k == 0) throw std::invalid_argument("k-means needs at least one cluster");
  if (k > n) {
    throw std::invalid_argument("codebook size " + std::to_string(k) + " exceeds the " + std::to_string(n) +
                                " training blocks");
  }
  std::mt19937_64 rng(seed);

  // k-means++ seeding.
  std::vector<Centroid> centroids;
  centroids.reserve(k);
  std::vector<bool> chosen(n, false);
  std::size_t first = std::min(n - 1, static_cast<std::size_t>(uniform(rng) * static_cast<double>(n)));
  centroids.push_back(to_centroid(blocks[first]));
  chosen[first] = true;
  std::vector<double> d2(n);
  for (std::size_t p = 0; p < n; ++p) d2[p] = dist2(blocks[p], centroids[0]);
  while (centroids.size() < k) {
    double total = 0;
    for (double v : d2) total += v;
    std::size_t pick = n;
    if (total > 0) {
      double target = uniform(rng) * total, acc = 0;
      for (std::size_t p = 0; p < n; ++p) {
        if (d2[p] <= 0) continue;
        acc += d2[p];
        pick = p;
        if (acc > target) break;
      }
    } else {
      // Every remaining point coincides with a centroid: take the next unused one.
      for (std::size_t p = 0; p < n && pick == n; ++p) {
        if (!chosen[p]) pick = p;
      }
    }
    chosen[pick] = true;
    centroids.push_back(to_centroid(blocks[pick]));
    for (std::size_t p = 0; p < n; ++p) d2[p] = std::min(d2[p], dist2(blocks[p], centroids.back()));
  }

  KMeansResult result;
  std::vector<std::uint32_t> assign(n, std::numeric_limits<std::uint32_t>::max());
  std::vector<double> own(n);
  for (int it = 0; it < max_iter; ++it) {
    bool changed = false;
    double sse = 0;
    for (std::size_t p = 0; p < n; ++p) {
      std::uint32_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = dist2(blocks[p], centroids[c]);
        if (d < best_d) {
          best_d = d;
          best = static_cast<std::uint32_t>(c);
        }
      }
      changed |= assign[p] != best;
      assign[p] = best;
      own[p] = best_d;
      sse += best_d;
    }
    result.sse_history.push_back(sse);
    result.iterations = it + 1;
    if (!changed) break;

    std::vector<Centroid> sums(k, Centroid{});
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t p = 0; p < n; ++p) {
      ++counts[assign[p]];
      for (int d = 0; d < 16; ++d) sums[assign[p]][d] += blocks[p][d];
    }
    std::vector<bool> taken(n, false);
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        for (int d = 0; d < 16; ++d) centroids[c][d] = sums[c][d] / static_cast<double>(counts[c]);
        continue;
      }
      std::size_t far = 0;
      double far_d = -1;
      for (std::size_t p = 0; p < n; ++p) {
        if (!taken[p] && own[p] > far_d) {
          far_d = own[p];
          far = p;
        }
      }
      taken[far] = true;
      own[far] = 0;
      centroids[c] = to_centroid(blocks[far]);
    }
  }

  result.assignment = std::move(assign);
  result.codebook.centroids.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    for (int d = 0; d < 16; ++d) result.codebook.centroids[c][d] = static_cast<float>(centroids[c][d]);
  }
  return result;
}

}  // namespace dpp::apps
