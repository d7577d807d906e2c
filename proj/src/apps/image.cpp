#include "dpp/apps/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include "dpp/error.hpp"

namespace dpp::apps {

std::vector<std::byte> encode_ppm(const RgbImage& image) {
  const std::string header = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::byte> out(header.size() + image.rgb.size());
  std::memcpy(out.data(), header.data(), header.size());
  if (!image.rgb.empty()) std::memcpy(out.data() + header.size(), image.rgb.data(), image.rgb.size());
  return out;
}

RgbImage decode_ppm(std::span<const std::byte> data) {
  std::size_t pos = 0;
  auto at = [&](std::size_t p) { return static_cast<char>(data[p]); };
  auto skip_space = [&] {
    while (pos < data.size()) {
      if (at(pos) == '#') {
        while (pos < data.size() && at(pos) != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(at(pos)))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&](const char* what) {
    skip_space();
    long long v = 0;
    std::size_t start = pos;
    while (pos < data.size() && std::isdigit(static_cast<unsigned char>(at(pos))) && pos - start < 9) {
      v = v * 10 + (at(pos) - '0');
      ++pos;
    }
    if (pos == start) throw IoError(std::string("PPM: missing ") + what);
    return v;
  };
  if (data.size() < 2 || at(0) != 'P' || at(1) != '6') throw IoError("not a binary PPM (P6) file");
  pos = 2;
  const long long w = number("width"), h = number("height"), maxval = number("maxval");
  if (w <= 0 || h <= 0) throw IoError("PPM: empty image");
  if (maxval != 255) throw IoError("PPM: only maxval 255 is supported");
  if (pos >= data.size() || !std::isspace(static_cast<unsigned char>(at(pos)))) {
    throw IoError("PPM: missing separator before pixel data");
  }
  ++pos;
  const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3;
  if (data.size() - pos < need) throw IoError("PPM: truncated pixel data");
  RgbImage img(static_cast<int>(w), static_cast<int>(h));
  std::memcpy(img.rgb.data(), data.data() + pos, need);
  return img;
}

RgbImage read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_ppm(std::as_bytes(std::span(raw)));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_ppm(const std::filesystem::path& path, const RgbImage& image) {
  auto bytes = encode_ppm(image);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("cannot write " + path.string());
}

double psnr(const RgbImage& a, const RgbImage& b) {
  if (a.width != b.width || a.height != b.height) throw std::invalid_argument("psnr: image sizes differ");
  double sum = 0;
  for (std::size_t k = 0; k < a.rgb.size(); ++k) {
    const double d = static_cast<double>(a.rgb[k]) - b.rgb[k];
    sum += d * d;
  }
  if (sum == 0) return std::numeric_limits<double>::infinity();
  const double mse = sum / static_cast<double>(a.rgb.size());
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

RgbImage procedural_image(int width, int height, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * static_cast<double>(rng() >> 11) * 0x1.0p-53; };

  struct Wave {
    double fx, fy, phase, amp[3];
  };
  std::vector<Wave> waves(4);
  for (auto& w : waves) {
    w = {uniform(0.5, 3.0), uniform(0.5, 3.0), uniform(0, 2 * std::numbers::pi),
         {uniform(-40, 40), uniform(-40, 40), uniform(-40, 40)}};
  }
  struct Disc {
    double cx, cy, r, soft, color[3];
  };
  std::vector<Disc> discs(7);
  for (auto& d : discs) {
    d = {uniform(0, 1), uniform(0, 1), uniform(0.05, 0.18), uniform(0.01, 0.03),
         {uniform(30, 225), uniform(30, 225), uniform(30, 225)}};
  }
  const double base[3] = {uniform(90, 160), uniform(90, 160), uniform(90, 160)};
  const double stripe_angle = uniform(0, std::numbers::pi);
  const double stripe_x0 = uniform(0.1, 0.5), stripe_y0 = uniform(0.1, 0.5);

  RgbImage img(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double u = (x + 0.5) / width, v = (y + 0.5) / height;
      double c[3] = {base[0], base[1], base[2]};
      for (const auto& w : waves) {
        const double s = std::sin(2 * std::numbers::pi * (w.fx * u + w.fy * v) + w.phase);
        for (int ch = 0; ch < 3; ++ch) c[ch] += w.amp[ch] * s;
      }
      for (const auto& d : discs) {
        const double dist = std::hypot(u - d.cx, v - d.cy);
        const double t = std::clamp((d.r - dist) / d.soft, 0.0, 1.0);
        const double a = t * t * (3 - 2 * t);
        for (int ch = 0; ch < 3; ++ch) c[ch] = c[ch] * (1 - a) + d.color[ch] * a;
      }
      if (u > stripe_x0 && u < stripe_x0 + 0.3 && v > stripe_y0 && v < stripe_y0 + 0.3) {
        const double along = (u * std::cos(stripe_angle) + v * std::sin(stripe_angle)) * width;
        const double s = 24 * std::sin(along * 2 * std::numbers::pi / 12.0);
        for (double& ch : c) ch += s;
      }
      for (int ch = 0; ch < 3; ++ch) {
        const double noise = uniform(-2, 2);
        img.rgb[(static_cast<std::size_t>(y) * width + x) * 3 + ch] =
            static_cast<std::uint8_t>(std::clamp(std::lround(c[ch] + noise), 0L, 255L));
      }
    }
  }
  return img;
}

}  // namespace dpp::apps
