#include "dpp/apps/codec.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <fmt/format.h>

#include "dpp/error.hpp"

namespace dpp::apps {

namespace {

constexpr std::string_view kMagic = "DPVQ";
const DataType kFloat{ScalarType::Float, 1};

template <class T>
void put(std::vector<std::byte>& out, T v) {
  const auto* p = reinterpret_cast<const std::byte*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

class Cursor {
 public:
  explicit Cursor(std::span<const std::byte> d) : d_(d) {}

  template <class T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)).data(), sizeof(T));
    return v;
  }

  std::span<const std::byte> take(std::size_t n) {
    if (d_.size() - pos_ < n) throw IoError("truncated compressed image");
    auto s = d_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == d_.size(); }

 private:
  std::span<const std::byte> d_;
  std::size_t pos_ = 0;
};

std::uint8_t to_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

Backend whole_chunk(const Backend& backend, std::size_t chunk) {
  Backend b = backend;
  std::visit([&](auto& x) { x.chunk_size = chunk; }, b);
  return b;
}

Node make_node(std::string name, std::string body, std::vector<IOPoint> points) {
  Node n;
  n.name = std::move(name);
  n.body = std::move(body);
  for (auto& p : points) n.io.emplace(p.name, p);
  return n;
}

std::string float_literal(float v) { return fmt::format("{:.9e}f", v); }

}  // namespace

std::vector<std::byte> encode_container(const CompressedImage& image) {
  std::vector<std::byte> out;
  const std::size_t n_cb = image.codebook.centroids.size();
  if (n_cb == 0 || n_cb > 256) throw std::invalid_argument("codebook size must be in [1, 256]");
  out.reserve(18 + n_cb * 64 + image.records.size() * 3 + image.cb.size() + image.cr.size());
  for (char c : kMagic) out.push_back(static_cast<std::byte>(c));
  put(out, image.width);
  put(out, image.height);
  put(out, static_cast<std::uint16_t>(n_cb));
  put(out, image.sigma_step);
  for (const auto& c : image.codebook.centroids) {
    for (float v : c) put(out, v);
  }
  for (const auto& r : image.records) {
    out.push_back(static_cast<std::byte>(r.mean));
    out.push_back(static_cast<std::byte>(r.sigma));
    out.push_back(static_cast<std::byte>(r.index));
  }
  for (auto v : image.cb) out.push_back(static_cast<std::byte>(v));
  for (auto v : image.cr) out.push_back(static_cast<std::byte>(v));
  return out;
}

CompressedImage decode_container(std::span<const std::byte> data) {
  Cursor in(data);
  auto magic = in.take(4);
  if (std::memcmp(magic.data(), kMagic.data(), 4) != 0) throw IoError("not a compressed image (bad magic)");
  CompressedImage img;
  img.width = in.get<std::uint32_t>();
  img.height = in.get<std::uint32_t>();
  const auto n_cb = in.get<std::uint16_t>();
  img.sigma_step = in.get<float>();
  if (img.width == 0 || img.height == 0 || img.width % 4 || img.height % 4 || img.width > (1u << 16) ||
      img.height > (1u << 16)) {
    throw IoError("compressed image has invalid dimensions");
  }
  if (n_cb == 0 || n_cb > 256) throw IoError("compressed image has invalid codebook size");
  if (!std::isfinite(img.sigma_step) || img.sigma_step < 0) throw IoError("compressed image has invalid sigma step");
  img.codebook.centroids.resize(n_cb);
  for (auto& c : img.codebook.centroids) {
    for (float& v : c) v = in.get<float>();
  }
  const std::size_t blocks = static_cast<std::size_t>(img.width / 4) * (img.height / 4);
  img.records.resize(blocks);
  for (auto& r : img.records) {
    auto b = in.take(3);
    r = {static_cast<std::uint8_t>(b[0]), static_cast<std::uint8_t>(b[1]), static_cast<std::uint8_t>(b[2])};
    if (r.index >= n_cb) throw IoError("block record refers to a missing codebook entry");
  }
  for (auto* plane : {&img.cb, &img.cr}) {
    auto b = in.take(blocks);
    plane->resize(blocks);
    std::memcpy(plane->data(), b.data(), blocks);
  }
  if (!in.done()) throw IoError("trailing bytes after compressed image");
  return img;
}

Program analysis_program(int width, int height) {
  const int w = width, bw = width / 4;
  const DataType u4{ScalarType::UChar, 4}, f2{ScalarType::Float, 2}, f16{ScalarType::Float, 16};
  Program p;
  // BT.601 full range. Chroma and the block copy of luma are written in block
  // order (16 consecutive values per 4x4 block) so that a float16 reader sees one
  // block per work-item.
  p.kernels["color"] = make_node(
      "color",
      fmt::format("int i = get_global_id(0);\n"
                  "uchar4 p = rgb[i];\n"
                  "float r = (float)p.x;\n"
                  "float g = (float)p.y;\n"
                  "float b = (float)p.z;\n"
                  "float yv = 0.299f * r + 0.587f * g + 0.114f * b;\n"
                  "int x = i % {0};\n"
                  "int y = i / {0};\n"
                  "int j = ((y / 4) * {1} + x / 4) * 16 + (y % 4) * 4 + x % 4;\n"
                  "luma[i] = yv;\n"
                  "lumab[j] = yv;\n"
                  "cb[j] = 128.0f - 0.168736f * r - 0.331264f * g + 0.5f * b;\n"
                  "cr[j] = 128.0f + 0.5f * r - 0.418688f * g - 0.081312f * b;\n",
                  w, bw),
      {{"rgb", u4, Direction::Input},
       {"luma", kFloat, Direction::Output},
       {"lumab", kFloat, Direction::Output},
       {"cb", kFloat, Direction::Output},
       {"cr", kFloat, Direction::Output}});
  p.kernels["downscale"] = make_node("downscale",
                                     "int i = get_global_id(0);\n"
                                     "float16 w = (float16)(0.0625f);\n"
                                     "cbs[i] = dot(cb[i], w);\n"
                                     "crs[i] = dot(cr[i], w);\n",
                                     {{"cb", f16, Direction::Input},
                                      {"cr", f16, Direction::Input},
                                      {"cbs", kFloat, Direction::Output},
                                      {"crs", kFloat, Direction::Output}});
  p.kernels["gradient"] = make_node(
      "gradient",
      fmt::format("int i = get_global_id(0);\n"
                  "int x = i % {0};\n"
                  "int y = i / {0};\n"
                  "int right = y * {0} + min(x + 1, {1});\n"
                  "int down = min(y + 1, {2}) * {0} + x;\n"
                  "g[i] = (float2)(l[right] - l[i], l[down] - l[i]);\n",
                  w, w - 1, height - 1),
      {{"l", kFloat, Direction::Input}, {"g", f2, Direction::Output}});
  p.nodes = {{0, "color"}, {1, "downscale"}, {2, "gradient"}};
  p.arrows = {{{0, "cb"}, {1, "cb"}}, {{0, "cr"}, {1, "cr"}}, {{0, "luma"}, {2, "l"}}};
  return p;
}

Analysis analyze(const RgbImage& image, const Backend& backend) {
  const std::size_t pixels = image.pixels();
  std::vector<std::uint8_t> packed(pixels * 4, 0);
  for (std::size_t k = 0; k < pixels; ++k) std::memcpy(&packed[4 * k], &image.rgb[3 * k], 3);
  auto out = run(whole_chunk(backend, pixels), analysis_program(image.width, image.height),
                 {{"0.rgb", make_buffer<std::uint8_t>({ScalarType::UChar, 4}, packed)}});
  return {to_vector<float>(out.at("0.lumab")), to_vector<float>(out.at("1.cbs")), to_vector<float>(out.at("1.crs")),
          to_vector<float>(out.at("2.g"))};
}

Program encode_program(const Codebook& codebook) {
  if (codebook.centroids.empty()) throw std::invalid_argument("empty codebook");
  auto literal = [](const Block& c) {
    std::vector<std::string> parts;
    for (float v : c) parts.push_back(float_literal(v));
    return fmt::format("(float16)({})", fmt::join(parts, ", "));
  };
  std::string body =
      "int i = get_global_id(0);\n"
      "float16 v = b[i];\n"
      "float16 d = v - " + literal(codebook.centroids[0]) + ";\n"
      "float best = dot(d, d);\n"
      "int index = 0;\n"
      "float e = 0.0f;\n";
  for (std::size_t c = 1; c < codebook.centroids.size(); ++c) {
    body += fmt::format("d = v - {};\ne = dot(d, d);\nif (e < best) {{ best = e; index = {}; }}\n",
                        literal(codebook.centroids[c]), c);
  }
  body += "idx[i] = (uchar)index;\n";
  Program p;
  p.kernels["vq"] = make_node("vq", std::move(body),
                              {{"b", {ScalarType::Float, 16}, Direction::Input},
                               {"idx", {ScalarType::UChar, 1}, Direction::Output}});
  p.nodes = {{0, "vq"}};
  return p;
}

CompressedImage compress(const RgbImage& image, const CodecOptions& options) {
  if (image.width <= 0 || image.height <= 0 || image.width % 4 || image.height % 4) {
    throw InputError("image dimensions must be positive multiples of 4, got " + std::to_string(image.width) + "x" +
                     std::to_string(image.height));
  }
  if (options.codebook_size == 0 || options.codebook_size > 256) {
    throw InputError("codebook size must be in [1, 256]");
  }
  const Analysis a = analyze(image, options.backend);
  const std::size_t bw = static_cast<std::size_t>(image.width / 4), bh = static_cast<std::size_t>(image.height / 4);
  const std::size_t blocks = bw * bh;

  CompressedImage out;
  out.width = static_cast<std::uint32_t>(image.width);
  out.height = static_cast<std::uint32_t>(image.height);
  out.sigma_step = static_cast<float>(options.sigma_max / 255.0);
  const double step = out.sigma_step;
  const double sigma_min = step / 2;

  // Step 4: block statistics and the k-means training set.
  std::vector<Block> normalized(blocks, Block{});
  std::vector<Block> training;
  out.records.resize(blocks);
  for (std::size_t b = 0; b < blocks; ++b) {
    const float* px = &a.luma_blocks[b * 16];
    double mean = 0;
    for (int k = 0; k < 16; ++k) mean += px[k];
    mean /= 16;
    double var = 0;
    for (int k = 0; k < 16; ++k) var += (px[k] - mean) * (px[k] - mean);
    const double sigma = std::sqrt(var / 16);
    out.records[b].mean = to_u8(mean);
    out.records[b].sigma = static_cast<std::uint8_t>(std::min(255L, std::lround(sigma / step)));
    if (sigma <= sigma_min) continue;
    for (int k = 0; k < 16; ++k) normalized[b][k] = static_cast<float>((px[k] - mean) / sigma);

    const std::size_t bx = b % bw, by = b / bw;
    double grad = 0;
    for (int k = 0; k < 16; ++k) {
      const std::size_t pix = (by * 4 + k / 4) * static_cast<std::size_t>(image.width) + bx * 4 + k % 4;
      grad += std::hypot(a.gradient[2 * pix], a.gradient[2 * pix + 1]);
    }
    if (grad / 16 >= options.gradient_min) training.push_back(normalized[b]);
  }

  if (training.empty()) {
    out.codebook.centroids.assign(1, Block{});
  } else {
    const std::size_t k = std::min(options.codebook_size, training.size());
    out.codebook = kmeans(training, k, options.seed, options.kmeans_iterations).codebook;
  }

  // Step 5: nearest codebook entry per block, on the platform.
  const DataType f16{ScalarType::Float, 16};
  std::vector<float> flat(blocks * 16);
  for (std::size_t b = 0; b < blocks; ++b) std::memcpy(&flat[b * 16], normalized[b].data(), 64);
  auto idx = run(whole_chunk(options.backend, blocks), encode_program(out.codebook),
                 {{"0.b", make_buffer<float>(f16, flat)}});
  const auto indices = to_vector<std::uint8_t>(idx.at("0.idx"));
  for (std::size_t b = 0; b < blocks; ++b) {
    out.records[b].index = out.records[b].sigma == 0 ? 0 : indices[b];
  }

  out.cb.resize(blocks);
  out.cr.resize(blocks);
  for (std::size_t b = 0; b < blocks; ++b) {
    out.cb[b] = to_u8(a.cb[b]);
    out.cr[b] = to_u8(a.cr[b]);
  }
  return out;
}

RgbImage decompress(const CompressedImage& c) {
  const int w = static_cast<int>(c.width), h = static_cast<int>(c.height);
  const std::size_t bw = c.width / 4;
  if (c.records.size() != bw * (c.height / 4) || c.cb.size() != c.records.size() || c.cr.size() != c.records.size()) {
    throw IoError("compressed image planes do not match its dimensions");
  }
  RgbImage img(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t b = static_cast<std::size_t>(y / 4) * bw + static_cast<std::size_t>(x / 4);
      const BlockRecord& r = c.records[b];
      const auto& centroid = c.codebook.centroids.at(r.index);
      const double luma = r.mean + r.sigma * static_cast<double>(c.sigma_step) * centroid[(y % 4) * 4 + x % 4];
      const double cb = c.cb[b] - 128.0, cr = c.cr[b] - 128.0;
      std::uint8_t* px = &img.rgb[(static_cast<std::size_t>(y) * w + x) * 3];
      px[0] = to_u8(luma + 1.402 * cr);
      px[1] = to_u8(luma - 0.344136 * cb - 0.714136 * cr);
      px[2] = to_u8(luma + 1.772 * cb);
    }
  }
  return img;
}

}  // namespace dpp::apps
