#include "dpp/apps/fft.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <numbers>
#include <random>
#include <stdexcept>

#include <fmt/format.h>

#include "dpp/engine.hpp"
#include "dpp/worker_pool.hpp"

namespace dpp::apps {

namespace {

using Clock = std::chrono::steady_clock;

std::size_t reverse_bits(std::size_t v, int bits) {
  std::size_t r = 0;
  for (int b = 0; b < bits; ++b) r |= ((v >> b) & 1u) << (bits - 1 - b);
  return r;
}

// Coefficient of a leaf DFT term. Exact 0 and +-1 are snapped so the generated
// source has no multiplications by them.
double snap(double c) {
  for (double exact : {-1.0, 0.0, 1.0}) {
    if (std::abs(c - exact) < 1e-12) return exact;
  }
  return c;
}

void add_term(std::string& sum, double coef, const std::string& operand) {
  if (coef == 0.0) return;
  const bool negative = coef < 0;
  const double mag = std::abs(coef);
  std::string term = mag == 1.0 ? operand : fmt::format("{:.9e}f * {}", static_cast<float>(mag), operand);
  if (sum.empty()) {
    sum = negative ? "-" + term : term;
  } else {
    sum += negative ? " - " + term : " + " + term;
  }
}

std::string component(int index) { return fmt::format("v.s{:x}", index); }

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

}  // namespace

ComplexSignal naive_dft(std::span<const std::complex<float>> x) {
  const std::size_t n = x.size();
  ComplexSignal out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc = 0;
    for (std::size_t j = 0; j < n; ++j) {
      // Reduce k*j mod n first so the angle stays accurate for large n.
      const double angle = -2.0 * std::numbers::pi * static_cast<double>((k * j) % n) / static_cast<double>(n);
      acc += std::complex<double>(x[j]) * std::polar(1.0, angle);
    }
    out[k] = std::complex<float>(static_cast<float>(acc.real()), static_cast<float>(acc.imag()));
  }
  return out;
}

Node leaf_kernel(int k) {
  if (k < 1 || k > 3) throw std::invalid_argument("leaf order must be 1, 2 or 3");
  const int len = 1 << k;
  const DataType type{ScalarType::Float, 2 * len};
  std::string body = "int i = get_global_id(0);\n" + fmt::format("{} v = x[i];\n", type.name());
  std::vector<std::string> parts;
  for (int q = 0; q < len; ++q) {
    std::string re, im;
    for (int j = 0; j < len; ++j) {
      const double angle = 2.0 * std::numbers::pi * static_cast<double>((q * j) % len) / len;
      const double c = snap(std::cos(angle)), s = snap(std::sin(angle));
      // (xr + i xi)(c - i s) = (xr c + xi s) + i (xi c - xr s)
      add_term(re, c, component(2 * j));
      add_term(re, s, component(2 * j + 1));
      add_term(im, c, component(2 * j + 1));
      add_term(im, -s, component(2 * j));
    }
    parts.push_back(re.empty() ? "0.0f" : re);
    parts.push_back(im.empty() ? "0.0f" : im);
  }
  body += fmt::format("y[i] = ({})(\n    {});\n", type.name(), fmt::join(parts, ",\n    "));

  Node node;
  node.name = fmt::format("dft{}", len);
  node.body = std::move(body);
  node.io["x"] = {"x", type, Direction::Input};
  node.io["y"] = {"y", type, Direction::Output};
  return node;
}

Program leaf_program(int k) {
  Program p;
  Node node = leaf_kernel(k);
  p.nodes.push_back({0, node.name});
  p.kernels.emplace(node.name, std::move(node));
  return p;
}

FftPlan make_fft_plan(std::size_t n, int k) {
  if (k < 1 || k > 3) throw std::invalid_argument("leaf order must be 1, 2 or 3");
  if (n == 0 || !std::has_single_bit(n)) throw std::invalid_argument("FFT size must be a power of two");
  if (n < (std::size_t{1} << k)) throw std::invalid_argument("FFT size must be at least the leaf size");
  return {n, k, leaf_program(k)};
}

ComplexSignal fft(std::span<const std::complex<float>> x, const FftPlan& plan, const Backend& backend) {
  const std::size_t n = plan.n;
  if (x.size() != n) throw std::invalid_argument("signal length does not match the FFT plan");
  const std::size_t len = std::size_t{1} << plan.k;
  const std::size_t groups = n / len;
  const int group_bits = std::countr_zero(groups);

  // Full bit reversal leaves each group of `len` samples in bit-reversed order; the
  // leaf kernel is a natural-order DFT, so group g holds x[rev(g) + j * groups].
  std::vector<float> permuted(2 * n);
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t base = reverse_bits(g, group_bits);
    for (std::size_t j = 0; j < len; ++j) {
      const auto v = x[base + j * groups];
      permuted[2 * (g * len + j)] = v.real();
      permuted[2 * (g * len + j) + 1] = v.imag();
    }
  }

  const DataType leaf_type{ScalarType::Float, static_cast<int>(2 * len)};
  auto out = run(backend, plan.leaf, {{"0.x", make_buffer<float>(leaf_type, permuted)}});
  const auto leaves = to_vector<float>(out.at("0.y"));

  std::vector<std::complex<double>> a(n);
  for (std::size_t p = 0; p < n; ++p) a[p] = {leaves[2 * p], leaves[2 * p + 1]};
  for (std::size_t m = 2 * len; m <= n; m *= 2) {
    const std::size_t half = m / 2;
    for (std::size_t j = 0; j < half; ++j) {
      const auto w = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(m));
      for (std::size_t s = 0; s < n; s += m) {
        const auto u = a[s + j];
        const auto t = w * a[s + j + half];
        a[s + j] = u + t;
        a[s + j + half] = u - t;
      }
    }
  }
  ComplexSignal result(n);
  for (std::size_t p = 0; p < n; ++p) {
    result[p] = {static_cast<float>(a[p].real()), static_cast<float>(a[p].imag())};
  }
  return result;
}

void host_fft(std::span<std::complex<double>> x) {
  const std::size_t n = x.size();
  if (n <= 1) return;
  if (!std::has_single_bit(n)) throw std::invalid_argument("FFT size must be a power of two");
  const int bits = std::countr_zero(n);
  for (std::size_t p = 0; p < n; ++p) {
    const std::size_t r = reverse_bits(p, bits);
    if (p < r) std::swap(x[p], x[r]);
  }
  for (std::size_t m = 2; m <= n; m *= 2) {
    const std::size_t half = m / 2;
    for (std::size_t j = 0; j < half; ++j) {
      const auto w = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(m));
      for (std::size_t s = 0; s < n; s += m) {
        const auto u = x[s + j];
        const auto t = w * x[s + j + half];
        x[s + j] = u + t;
        x[s + j + half] = u - t;
      }
    }
  }
}

Buffer leaf_stream(std::size_t bytes, int k, std::uint64_t seed) {
  const std::size_t len = std::size_t{1} << k;
  const std::size_t count = bytes / (8 * len);
  std::mt19937_64 rng(seed);
  std::vector<float> v(count * 2 * len);
  for (auto& f : v) f = static_cast<float>(static_cast<double>(rng() >> 11) * 0x1.0p-53 * 2.0 - 1.0);
  return make_buffer<float>({ScalarType::Float, static_cast<int>(2 * len)}, v);
}

BenchRow bench_cpu(std::size_t bytes, int k, int repeats) {
  const std::size_t len = std::size_t{1} << k;
  const auto data = to_vector<float>(leaf_stream(bytes, k, 1));
  double best = INFINITY;
  std::vector<float> out(data.size());
  std::vector<std::complex<double>> work(len);
  for (int r = 0; r < std::max(1, repeats); ++r) {
    auto t0 = Clock::now();
    for (std::size_t base = 0; base < data.size(); base += 2 * len) {
      for (std::size_t j = 0; j < len; ++j) work[j] = {data[base + 2 * j], data[base + 2 * j + 1]};
      host_fft(work);
      for (std::size_t j = 0; j < len; ++j) {
        out[base + 2 * j] = static_cast<float>(work[j].real());
        out[base + 2 * j + 1] = static_cast<float>(work[j].imag());
      }
    }
    best = std::min(best, seconds_since(t0));
  }
  return {bytes, k, best, "cpu"};
}

BenchRow bench_local(std::size_t bytes, int k, unsigned parallelism, std::size_t chunk_size, int repeats) {
  const Buffer stream = leaf_stream(bytes, k, 1);
  const ExecutionPlan p = plan(leaf_program(k), chunk_size);
  const std::map<std::string, Buffer> inputs{{"0.x", stream}};
  WorkerPool pool(parallelism <= 1 ? 0 : parallelism);
  double best = INFINITY;
  for (int r = 0; r < std::max(1, repeats); ++r) {
    std::size_t produced = 0;
    auto t0 = Clock::now();
    run_stream(p, stream_reader(p, inputs), [&](Chunk&& c) { produced += c.elements("0.y"); }, pool);
    best = std::min(best, seconds_since(t0));
    if (produced != stream.elements()) throw EngineError("benchmark lost work-items");
  }
  return {bytes, k, best, "local"};
}

BenchRow bench_remote(std::size_t bytes, int k, const RemoteBackend& backend, int repeats) {
  const Buffer stream = leaf_stream(bytes, k, 1);
  const Program p = leaf_program(k);
  const std::map<std::string, Buffer> inputs{{"0.x", stream}};
  ensure_uploaded(backend.base_url, p);
  double best = INFINITY;
  for (int r = 0; r < std::max(1, repeats); ++r) {
    auto t0 = Clock::now();
    auto out = run(backend, p, inputs);
    best = std::min(best, seconds_since(t0));
  }
  return {bytes, k, best, "remote"};
}

}  // namespace dpp::apps
