#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dpp/client.hpp"
#include "dpp/program.hpp"

namespace dpp::apps {

using ComplexSignal = std::vector<std::complex<float>>;

/// Direct O(N^2) DFT, X_k = sum_n x_n e^{-2 pi i k n / N}, accumulated in double.
ComplexSignal naive_dft(std::span<const std::complex<float>> x);

/// Node computing a dense 2^k-point DFT per work-item. Points: input "x" and output
/// "y", both float(2*2^k) holding interleaved (re, im) pairs in natural order.
Node leaf_kernel(int k);

/// Single-instance program around leaf_kernel(k); streams "0.x" -> "0.y".
Program leaf_program(int k);

struct FftPlan {
  std::size_t n = 0;
  int k = 1;
  Program leaf;
};

/// Throws std::invalid_argument unless n is a power of two, k in {1,2,3} and 2^k <= n.
FftPlan make_fft_plan(std::size_t n, int k);

/// Radix-2 decimation in time. The leaf DFTs of size 2^k run on `backend`; the host
/// finishes the remaining log2(n) - k butterfly stages in double precision.
ComplexSignal fft(std::span<const std::complex<float>> x, const FftPlan& plan, const Backend& backend);

/// Host-only iterative radix-2 FFT of a power-of-two signal, in place.
void host_fft(std::span<std::complex<double>> x);

/// Leaf stream used by the benchmark: `bytes / (8 * 2^k)` independent 2^k-point
/// signals drawn from `seed`, as the interleaved float buffer fed to leaf_program(k).
Buffer leaf_stream(std::size_t bytes, int k, std::uint64_t seed);

struct BenchRow {
  std::size_t bytes = 0;
  int k = 1;
  double seconds = 0;
  std::string backend;
};

/// Times the transform of a leaf stream of about `bytes` bytes. "cpu" runs host_fft
/// on every leaf signal; other backends run leaf_program(k) through the engine
/// ("local", with the plan and pool built before the clock starts) or a server
/// ("remote", end to end). Returns the best of `repeats` runs.
BenchRow bench_cpu(std::size_t bytes, int k, int repeats = 1);
BenchRow bench_local(std::size_t bytes, int k, unsigned parallelism, std::size_t chunk_size, int repeats = 1);
BenchRow bench_remote(std::size_t bytes, int k, const RemoteBackend& backend, int repeats = 1);

}  // namespace dpp::apps
