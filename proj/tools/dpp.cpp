// dpp: command-line front end for programs, runs, the server and the two
// applications (FFT and block-VQ image compression).
//
// Exit codes: 0 success, 1 invalid program/arguments, 2 file I/O, 3 protocol or
// runtime failure.

#include <cmath>
#include <csignal>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <fmt/chrono.h>
#include <fmt/format.h>

#include "dpp/apps/codec.hpp"
#include "dpp/apps/fft.hpp"
#include "dpp/client.hpp"
#include "dpp/error.hpp"
#include "dpp/program.hpp"
#include "dpp/server.hpp"
#include "dpp/stream_file.hpp"

namespace {

using namespace dpp;

enum Exit { kOk = 0, kInvalid = 1, kIo = 2, kRuntime = 3 };

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::byte> read_bytes(const std::string& path) {
  auto text = read_text(path);
  std::vector<std::byte> out(text.size());
  std::memcpy(out.data(), text.data(), text.size());
  return out;
}

void write_bytes(const std::string& path, std::span<const std::byte> data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("cannot write " + path);
}

std::pair<std::string, std::string> split_binding(const std::string& arg) {
  auto eq = arg.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == arg.size()) {
    throw InputError("expected <stream>=<file>, got '" + arg + "'");
  }
  return {arg.substr(0, eq), arg.substr(eq + 1)};
}

/// "20K", "1.5M", "4096" -> bytes (decimal multipliers).
std::size_t parse_size(const std::string& text) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    throw InputError("bad size '" + text + "'");
  }
  std::string suffix = text.substr(used);
  double mul = 1;
  if (suffix == "K" || suffix == "k") mul = 1e3;
  else if (suffix == "M" || suffix == "m") mul = 1e6;
  else if (suffix == "G" || suffix == "g") mul = 1e9;
  else if (!suffix.empty()) throw InputError("bad size suffix in '" + text + "'");
  if (v <= 0) throw InputError("size must be positive: '" + text + "'");
  return static_cast<std::size_t>(v * mul);
}

/// "20K..10M" (log-spaced, `points` values) or "20K,1M,10M".
std::vector<std::size_t> parse_sizes(const std::string& spec, int points) {
  std::vector<std::size_t> out;
  auto dots = spec.find("..");
  if (dots != std::string::npos) {
    const double lo = static_cast<double>(parse_size(spec.substr(0, dots)));
    const double hi = static_cast<double>(parse_size(spec.substr(dots + 2)));
    if (hi < lo || points < 2) throw InputError("bad size range '" + spec + "'");
    for (int p = 0; p < points; ++p) {
      out.push_back(static_cast<std::size_t>(std::llround(lo * std::pow(hi / lo, static_cast<double>(p) / (points - 1)))));
    }
    return out;
  }
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_size(item));
  return out;
}

std::string default_server() {
  const char* env = std::getenv("DPP_SERVER");
  return env ? env : "";
}

Backend make_backend(const std::string& server, std::size_t chunk, unsigned par) {
  if (!server.empty()) return RemoteBackend{server, chunk};
  return LocalBackend{par, chunk};
}

Program load_program(const std::string& path) { return parse_program(read_text(path)); }

void log_line(std::string_view msg) {
  std::cerr << fmt::format("{:%Y-%m-%dT%H:%M:%S} {}\n", fmt::localtime(std::time(nullptr)), msg);
}

// ---- subcommands -----------------------------------------------------------------

int cmd_validate(const std::string& path, bool as_json) {
  Program p;
  try {
    p = load_program(path);
  } catch (const ParseError& e) {
    if (as_json) {
      std::cout << nlohmann::json{{"valid", false},
                                  {"violations", nlohmann::json::array({{{"kind", "parse_error"}, {"message", e.what()}}})}}
                       .dump(2)
                << "\n";
    } else {
      std::cout << "parse_error: " << e.what() << "\n";
    }
    return kInvalid;
  }
  auto report = validate(p);
  if (as_json) {
    std::cout << report.to_json().dump(2) << "\n";
  } else if (report.ok()) {
    std::cout << "valid\n";
  } else {
    std::cout << report.to_string();
  }
  return report.ok() ? kOk : kInvalid;
}

int cmd_run(const std::string& path, const std::vector<std::string>& ins, const std::vector<std::string>& outs,
            const std::string& server, std::size_t chunk, unsigned par) {
  Program p = load_program(path);
  std::map<std::string, Buffer> inputs;
  for (const auto& arg : ins) {
    auto [name, file] = split_binding(arg);
    inputs[name] = read_stream_file(file);
  }
  std::map<std::string, std::string> targets;
  std::set<std::string> free_outputs;
  for (const auto& f : free_points(p)) {
    if (f.direction == Direction::Output) free_outputs.insert(f.stream_name());
  }
  for (const auto& arg : outs) {
    auto [name, file] = split_binding(arg);
    if (!free_outputs.count(name)) throw InputError("'" + name + "' is not a free output of the program");
    targets[name] = file;
  }
  auto results = run(make_backend(server, chunk, par), p, inputs);
  for (const auto& [name, file] : targets) write_stream_file(file, results.at(name));
  return kOk;
}

int cmd_serve(ServerConfig cfg, std::uint16_t port, const std::string& range) {
  if (!range.empty()) {
    auto dash = range.find('-');
    try {
      if (dash == std::string::npos) throw std::invalid_argument("range");
      unsigned long lo = std::stoul(range.substr(0, dash)), hi = std::stoul(range.substr(dash + 1));
      if (lo == 0 || hi > 65535 || lo > hi) throw std::invalid_argument("range");
      cfg.data_port_min = static_cast<std::uint16_t>(lo);
      cfg.data_port_max = static_cast<std::uint16_t>(hi);
    } catch (const std::exception&) {
      throw InputError("--data-port-range expects <low>-<high>, got '" + range + "'");
    }
  }
  cfg.log = log_line;

  // Handle SIGINT/SIGTERM on a dedicated thread so stop() never runs inside a
  // signal handler.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  Server server(cfg);
  std::uint16_t bound = server.start(port);
  log_line(fmt::format("listening on http://{}:{} ({} workers, {} stored programs)", cfg.host, bound,
                       server.workers(), server.stored_programs()));
  int sig = 0;
  sigwait(&signals, &sig);
  log_line("shutting down");
  server.stop();
  return kOk;
}

int cmd_info(const std::string& server) {
  if (server.empty()) throw InputError("--server (or DPP_SERVER) is required");
  std::cout << server_status(server).dump(2) << "\n";
  return kOk;
}

int cmd_fft(std::size_t n, int k, const std::string& in, const std::string& out, const std::string& server,
            std::size_t chunk, unsigned par) {
  auto plan = apps::make_fft_plan(n, k);
  Buffer buf = read_stream_file(in);
  if (buf.type != DataType{ScalarType::Float, 2}) throw InputError("FFT input must be a float2 stream");
  if (buf.elements() != n) {
    throw InputError(fmt::format("FFT input has {} elements, --n is {}", buf.elements(), n));
  }
  auto scalars = to_vector<float>(buf);
  apps::ComplexSignal x(n);
  for (std::size_t j = 0; j < n; ++j) x[j] = {scalars[2 * j], scalars[2 * j + 1]};
  auto y = apps::fft(x, plan, make_backend(server, chunk, par));
  std::vector<float> flat(2 * n);
  for (std::size_t j = 0; j < n; ++j) {
    flat[2 * j] = y[j].real();
    flat[2 * j + 1] = y[j].imag();
  }
  write_stream_file(out, make_buffer<float>({ScalarType::Float, 2}, flat));
  return kOk;
}

int cmd_fft_bench(const std::string& sizes, int points, const std::vector<int>& ks,
                  const std::vector<std::string>& backends, const std::string& server, unsigned par,
                  std::size_t chunk, int repeats) {
  auto list = parse_sizes(sizes, points);
  std::cout << "bytes,k,wall_seconds,backend\n";
  for (const auto& backend : backends) {
    if (backend != "cpu" && backend != "local" && backend != "remote") {
      throw InputError("unknown backend '" + backend + "' (cpu, local, remote)");
    }
    if (backend == "remote" && server.empty()) throw InputError("backend 'remote' needs --server");
  }
  for (int k : ks) {
    if (k < 1 || k > 3) throw InputError("leaf order must be 1, 2 or 3");
  }
  for (const auto& backend : backends) {
    for (int k : ks) {
      for (std::size_t bytes : list) {
        apps::BenchRow row;
        if (backend == "cpu") row = apps::bench_cpu(bytes, k, repeats);
        else if (backend == "local") row = apps::bench_local(bytes, k, par, chunk, repeats);
        else row = apps::bench_remote(bytes, k, RemoteBackend{server, chunk}, repeats);
        std::cout << fmt::format("{},{},{:.6f},{}\n", row.bytes, row.k, row.seconds, row.backend) << std::flush;
      }
    }
  }
  return kOk;
}

int cmd_compress(const std::string& in, const std::string& out, std::size_t codebook, std::uint64_t seed,
                 const std::string& server, unsigned par, bool report) {
  auto img = apps::read_ppm(in);
  apps::CodecOptions opts;
  opts.codebook_size = codebook;
  opts.seed = seed;
  opts.backend = make_backend(server, kDefaultChunkSize, par);
  auto compressed = apps::compress(img, opts);
  auto bytes = apps::encode_container(compressed);
  write_bytes(out, bytes);
  if (report) {
    auto back = apps::decompress(compressed);
    std::cerr << fmt::format("{} -> {} bytes (ratio {:.4f}), PSNR {:.2f} dB\n", img.rgb.size(), bytes.size(),
                             static_cast<double>(bytes.size()) / static_cast<double>(img.rgb.size()),
                             apps::psnr(img, back));
  }
  return kOk;
}

int cmd_decompress(const std::string& in, const std::string& out) {
  auto bytes = read_bytes(in);
  apps::CompressedImage c;
  try {
    c = apps::decode_container(bytes);
  } catch (const IoError& e) {
    throw IoError(in + ": " + e.what());
  }
  apps::write_ppm(out, apps::decompress(c));
  return kOk;
}

int cmd_psnr(const std::string& a, const std::string& b) {
  std::cout << fmt::format("{:.4f}\n", apps::psnr(apps::read_ppm(a), apps::read_ppm(b)));
  return kOk;
}

int dispatch(int argc, char** argv) {
  CLI::App app{"Data-parallel dataflow platform: run kernel graphs locally or on a server."};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  std::string program_path, server = default_server();
  std::vector<std::string> ins, outs;
  std::size_t chunk = kDefaultChunkSize;
  unsigned par = 0;
  bool as_json = false, local = false;

  auto* validate_cmd = app.add_subcommand("validate", "Check a program document and print its violations");
  validate_cmd->add_option("program", program_path, "Program JSON")->required();
  validate_cmd->add_flag("--json", as_json, "Print the report as JSON");

  auto* id_cmd = app.add_subcommand("id", "Print the content id of a program");
  id_cmd->add_option("program", program_path, "Program JSON")->required();

  auto add_backend_options = [&](CLI::App* cmd) {
    cmd->add_option("--server", server, "Server URL, e.g. http://127.0.0.1:8080 (default: $DPP_SERVER)");
    cmd->add_flag("--local", local, "Run in this process even if DPP_SERVER is set");
    cmd->add_option("--par", par, "Local parallelism (0: all hardware threads)");
  };

  auto* run_cmd = app.add_subcommand("run", "Run a program over stream files");
  run_cmd->add_option("program", program_path, "Program JSON")->required();
  run_cmd->add_option("--in", ins, "<stream>=<file>, one per free input")->take_all();
  run_cmd->add_option("--out", outs, "<stream>=<file> for outputs to keep")->take_all();
  run_cmd->add_option("--chunk", chunk, "Work-items per chunk")->check(CLI::PositiveNumber);
  add_backend_options(run_cmd);

  ServerConfig cfg;
  std::uint16_t port = 8080;
  std::string port_range;
  auto* serve_cmd = app.add_subcommand("serve", "Start the server");
  serve_cmd->add_option("--host", cfg.host, "Address to bind");
  serve_cmd->add_option("--port", port, "Control (HTTP) port");
  serve_cmd->add_option("--data-port-range", port_range, "Data ports as <low>-<high> (default: ephemeral)");
  serve_cmd->add_option("--store-dir", cfg.store_dir, "Directory for stored programs");
  serve_cmd->add_option("--workers", cfg.workers, "Worker threads (0: one per hardware thread)");
  serve_cmd->add_option("--max-runs", cfg.max_open_runs, "Open runs allowed at once");

  auto* info_cmd = app.add_subcommand("info", "Print the status of a server");
  info_cmd->add_option("--server", server, "Server URL (default: $DPP_SERVER)");

  std::size_t n = 0;
  int k = 3;
  std::string in_path, out_path;
  auto* fft_cmd = app.add_subcommand("fft", "FFT of a float2 stream file");
  fft_cmd->add_option("--n", n, "Transform size (power of two)")->required();
  fft_cmd->add_option("--k", k, "Leaf DFT order: leaves of size 2^k")->check(CLI::Range(1, 3));
  fft_cmd->add_option("--in", in_path, "Input stream file (float2)")->required();
  fft_cmd->add_option("--out", out_path, "Output stream file")->required();
  fft_cmd->add_option("--chunk", chunk, "Leaf DFTs per chunk")->check(CLI::PositiveNumber);
  add_backend_options(fft_cmd);

  std::string sizes = "20K..10M";
  int points = 9, repeats = 1;
  std::vector<int> ks{1, 2, 3};
  std::vector<std::string> backends{"local", "cpu"};
  auto* bench_cmd = app.add_subcommand("fft-bench", "Time leaf DFT streams; prints CSV");
  bench_cmd->add_option("--sizes", sizes, "Range lo..hi (log-spaced) or comma list; K/M/G are decimal");
  bench_cmd->add_option("--points", points, "Sizes in a lo..hi range");
  bench_cmd->add_option("--k", ks, "Leaf orders")->delimiter(',');
  bench_cmd->add_option("--backend", backends, "cpu, local, remote")->delimiter(',');
  bench_cmd->add_option("--server", server, "Server URL for the remote backend (default: $DPP_SERVER)");
  bench_cmd->add_option("--par", par, "Local parallelism (0: all hardware threads)");
  bench_cmd->add_option("--chunk", chunk, "Leaf DFTs per chunk")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--repeats", repeats, "Report the best of this many runs")->check(CLI::PositiveNumber);

  std::size_t codebook = 256;
  std::uint64_t seed = 1;
  bool report = false;
  int size = 512;
  std::string psnr_a, psnr_b;
  auto* imgc = app.add_subcommand("imgc", "Block-VQ image codec");
  imgc->require_subcommand(1);
  auto* compress_cmd = imgc->add_subcommand("compress", "PPM -> compressed image");
  compress_cmd->add_option("--in", in_path, "Input PPM (P6)")->required();
  compress_cmd->add_option("--out", out_path, "Output file")->required();
  compress_cmd->add_option("--codebook", codebook, "Codebook size")->check(CLI::Range(1, 256));
  compress_cmd->add_option("--seed", seed, "k-means seed");
  compress_cmd->add_flag("--report", report, "Print size ratio and PSNR to stderr");
  add_backend_options(compress_cmd);
  auto* decompress_cmd = imgc->add_subcommand("decompress", "Compressed image -> PPM");
  decompress_cmd->add_option("--in", in_path, "Compressed file")->required();
  decompress_cmd->add_option("--out", out_path, "Output PPM")->required();
  auto* fixture_cmd = imgc->add_subcommand("fixture", "Write the procedural test picture");
  fixture_cmd->add_option("--out", out_path, "Output PPM")->required();
  fixture_cmd->add_option("--size", size, "Width and height")->check(CLI::Range(4, 8192));
  fixture_cmd->add_option("--seed", seed, "Picture seed");
  auto* psnr_cmd = imgc->add_subcommand("psnr", "PSNR between two PPM files");
  psnr_cmd->add_option("a", psnr_a)->required();
  psnr_cmd->add_option("b", psnr_b)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kInvalid;
  }
  if (local) server.clear();

  if (*validate_cmd) return cmd_validate(program_path, as_json);
  if (*id_cmd) {
    std::cout << program_id(load_program(program_path)) << "\n";
    return kOk;
  }
  if (*run_cmd) return cmd_run(program_path, ins, outs, server, chunk, par);
  if (*serve_cmd) return cmd_serve(cfg, port, port_range);
  if (*info_cmd) return cmd_info(server);
  if (*fft_cmd) return cmd_fft(n, k, in_path, out_path, server, chunk, par);
  if (*bench_cmd) return cmd_fft_bench(sizes, points, ks, backends, server, par, chunk, repeats);
  if (*compress_cmd) return cmd_compress(in_path, out_path, codebook, seed, server, par, report);
  if (*decompress_cmd) return cmd_decompress(in_path, out_path);
  if (*fixture_cmd) {
    apps::write_ppm(out_path, apps::procedural_image(size, size, seed));
    return kOk;
  }
  if (*psnr_cmd) return cmd_psnr(psnr_a, psnr_b);
  return kInvalid;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what();
    return kInvalid;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
}
