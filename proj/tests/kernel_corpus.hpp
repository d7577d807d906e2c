#pragma once

// Runner for tests/fixtures/kernels.json. Each case gives a body and an io
// signature ("float2<" is an input, "int>" an output) plus one expected outcome:
// "compile_error" (substring of the diagnostic), "run_error" (substring of the
// evaluation error), "out" (scalars per output point, optional "tol"), or "app"
// (a generated application kernel that must typecheck).

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dpp/apps/codec.hpp"
#include "dpp/apps/fft.hpp"
#include "dpp/buffer.hpp"
#include "dpp/kernel/evaluate.hpp"
#include "dpp/kernel/typecheck.hpp"
#include "support.hpp"

namespace dpp::test {

struct CorpusResult {
  std::string name;
  bool ok = false;
  std::string detail;
};

inline std::vector<IOPoint> corpus_io(const nlohmann::json& io) {
  std::vector<IOPoint> out;
  for (const auto& [name, spec] : io.items()) {
    std::string s = spec.get<std::string>();
    Direction dir = s.back() == '<' ? Direction::Input : Direction::Output;
    auto dt = parse_data_type(s.substr(0, s.size() - 1));
    if (!dt) throw std::runtime_error("bad corpus type " + s);
    out.push_back({name, *dt, dir});
  }
  return out;
}

inline void put_scalar(Buffer& b, std::size_t index, const nlohmann::json& v) {
  std::size_t size = scalar_size(b.type.base);
  std::byte* dst = b.bytes.data() + index * size;
  if (b.type.is_float()) {
    float f = static_cast<float>(v.get<double>());
    std::memcpy(dst, &f, sizeof f);
  } else {
    std::uint64_t u = v.is_number_unsigned() ? v.get<std::uint64_t>() : static_cast<std::uint64_t>(v.get<std::int64_t>());
    std::memcpy(dst, &u, size);
  }
}

inline double get_scalar(const Buffer& b, std::size_t index) {
  std::size_t size = scalar_size(b.type.base);
  const std::byte* src = b.bytes.data() + index * size;
  if (b.type.is_float()) {
    float f;
    std::memcpy(&f, src, sizeof f);
    return f;
  }
  std::uint64_t u = 0;
  std::memcpy(&u, src, size);
  if (is_signed(b.type.base) && size < 8 && (u >> (size * 8 - 1)) & 1) u |= ~std::uint64_t{0} << (size * 8);
  return is_signed(b.type.base) ? static_cast<double>(static_cast<std::int64_t>(u)) : static_cast<double>(u);
}

inline Node corpus_app_node(const std::string& app) {
  if (app.rfind("fft_leaf:", 0) == 0) return apps::leaf_kernel(std::stoi(app.substr(9)));
  if (app.rfind("analysis:", 0) == 0) return apps::analysis_program(16, 8).kernels.at(app.substr(9));
  if (app == "vq") {
    apps::Codebook cb;
    cb.centroids.resize(4);
    for (std::size_t c = 0; c < 4; ++c) {
      for (std::size_t j = 0; j < 16; ++j) cb.centroids[c][j] = static_cast<float>((c + 1) * (j % 3)) - 1.0f;
    }
    return apps::encode_program(cb).kernels.at("vq");
  }
  throw std::runtime_error("unknown corpus app " + app);
}

/// Evaluates work-items in ascending order, or descending when `reverse` is set.
inline std::map<std::string, Buffer> corpus_run(const kernel::TypedKernel& k, const nlohmann::json& c, bool reverse) {
  std::int64_t n = c.at("n").get<std::int64_t>();
  std::map<std::string, Buffer> bufs;
  for (const auto& p : k.points) {
    Buffer b(p.data, static_cast<std::size_t>(n));
    if (p.direction == Direction::Input) {
      const auto& vals = c.at("in").at(p.name);
      if (vals.size() != b.scalars()) throw std::runtime_error("input '" + p.name + "' has the wrong scalar count");
      for (std::size_t s = 0; s < vals.size(); ++s) put_scalar(b, s, vals[s]);
    }
    bufs.emplace(p.name, std::move(b));
  }
  kernel::WorkItemContext ctx(k);
  ctx.work_items = n;
  for (auto& [name, b] : bufs) {
    if (k.points[static_cast<std::size_t>(k.point_index(name))].direction == Direction::Input) {
      ctx.bind_input(k, name, view(b));
    } else {
      ctx.bind_output(k, name, view(b));
    }
  }
  kernel::Evaluator ev(k);
  for (std::int64_t w = 0; w < n; ++w) {
    ctx.global_id = reverse ? n - 1 - w : w;
    ev.run(ctx);
  }
  return bufs;
}

inline CorpusResult corpus_check(const nlohmann::json& c) {
  CorpusResult r;
  r.name = c.at("name").get<std::string>();
  try {
    if (c.contains("app")) {
      Node node = corpus_app_node(c["app"].get<std::string>());
      kernel::compile_kernel(node.body, node.points());
      r.ok = true;
      return r;
    }
    auto io = corpus_io(c.at("io"));
    kernel::TypedKernel k;
    try {
      k = kernel::compile_kernel(c.at("body").get<std::string>(), io);
    } catch (const KernelError& e) {
      if (!c.contains("compile_error")) {
        r.detail = std::string("unexpected compile error: ") + e.what();
        return r;
      }
      r.ok = std::string(e.what()).find(c["compile_error"].get<std::string>()) != std::string::npos;
      if (!r.ok) r.detail = std::string("wrong diagnostic: ") + e.what();
      return r;
    }
    if (c.contains("compile_error")) {
      r.detail = "compiled, expected a diagnostic";
      return r;
    }
    if (c.contains("run_error")) {
      try {
        corpus_run(k, c, false);
        r.detail = "ran, expected an evaluation error";
      } catch (const EvalError& e) {
        r.ok = std::string(e.what()).find(c["run_error"].get<std::string>()) != std::string::npos;
        if (!r.ok) r.detail = std::string("wrong error: ") + e.what();
      }
      return r;
    }
    double tol = c.value("tol", 0.0);
    auto forward = corpus_run(k, c, false);
    auto backward = corpus_run(k, c, true);
    for (const auto& [name, expect] : c.at("out").items()) {
      const Buffer& b = forward.at(name);
      if (!(backward.at(name) == b)) {
        r.detail = "point '" + name + "' depends on work-item order";
        return r;
      }
      if (expect.size() != b.scalars()) {
        r.detail = "point '" + name + "' has the wrong scalar count";
        return r;
      }
      for (std::size_t s = 0; s < expect.size(); ++s) {
        double want = b.type.is_float() ? static_cast<double>(static_cast<float>(expect[s].get<double>()))
                                        : expect[s].get<double>();
        double got = get_scalar(b, s);
        if (!(std::fabs(got - want) <= tol)) {
          r.detail = "point '" + name + "' scalar " + std::to_string(s) + ": got " + std::to_string(got) +
                     ", want " + std::to_string(want);
          return r;
        }
      }
    }
    r.ok = true;
  } catch (const std::exception& e) {
    r.detail = std::string("unexpected error: ") + e.what();
  }
  return r;
}

inline std::vector<CorpusResult> run_kernel_corpus() {
  auto cases = nlohmann::json::parse(fixture_text("kernels.json"));
  std::vector<CorpusResult> out;
  for (const auto& c : cases) out.push_back(corpus_check(c));
  return out;
}

}  // namespace dpp::test
