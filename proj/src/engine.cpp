#include "dpp/engine.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <deque>
#include <future>
#include <limits>
#include <mutex>
#include <numeric>
#include <set>

#include "dpp/error.hpp"

namespace dpp {

namespace {

Rational reduce(std::int64_t num, std::int64_t den) {
  std::int64_t g = std::gcd(num, den);
  return {num / g, den / g};
}

Rational scale(Rational r, std::int64_t mul, std::int64_t div) { return reduce(r.num * mul, r.den * div); }

std::string instance_label(const InstancePlan& ip) {
  return "instance " + std::to_string(ip.id) + " (" + ip.kernel_name + ")";
}

}  // namespace

std::optional<std::vector<std::size_t>> ExecutionPlan::work_items_for(std::size_t base) const {
  std::vector<std::size_t> counts;
  counts.reserve(instances.size());
  for (const auto& ip : instances) {
    auto scaled = static_cast<std::uint64_t>(base) * static_cast<std::uint64_t>(ip.multiplier.num);
    if (scaled % static_cast<std::uint64_t>(ip.multiplier.den) != 0) return std::nullopt;
    counts.push_back(static_cast<std::size_t>(scaled / static_cast<std::uint64_t>(ip.multiplier.den)));
  }
  return counts;
}

std::size_t ExecutionPlan::work_items(InstanceId id) const {
  auto counts = work_items_for(chunk_size);
  for (std::size_t k = 0; k < instances.size(); ++k) {
    if (instances[k].id == id) return (*counts)[k];
  }
  throw std::out_of_range("unknown instance " + std::to_string(id));
}

ExecutionPlan plan(const Program& program, std::size_t chunk_size) {
  if (chunk_size == 0) throw EngineError("chunk size must be at least 1");
  auto report = validate(program);
  if (!report.ok()) throw EngineError("program is not valid:\n" + report.to_string());

  ExecutionPlan p;
  p.program = program;
  p.chunk_size = chunk_size;
  p.order = topological_order(program);
  for (const auto& f : free_points(program)) {
    (f.direction == Direction::Input ? p.free_inputs : p.free_outputs).push_back(f);
  }

  std::map<std::string, std::shared_ptr<const kernel::TypedKernel>> compiled;
  for (const auto& [name, node] : program.kernels) {
    auto points = node.points();
    compiled[name] = std::make_shared<const kernel::TypedKernel>(kernel::compile_kernel(node.body, points));
  }

  std::map<Endpoint, const Arrow*> arrow_into;
  std::set<Endpoint> has_arrow_out;
  for (const auto& a : program.arrows) {
    arrow_into[a.input] = &a;
    has_arrow_out.insert(a.output);
  }

  // (instance, output point) -> slot, and the producing instance's multiplier.
  std::map<Endpoint, std::size_t> slot_of;
  std::map<InstanceId, Rational> multiplier_of;

  for (InstanceId id : p.order) {
    const Instance* inst = program.find_instance(id);
    InstancePlan ip;
    ip.id = id;
    ip.kernel_name = inst->kernel;
    ip.kernel = compiled.at(inst->kernel);
    std::optional<Rational> mult;
    for (std::size_t k = 0; k < ip.kernel->points.size(); ++k) {
      const IOPoint& pt = ip.kernel->points[k];
      Endpoint here{id, pt.name};
      if (pt.direction == Direction::Output) {
        InstancePlan::Output out;
        out.point = static_cast<int>(k);
        out.type = pt.data;
        out.slot = p.slot_count++;
        out.free = !has_arrow_out.count(here);
        if (out.free) out.stream = std::to_string(id) + "." + pt.name;
        slot_of[here] = out.slot;
        ip.outputs.push_back(std::move(out));
        continue;
      }
      InstancePlan::Input in;
      in.point = static_cast<int>(k);
      in.type = pt.data;
      Rational m;
      auto a = arrow_into.find(here);
      if (a == arrow_into.end()) {
        in.free = true;
        in.stream = std::to_string(id) + "." + pt.name;
        m = {1, 1};
      } else {
        const Endpoint& src = a->second->output;
        in.slot = slot_of.at(src);
        const IOPoint* src_point = program.point_at(src);
        m = scale(multiplier_of.at(src.instance), src_point->data.width, pt.data.width);
      }
      if (mult && !(*mult == m)) {
        throw EngineError("work-item count mismatch at instance " + std::to_string(id));
      }
      mult = m;
      ip.inputs.push_back(std::move(in));
    }
    ip.multiplier = mult.value_or(Rational{1, 1});
    multiplier_of[id] = ip.multiplier;
    p.instances.push_back(std::move(ip));
  }

  for (const auto& ip : p.instances) {
    if ((static_cast<std::int64_t>(chunk_size) * ip.multiplier.num) % ip.multiplier.den != 0) {
      throw EngineError("non-integral width conversion at instance " + std::to_string(ip.id) + " for chunk size " +
                        std::to_string(chunk_size));
    }
  }
  return p;
}

// ---- execution -----------------------------------------------------------------

namespace {

/// Records the first writer of every output scalar of one instance.
class RaceRecorder : public kernel::WriteObserver {
 public:
  RaceRecorder(const InstancePlan& ip, std::size_t work_items, std::vector<Race>& races) : ip_(ip), races_(races) {
    owners_.resize(ip.kernel->points.size());
    for (const auto& out : ip.outputs) {
      owners_[static_cast<std::size_t>(out.point)].assign(work_items * static_cast<std::size_t>(out.type.width), -1);
    }
  }

  void set_work_item(std::int64_t item) { item_ = item; }

  void on_write(int point, std::size_t scalar_index) override {
    auto& owner = owners_[static_cast<std::size_t>(point)][scalar_index];
    if (owner == -1) {
      owner = item_;
    } else if (owner != item_ && owner >= 0) {
      races_.push_back({ip_.id, ip_.kernel->points[static_cast<std::size_t>(point)].name, scalar_index, owner, item_});
      owner = -2;  // report each scalar once
    }
  }

 private:
  const InstancePlan& ip_;
  std::vector<Race>& races_;
  std::vector<std::vector<std::int64_t>> owners_;
  std::int64_t item_ = 0;
};

std::size_t check_input(const ExecutionPlan& plan, const Chunk& input) {
  std::optional<std::size_t> count;
  for (const auto& f : plan.free_inputs) {
    auto name = f.stream_name();
    auto it = input.streams.find(name);
    if (it == input.streams.end()) {
      throw EngineError("chunk " + std::to_string(input.index) + ": missing input stream '" + name + "'");
    }
    if (it->second.type != f.data) {
      throw EngineError("chunk " + std::to_string(input.index) + ": stream '" + name + "' has type " +
                        it->second.type.name() + ", expected " + f.data.name());
    }
    if (count && *count != it->second.elements()) {
      throw EngineError("chunk " + std::to_string(input.index) + ": input streams carry different element counts");
    }
    count = it->second.elements();
  }
  for (const auto& [name, _] : input.streams) {
    bool known = std::any_of(plan.free_inputs.begin(), plan.free_inputs.end(),
                             [&](const FreePoint& f) { return f.stream_name() == name; });
    if (!known) throw EngineError("chunk " + std::to_string(input.index) + ": unknown input stream '" + name + "'");
  }
  return count.value_or(0);
}

Chunk execute(const ExecutionPlan& plan, const Chunk& input, WorkerPool* pool, std::vector<Race>* races) {
  const std::size_t base = check_input(plan, input);
  auto counts = plan.work_items_for(base);
  if (!counts) {
    throw EngineError("chunk " + std::to_string(input.index) + ": non-integral width conversion for " +
                      std::to_string(base) + " work-items");
  }

  std::vector<Buffer> slots(plan.slot_count);
  for (std::size_t n = 0; n < plan.instances.size(); ++n) {
    const InstancePlan& ip = plan.instances[n];
    const std::size_t items = (*counts)[n];
    const kernel::TypedKernel& kern = *ip.kernel;

    kernel::WorkItemContext proto(kern);
    proto.work_items = static_cast<std::int64_t>(items);
    proto.instruction_budget = plan.instruction_budget;
    for (const auto& in : ip.inputs) {
      const auto& bytes = in.free ? input.streams.at(in.stream).bytes : slots[in.slot].bytes;
      proto.inputs[static_cast<std::size_t>(in.point)] = ConstBufferView{in.type, bytes};
    }
    for (const auto& out : ip.outputs) {
      slots[out.slot] = Buffer(out.type, items);
      proto.outputs[static_cast<std::size_t>(out.point)] = view(slots[out.slot]);
    }

    // Lowest failing work-item wins, so the reported error does not depend on scheduling.
    std::mutex fail_mu;
    std::int64_t fail_item = std::numeric_limits<std::int64_t>::max();
    std::string fail_msg;
    std::atomic<bool> failed{false};

    auto run_block = [&](std::size_t begin, std::size_t end, kernel::WriteObserver* observer, RaceRecorder* rec) {
      if (failed.load(std::memory_order_relaxed)) return;
      kernel::Evaluator ev(kern);
      kernel::WorkItemContext ctx = proto;
      ctx.observer = observer;
      for (std::size_t item = begin; item < end; ++item) {
        ctx.global_id = static_cast<std::int64_t>(item);
        if (rec) rec->set_work_item(ctx.global_id);
        try {
          ev.run(ctx);
        } catch (const EvalError& e) {
          std::lock_guard lock(fail_mu);
          if (ctx.global_id < fail_item) {
            fail_item = ctx.global_id;
            fail_msg = e.what();
          }
          failed = true;
          return;
        }
      }
    };

    if (races) {
      RaceRecorder rec(ip, items, *races);
      run_block(0, items, &rec, &rec);
    } else if (pool) {
      const std::size_t parts = static_cast<std::size_t>(pool->parallelism()) * 4;
      const std::size_t grain = std::max<std::size_t>(64, (items + parts - 1) / parts);
      pool->parallel_for(items, grain, [&](std::size_t b, std::size_t e) { run_block(b, e, nullptr, nullptr); });
    } else {
      run_block(0, items, nullptr, nullptr);
    }

    if (failed) {
      throw EngineError("chunk " + std::to_string(input.index) + ", " + instance_label(ip) + ", work-item " +
                        std::to_string(fail_item) + ": " + fail_msg);
    }
  }

  Chunk out;
  out.index = input.index;
  for (const auto& ip : plan.instances) {
    for (const auto& o : ip.outputs) {
      if (o.free) out.streams.emplace(o.stream, std::move(slots[o.slot]));
    }
  }
  return out;
}

}  // namespace

Chunk run_chunk(const ExecutionPlan& plan, const Chunk& input, WorkerPool& pool) {
  return execute(plan, input, &pool, nullptr);
}

Chunk run_chunk(const ExecutionPlan& plan, const Chunk& input, unsigned parallelism) {
  if (parallelism <= 1) return execute(plan, input, nullptr, nullptr);
  WorkerPool pool(parallelism - 1);
  return execute(plan, input, &pool, nullptr);
}

RaceReport race_check(const ExecutionPlan& plan, const Chunk& input) {
  RaceReport report;
  execute(plan, input, nullptr, &report.races);
  return report;
}

RunResult run_stream(const ExecutionPlan& plan, const ChunkReader& reader, const ChunkWriter& writer, WorkerPool& pool,
                     std::size_t max_in_flight) {
  using Clock = std::chrono::steady_clock;
  if (max_in_flight == 0) max_in_flight = 2 * std::max(1u, pool.workers());

  RunResult result;
  std::uint64_t expected_index = 0;
  bool saw_short = false;

  auto admit = [&](const Chunk& c) {
    if (c.index != expected_index) {
      throw EngineError("chunk " + std::to_string(c.index) + " arrived out of order (expected " +
                        std::to_string(expected_index) + ")");
    }
    if (saw_short) throw EngineError("chunk " + std::to_string(c.index) + " follows a short chunk");
    std::size_t n = check_input(plan, c);
    if (n > plan.chunk_size) {
      throw EngineError("chunk " + std::to_string(c.index) + " has " + std::to_string(n) +
                        " work-items, more than the chunk size " + std::to_string(plan.chunk_size));
    }
    if (n < plan.chunk_size) saw_short = true;
    ++expected_index;
    result.total_work_items += n;
    ++result.chunks;
  };

  if (pool.workers() == 0) {
    while (auto c = reader()) {
      admit(*c);
      auto t0 = Clock::now();
      Chunk out = execute(plan, *c, nullptr, nullptr);
      result.chunk_seconds.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
      writer(std::move(out));
    }
    return result;
  }

  struct Pending {
    std::future<std::pair<Chunk, double>> future;
  };
  std::deque<Pending> window;

  auto finish_oldest = [&] {
    auto fut = std::move(window.front().future);
    window.pop_front();
    auto [chunk, seconds] = fut.get();
    result.chunk_seconds.push_back(seconds);
    writer(std::move(chunk));
  };

  try {
    while (auto c = reader()) {
      admit(*c);
      while (window.size() >= max_in_flight) finish_oldest();
      window.push_back({pool.submit([&plan, &pool, chunk = std::move(*c)]() {
        auto t0 = Clock::now();
        Chunk out = execute(plan, chunk, &pool, nullptr);
        return std::make_pair(std::move(out), std::chrono::duration<double>(Clock::now() - t0).count());
      })});
    }
    while (!window.empty()) finish_oldest();
  } catch (...) {
    // In-flight jobs reference `plan` and `pool`; let them finish before unwinding.
    for (auto& p : window) {
      if (p.future.valid()) p.future.wait();
    }
    throw;
  }
  return result;
}

RunResult run_stream(const ExecutionPlan& plan, const ChunkReader& reader, const ChunkWriter& writer,
                     const RunOptions& options) {
  unsigned par = options.parallelism == 0 ? WorkerPool::hardware_threads() : options.parallelism;
  WorkerPool pool(par <= 1 ? 0 : par);
  return run_stream(plan, reader, writer, pool, options.max_in_flight);
}

RunResult run_stream(const ExecutionPlan& plan, std::vector<Chunk> inputs, const RunOptions& options) {
  std::size_t next = 0;
  std::vector<Chunk> outputs;
  auto result = run_stream(
      plan,
      [&]() -> std::optional<Chunk> {
        if (next >= inputs.size()) return std::nullopt;
        return std::move(inputs[next++]);
      },
      [&](Chunk&& c) { outputs.push_back(std::move(c)); }, options);
  result.outputs = std::move(outputs);
  return result;
}

// ---- stream helpers ------------------------------------------------------------

namespace {

std::size_t check_streams(const ExecutionPlan& plan, const std::map<std::string, Buffer>& streams) {
  std::optional<std::size_t> count;
  for (const auto& f : plan.free_inputs) {
    auto it = streams.find(f.stream_name());
    if (it == streams.end()) throw EngineError("missing input stream '" + f.stream_name() + "'");
    if (it->second.type != f.data) {
      throw EngineError("input stream '" + f.stream_name() + "' has type " + it->second.type.name() + ", expected " +
                        f.data.name());
    }
    if (count && *count != it->second.elements()) {
      throw EngineError("input streams must carry the same number of elements");
    }
    count = it->second.elements();
  }
  for (const auto& [name, _] : streams) {
    bool known = std::any_of(plan.free_inputs.begin(), plan.free_inputs.end(),
                             [&](const FreePoint& f) { return f.stream_name() == name; });
    if (!known) throw EngineError("unknown input stream '" + name + "'");
  }
  return count.value_or(0);
}

Chunk slice(const std::map<std::string, Buffer>& streams, std::uint64_t index, std::size_t begin, std::size_t end) {
  Chunk c;
  c.index = index;
  for (const auto& [name, buf] : streams) {
    const std::size_t es = buf.type.byte_size();
    std::vector<std::byte> part(buf.bytes.begin() + static_cast<std::ptrdiff_t>(begin * es),
                                buf.bytes.begin() + static_cast<std::ptrdiff_t>(end * es));
    c.streams.emplace(name, Buffer(buf.type, std::move(part)));
  }
  return c;
}

}  // namespace

std::vector<Chunk> split_streams(const ExecutionPlan& plan, const std::map<std::string, Buffer>& streams) {
  std::vector<Chunk> out;
  auto reader = stream_reader(plan, streams);
  while (auto c = reader()) out.push_back(std::move(*c));
  return out;
}

ChunkReader stream_reader(const ExecutionPlan& plan, const std::map<std::string, Buffer>& streams) {
  const std::size_t total = check_streams(plan, streams);
  const std::size_t w = plan.chunk_size;
  return [&streams, total, w, next = std::size_t{0}, index = std::uint64_t{0}]() mutable -> std::optional<Chunk> {
    if (next >= total) return std::nullopt;
    std::size_t end = std::min(total, next + w);
    Chunk c = slice(streams, index++, next, end);
    next = end;
    return c;
  };
}

std::map<std::string, Buffer> join_chunks(const ExecutionPlan& plan, const std::vector<Chunk>& chunks) {
  std::map<std::string, Buffer> out;
  for (const auto& f : plan.free_outputs) out.emplace(f.stream_name(), Buffer(f.data, 0));
  for (const auto& c : chunks) {
    for (auto& [name, buf] : out) {
      const auto& part = c.streams.at(name).bytes;
      buf.bytes.insert(buf.bytes.end(), part.begin(), part.end());
    }
  }
  return out;
}

}  // namespace dpp
