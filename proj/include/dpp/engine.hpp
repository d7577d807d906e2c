#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dpp/buffer.hpp"
#include "dpp/kernel/evaluate.hpp"
#include "dpp/program.hpp"
#include "dpp/worker_pool.hpp"

namespace dpp {

inline constexpr std::size_t kDefaultChunkSize = 4096;

/// Positive rational, kept reduced.
struct Rational {
  std::int64_t num = 1;
  std::int64_t den = 1;

  friend bool operator==(const Rational&, const Rational&) = default;
};

struct InstancePlan {
  struct Input {
    int point = -1;           // index into kernel->points
    DataType type;            // the consumer's view of the data
    bool free = false;
    std::string stream;       // free: stream name
    std::size_t slot = 0;     // bound: producer's output slot
  };
  struct Output {
    int point = -1;
    DataType type;
    std::size_t slot = 0;
    bool free = false;
    std::string stream;
  };

  InstanceId id = 0;
  std::string kernel_name;
  std::shared_ptr<const kernel::TypedKernel> kernel;
  Rational multiplier;  // work-items relative to the chunk's base work-item count
  std::vector<Input> inputs;
  std::vector<Output> outputs;
};

/// Everything needed to run chunks of a validated program.
struct ExecutionPlan {
  Program program;
  std::vector<InstanceId> order;
  std::vector<InstancePlan> instances;  // in execution order
  std::vector<FreePoint> free_inputs;
  std::vector<FreePoint> free_outputs;
  std::size_t chunk_size = kDefaultChunkSize;
  std::size_t slot_count = 0;
  std::uint64_t instruction_budget = kernel::kDefaultInstructionBudget;

  /// Per-instance work-item counts (execution order) for a chunk of `base` work-items,
  /// or nullopt when some width conversion is not integral.
  std::optional<std::vector<std::size_t>> work_items_for(std::size_t base) const;

  /// Work-items of one instance for a full chunk.
  std::size_t work_items(InstanceId id) const;
};

/// Builds the plan. Throws EngineError if the program does not validate, if the
/// inputs of an instance disagree on their work-item count, or if a width
/// conversion is not integral at `chunk_size`.
ExecutionPlan plan(const Program& program, std::size_t chunk_size = kDefaultChunkSize);

/// One block of work-items: a buffer per stream name.
struct Chunk {
  std::uint64_t index = 0;
  std::map<std::string, Buffer> streams;

  std::size_t elements(const std::string& stream) const { return streams.at(stream).elements(); }

  friend bool operator==(const Chunk&, const Chunk&) = default;
};

/// Runs every instance of the plan over one input chunk.
Chunk run_chunk(const ExecutionPlan& plan, const Chunk& input, WorkerPool& pool);
Chunk run_chunk(const ExecutionPlan& plan, const Chunk& input, unsigned parallelism = 1);

using ChunkReader = std::function<std::optional<Chunk>()>;
using ChunkWriter = std::function<void(Chunk&&)>;

struct RunResult {
  std::vector<Chunk> outputs;  // only filled by the collecting overload
  std::vector<double> chunk_seconds;
  std::uint64_t total_work_items = 0;
  std::size_t chunks = 0;
};

struct RunOptions {
  unsigned parallelism = 0;       // 0: hardware threads
  std::size_t max_in_flight = 0;  // 0: twice the worker count
};

/// Pulls chunks from `reader`, runs up to `max_in_flight` of them concurrently on
/// `pool`, and hands outputs to `writer` in input order. A failing chunk aborts
/// the stream with an EngineError naming the chunk.
RunResult run_stream(const ExecutionPlan& plan, const ChunkReader& reader, const ChunkWriter& writer, WorkerPool& pool,
                     std::size_t max_in_flight = 0);
RunResult run_stream(const ExecutionPlan& plan, const ChunkReader& reader, const ChunkWriter& writer,
                     const RunOptions& options = {});
RunResult run_stream(const ExecutionPlan& plan, std::vector<Chunk> inputs, const RunOptions& options = {});

struct Race {
  InstanceId instance = 0;
  std::string point;
  std::size_t scalar_index = 0;
  std::int64_t first_work_item = 0;
  std::int64_t second_work_item = 0;
};

struct RaceReport {
  std::vector<Race> races;
  bool clean() const { return races.empty(); }
};

/// Sequential run that records which work-item wrote each output scalar.
RaceReport race_check(const ExecutionPlan& plan, const Chunk& input);

/// Cuts whole input streams into chunks of plan.chunk_size work-items.
/// Throws EngineError if the stream set or types do not match the free inputs.
std::vector<Chunk> split_streams(const ExecutionPlan& plan, const std::map<std::string, Buffer>& streams);

/// Lazy version of split_streams; `streams` must outlive the reader.
ChunkReader stream_reader(const ExecutionPlan& plan, const std::map<std::string, Buffer>& streams);

/// Concatenates output chunks per free output stream.
std::map<std::string, Buffer> join_chunks(const ExecutionPlan& plan, const std::vector<Chunk>& chunks);

}  // namespace dpp
