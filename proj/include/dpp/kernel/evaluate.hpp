#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "dpp/buffer.hpp"
#include "dpp/kernel/typecheck.hpp"

namespace dpp::kernel {

inline constexpr std::uint64_t kDefaultInstructionBudget = 10'000'000;

/// Receives one call per scalar written to an output point.
class WriteObserver {
 public:
  virtual ~WriteObserver() = default;
  virtual void on_write(int point, std::size_t scalar_index) = 0;
};

/// Everything one work-item can see. Buffers are indexed like TypedKernel::points:
/// `inputs[p]` is used when point p is an input, `outputs[p]` when it is an output.
struct WorkItemContext {
  std::int64_t global_id = 0;
  std::int64_t work_items = 0;
  std::vector<ConstBufferView> inputs;
  std::vector<BufferView> outputs;
  std::uint64_t instruction_budget = kDefaultInstructionBudget;
  WriteObserver* observer = nullptr;

  explicit WorkItemContext(const TypedKernel& kernel)
      : inputs(kernel.points.size()), outputs(kernel.points.size()) {}

  void bind_input(const TypedKernel& kernel, std::string_view point, ConstBufferView buffer);
  void bind_output(const TypedKernel& kernel, std::string_view point, BufferView buffer);
};

/// Runs kernels one work-item at a time, reusing its local-variable frame.
/// Not thread-safe; use one Evaluator per thread.
class Evaluator {
 public:
  explicit Evaluator(const TypedKernel& kernel);

  void run(WorkItemContext& ctx);

 private:
  void exec(const Stmt& s);
  void eval(const Expr& e, Value& out);
  void store(const LValue& target, const Value& v);
  bool condition(const Expr& e);

  const TypedKernel& kernel_;
  std::vector<Value> frame_;
  WorkItemContext* ctx_ = nullptr;
  std::uint64_t steps_ = 0;
};

/// Executes the kernel body once for `ctx.global_id`.
/// Throws EvalError on out-of-range access, integer division by zero, or budget exhaustion.
void evaluate(const TypedKernel& kernel, WorkItemContext& ctx);

}  // namespace dpp::kernel
