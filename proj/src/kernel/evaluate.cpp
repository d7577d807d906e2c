#include "dpp/kernel/evaluate.hpp"

#include <string>

#include "ops.hpp"

namespace dpp::kernel {

namespace {

int require_point(const TypedKernel& kernel, std::string_view name, Direction dir) {
  int p = kernel.point_index(name);
  if (p < 0) throw EvalError("kernel has no point named '" + std::string(name) + "'");
  if (kernel.points[static_cast<std::size_t>(p)].direction != dir) {
    throw EvalError("point '" + std::string(name) + "' has the wrong direction for this binding");
  }
  return p;
}

std::size_t checked_index(const Value& v, DataType index_type, std::size_t bound, const IOPoint& point) {
  const Lane& l = v.lanes[0];
  bool negative = is_signed(index_type.base) && l.i < 0;
  if (negative || l.u >= bound) {
    std::string shown = is_signed(index_type.base) ? std::to_string(l.i) : std::to_string(l.u);
    throw EvalError("index " + shown + " out of range for point '" + point.name + "' (bound " +
                    std::to_string(bound) + ")");
  }
  return static_cast<std::size_t>(l.u);
}

}  // namespace

void WorkItemContext::bind_input(const TypedKernel& kernel, std::string_view point, ConstBufferView buffer) {
  inputs[static_cast<std::size_t>(require_point(kernel, point, Direction::Input))] = buffer;
}

void WorkItemContext::bind_output(const TypedKernel& kernel, std::string_view point, BufferView buffer) {
  outputs[static_cast<std::size_t>(require_point(kernel, point, Direction::Output))] = buffer;
}

Evaluator::Evaluator(const TypedKernel& kernel) : kernel_(kernel), frame_(kernel.locals.size()) {}

void Evaluator::run(WorkItemContext& ctx) {
  if (ctx.inputs.size() != kernel_.points.size() || ctx.outputs.size() != kernel_.points.size()) {
    throw EvalError("work-item context does not match the kernel's io signature");
  }
  ctx_ = &ctx;
  steps_ = 0;
  for (const auto& s : kernel_.ast.statements) exec(*s);
  ctx_ = nullptr;
}

void Evaluator::exec(const Stmt& s) {
  if (++steps_ > ctx_->instruction_budget) {
    throw EvalError("instruction budget of " + std::to_string(ctx_->instruction_budget) + " exceeded");
  }
  switch (s.kind) {
    case StmtKind::Decl: {
      Value& slot = frame_[static_cast<std::size_t>(s.slot)];
      if (s.init) {
        eval(*s.init, slot);
      } else {
        slot = Value{};
      }
      return;
    }
    case StmtKind::Assign: {
      Value v;
      eval(*s.value, v);
      store(s.target, v);
      return;
    }
    case StmtKind::If:
      if (condition(*s.cond)) {
        exec(*s.then_branch);
      } else if (s.else_branch) {
        exec(*s.else_branch);
      }
      return;
    case StmtKind::For:
      if (s.for_init) exec(*s.for_init);
      while (condition(*s.cond)) {
        exec(*s.body);
        exec(*s.for_step);
      }
      return;
    case StmtKind::Block:
      for (const auto& c : s.statements) exec(*c);
      return;
  }
}

bool Evaluator::condition(const Expr& e) {
  Value v;
  eval(e, v);
  return ops::truthy(v, e.type);
}

void Evaluator::store(const LValue& target, const Value& v) {
  if (target.slot >= 0) {
    Value& slot = frame_[static_cast<std::size_t>(target.slot)];
    if (target.component >= 0) {
      slot.lanes[static_cast<std::size_t>(target.component)] = v.lanes[0];
    } else {
      slot = v;
    }
    return;
  }
  const auto p = static_cast<std::size_t>(target.point);
  const IOPoint& point = kernel_.points[p];
  BufferView& buf = ctx_->outputs[p];
  Value idx;
  eval(*target.index, idx);
  const std::size_t element = checked_index(idx, target.index->type, buf.bytes.size() / point.data.byte_size(), point);
  const std::size_t scalar = scalar_size(point.data.base);
  const auto width = static_cast<std::size_t>(point.data.width);
  std::byte* base = buf.bytes.data() + element * point.data.byte_size();
  if (target.component >= 0) {
    const auto c = static_cast<std::size_t>(target.component);
    ops::store_scalar(base + c * scalar, point.data.base, v.lanes[0]);
    if (ctx_->observer) ctx_->observer->on_write(target.point, element * width + c);
    return;
  }
  for (std::size_t k = 0; k < width; ++k) {
    ops::store_scalar(base + k * scalar, point.data.base, v.lanes[k]);
    if (ctx_->observer) ctx_->observer->on_write(target.point, element * width + k);
  }
}

void Evaluator::eval(const Expr& e, Value& out) {
  if (e.constant) {
    out = *e.constant;
    return;
  }
  switch (e.kind) {
    case ExprKind::IntLit:
    case ExprKind::FloatLit:
      return;  // always folded
    case ExprKind::Var:
      out = frame_[static_cast<std::size_t>(e.slot)];
      return;
    case ExprKind::Index: {
      const auto p = static_cast<std::size_t>(e.point);
      const IOPoint& point = kernel_.points[p];
      const ConstBufferView& buf = ctx_->inputs[p];
      Value idx;
      eval(*e.args[0], idx);
      const std::size_t element = checked_index(idx, e.args[0]->type, buf.bytes.size() / point.data.byte_size(), point);
      const std::size_t scalar = scalar_size(point.data.base);
      const std::byte* base = buf.bytes.data() + element * point.data.byte_size();
      for (int k = 0; k < point.data.width; ++k) {
        out.lanes[static_cast<std::size_t>(k)] = ops::load_scalar(base + static_cast<std::size_t>(k) * scalar, point.data.base);
      }
      return;
    }
    case ExprKind::Component: {
      Value v;
      eval(*e.args[0], v);
      out.lanes[0] = v.lanes[static_cast<std::size_t>(e.component)];
      return;
    }
    case ExprKind::Unary: {
      Value a;
      eval(*e.args[0], a);
      ops::unary(e.op, e.args[0]->type, a, out);
      return;
    }
    case ExprKind::Binary: {
      if (e.op == Op::LogAnd || e.op == Op::LogOr) {
        // Short-circuit like C.
        bool lhs = condition(*e.args[0]);
        bool result = e.op == Op::LogAnd ? (lhs && condition(*e.args[1])) : (lhs || condition(*e.args[1]));
        out.lanes[0].i = result ? 1 : 0;
        return;
      }
      Value a, b;
      eval(*e.args[0], a);
      eval(*e.args[1], b);
      switch (ops::binary(e.op, e.args[0]->type, a, b, out)) {
        case ops::Fault::None: return;
        case ops::Fault::DivideByZero: throw EvalError("integer division by zero");
        case ops::Fault::ModuloByZero: throw EvalError("integer modulo by zero");
      }
      return;
    }
    case ExprKind::Ternary:
      if (condition(*e.args[0])) {
        eval(*e.args[1], out);
      } else {
        eval(*e.args[2], out);
      }
      return;
    case ExprKind::Call: {
      if (e.builtin == Builtin::GetGlobalId) {
        out.lanes[0].i = ops::normalize(static_cast<std::uint64_t>(ctx_->global_id), ScalarType::Int);
        return;
      }
      if (e.builtin == Builtin::GetGlobalSize) {
        out.lanes[0].i = ops::normalize(static_cast<std::uint64_t>(ctx_->work_items), ScalarType::Int);
        return;
      }
      Value args[2];
      for (std::size_t k = 0; k < e.args.size(); ++k) eval(*e.args[k], args[k]);
      ops::call(e.builtin, e.args[0]->type, args, out);
      return;
    }
    case ExprKind::Construct: {
      std::size_t lane = 0;
      for (const auto& a : e.args) {
        Value v;
        eval(*a, v);
        for (int k = 0; k < a->type.width; ++k) out.lanes[lane++] = v.lanes[static_cast<std::size_t>(k)];
      }
      return;
    }
    case ExprKind::Cast: {
      Value v;
      eval(*e.args[0], v);
      ops::convert(v, e.args[0]->type, out, e.type);
      return;
    }
  }
}

void evaluate(const TypedKernel& kernel, WorkItemContext& ctx) { Evaluator(kernel).run(ctx); }

}  // namespace dpp::kernel
