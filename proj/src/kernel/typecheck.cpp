#include "dpp/kernel/typecheck.hpp"

#include <cctype>
#include <limits>
#include <set>
#include <unordered_map>

#include "dpp/kernel/lexer.hpp"
#include "ops.hpp"

namespace dpp::kernel {

bool is_identifier(std::string_view name) {
  if (name.empty()) return false;
  if (!(std::isalpha(static_cast<unsigned char>(name[0])) || name[0] == '_')) return false;
  for (char c : name) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
  }
  return !(name == "if" || name == "else" || name == "for" || is_type_keyword(name));
}

int TypedKernel::point_index(std::string_view name) const {
  for (std::size_t k = 0; k < points.size(); ++k) {
    if (points[k].name == name) return static_cast<int>(k);
  }
  return -1;
}

namespace {

constexpr DataType kInt{ScalarType::Int, 1};
constexpr DataType kFloat{ScalarType::Float, 1};

int rank(ScalarType t) { return static_cast<int>(scalar_size(t)); }

/// C integer promotion: types narrower than int become int.
DataType promote(DataType t) {
  if (t.width == 1 && t.is_integer() && scalar_size(t.base) < 4) return kInt;
  return t;
}

/// Usual arithmetic conversions for two integer scalars.
ScalarType common_integer(ScalarType a, ScalarType b) {
  a = promote({a, 1}).base;
  b = promote({b, 1}).base;
  if (a == b) return a;
  if (is_signed(a) == is_signed(b)) return rank(a) >= rank(b) ? a : b;
  ScalarType u = is_signed(a) ? b : a;
  ScalarType s = is_signed(a) ? a : b;
  return rank(u) >= rank(s) ? u : s;
}

struct BuiltinInfo {
  std::string_view name;
  Builtin fn;
  int arity;
};

constexpr BuiltinInfo kBuiltins[] = {
    {"get_global_id", Builtin::GetGlobalId, 1}, {"get_global_size", Builtin::GetGlobalSize, 1},
    {"sin", Builtin::Sin, 1},   {"cos", Builtin::Cos, 1},     {"sqrt", Builtin::Sqrt, 1},
    {"fabs", Builtin::Fabs, 1}, {"floor", Builtin::Floor, 1}, {"pow", Builtin::Pow, 2},
    {"exp", Builtin::Exp, 1},   {"log", Builtin::Log, 1},     {"fmin", Builtin::Fmin, 2},
    {"fmax", Builtin::Fmax, 2}, {"min", Builtin::Min, 2},     {"max", Builtin::Max, 2},
    {"abs", Builtin::Abs, 1},   {"dot", Builtin::Dot, 2},
};

class Checker {
 public:
  Checker(TypedKernel& k) : k_(k) {}

  void run() {
    std::set<std::string, std::less<>> seen;
    for (const auto& p : k_.points) {
      if (!is_identifier(p.name)) throw KernelError({}, "invalid point name '" + p.name + "'");
      if (!seen.insert(p.name).second) throw KernelError({}, "duplicate point name '" + p.name + "'");
      if (p.name == "M_PI_F") throw KernelError({}, "point name 'M_PI_F' shadows a builtin constant");
    }
    scopes_.emplace_back();
    for (auto& s : k_.ast.statements) stmt(*s);
  }

 private:
  // ---- scopes --------------------------------------------------------------

  int lookup_local(const std::string& name) const {
    for (auto it = scopes_.rbegin(); it != scopes_.rend(); ++it) {
      auto f = it->find(name);
      if (f != it->end()) return f->second;
    }
    return -1;
  }

  void declare(Stmt& s) {
    if (k_.point_index(s.name) >= 0) {
      throw KernelError(s.pos, "declaration of '" + s.name + "' shadows an io point");
    }
    if (s.name == "M_PI_F") throw KernelError(s.pos, "cannot redeclare builtin constant 'M_PI_F'");
    auto& scope = scopes_.back();
    if (scope.count(s.name)) throw KernelError(s.pos, "redeclaration of '" + s.name + "'");
    int slot = static_cast<int>(k_.locals.size());
    k_.locals.push_back({s.name, s.decl_type});
    k_.local_types.emplace(s.name, s.decl_type);
    scope.emplace(s.name, slot);
    s.slot = slot;
  }

  struct ScopeGuard {
    Checker& c;
    explicit ScopeGuard(Checker& checker) : c(checker) { c.scopes_.emplace_back(); }
    ~ScopeGuard() { c.scopes_.pop_back(); }
  };

  // ---- statements ----------------------------------------------------------

  void stmt(Stmt& s) {
    switch (s.kind) {
      case StmtKind::Decl:
        if (s.init) {
          expr(s.init);
          assign_convert(s.init, s.decl_type, s.init->pos);
        }
        declare(s);
        break;
      case StmtKind::Assign:
        resolve_target(s.target);
        expr(s.value);
        assign_convert(s.value, s.target.type, s.value->pos);
        break;
      case StmtKind::If: {
        expr(s.cond);
        require_condition(*s.cond);
        {
          ScopeGuard g(*this);
          stmt(*s.then_branch);
        }
        if (s.else_branch) {
          ScopeGuard g(*this);
          stmt(*s.else_branch);
        }
        break;
      }
      case StmtKind::For: {
        ScopeGuard g(*this);
        if (s.for_init) stmt(*s.for_init);
        expr(s.cond);
        require_condition(*s.cond);
        stmt(*s.for_step);
        ScopeGuard body(*this);
        stmt(*s.body);
        break;
      }
      case StmtKind::Block: {
        ScopeGuard g(*this);
        for (auto& c : s.statements) stmt(*c);
        break;
      }
    }
  }

  void resolve_target(LValue& lv) {
    int slot = lookup_local(lv.name);
    int point = k_.point_index(lv.name);
    DataType type;
    if (slot >= 0) {
      if (lv.index) throw KernelError(lv.pos, "'" + lv.name + "' is not an io point and cannot be indexed");
      lv.slot = slot;
      type = k_.locals[static_cast<std::size_t>(slot)].type;
    } else if (point >= 0) {
      const auto& p = k_.points[static_cast<std::size_t>(point)];
      if (p.direction == Direction::Input) {
        throw KernelError(lv.pos, "cannot write to input point '" + lv.name + "'");
      }
      if (!lv.index) throw KernelError(lv.pos, "point '" + lv.name + "' must be indexed as " + lv.name + "[...]");
      expr(lv.index);
      require_index(*lv.index);
      lv.point = point;
      type = p.data;
    } else if (lv.name == "M_PI_F") {
      throw KernelError(lv.pos, "cannot assign to builtin constant 'M_PI_F'");
    } else {
      throw KernelError(lv.pos, "unknown identifier '" + lv.name + "'");
    }
    if (lv.component >= 0) type = component_type(type, lv.component, lv.component_name, lv.pos);
    lv.type = type;
  }

  // ---- expressions ---------------------------------------------------------

  void expr(ExprPtr& e) {
    check(*e);
    e->typed = true;
    fold(*e);
  }

  void check(Expr& e) {
    switch (e.kind) {
      case ExprKind::IntLit: return int_literal(e);
      case ExprKind::FloatLit: e.type = kFloat; return;
      case ExprKind::Var: return variable(e);
      case ExprKind::Index: return index(e);
      case ExprKind::Component: {
        expr(e.args[0]);
        e.type = component_type(e.args[0]->type, e.component, e.name, e.pos);
        return;
      }
      case ExprKind::Unary: return unary(e);
      case ExprKind::Binary: return binary(e);
      case ExprKind::Ternary: return ternary(e);
      case ExprKind::Call: return call(e);
      case ExprKind::Construct: return construct(e);
      case ExprKind::Cast: return cast(e);
    }
  }

  void int_literal(Expr& e) {
    std::uint64_t v = e.literal.u;
    constexpr auto i32 = static_cast<std::uint64_t>(std::numeric_limits<std::int32_t>::max());
    constexpr auto u32 = static_cast<std::uint64_t>(std::numeric_limits<std::uint32_t>::max());
    constexpr auto i64 = static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max());
    ScalarType t;
    if (e.literal_unsigned) {
      t = (!e.literal_long && v <= u32) ? ScalarType::UInt : ScalarType::ULong;
    } else if (!e.literal_long && v <= i32) {
      t = ScalarType::Int;
    } else if (v <= i64) {
      t = ScalarType::Long;
    } else {
      t = ScalarType::ULong;
    }
    e.type = {t, 1};
  }

  void variable(Expr& e) {
    int slot = lookup_local(e.name);
    if (slot >= 0) {
      e.slot = slot;
      e.type = k_.locals[static_cast<std::size_t>(slot)].type;
      return;
    }
    if (k_.point_index(e.name) >= 0) {
      throw KernelError(e.pos, "point '" + e.name + "' must be indexed as " + e.name + "[...]");
    }
    if (e.name == "M_PI_F") {
      e.builtin = Builtin::Pi;
      e.type = kFloat;
      return;
    }
    throw KernelError(e.pos, "unknown identifier '" + e.name + "'");
  }

  void index(Expr& e) {
    int point = k_.point_index(e.name);
    if (point < 0) {
      if (lookup_local(e.name) >= 0) {
        throw KernelError(e.pos, "'" + e.name + "' is not an io point and cannot be indexed");
      }
      throw KernelError(e.pos, "unknown identifier '" + e.name + "'");
    }
    const auto& p = k_.points[static_cast<std::size_t>(point)];
    if (p.direction == Direction::Output) {
      throw KernelError(e.pos, "output point '" + e.name + "' cannot be read");
    }
    expr(e.args[0]);
    require_index(*e.args[0]);
    e.point = point;
    e.type = p.data;
  }

  DataType component_type(DataType t, int component, const std::string& spelling, SourcePos pos) {
    if (!t.is_vector()) throw KernelError(pos, "component access requires a vector operand, got " + t.name());
    bool xyzw = spelling.size() == 1;
    if (xyzw && t.width > 4) {
      throw KernelError(pos, "component '" + spelling + "' is only valid on vectors of width <= 4");
    }
    if (component >= t.width) {
      throw KernelError(pos, "component '" + spelling + "' out of range for " + t.name());
    }
    return t.scalar();
  }

  void unary(Expr& e) {
    expr(e.args[0]);
    DataType t = e.args[0]->type;
    switch (e.op) {
      case Op::Not:
        if (t.is_vector()) throw KernelError(e.pos, "operator '!' requires a scalar operand");
        e.type = kInt;
        return;
      case Op::BitNot:
        if (!t.is_integer()) throw KernelError(e.pos, "operator '~' requires integer operands");
        break;
      default:
        break;
    }
    e.type = promote(t);
    convert_to(e.args[0], e.type);
  }

  /// Common type for arithmetic between `a` and `b`, including scalar broadcast.
  DataType arithmetic_type(DataType a, DataType b, const Expr& e) {
    if (!a.is_vector() && !b.is_vector()) {
      if (a.is_float() || b.is_float()) return kFloat;
      return {common_integer(a.base, b.base), 1};
    }
    if (a.is_vector() && b.is_vector()) {
      if (a != b) {
        throw KernelError(e.pos, "operand types " + a.name() + " and " + b.name() + " do not match for '" +
                                     std::string(op_spelling(e.op)) + "'");
      }
      return a;
    }
    DataType vec = a.is_vector() ? a : b;
    DataType sca = a.is_vector() ? b : a;
    if (vec.is_integer() && sca.is_float()) {
      throw KernelError(e.pos, "cannot broadcast a float scalar to " + vec.name());
    }
    return vec;
  }

  void binary(Expr& e) {
    expr(e.args[0]);
    expr(e.args[1]);
    DataType a = e.args[0]->type;
    DataType b = e.args[1]->type;
    switch (e.op) {
      case Op::LogAnd:
      case Op::LogOr:
        if (a.is_vector() || b.is_vector()) {
          throw KernelError(e.pos, "operator '" + std::string(op_spelling(e.op)) + "' requires scalar operands");
        }
        e.type = kInt;
        return;
      case Op::Lt: case Op::Le: case Op::Gt: case Op::Ge: case Op::Eq: case Op::Ne: {
        if (a.is_vector() || b.is_vector()) throw KernelError(e.pos, "comparison requires scalar operands");
        DataType t = arithmetic_type(a, b, e);
        convert_to(e.args[0], t);
        convert_to(e.args[1], t);
        e.type = kInt;
        return;
      }
      case Op::Shl:
      case Op::Shr: {
        if (!a.is_integer() || !b.is_integer()) throw KernelError(e.pos, "shift requires integer operands");
        if (!a.is_vector() && b.is_vector()) {
          throw KernelError(e.pos, "shift of a scalar by a vector is not allowed");
        }
        if (a.is_vector() && b.is_vector() && a.width != b.width) {
          throw KernelError(e.pos, "operand types " + a.name() + " and " + b.name() + " do not match for '" +
                                       std::string(op_spelling(e.op)) + "'");
        }
        e.type = promote(a);
        convert_to(e.args[0], e.type);
        convert_to(e.args[1], e.type);
        return;
      }
      case Op::Mod:
        if (!a.is_integer() || !b.is_integer()) throw KernelError(e.pos, "modulo requires integer operands");
        break;
      case Op::BitAnd:
      case Op::BitOr:
      case Op::BitXor:
        if (!a.is_integer() || !b.is_integer()) {
          throw KernelError(e.pos, "bitwise operator '" + std::string(op_spelling(e.op)) + "' requires integer operands");
        }
        break;
      default:
        break;
    }
    DataType t = arithmetic_type(a, b, e);
    convert_to(e.args[0], t);
    convert_to(e.args[1], t);
    e.type = t;
  }

  void ternary(Expr& e) {
    for (auto& a : e.args) expr(a);
    require_condition(*e.args[0]);
    DataType a = e.args[1]->type;
    DataType b = e.args[2]->type;
    DataType t = a == b ? a : arithmetic_type(a, b, e);
    convert_to(e.args[1], t);
    convert_to(e.args[2], t);
    e.type = t;
  }

  void call(Expr& e) {
    const BuiltinInfo* info = nullptr;
    for (const auto& b : kBuiltins) {
      if (b.name == e.name) info = &b;
    }
    if (!info) throw KernelError(e.pos, "unknown function '" + e.name + "'");
    if (static_cast<int>(e.args.size()) != info->arity) {
      throw KernelError(e.pos, "function '" + e.name + "' expects " + std::to_string(info->arity) +
                                   " argument(s), got " + std::to_string(e.args.size()));
    }
    e.builtin = info->fn;
    for (auto& a : e.args) expr(a);

    switch (info->fn) {
      case Builtin::GetGlobalId:
      case Builtin::GetGlobalSize: {
        const auto& arg = *e.args[0];
        if (!arg.type.is_integer() || arg.type.is_vector() || !arg.constant || arg.constant->lanes[0].i != 0) {
          throw KernelError(e.pos, e.name + " supports only dimension 0");
        }
        e.type = kInt;
        return;
      }
      case Builtin::Min:
      case Builtin::Max:
      case Builtin::Abs: {
        for (auto& a : e.args) {
          if (!a->type.is_integer()) {
            throw KernelError(e.pos, "function '" + e.name + "' requires integer operands");
          }
        }
        DataType t = e.args.size() == 2 ? arithmetic_type(e.args[0]->type, e.args[1]->type, e) : promote(e.args[0]->type);
        for (auto& a : e.args) convert_to(a, t);
        e.type = t;
        return;
      }
      case Builtin::Dot: {
        DataType a = e.args[0]->type, b = e.args[1]->type;
        if (!a.is_float() || !b.is_float()) throw KernelError(e.pos, "function 'dot' requires float operands");
        if (a != b) throw KernelError(e.pos, "function 'dot' requires operands of the same type");
        e.type = kFloat;
        return;
      }
      default: {
        // Float math: integer scalars promote, integer vectors are rejected.
        DataType t = kFloat;
        for (auto& a : e.args) {
          if (a->type.is_vector()) {
            if (!a->type.is_float()) {
              throw KernelError(e.pos, "function '" + e.name + "' requires float operands, got " + a->type.name());
            }
            if (t.is_vector() && t != a->type) {
              throw KernelError(e.pos, "function '" + e.name + "' operand widths do not match");
            }
            t = a->type;
          }
        }
        for (auto& a : e.args) convert_to(a, t);
        e.type = t;
        return;
      }
    }
  }

  void construct(Expr& e) {
    const DataType target = e.target;
    for (auto& a : e.args) expr(a);
    if (e.args.size() == 1 && !e.args[0]->type.is_vector()) {
      convert_to(e.args[0], target);  // broadcast
      e.type = target;
      return;
    }
    int total = 0;
    for (auto& a : e.args) {
      DataType t = a->type;
      if (t.is_vector()) {
        if (t.base != target.base) {
          throw KernelError(a->pos, "vector argument " + t.name() + " does not match constructor type " + target.name());
        }
      } else {
        convert_to(a, target.scalar());
      }
      total += t.width;
    }
    if (total != target.width) {
      throw KernelError(e.pos, "constructor for " + target.name() + " needs " + std::to_string(target.width) +
                                   " components, got " + std::to_string(total));
    }
    e.type = target;
  }

  void cast(Expr& e) {
    expr(e.args[0]);
    DataType from = e.args[0]->type;
    DataType to = e.target;
    if (from.is_vector() && from != to) {
      throw KernelError(e.pos, "cannot cast " + from.name() + " to " + to.name());
    }
    e.type = to;
  }

  // ---- conversions ---------------------------------------------------------

  /// Wraps `e` in a Cast node when its type differs from `to`.
  void convert_to(ExprPtr& e, DataType to) {
    if (e->type == to) return;
    auto c = std::make_unique<Expr>();
    c->kind = ExprKind::Cast;
    c->pos = e->pos;
    c->target = to;
    c->type = to;
    c->typed = true;
    c->args.push_back(std::move(e));
    e = std::move(c);
    fold(*e);
  }

  /// Implicit conversion for assignment and initialization.
  void assign_convert(ExprPtr& e, DataType to, SourcePos pos) {
    DataType from = e->type;
    if (from == to) return;
    if (from.is_vector()) {
      throw KernelError(pos, "cannot assign " + from.name() + " to " + to.name());
    }
    if (from.is_float() && to.is_integer()) {
      throw KernelError(pos, "implicit conversion from float to " + to.name() + " requires an explicit cast");
    }
    convert_to(e, to);
  }

  void require_condition(const Expr& e) {
    if (e.type.is_vector()) throw KernelError(e.pos, "condition must be a scalar, got " + e.type.name());
  }

  void require_index(const Expr& e) {
    if (!e.type.is_integer() || e.type.is_vector()) {
      throw KernelError(e.pos, "buffer index must be an integer scalar, got " + e.type.name());
    }
  }

  // ---- constant folding ----------------------------------------------------

  void fold(Expr& e) {
    switch (e.kind) {
      case ExprKind::IntLit: {
        Value v;
        v.lanes[0].i = ops::normalize(e.literal.u, e.type.base);
        e.constant = v;
        return;
      }
      case ExprKind::FloatLit: {
        Value v;
        v.lanes[0].f = e.literal.f;
        e.constant = v;
        return;
      }
      case ExprKind::Var:
        if (e.builtin == Builtin::Pi) {
          Value v;
          v.lanes[0].f = 3.14159265358979323846f;
          e.constant = v;
        }
        return;
      case ExprKind::Index:
      case ExprKind::Call:
        if (e.kind == ExprKind::Call && e.builtin != Builtin::GetGlobalId && e.builtin != Builtin::GetGlobalSize &&
            all_constant(e)) {
          Value args[2];
          for (std::size_t k = 0; k < e.args.size(); ++k) args[k] = *e.args[k]->constant;
          Value v;
          ops::call(e.builtin, e.args[0]->type, args, v);
          e.constant = v;
        }
        return;
      default:
        break;
    }
    if (!all_constant(e)) return;
    Value v;
    switch (e.kind) {
      case ExprKind::Component:
        v.lanes[0] = e.args[0]->constant->lanes[static_cast<std::size_t>(e.component)];
        break;
      case ExprKind::Unary:
        ops::unary(e.op, e.args[0]->type, *e.args[0]->constant, v);
        break;
      case ExprKind::Binary:
        if (ops::binary(e.op, e.args[0]->type, *e.args[0]->constant, *e.args[1]->constant, v) != ops::Fault::None) {
          return;  // leave the fault to runtime
        }
        break;
      case ExprKind::Ternary:
        v = ops::truthy(*e.args[0]->constant, e.args[0]->type) ? *e.args[1]->constant : *e.args[2]->constant;
        break;
      case ExprKind::Cast:
        ops::convert(*e.args[0]->constant, e.args[0]->type, v, e.type);
        break;
      case ExprKind::Construct: {
        int lane = 0;
        for (const auto& a : e.args) {
          for (int k = 0; k < a->type.width; ++k) v.lanes[static_cast<std::size_t>(lane++)] = a->constant->lanes[static_cast<std::size_t>(k)];
        }
        break;
      }
      default:
        return;
    }
    e.constant = v;
  }

  static bool all_constant(const Expr& e) {
    for (const auto& a : e.args) {
      if (!a->constant) return false;
    }
    return true;
  }

  TypedKernel& k_;
  std::vector<std::unordered_map<std::string, int>> scopes_;
};

}  // namespace

TypedKernel typecheck(KernelAST ast, std::span<const IOPoint> io) {
  TypedKernel k;
  k.ast = std::move(ast);
  k.points.assign(io.begin(), io.end());
  Checker(k).run();
  return k;
}

TypedKernel compile_kernel(std::string_view body, std::span<const IOPoint> io) {
  return typecheck(parse_kernel(body), io);
}

}  // namespace dpp::kernel
