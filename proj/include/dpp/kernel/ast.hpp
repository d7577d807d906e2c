#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dpp/error.hpp"
#include "dpp/types.hpp"

namespace dpp::kernel {

/// One lane of a runtime value. Which member is live follows from the static type:
/// signed integers use `i` (sign-extended), unsigned use `u` (zero-extended), float uses `f`.
union Lane {
  std::int64_t i;
  std::uint64_t u;
  float f;
};

struct Value {
  std::array<Lane, 16> lanes{};
};

enum class ExprKind : std::uint8_t {
  IntLit,
  FloatLit,
  Var,        // identifier
  Index,      // point[expr]
  Component,  // expr.x / expr.s3
  Unary,
  Binary,
  Ternary,
  Call,
  Construct,  // (floatN)(a, b, ...)
  Cast,       // (type)expr, also inserted for implicit conversions
};

enum class Op : std::uint8_t {
  Add, Sub, Mul, Div, Mod,
  Shl, Shr, BitAnd, BitOr, BitXor,
  LogAnd, LogOr,
  Lt, Le, Gt, Ge, Eq, Ne,
  Neg, Plus, Not, BitNot,
};

std::string_view op_spelling(Op op);

enum class Builtin : std::uint8_t {
  None,
  GetGlobalId, GetGlobalSize,
  Sin, Cos, Sqrt, Fabs, Floor, Pow, Exp, Log, Fmin, Fmax,
  Min, Max, Abs,
  Dot,
  Pi,
};

struct Expr;
using ExprPtr = std::unique_ptr<Expr>;

struct Expr {
  ExprKind kind = ExprKind::IntLit;
  SourcePos pos;
  Op op = Op::Add;
  std::string name;      // Var, Index (point name), Call (callee), Component (spelling)
  int component = -1;    // Component
  DataType target;       // Cast, Construct
  std::vector<ExprPtr> args;
  Lane literal{};        // IntLit, FloatLit
  bool literal_unsigned = false;
  bool literal_long = false;

  // Filled in by the type checker.
  DataType type;
  bool typed = false;
  int slot = -1;   // Var resolved to a local
  int point = -1;  // Index resolved to an io point
  Builtin builtin = Builtin::None;
  std::optional<Value> constant;  // folded value of a constant subtree
};

ExprPtr clone(const Expr& e);

/// Assignment target: `name`, `name.c`, `name[index]` or `name[index].c`.
struct LValue {
  std::string name;
  ExprPtr index;
  int component = -1;
  std::string component_name;
  SourcePos pos;

  int slot = -1;
  int point = -1;
  DataType type;  // type of the assigned location
};

enum class StmtKind : std::uint8_t { Decl, Assign, If, For, Block };

struct Stmt;
using StmtPtr = std::unique_ptr<Stmt>;

struct Stmt {
  StmtKind kind = StmtKind::Block;
  SourcePos pos;

  // Decl
  DataType decl_type;
  std::string name;
  int slot = -1;
  ExprPtr init;

  // Assign
  LValue target;
  ExprPtr value;

  // If / For
  ExprPtr cond;
  StmtPtr then_branch;
  StmtPtr else_branch;
  StmtPtr for_init;
  StmtPtr for_step;
  StmtPtr body;

  // Block
  std::vector<StmtPtr> statements;
};

struct KernelAST {
  std::vector<StmtPtr> statements;
};

/// Parses a kernel body. Operator precedence and associativity follow C.
/// Throws KernelError with the position and the set of expected tokens.
KernelAST parse_kernel(std::string_view source);

/// Component index for "x".."w" and "s0".."sF"; -1 if not a component name.
int component_index(std::string_view name);

}  // namespace dpp::kernel
