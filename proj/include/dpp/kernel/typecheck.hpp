#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dpp/io_point.hpp"
#include "dpp/kernel/ast.hpp"

namespace dpp::kernel {

struct Local {
  std::string name;
  DataType type;
};

/// A parsed kernel whose every expression carries a DataType, bound to its io signature.
///
/// Io points are referenced by their position in `points`; locals by slot in `locals`.
/// Implicit conversions are explicit Cast nodes in `ast`, so the evaluator never has
/// to reason about promotion.
struct TypedKernel {
  KernelAST ast;
  std::vector<IOPoint> points;
  std::vector<Local> locals;
  std::map<std::string, DataType> local_types;

  int point_index(std::string_view name) const;
};

/// Annotates `ast` against `io`. Throws KernelError on the first rule violation.
TypedKernel typecheck(KernelAST ast, std::span<const IOPoint> io);

/// parse_kernel + typecheck.
TypedKernel compile_kernel(std::string_view body, std::span<const IOPoint> io);

bool is_identifier(std::string_view name);

}  // namespace dpp::kernel
