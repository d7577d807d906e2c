#include <algorithm>
#include <string>

#include "dpp/kernel/ast.hpp"
#include "dpp/kernel/lexer.hpp"

namespace dpp::kernel {

std::string_view op_spelling(Op op) {
  switch (op) {
    case Op::Add: return "+";
    case Op::Sub: return "-";
    case Op::Mul: return "*";
    case Op::Div: return "/";
    case Op::Mod: return "%";
    case Op::Shl: return "<<";
    case Op::Shr: return ">>";
    case Op::BitAnd: return "&";
    case Op::BitOr: return "|";
    case Op::BitXor: return "^";
    case Op::LogAnd: return "&&";
    case Op::LogOr: return "||";
    case Op::Lt: return "<";
    case Op::Le: return "<=";
    case Op::Gt: return ">";
    case Op::Ge: return ">=";
    case Op::Eq: return "==";
    case Op::Ne: return "!=";
    case Op::Neg: return "-";
    case Op::Plus: return "+";
    case Op::Not: return "!";
    case Op::BitNot: return "~";
  }
  return "?";
}

int component_index(std::string_view name) {
  if (name.size() == 1) {
    switch (name[0]) {
      case 'x': return 0;
      case 'y': return 1;
      case 'z': return 2;
      case 'w': return 3;
      default: return -1;
    }
  }
  if (name.size() == 2 && (name[0] == 's' || name[0] == 'S')) {
    char c = name[1];
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return 10 + (c - 'a');
    if (c >= 'A' && c <= 'F') return 10 + (c - 'A');
  }
  return -1;
}

ExprPtr clone(const Expr& e) {
  auto out = std::make_unique<Expr>();
  out->kind = e.kind;
  out->pos = e.pos;
  out->op = e.op;
  out->name = e.name;
  out->component = e.component;
  out->target = e.target;
  out->literal = e.literal;
  out->literal_unsigned = e.literal_unsigned;
  out->literal_long = e.literal_long;
  out->type = e.type;
  out->typed = e.typed;
  out->slot = e.slot;
  out->point = e.point;
  out->builtin = e.builtin;
  out->constant = e.constant;
  for (const auto& a : e.args) out->args.push_back(clone(*a));
  return out;
}

namespace {

struct BinaryLevel {
  std::string_view spelling;
  Op op;
  int precedence;
};

// C precedence, higher binds tighter.
constexpr BinaryLevel kBinary[] = {
    {"||", Op::LogOr, 1}, {"&&", Op::LogAnd, 2}, {"|", Op::BitOr, 3},  {"^", Op::BitXor, 4},
    {"&", Op::BitAnd, 5}, {"==", Op::Eq, 6},     {"!=", Op::Ne, 6},    {"<", Op::Lt, 7},
    {"<=", Op::Le, 7},    {">", Op::Gt, 7},      {">=", Op::Ge, 7},    {"<<", Op::Shl, 8},
    {">>", Op::Shr, 8},   {"+", Op::Add, 9},     {"-", Op::Sub, 9},    {"*", Op::Mul, 10},
    {"/", Op::Div, 10},   {"%", Op::Mod, 10},
};

struct CompoundAssign {
  std::string_view spelling;
  Op op;
};

constexpr CompoundAssign kCompound[] = {
    {"+=", Op::Add},    {"-=", Op::Sub},    {"*=", Op::Mul},    {"/=", Op::Div},
    {"%=", Op::Mod},    {"&=", Op::BitAnd}, {"|=", Op::BitOr},  {"^=", Op::BitXor},
    {"<<=", Op::Shl},   {">>=", Op::Shr},
};

class Parser {
 public:
  explicit Parser(std::vector<Token> tokens, SourcePos end) : toks_(std::move(tokens)), end_pos_(end) {}

  KernelAST run() {
    KernelAST ast;
    while (!at_end()) ast.statements.push_back(statement());
    return ast;
  }

 private:
  bool at_end() const { return i_ >= toks_.size(); }
  const Token* peek(std::size_t ahead = 0) const { return i_ + ahead < toks_.size() ? &toks_[i_ + ahead] : nullptr; }
  SourcePos here() const { return at_end() ? end_pos_ : toks_[i_].pos; }

  bool check_punct(std::string_view p, std::size_t ahead = 0) const {
    auto* t = peek(ahead);
    return t && t->is_punct(p);
  }
  bool check_keyword(std::string_view k) const {
    auto* t = peek();
    return t && t->is(TokenKind::Keyword, k);
  }
  bool check_type(std::size_t ahead = 0) const {
    auto* t = peek(ahead);
    return t && t->kind == TokenKind::Keyword && is_type_keyword(t->lexeme);
  }

  [[noreturn]] void fail(std::vector<std::string> expected) const {
    std::sort(expected.begin(), expected.end());
    std::string msg = "syntax error: expected ";
    if (expected.size() == 1) {
      msg += expected.front();
    } else {
      msg += "one of {";
      for (std::size_t k = 0; k < expected.size(); ++k) {
        if (k) msg += ", ";
        msg += expected[k];
      }
      msg += "}";
    }
    msg += ", found ";
    msg += at_end() ? std::string("end of input") : "'" + toks_[i_].lexeme + "'";
    throw KernelError(here(), msg);
  }

  const Token& expect_punct(std::string_view p) {
    if (!check_punct(p)) fail({"'" + std::string(p) + "'"});
    return toks_[i_++];
  }

  const Token& expect_identifier() {
    auto* t = peek();
    if (!t || t->kind != TokenKind::Identifier) fail({"identifier"});
    return toks_[i_++];
  }

  DataType expect_type() {
    if (!check_type()) fail({"type name"});
    return *parse_data_type(toks_[i_++].lexeme);
  }

  // ---- statements ----------------------------------------------------------

  StmtPtr statement() {
    if (auto* t = peek(); t && t->kind == TokenKind::Error) throw KernelError(t->pos, t->error);
    if (check_punct("{")) return block();
    if (check_keyword("if")) return if_statement();
    if (check_keyword("for")) return for_statement();
    if (check_type()) return declaration();
    if (check_punct(";")) {
      auto s = std::make_unique<Stmt>();
      s->kind = StmtKind::Block;
      s->pos = here();
      ++i_;
      return s;
    }
    if (peek() && peek()->kind == TokenKind::Identifier) {
      auto s = assignment();
      expect_punct(";");
      return s;
    }
    fail({"'{'", "'if'", "'for'", "type name", "identifier", "';'"});
  }

  StmtPtr block() {
    auto s = std::make_unique<Stmt>();
    s->kind = StmtKind::Block;
    s->pos = here();
    expect_punct("{");
    while (!check_punct("}")) {
      if (at_end()) fail({"'}'"});
      s->statements.push_back(statement());
    }
    ++i_;
    return s;
  }

  StmtPtr if_statement() {
    auto s = std::make_unique<Stmt>();
    s->kind = StmtKind::If;
    s->pos = here();
    ++i_;
    expect_punct("(");
    s->cond = expression();
    expect_punct(")");
    s->then_branch = statement();
    if (check_keyword("else")) {
      ++i_;
      s->else_branch = statement();
    }
    return s;
  }

  StmtPtr for_statement() {
    auto s = std::make_unique<Stmt>();
    s->kind = StmtKind::For;
    s->pos = here();
    ++i_;
    expect_punct("(");
    if (check_type()) {
      s->for_init = declaration();
    } else if (check_punct(";")) {
      ++i_;
    } else {
      s->for_init = assignment();
      expect_punct(";");
    }
    s->cond = expression();
    expect_punct(";");
    s->for_step = assignment();
    expect_punct(")");
    s->body = statement();
    return s;
  }

  StmtPtr declaration() {
    auto s = std::make_unique<Stmt>();
    s->kind = StmtKind::Decl;
    s->pos = here();
    s->decl_type = expect_type();
    s->name = expect_identifier().lexeme;
    if (check_punct("=")) {
      ++i_;
      s->init = expression();
    }
    expect_punct(";");
    return s;
  }

  // lvalue ("=" | op= ) expr | lvalue ("++" | "--"), without the trailing ';'.
  StmtPtr assignment() {
    auto s = std::make_unique<Stmt>();
    s->kind = StmtKind::Assign;
    s->pos = here();
    auto& lv = s->target;
    lv.pos = here();
    lv.name = expect_identifier().lexeme;
    if (check_punct("[")) {
      ++i_;
      lv.index = expression();
      expect_punct("]");
    }
    if (check_punct(".")) {
      ++i_;
      auto& comp = expect_identifier();
      lv.component = component_index(comp.lexeme);
      lv.component_name = comp.lexeme;
      if (lv.component < 0) throw KernelError(comp.pos, "unknown vector component '" + comp.lexeme + "'");
    }
    auto* t = peek();
    if (t && t->is_punct("=")) {
      ++i_;
      s->value = expression();
      return s;
    }
    if (t && (t->is_punct("++") || t->is_punct("--"))) {
      auto one = std::make_unique<Expr>();
      one->kind = ExprKind::IntLit;
      one->pos = t->pos;
      one->literal.i = 1;
      s->value = make_binary(t->is_punct("++") ? Op::Add : Op::Sub, lvalue_as_expr(lv), std::move(one), t->pos);
      ++i_;
      return s;
    }
    for (const auto& c : kCompound) {
      if (t && t->is_punct(c.spelling)) {
        SourcePos pos = t->pos;
        ++i_;
        s->value = make_binary(c.op, lvalue_as_expr(lv), expression(), pos);
        return s;
      }
    }
    std::vector<std::string> expected{"'='", "'++'", "'--'"};
    for (const auto& c : kCompound) expected.push_back("'" + std::string(c.spelling) + "'");
    if (!lv.index && lv.component < 0) expected.push_back("'['");
    if (lv.component < 0) expected.push_back("'.'");
    fail(expected);
  }

  static ExprPtr lvalue_as_expr(const LValue& lv) {
    auto base = std::make_unique<Expr>();
    base->pos = lv.pos;
    base->name = lv.name;
    if (lv.index) {
      base->kind = ExprKind::Index;
      base->args.push_back(clone(*lv.index));
    } else {
      base->kind = ExprKind::Var;
    }
    if (lv.component < 0) return base;
    auto comp = std::make_unique<Expr>();
    comp->kind = ExprKind::Component;
    comp->pos = lv.pos;
    comp->component = lv.component;
    comp->name = lv.component_name;
    comp->args.push_back(std::move(base));
    return comp;
  }

  static ExprPtr make_binary(Op op, ExprPtr lhs, ExprPtr rhs, SourcePos pos) {
    auto e = std::make_unique<Expr>();
    e->kind = ExprKind::Binary;
    e->op = op;
    e->pos = pos;
    e->args.push_back(std::move(lhs));
    e->args.push_back(std::move(rhs));
    return e;
  }

  // ---- expressions ---------------------------------------------------------

  ExprPtr expression() { return ternary(); }

  ExprPtr ternary() {
    auto cond = binary(1);
    if (!check_punct("?")) return cond;
    auto e = std::make_unique<Expr>();
    e->kind = ExprKind::Ternary;
    e->pos = here();
    ++i_;
    auto then_e = expression();
    expect_punct(":");
    auto else_e = ternary();  // right-associative
    e->args.push_back(std::move(cond));
    e->args.push_back(std::move(then_e));
    e->args.push_back(std::move(else_e));
    return e;
  }

  const BinaryLevel* binary_op() const {
    auto* t = peek();
    if (!t || t->kind != TokenKind::Punct) return nullptr;
    for (const auto& b : kBinary) {
      if (t->lexeme == b.spelling) return &b;
    }
    return nullptr;
  }

  ExprPtr binary(int min_prec) {
    auto lhs = unary();
    while (true) {
      auto* b = binary_op();
      if (!b || b->precedence < min_prec) return lhs;
      SourcePos pos = here();
      ++i_;
      auto rhs = binary(b->precedence + 1);  // left-associative
      lhs = make_binary(b->op, std::move(lhs), std::move(rhs), pos);
    }
  }

  ExprPtr unary() {
    auto* t = peek();
    if (t && t->kind == TokenKind::Punct) {
      Op op{};
      bool is_unary = true;
      if (t->lexeme == "-") op = Op::Neg;
      else if (t->lexeme == "+") op = Op::Plus;
      else if (t->lexeme == "!") op = Op::Not;
      else if (t->lexeme == "~") op = Op::BitNot;
      else is_unary = false;
      if (is_unary) {
        auto e = std::make_unique<Expr>();
        e->kind = ExprKind::Unary;
        e->op = op;
        e->pos = t->pos;
        ++i_;
        e->args.push_back(unary());
        return e;
      }
      // (type)expr or (typeN)(a, b, ...)
      if (t->lexeme == "(" && check_type(1) && check_punct(")", 2)) {
        SourcePos pos = t->pos;
        ++i_;
        DataType type = expect_type();
        ++i_;
        auto e = std::make_unique<Expr>();
        e->pos = pos;
        e->target = type;
        if (type.is_vector() && check_punct("(")) {
          e->kind = ExprKind::Construct;
          ++i_;
          e->args.push_back(expression());
          while (check_punct(",")) {
            ++i_;
            e->args.push_back(expression());
          }
          expect_punct(")");
          return postfix(std::move(e));
        }
        e->kind = ExprKind::Cast;
        e->args.push_back(unary());
        return e;
      }
    }
    return postfix(primary());
  }

  ExprPtr postfix(ExprPtr e) {
    while (true) {
      if (check_punct("[")) {
        if (e->kind != ExprKind::Var) throw KernelError(here(), "only io points can be indexed");
        ++i_;
        e->kind = ExprKind::Index;
        e->args.push_back(expression());
        expect_punct("]");
      } else if (check_punct(".")) {
        ++i_;
        auto& name = expect_identifier();
        int c = component_index(name.lexeme);
        if (c < 0) throw KernelError(name.pos, "unknown vector component '" + name.lexeme + "'");
        auto comp = std::make_unique<Expr>();
        comp->kind = ExprKind::Component;
        comp->pos = name.pos;
        comp->component = c;
        comp->name = name.lexeme;
        comp->args.push_back(std::move(e));
        e = std::move(comp);
      } else {
        return e;
      }
    }
  }

  ExprPtr primary() {
    auto* t = peek();
    if (!t) fail({"expression"});
    if (t->kind == TokenKind::Error) throw KernelError(t->pos, t->error);
    auto e = std::make_unique<Expr>();
    e->pos = t->pos;
    switch (t->kind) {
      case TokenKind::IntLiteral:
        e->kind = ExprKind::IntLit;
        e->literal.u = t->int_value;
        e->literal_unsigned = t->is_unsigned;
        e->literal_long = t->is_long;
        ++i_;
        return e;
      case TokenKind::FloatLiteral:
        e->kind = ExprKind::FloatLit;
        e->literal.f = t->float_value;
        ++i_;
        return e;
      case TokenKind::Identifier:
        e->name = t->lexeme;
        ++i_;
        if (check_punct("(")) {
          e->kind = ExprKind::Call;
          ++i_;
          if (!check_punct(")")) {
            e->args.push_back(expression());
            while (check_punct(",")) {
              ++i_;
              e->args.push_back(expression());
            }
          }
          expect_punct(")");
        } else {
          e->kind = ExprKind::Var;
        }
        return e;
      case TokenKind::Punct:
        if (t->lexeme == "(") {
          ++i_;
          auto inner = expression();
          expect_punct(")");
          return inner;
        }
        break;
      default:
        break;
    }
    fail({"expression"});
  }

  std::vector<Token> toks_;
  std::size_t i_ = 0;
  SourcePos end_pos_;
};

SourcePos end_position(std::string_view source) {
  SourcePos p;
  for (char c : source) {
    if (c == '\n') {
      ++p.line;
      p.column = 1;
    } else {
      ++p.column;
    }
  }
  return p;
}

}  // namespace

KernelAST parse_kernel(std::string_view source) {
  return Parser(tokenize_strict(source), end_position(source)).run();
}

}  // namespace dpp::kernel
