#include "dpp/kernel/lexer.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <limits>

#include "dpp/types.hpp"

namespace dpp::kernel {
namespace {

constexpr std::array<std::string_view, 2> kPunct3{"<<=", ">>="};
constexpr std::array<std::string_view, 18> kPunct2{"<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "+=", "-=",
                                                   "*=", "/=", "%=", "&=", "|=", "^=", "++", "--"};
constexpr std::string_view kPunct1 = "+-*/%&|^~!<>=?:;,.()[]{}";

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }
bool digit(char c) { return c >= '0' && c <= '9'; }
bool hex_digit(char c) { return std::isxdigit(static_cast<unsigned char>(c)) != 0; }

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    while (true) {
      skip_trivia(out);
      if (at_end()) break;
      out.push_back(next());
    }
    return out;
  }

 private:
  bool at_end() const { return i_ >= src_.size(); }
  char peek(std::size_t ahead = 0) const { return i_ + ahead < src_.size() ? src_[i_ + ahead] : '\0'; }

  void advance(std::size_t n = 1) {
    for (std::size_t k = 0; k < n && i_ < src_.size(); ++k) {
      if (src_[i_] == '\n') {
        ++pos_.line;
        pos_.column = 1;
      } else {
        ++pos_.column;
      }
      ++i_;
    }
  }

  void skip_trivia(std::vector<Token>& out) {
    while (!at_end()) {
      char c = peek();
      if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
        advance();
      } else if (c == '/' && peek(1) == '/') {
        while (!at_end() && peek() != '\n') advance();
      } else if (c == '/' && peek(1) == '*') {
        Token t = start(TokenKind::Error);
        advance(2);
        while (!at_end() && !(peek() == '*' && peek(1) == '/')) advance();
        if (at_end()) {
          finish(t);
          t.error = "unterminated block comment";
          out.push_back(std::move(t));
          return;
        }
        advance(2);
      } else {
        return;
      }
    }
  }

  Token start(TokenKind kind) const {
    Token t;
    t.kind = kind;
    t.pos = pos_;
    t.offset = i_;
    return t;
  }

  void finish(Token& t) const { t.lexeme = std::string(src_.substr(t.offset, i_ - t.offset)); }

  Token next() {
    char c = peek();
    if (ident_start(c)) return identifier();
    if (digit(c) || (c == '.' && digit(peek(1)))) return number();
    Token t = start(TokenKind::Punct);
    auto rest = src_.substr(i_);
    for (auto p : kPunct3) {
      if (rest.starts_with(p)) {
        advance(p.size());
        finish(t);
        return t;
      }
    }
    for (auto p : kPunct2) {
      if (rest.starts_with(p)) {
        advance(p.size());
        finish(t);
        return t;
      }
    }
    if (kPunct1.find(c) != std::string_view::npos) {
      advance();
      finish(t);
      return t;
    }
    t.kind = TokenKind::Error;
    advance();
    finish(t);
    t.error = "illegal character '" + t.lexeme + "'";
    return t;
  }

  Token identifier() {
    Token t = start(TokenKind::Identifier);
    while (ident_char(peek())) advance();
    finish(t);
    if (t.lexeme == "if" || t.lexeme == "else" || t.lexeme == "for" || is_type_keyword(t.lexeme)) {
      t.kind = TokenKind::Keyword;
    }
    return t;
  }

  Token number() {
    Token t = start(TokenKind::IntLiteral);
    if (peek() == '0' && (peek(1) == 'x' || peek(1) == 'X')) {
      advance(2);
      std::size_t digits_begin = i_;
      while (hex_digit(peek())) advance();
      auto digits = src_.substr(digits_begin, i_ - digits_begin);
      int_suffix(t);
      finish(t);
      if (digits.empty()) return fail(t, "hexadecimal literal has no digits");
      if (digits.size() > 16) return fail(t, "integer literal out of range");
      std::from_chars(digits.data(), digits.data() + digits.size(), t.int_value, 16);
      return check_trailing(t);
    }
    bool is_float = false;
    while (digit(peek())) advance();
    if (peek() == '.') {
      is_float = true;
      advance();
      while (digit(peek())) advance();
    }
    if ((peek() == 'e' || peek() == 'E') &&
        (digit(peek(1)) || ((peek(1) == '+' || peek(1) == '-') && digit(peek(2))))) {
      is_float = true;
      advance(2);
      while (digit(peek())) advance();
    }
    std::size_t number_end = i_;
    if (peek() == 'f' || peek() == 'F') {
      is_float = true;
      advance();
    }
    if (is_float) {
      t.kind = TokenKind::FloatLiteral;
      finish(t);
      auto text = src_.substr(t.offset, number_end - t.offset);
      float v = 0.0f;
      auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec == std::errc::result_out_of_range) return fail(t, "float literal out of range");
      if (ec != std::errc{} || ptr != text.data() + text.size()) return fail(t, "malformed float literal");
      t.float_value = v;
      return check_trailing(t);
    }
    auto digits = src_.substr(t.offset, i_ - t.offset);
    int_suffix(t);
    finish(t);
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), t.int_value, 10);
    if (ec != std::errc{}) return fail(t, "integer literal out of range");
    return check_trailing(t);
  }

  void int_suffix(Token& t) {
    while (true) {
      char c = peek();
      if ((c == 'u' || c == 'U') && !t.is_unsigned) {
        t.is_unsigned = true;
      } else if ((c == 'l' || c == 'L') && !t.is_long) {
        t.is_long = true;
      } else {
        return;
      }
      advance();
    }
  }

  // "12abc" is one bad token, not a literal followed by an identifier.
  Token check_trailing(Token& t) {
    if (!ident_char(peek())) return t;
    while (ident_char(peek())) advance();
    finish(t);
    return fail(t, "invalid suffix on numeric literal '" + t.lexeme + "'");
  }

  static Token fail(Token& t, std::string message) {
    t.kind = TokenKind::Error;
    t.error = std::move(message);
    return t;
  }

  std::string_view src_;
  std::size_t i_ = 0;
  SourcePos pos_;
};

}  // namespace

bool is_type_keyword(std::string_view word) { return parse_data_type(word).has_value(); }

std::vector<Token> tokenize(std::string_view source) { return Lexer(source).run(); }

std::vector<Token> tokenize_strict(std::string_view source) {
  auto tokens = tokenize(source);
  for (const auto& t : tokens) {
    if (t.kind == TokenKind::Error) throw KernelError(t.pos, t.error);
  }
  return tokens;
}

}  // namespace dpp::kernel
