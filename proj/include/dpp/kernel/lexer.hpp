#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dpp/error.hpp"

namespace dpp::kernel {

enum class TokenKind { Identifier, IntLiteral, FloatLiteral, Punct, Keyword, Error };

struct Token {
  TokenKind kind = TokenKind::Error;
  std::string lexeme;
  SourcePos pos;
  std::size_t offset = 0;  // byte offset of the lexeme in the source

  // Literal payloads.
  std::uint64_t int_value = 0;
  bool is_unsigned = false;
  bool is_long = false;
  float float_value = 0.0f;
  // For Error tokens: what went wrong.
  std::string error;

  bool is(TokenKind k, std::string_view text) const { return kind == k && lexeme == text; }
  bool is_punct(std::string_view text) const { return is(TokenKind::Punct, text); }
};

/// Splits a kernel body into tokens. Whitespace and comments are skipped.
/// Never throws: illegal input becomes an Error token carrying its position.
std::vector<Token> tokenize(std::string_view source);

/// Same as tokenize(), but throws KernelError at the first Error token.
std::vector<Token> tokenize_strict(std::string_view source);

bool is_type_keyword(std::string_view word);

}  // namespace dpp::kernel
