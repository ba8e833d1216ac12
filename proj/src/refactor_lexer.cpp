#include "hlsflow/refactor.hpp"

#include <algorithm>
#include <cctype>

#include <fmt/format.h>

namespace hlsflow::refactor {

std::string Diagnostic::to_string() const { return fmt::format("{}:{}: {}", loc.line, loc.col, message); }

namespace {

std::string join_diagnostics(const std::vector<Diagnostic>& d) {
  std::string out;
  for (const auto& x : d) out += (out.empty() ? "" : "\n") + x.to_string();
  return out;
}

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

constexpr std::string_view kPunct[] = {">>=", "<<=", "...", "->*", "<=>", "::", "->", "++", "--", "<<",
                                       ">>",  "<=",  ">=",  "==",  "!=",  "&&", "||", "+=", "-=", "*=",
                                       "/=",  "%=",  "&=",  "|=",  "^=",  ".*", "##"};

class Lexer {
public:
  explicit Lexer(std::string_view text) : s_(text) {}

  std::vector<Token> run() {
    bool line_start = true;
    while (pos_ < s_.size()) {
      char c = s_[pos_];
      if (c == '\n') {
        advance(1);
        line_start = true;
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        advance(1);
        continue;
      }
      if (c == '\\' && peek(1) == '\n') {
        advance(2);
        continue;
      }
      Location loc{line_, col_};
      std::size_t begin = pos_;
      if (c == '#' && line_start) {
        preprocessor();
        push(TokenKind::Preprocessor, begin, loc);
        continue;
      }
      line_start = false;
      if (c == '/' && peek(1) == '/') {
        while (pos_ < s_.size() && s_[pos_] != '\n') advance(1);
        push(TokenKind::Comment, begin, loc);
      } else if (c == '/' && peek(1) == '*') {
        auto close = s_.find("*/", pos_ + 2);
        if (close == std::string_view::npos) throw ParseError("unterminated comment", loc);
        advance(close + 2 - pos_);
        push(TokenKind::Comment, begin, loc);
      } else if (ident_start(c)) {
        std::size_t end = pos_;
        while (end < s_.size() && ident_char(s_[end])) ++end;
        std::string_view word = s_.substr(pos_, end - pos_);
        bool prefix = word == "L" || word == "u" || word == "U" || word == "u8";
        bool raw_prefix = word == "R" || word == "LR" || word == "uR" || word == "UR" || word == "u8R";
        if (raw_prefix && end < s_.size() && s_[end] == '"') {
          advance(end - pos_);
          raw_string(loc);
          push(TokenKind::String, begin, loc);
        } else if (prefix && end < s_.size() && (s_[end] == '"' || s_[end] == '\'')) {
          advance(end - pos_);
          quoted(s_[pos_], loc);
          push(s_[begin + word.size()] == '"' ? TokenKind::String : TokenKind::Char, begin, loc);
        } else {
          advance(end - pos_);
          push(TokenKind::Identifier, begin, loc);
        }
      } else if (std::isdigit(static_cast<unsigned char>(c)) ||
                 (c == '.' && std::isdigit(static_cast<unsigned char>(peek(1))))) {
        number(begin, loc);
      } else if (c == '"' || c == '\'') {
        quoted(c, loc);
        push(c == '"' ? TokenKind::String : TokenKind::Char, begin, loc);
      } else {
        std::size_t len = 1;
        for (auto p : kPunct)
          if (s_.substr(pos_, p.size()) == p) {
            len = p.size();
            break;
          }
        advance(len);
        push(TokenKind::Punct, begin, loc);
      }
    }
    return std::move(out_);
  }

private:
  char peek(std::size_t ahead) const { return pos_ + ahead < s_.size() ? s_[pos_ + ahead] : '\0'; }

  void advance(std::size_t n) {
    for (std::size_t i = 0; i < n && pos_ < s_.size(); ++i, ++pos_) {
      if (s_[pos_] == '\n') {
        ++line_;
        col_ = 1;
      } else {
        ++col_;
      }
    }
  }

  void push(TokenKind kind, std::size_t begin, Location loc, bool is_float = false) {
    Token t;
    t.kind = kind;
    t.span = {begin, pos_};
    t.loc = loc;
    t.text = std::string(s_.substr(begin, pos_ - begin));
    t.is_float = is_float;
    out_.push_back(std::move(t));
  }

  void preprocessor() {
    while (pos_ < s_.size() && s_[pos_] != '\n') {
      if (s_[pos_] == '\\' && peek(1) == '\n') {
        advance(2);
      } else if (s_[pos_] == '/' && peek(1) == '*') {
        Location loc{line_, col_};
        auto close = s_.find("*/", pos_ + 2);
        if (close == std::string_view::npos) throw ParseError("unterminated comment", loc);
        advance(close + 2 - pos_);
      } else if (s_[pos_] == '/' && peek(1) == '/') {
        while (pos_ < s_.size() && s_[pos_] != '\n') advance(1);
      } else {
        advance(1);
      }
    }
  }

  void quoted(char q, Location loc) {
    advance(1);
    while (true) {
      if (pos_ >= s_.size() || s_[pos_] == '\n')
        throw ParseError(q == '"' ? "unterminated string literal" : "unterminated character literal", loc);
      if (s_[pos_] == '\\') {
        advance(2);
        continue;
      }
      if (s_[pos_] == q) {
        advance(1);
        return;
      }
      advance(1);
    }
  }

  void raw_string(Location loc) {
    advance(1);  // opening quote
    std::size_t open = s_.find('(', pos_);
    if (open == std::string_view::npos || open - pos_ > 16) throw ParseError("unterminated raw string literal", loc);
    std::string close = ")" + std::string(s_.substr(pos_, open - pos_)) + "\"";
    auto end = s_.find(close, open + 1);
    if (end == std::string_view::npos) throw ParseError("unterminated raw string literal", loc);
    advance(end + close.size() - pos_);
  }

  void number(std::size_t begin, Location loc) {
    std::size_t p = pos_;
    bool hex = s_[p] == '0' && p + 1 < s_.size() && (s_[p + 1] == 'x' || s_[p + 1] == 'X');
    bool is_float = false;
    while (p < s_.size()) {
      char c = s_[p];
      if ((c == 'e' || c == 'E' || ((c == 'p' || c == 'P') && hex)) && p + 1 < s_.size() &&
          (s_[p + 1] == '+' || s_[p + 1] == '-')) {
        if (!hex || c == 'p' || c == 'P') is_float = true;
        p += 2;
      } else if (c == '\'' && p + 1 < s_.size() && ident_char(s_[p + 1])) {
        p += 1;
      } else if (ident_char(c) || c == '.') {
        if (c == '.') is_float = true;
        if (!hex && (c == 'e' || c == 'E')) is_float = true;
        if (hex && (c == 'p' || c == 'P')) is_float = true;
        ++p;
      } else {
        break;
      }
    }
    advance(p - pos_);
    push(TokenKind::Number, begin, loc, is_float);
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
  std::vector<Token> out_;
};

} // namespace

RefactorError::RefactorError(std::vector<Diagnostic> diagnostics)
    : ValidationError(join_diagnostics(diagnostics)), diagnostics_(std::move(diagnostics)) {}

std::vector<Token> tokenize(std::string_view text) { return Lexer(text).run(); }

} // namespace hlsflow::refactor
