#include "hlsflow/refactor.hpp"

#include <algorithm>

namespace hlsflow::refactor {

std::string_view to_string(DeclContext c) {
  switch (c) {
  case DeclContext::Global: return "global";
  case DeclContext::Local: return "local";
  case DeclContext::Param: return "param";
  case DeclContext::Member: return "member";
  }
  return "?";
}

Location SourceUnit::location_of(std::size_t offset) const {
  Location loc;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++loc.line;
      loc.col = 1;
    } else {
      ++loc.col;
    }
  }
  return loc;
}

bool SourceUnit::in_opaque(std::size_t offset) const {
  return std::any_of(opaque.begin(), opaque.end(), [&](const Span& s) { return s.contains(offset); });
}

namespace {

const std::set<std::string, std::less<>> kTypeKeywords = {
    "void",    "char",     "short",    "int",      "long",     "float",     "double",   "signed",
    "unsigned", "bool",    "_Bool",    "size_t",   "int8_t",   "int16_t",   "int32_t",  "int64_t",
    "uint8_t", "uint16_t", "uint32_t", "uint64_t", "wchar_t",  "ptrdiff_t", "auto"};

const std::set<std::string, std::less<>> kSpecifiers = {
    "const", "volatile", "static", "extern", "register", "inline", "constexpr", "mutable", "thread_local",
    "restrict", "__restrict", "__restrict__"};

const std::set<std::string, std::less<>> kStatementKeywords = {
    "if", "else", "for", "while", "do", "switch", "case", "default", "return", "break", "continue", "goto",
    "throw", "try", "catch", "delete", "new", "sizeof", "template", "using", "typedef", "class", "union", "enum",
    "struct", "namespace", "static_assert", "asm", "public", "private", "protected", "friend", "operator", "this"};

const std::set<std::string, std::less<>> kOpaqueStarters = {"template", "using",  "class",         "union",
                                                           "enum",     "friend", "static_assert", "asm",
                                                           "operator", "typename"};

struct Info {
  bool memory = false;
  std::vector<std::string> targets;
};

class Parser {
public:
  explicit Parser(SourceUnit& unit) : u_(unit) {
    for (std::size_t i = 0; i < u_.tokens.size(); ++i) {
      const auto& t = u_.tokens[i];
      if (t.kind == TokenKind::Preprocessor) {
        preprocessor(t);
      } else if (t.kind != TokenKind::Comment) {
        code_.push_back(i);
      }
    }
    eof_.kind = TokenKind::Punct;
    eof_.span = {u_.text.size(), u_.text.size()};
    eof_.loc = u_.location_of(u_.text.size());
  }

  void run() {
    std::size_t i = 0;
    while (i < code_.size()) {
      if (is(i, "}")) throw ParseError("unexpected '}'", t(i).loc);
      i = external(i, code_.size(), DeclContext::Global, "");
    }
    literals();
  }

private:
  const Token& t(std::size_t i) const { return i < code_.size() ? u_.tokens[code_[i]] : eof_; }
  bool is(std::size_t i, std::string_view s) const { return i < code_.size() && t(i).is(s); }
  bool ident(std::size_t i) const { return i < code_.size() && t(i).kind == TokenKind::Identifier; }
  std::size_t begin_of(std::size_t i) const { return t(i).span.begin; }
  std::size_t end_of(std::size_t i) const { return t(i).span.end; }
  std::string text_between(std::size_t first, std::size_t last) const {
    if (last < first) return {};
    return u_.text.substr(begin_of(first), end_of(last) - begin_of(first));
  }

  bool is_type_word(const std::string& w) const {
    return kTypeKeywords.count(w) || u_.type_names.count(w) ||
           (w.size() > 2 && w.compare(w.size() - 2, 2, "_t") == 0);
  }

  void preprocessor(const Token& tok) {
    std::string_view s = tok.text;
    s.remove_prefix(1);
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    auto word_end = std::find_if(s.begin(), s.end(), [](char c) { return !(std::isalnum(static_cast<unsigned char>(c)) || c == '_'); });
    std::string directive(s.begin(), word_end);
    if (directive == "include") {
      std::size_t end = tok.span.end;
      if (end < u_.text.size() && u_.text[end] == '\n') ++end;
      u_.after_last_include = end;
    } else if (directive == "define") {
      std::string_view rest(word_end, s.end());
      while (!rest.empty() && (rest.front() == ' ' || rest.front() == '\t')) rest.remove_prefix(1);
      std::size_t n = 0;
      while (n < rest.size() && (std::isalnum(static_cast<unsigned char>(rest[n])) || rest[n] == '_')) ++n;
      if (n) u_.defined_macros.insert(std::string(rest.substr(0, n)));
    }
  }

  std::size_t match_close(std::size_t i) const {
    std::vector<std::size_t> stack;
    for (std::size_t k = i; k < code_.size(); ++k) {
      const auto& tok = t(k);
      if (tok.kind != TokenKind::Punct) continue;
      if (tok.text == "(" || tok.text == "[" || tok.text == "{") {
        stack.push_back(k);
      } else if (tok.text == ")" || tok.text == "]" || tok.text == "}") {
        if (stack.empty()) throw ParseError("unexpected '" + tok.text + "'", tok.loc);
        const auto& open = t(stack.back()).text;
        char want = open == "(" ? ')' : open == "[" ? ']' : '}';
        if (tok.text[0] != want) throw ParseError("mismatched '" + tok.text + "' for '" + open + "' at " +
                                                      std::to_string(t(stack.back()).loc.line) + ":" +
                                                      std::to_string(t(stack.back()).loc.col),
                                                  tok.loc);
        stack.pop_back();
        if (stack.empty()) return k;
      }
    }
    throw ParseError("unclosed '" + t(i).text + "'", t(i).loc);
  }

  // Index of the terminating ';' at depth 0, or of an unmatched '}' / end.
  std::size_t statement_end(std::size_t i, std::size_t limit) const {
    for (std::size_t k = i; k < limit; ++k) {
      if (is(k, ";")) return k;
      if (is(k, "}")) return k;
      if (is(k, "(") || is(k, "[") || is(k, "{")) k = match_close(k);
    }
    return limit;
  }

  // Skips a non-subset construct, including any braced body.
  std::size_t skip_opaque(std::size_t i, std::size_t limit) {
    std::size_t k = i;
    while (k < limit) {
      if (is(k, ";")) {
        ++k;
        break;
      }
      if (is(k, "}")) break;
      if (is(k, "{")) {
        bool function_body = k > i && (is(k - 1, ")") || is(k - 1, "const") || is(k - 1, "override") ||
                                       is(k - 1, "noexcept") || is(k - 1, "final"));
        k = match_close(k) + 1;
        if (function_body) break;
        if (is(k, ";")) {
          ++k;
          break;
        }
        if (!ident(k) && !is(k, "*")) break;
        continue;
      }
      if (is(k, "(") || is(k, "[")) k = match_close(k);
      ++k;
    }
    if (k > i) u_.opaque.push_back({begin_of(i), end_of(k - 1)});
    return std::max(k, i + 1);
  }

  // One top-level (or namespace / struct body) item.
  std::size_t external(std::size_t i, std::size_t limit, DeclContext ctx, const std::string& scope) {
    if (is(i, ";")) return i + 1;
    if (!ident(i)) return skip_opaque(i, limit);
    const std::string& w = t(i).text;

    if (w == "namespace") {
      std::size_t k = i + 1;
      while (k < limit && !is(k, "{") && !is(k, ";") && !is(k, "=")) ++k;
      if (!is(k, "{")) return skip_opaque(i, limit);
      return block(k, DeclContext::Global, "");
    }
    if (w == "inline" && is(i + 1, "namespace")) return external(i + 1, limit, ctx, scope);
    if (w == "extern" && i + 1 < limit && t(i + 1).kind == TokenKind::String) {
      if (is(i + 2, "{")) return block(i + 2, DeclContext::Global, "");
      return external(i + 2, limit, ctx, scope);
    }
    if (ctx == DeclContext::Member && (w == "public" || w == "private" || w == "protected") && is(i + 1, ":"))
      return i + 2;
    if (kOpaqueStarters.count(w)) return skip_opaque(i, limit);
    if (w == "typedef") return typedef_decl(i, limit);
    if (w == "struct") {
      if (ident(i + 1) && is(i + 2, "{")) {
        u_.type_names.insert(t(i + 1).text);
        std::size_t after = struct_body(i + 2, t(i + 1).text);
        if (is(after, ";")) return after + 1;
        return skip_opaque(after, limit);  // declarators after the body are not rewritten
      }
      if (is(i + 1, "{")) return skip_opaque(i, limit);
      if (ident(i + 1) && is(i + 2, ";")) {
        u_.type_names.insert(t(i + 1).text);
        return i + 3;
      }
    }

    // Declaration or function: look for the first '(' / '=' / ';' / '{' at depth 0.
    std::size_t k = i;
    for (; k < limit; ++k) {
      if (is(k, "<") && k > i && ident(k - 1)) return skip_opaque(i, limit);
      if (is(k, "(") || is(k, "=") || is(k, ";") || is(k, "{")) break;
      if (is(k, "[")) k = match_close(k);
      if (is(k, "}")) break;
    }
    if (is(k, "(") && k > i && ident(k - 1) && !is(k + 1, "*") && !is(k + 1, "&") && !is(k + 1, "^") &&
        !(ctx == DeclContext::Global && is(k - 1, "operator")))
      return function(i, k, limit, ctx, scope);
    return declaration_statement(i, limit, ctx, scope);
  }

  std::size_t block(std::size_t open, DeclContext ctx, const std::string& scope) {
    std::size_t close = match_close(open);
    std::size_t k = open + 1;
    while (k < close) k = std::min(external(k, close, ctx, scope), close);
    return close + 1;
  }

  std::size_t struct_body(std::size_t open, const std::string& name) {
    std::size_t close = match_close(open);
    std::size_t k = open + 1;
    while (k < close) k = std::min(external(k, close, DeclContext::Member, name), close);
    return close + 1;
  }

  std::size_t typedef_decl(std::size_t i, std::size_t limit) {
    if (is(i + 1, "struct") && (is(i + 2, "{") || (ident(i + 2) && is(i + 3, "{")))) {
      std::size_t open = is(i + 2, "{") ? i + 2 : i + 3;
      std::size_t close = match_close(open);
      std::size_t end = statement_end(close + 1, limit);
      std::string name = end > close + 1 && ident(end - 1) ? t(end - 1).text : "";
      if (ident(i + 2)) u_.type_names.insert(t(i + 2).text);
      if (!name.empty()) u_.type_names.insert(name);
      struct_body(open, !name.empty() ? name : (ident(i + 2) ? t(i + 2).text : std::string()));
      return end + 1;
    }
    std::size_t end = statement_end(i, limit);
    // The declared name is inside "(*name)" for function pointers, else the
    // last identifier before any array bounds.
    std::optional<std::size_t> name;
    for (std::size_t k = i + 1; k + 2 < end; ++k)
      if (is(k, "(") && is(k + 1, "*") && ident(k + 2)) {
        name = k + 2;
        break;
      }
    if (!name) {
      std::size_t k = end;
      while (k > i + 1 && is(k - 1, "]")) {
        std::size_t open = k - 1;
        while (open > i && !is(open, "[")) --open;
        k = open;
      }
      if (k > i + 1 && ident(k - 1)) name = k - 1;
    }
    if (name) u_.type_names.insert(t(*name).text);
    if (end > i) u_.opaque.push_back({begin_of(i), end_of(std::min(end, code_.size() - 1))});
    return end + 1;
  }

  std::string qualified_name(std::size_t name_idx) const {
    std::size_t k = name_idx;
    while (k >= 2 && is(k - 1, "::") && ident(k - 2)) k -= 2;
    if (is(k - 1, "~") && k >= 1) --k;
    return text_between(k, name_idx);
  }

  std::size_t function(std::size_t head, std::size_t lparen, std::size_t limit, DeclContext ctx,
                       const std::string& scope) {
    std::size_t rparen = match_close(lparen);
    std::string name = qualified_name(lparen - 1);
    if (ctx == DeclContext::Member && !scope.empty()) name = scope + "::" + name;
    std::size_t k = rparen + 1;
    while (k < limit && !is(k, "{") && !is(k, ";") && !is(k, "=") && !is(k, ":")) {
      if (is(k, "(")) k = match_close(k);
      ++k;
    }
    if (is(k, ":")) {  // constructor initializer list
      ++k;
      while (k < limit) {
        while (ident(k) || is(k, "::")) ++k;
        if (!is(k, "(") && !is(k, "{")) break;
        k = match_close(k) + 1;
        if (!is(k, ",")) break;
        ++k;
      }
    }
    params(lparen, rparen, name);
    Function fn;
    fn.name = name;
    if (is(k, "{")) {
      std::string saved = current_function_;
      current_function_ = name;
      std::size_t close = match_close(k);
      fn.body = {begin_of(k), end_of(close)};
      fn.span = {begin_of(head), end_of(close)};
      compound(k);
      current_function_ = saved;
      u_.functions.push_back(fn);
      return close + 1;
    }
    std::size_t end = statement_end(k, limit);
    fn.has_body = false;
    fn.span = {begin_of(head), end_of(std::min(end, code_.size() - 1))};
    u_.functions.push_back(fn);
    return is(end, ";") ? end + 1 : std::max(end, head + 1);
  }

  void params(std::size_t lparen, std::size_t rparen, const std::string& fn) {
    std::size_t start = lparen + 1;
    for (std::size_t k = lparen + 1; k <= rparen; ++k) {
      if (k < rparen && (is(k, "(") || is(k, "[") || is(k, "{"))) {
        k = match_close(k);
        continue;
      }
      if (k == rparen || is(k, ",")) {
        if (k > start) param(start, k, fn);
        start = k + 1;
      }
    }
  }

  void param(std::size_t b, std::size_t e, const std::string& fn) {
    for (std::size_t k = b; k < e; ++k)
      if (is(k, "(")) return;  // function pointer parameter
    Declaration d;
    d.context = DeclContext::Param;
    d.scope = fn;
    d.span = {begin_of(b), end_of(e - 1)};
    if (declarators(b, e, d)) u_.declarations.push_back(std::move(d));
  }

  // Parses "specifiers declarator (, declarator)*" over [b, e).
  bool declarators(std::size_t b, std::size_t e, Declaration& d) {
    std::vector<std::pair<std::size_t, std::size_t>> segments;
    std::size_t start = b;
    for (std::size_t k = b; k <= e; ++k) {
      if (k < e && (is(k, "(") || is(k, "[") || is(k, "{"))) {
        k = match_close(k);
        continue;
      }
      if (k == e || is(k, ",")) {
        segments.emplace_back(start, k);
        start = k + 1;
      }
    }
    for (std::size_t s = 0; s < segments.size(); ++s) {
      auto [sb, se] = segments[s];
      std::size_t p = sb;
      while (p < se && !is(p, "=") && !is(p, "[") && !is(p, "(") && !is(p, "{") && !is(p, ":")) ++p;
      if (p == sb || !ident(p - 1)) return false;
      for (std::size_t k = sb; k < p; ++k)
        if (is(k, "<")) return false;
      std::size_t name = p - 1;
      if (kTypeKeywords.count(t(name).text) || kSpecifiers.count(t(name).text) ||
          kStatementKeywords.count(t(name).text))
        return false;
      std::size_t first_star = name;
      for (std::size_t k = sb; k < name; ++k)
        if (is(k, "*") || is(k, "&") || is(k, "&&")) {
          first_star = k;
          break;
        }
      if (s == 0) {
        std::size_t spec_end = first_star;
        if (spec_end == sb) return false;
        for (std::size_t k = sb; k < spec_end; ++k)
          if (!ident(k) && !is(k, "::")) return false;
        d.base_type = text_between(sb, spec_end - 1);
      } else if (first_star != sb && first_star != name) {
        return false;
      } else if (first_star == name && name != sb) {
        return false;
      }
      Declarator dec;
      dec.name = t(name).text;
      dec.name_span = t(name).span;
      for (std::size_t k = first_star; k < name; ++k) {
        if (is(k, "*")) ++dec.pointer_depth;
        else if (is(k, "&") || is(k, "&&")) dec.is_reference = true;
        else if (!is(k, "const") && !is(k, "volatile") && !is(k, "restrict") && !is(k, "__restrict") &&
                 !is(k, "__restrict__"))
          return false;
      }
      if (dec.pointer_depth > 0 || dec.is_reference) dec.stars = {begin_of(first_star), begin_of(name)};
      std::size_t q = name + 1;
      dec.suffix_end = end_of(name);
      while (q < se && is(q, "[")) {
        std::size_t close = match_close(q);
        dec.dims.push_back({begin_of(q), end_of(close)});
        dec.suffix_end = end_of(close);
        q = close + 1;
      }
      if (q < se) {
        if (is(q, "=")) {
          dec.initializer = Span{begin_of(q), end_of(se - 1)};
          if (q + 1 < se) dec.initializer_text = text_between(q + 1, se - 1);
        } else if (is(q, "{") || is(q, "(")) {
          dec.initializer = Span{begin_of(q), end_of(se - 1)};
          dec.initializer_text = text_between(q, se - 1);
        } else if (!is(q, ":")) {
          return false;
        }
      }
      d.declarators.push_back(std::move(dec));
    }
    return !d.declarators.empty();
  }

  std::size_t declaration_statement(std::size_t i, std::size_t limit, DeclContext ctx, const std::string& scope) {
    std::size_t end = statement_end(i, limit);
    Declaration d;
    d.context = ctx;
    d.scope = scope;
    d.span = {begin_of(i), end_of(std::min(end, code_.size() - 1))};
    if (end > i && declarators(i, end, d)) {
      u_.declarations.push_back(std::move(d));
      return is(end, ";") ? end + 1 : end;
    }
    return skip_opaque(i, limit);
  }

  bool looks_like_declaration(std::size_t i) const {
    if (!ident(i)) return false;
    const std::string& w = t(i).text;
    if (kStatementKeywords.count(w) && w != "struct") return false;
    if (kSpecifiers.count(w) || kTypeKeywords.count(w) || w == "struct") return true;
    if (u_.type_names.count(w)) return !is(i + 1, "(") && !is(i + 1, "=") && !is(i + 1, ".") && !is(i + 1, "->");
    std::size_t k = i + 1;
    while (is(k, "::") && ident(k + 1)) k += 2;
    while (is(k, "*") || is(k, "&") || is(k, "const")) ++k;
    if (!ident(k)) return false;
    return is(k + 1, ";") || is(k + 1, "=") || is(k + 1, "[") || is(k + 1, ",");
  }

  bool template_head(std::size_t i) const {
    std::size_t k = i;
    if (!ident(k)) return false;
    ++k;
    while (is(k, "::") && ident(k + 1)) k += 2;
    return is(k, "<") && (k > i + 1 || is_type_word(t(i).text) || u_.type_names.count(t(i).text) || ident(k + 1));
  }

  std::pair<std::size_t, Info> compound(std::size_t open) {
    std::size_t close = match_close(open);
    std::size_t k = open + 1;
    Info info;
    bool all = true;
    std::size_t count = 0;
    while (k < close) {
      auto [next, sub] = statement(k, close, true, std::nullopt);
      k = std::max(next, k + 1);
      ++count;
      if (sub.memory) info.targets.insert(info.targets.end(), sub.targets.begin(), sub.targets.end());
      else all = false;
    }
    info.memory = count > 0 && all;
    return {close + 1, info};
  }

  std::pair<std::size_t, Info> statement(std::size_t i, std::size_t limit, bool in_compound,
                                         std::optional<std::string> label) {
    if (i >= limit) return {limit, {}};
    if (is(i, "{")) return compound(i);
    if (is(i, ";")) return {i + 1, {}};
    if (ident(i)) {
      const std::string& w = t(i).text;
      if (w == "for" || w == "while" || w == "do") return loop(i, limit, in_compound, std::move(label));
      if (w == "if" || w == "switch") {
        std::size_t k = i + 1;
        if (is(k, "constexpr")) ++k;
        if (!is(k, "(")) return {skip_opaque(i, limit), {}};
        std::size_t rp = match_close(k);
        auto [next, _] = statement(rp + 1, limit, false, std::nullopt);
        if (w == "if" && is(next, "else")) next = statement(next + 1, limit, false, std::nullopt).first;
        return {next, {}};
      }
      if (w == "case") {
        std::size_t k = i + 1;
        while (k < limit && !is(k, ":")) {
          if (is(k, "(")) k = match_close(k);
          ++k;
        }
        case_ranges_.push_back({i, k});
        return {k + 1, {}};
      }
      if (w == "default" && is(i + 1, ":")) return {i + 2, {}};
      if (w == "else") return statement(i + 1, limit, false, std::nullopt);
      if (w == "try") {
        std::size_t k = i + 1;
        if (is(k, "{")) k = compound(k).first;
        while (is(k, "catch") && is(k + 1, "(")) {
          k = match_close(k + 1) + 1;
          if (is(k, "{")) k = compound(k).first;
        }
        return {k, {}};
      }
      if (w == "delete") return delete_statement(i, limit, in_compound);
      if (w == "typedef") return {typedef_decl(i, limit), {}};
      if (kOpaqueStarters.count(w) || (w == "struct" && (is(i + 1, "{") || is(i + 2, "{"))))
        return {skip_opaque(i, limit), {}};
      if (is(i + 1, ":") && !kStatementKeywords.count(w)) return statement(i + 2, limit, in_compound, w);
      if (template_head(i)) return {skip_opaque(i, limit), {}};
      if (w == "return" || w == "break" || w == "continue" || w == "goto" || w == "throw") {
        std::size_t end = statement_end(i, limit);
        return {is(end, ";") ? end + 1 : end, {}};
      }
      if (looks_like_declaration(i)) {
        std::size_t end = statement_end(i, limit);
        Declaration d;
        d.context = DeclContext::Local;
        d.scope = current_function_;
        d.span = {begin_of(i), end_of(std::min(end, code_.size() - 1))};
        if (declarators(i, end, d)) {
          u_.declarations.push_back(std::move(d));
          return {is(end, ";") ? end + 1 : end, {}};
        }
        return {skip_opaque(i, limit), {}};
      }
    }
    std::size_t end = statement_end(i, limit);
    Info info = memory_statement(i, end, in_compound);
    return {is(end, ";") ? end + 1 : std::max(end, i + 1), info};
  }

  std::pair<std::size_t, Info> loop(std::size_t i, std::size_t limit, bool in_compound,
                                    std::optional<std::string> label) {
    const std::string& w = t(i).text;
    std::size_t slot = u_.loops.size();
    Loop l;
    l.kind = w == "for" ? Loop::Kind::For : w == "while" ? Loop::Kind::While : Loop::Kind::Do;
    l.keyword = t(i).span;
    l.loc = t(i).loc;
    l.label = std::move(label);
    l.depth = loop_depth_;
    l.function = current_function_;
    l.in_compound = in_compound;
    u_.loops.push_back(l);

    std::size_t next;
    Info body;
    ++loop_depth_;
    if (l.kind == Loop::Kind::Do) {
      std::tie(next, body) = statement(i + 1, limit, false, std::nullopt);
      if (is(next, "while") && is(next + 1, "(")) {
        next = match_close(next + 1) + 1;
        if (is(next, ";")) ++next;
      }
    } else {
      if (!is(i + 1, "(")) throw ParseError("expected '(' after '" + w + "'", t(i).loc);
      std::size_t rp = match_close(i + 1);
      if (l.kind == Loop::Kind::For) {
        std::size_t semi = statement_end(i + 2, rp);
        if (semi > i + 2 && looks_like_declaration(i + 2)) {
          Declaration d;
          d.context = DeclContext::Local;
          d.scope = current_function_;
          d.span = {begin_of(i + 2), end_of(semi - 1)};
          if (declarators(i + 2, semi, d)) u_.declarations.push_back(std::move(d));
        }
      }
      std::tie(next, body) = statement(rp + 1, limit, false, std::nullopt);
    }
    --loop_depth_;
    u_.loops[slot].span = {begin_of(i), end_of(next - 1)};
    if (body.memory) u_.loops[slot].memory_only_targets = body.targets;
    return {next, body};
  }

  // "a[i] = new T[n];", "this->a = new T[n];" or "a = NULL;" over [i, end).
  Info memory_statement(std::size_t i, std::size_t end, bool in_compound) {
    if (!is(end, ";")) return {};
    std::size_t eq = end;
    for (std::size_t k = i; k < end; ++k) {
      if (is(k, "(") || is(k, "[") || is(k, "{")) {
        k = match_close(k);
        continue;
      }
      if (is(k, "=")) {
        eq = k;
        break;
      }
    }
    if (eq == end || eq == i) return {};
    std::size_t k = i;
    if (is(k, "this") && is(k + 1, "->")) k += 2;
    while (ident(k) && (is(k + 1, ".") || is(k + 1, "->"))) k += 2;
    if (!ident(k)) return {};
    std::string target = t(k).text;
    int depth = 0;
    ++k;
    while (k < eq && is(k, "[")) {
      k = match_close(k) + 1;
      ++depth;
    }
    if (k != eq) return {};
    MemoryStatement m;
    m.target = target;
    m.index_depth = depth;
    m.statement = {begin_of(i), end_of(end)};
    m.loc = t(i).loc;
    m.in_compound = in_compound;
    m.function = current_function_;
    if (is(eq + 1, "new") && is(end - 1, "]")) {
      m.op = MemoryOp::Allocate;
    } else if (eq + 2 == end && (is(eq + 1, "NULL") || is(eq + 1, "nullptr") ||
                                 (t(eq + 1).kind == TokenKind::Number && t(eq + 1).text == "0"))) {
      m.op = MemoryOp::NullReset;
    } else {
      return {};
    }
    u_.memory.push_back(m);
    return {true, {target}};
  }

  std::pair<std::size_t, Info> delete_statement(std::size_t i, std::size_t limit, bool in_compound) {
    std::size_t end = statement_end(i, limit);
    std::size_t next = is(end, ";") ? end + 1 : std::max(end, i + 1);
    std::size_t k = i + 1;
    if (!(is(k, "[") && is(k + 1, "]"))) return {next, {}};
    k += 2;
    if (is(k, "this") && is(k + 1, "->")) k += 2;
    while (ident(k) && (is(k + 1, ".") || is(k + 1, "->"))) k += 2;
    if (!ident(k)) return {next, {}};
    MemoryStatement m;
    m.op = MemoryOp::Deallocate;
    m.target = t(k).text;
    ++k;
    while (k < end && is(k, "[")) {
      k = match_close(k) + 1;
      ++m.index_depth;
    }
    if (k != end || !is(end, ";")) return {next, {}};
    m.statement = {begin_of(i), end_of(end)};
    m.loc = t(i).loc;
    m.in_compound = in_compound;
    m.function = current_function_;
    u_.memory.push_back(m);
    return {next, {true, {m.target}}};
  }

  void literals() {
    std::vector<bool> in_case(code_.size(), false);
    for (auto [b, e] : case_ranges_)
      for (std::size_t k = b; k < e && k < code_.size(); ++k) in_case[k] = true;
    int brackets = 0;
    for (std::size_t k = 0; k < code_.size(); ++k) {
      const auto& tok = t(k);
      if (tok.is("[")) ++brackets;
      else if (tok.is("]")) brackets = std::max(0, brackets - 1);
      if (tok.kind != TokenKind::Number) continue;
      Literal lit;
      lit.token = code_[k];
      lit.span = tok.span;
      lit.loc = tok.loc;
      lit.text = tok.text;
      lit.is_float = tok.is_float;
      lit.in_brackets = brackets > 0;
      lit.in_case_label = in_case[k];
      lit.opaque = u_.in_opaque(tok.span.begin);
      u_.literals.push_back(std::move(lit));
    }
  }

  SourceUnit& u_;
  std::vector<std::size_t> code_;
  Token eof_;
  std::string current_function_;
  int loop_depth_ = 0;
  std::vector<std::pair<std::size_t, std::size_t>> case_ranges_;
};

} // namespace

SourceUnit parse_subset(std::string text) {
  SourceUnit unit;
  unit.text = std::move(text);
  unit.tokens = tokenize(unit.text);
  Parser(unit).run();
  std::sort(unit.opaque.begin(), unit.opaque.end(), [](const Span& a, const Span& b) { return a.begin < b.begin; });
  return unit;
}

} // namespace hlsflow::refactor
