#include "hlsflow/refactor.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "json.hpp"

namespace hlsflow::refactor {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Edit sets and diffs

void EditSet::add(Span range, std::string replacement) {
  if (range.end < range.begin) throw ValidationError("edit range ends before it begins");
  auto pos = std::lower_bound(edits_.begin(), edits_.end(), range.begin,
                              [](const Edit& e, std::size_t b) { return e.range.begin < b; });
  // Pure insertions at the same offset keep insertion order.
  while (pos != edits_.end() && pos->range.begin == range.begin && pos->range.size() == 0 && range.size() == 0) ++pos;
  auto overlaps = [&](const Edit& e) {
    if (e.range.size() == 0 && range.size() == 0) return false;
    if (e.range.size() == 0) return e.range.begin > range.begin && e.range.begin < range.end;
    if (range.size() == 0) return range.begin > e.range.begin && range.begin < e.range.end;
    return e.range.begin < range.end && range.begin < e.range.end;
  };
  if ((pos != edits_.end() && overlaps(*pos)) || (pos != edits_.begin() && overlaps(*(pos - 1))))
    throw ValidationError(fmt::format("overlapping edits at byte {}", range.begin));
  edits_.insert(pos, Edit{range, std::move(replacement)});
}

std::string EditSet::apply(std::string_view original) const {
  std::string out;
  out.reserve(original.size());
  std::size_t cursor = 0;
  for (const auto& e : edits_) {
    if (e.range.end > original.size()) throw ValidationError("edit beyond end of text");
    out.append(original.substr(cursor, e.range.begin - cursor));
    out += e.replacement;
    cursor = e.range.end;
  }
  out.append(original.substr(cursor));
  return out;
}

namespace {

// Old-text lines with their trailing newline kept.
struct Lines {
  std::vector<std::size_t> starts;
  std::size_t text_size = 0;

  explicit Lines(std::string_view text) : text_size(text.size()) {
    if (text.empty()) return;
    starts.push_back(0);
    for (std::size_t i = 0; i + 1 < text.size(); ++i)
      if (text[i] == '\n') starts.push_back(i + 1);
  }
  std::size_t count() const { return starts.size(); }
  std::size_t begin(std::size_t line) const { return line < count() ? starts[line] : text_size; }
  std::size_t end(std::size_t line) const { return line + 1 < count() ? starts[line + 1] : text_size; }
  std::size_t line_of(std::size_t offset) const {
    if (offset >= text_size) return count();
    return static_cast<std::size_t>(std::upper_bound(starts.begin(), starts.end(), offset) - starts.begin()) - 1;
  }
};

std::vector<std::string> split_keep_newlines(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    std::size_t end = nl == std::string_view::npos ? text.size() : nl + 1;
    out.emplace_back(text.substr(start, end - start));
    start = end;
  }
  return out;
}

void emit_line(std::string& out, char tag, std::string_view line) {
  out += tag;
  out += line;
  if (line.empty() || line.back() != '\n') out += "\n\\ No newline at end of file\n";
}

// Old lines [first, first + removed) become `added`.
struct LineChange {
  std::size_t first = 0;
  std::size_t removed = 0;
  std::vector<std::string> added;
};

std::vector<LineChange> line_changes(std::string_view original, const Lines& lines, const EditSet& edits) {
  struct Block {
    std::size_t first, last;  // inclusive; first == count() for an append
    std::vector<const Edit*> edits;
  };
  std::vector<Block> blocks;
  for (const auto& e : edits.edits()) {
    std::size_t l0 = lines.line_of(e.range.begin);
    std::size_t l1 = e.range.size() ? lines.line_of(e.range.end - 1) : l0;
    if (!blocks.empty() && l0 <= blocks.back().last) {
      blocks.back().last = std::max(blocks.back().last, l1);
      blocks.back().edits.push_back(&e);
    } else {
      blocks.push_back({l0, l1, {&e}});
    }
  }
  std::vector<LineChange> changes;
  for (const auto& b : blocks) {
    std::size_t from = lines.begin(b.first);
    std::size_t to = b.first < lines.count() ? lines.end(b.last) : from;
    std::string after;
    std::size_t cursor = from;
    for (const auto* e : b.edits) {
      after.append(original.substr(cursor, e->range.begin - cursor));
      after += e->replacement;
      cursor = e->range.end;
    }
    after.append(original.substr(cursor, to - cursor));
    auto old_lines = split_keep_newlines(original.substr(from, to - from));
    auto new_lines = split_keep_newlines(after);
    std::size_t prefix = 0;
    while (prefix < old_lines.size() && prefix < new_lines.size() && old_lines[prefix] == new_lines[prefix]) ++prefix;
    std::size_t suffix = 0;
    while (suffix < old_lines.size() - prefix && suffix < new_lines.size() - prefix &&
           old_lines[old_lines.size() - 1 - suffix] == new_lines[new_lines.size() - 1 - suffix])
      ++suffix;
    if (old_lines.size() == prefix + suffix && new_lines.size() == prefix + suffix) continue;
    LineChange c;
    c.first = b.first + prefix;
    c.removed = old_lines.size() - prefix - suffix;
    c.added.assign(new_lines.begin() + static_cast<std::ptrdiff_t>(prefix),
                   new_lines.end() - static_cast<std::ptrdiff_t>(suffix));
    changes.push_back(std::move(c));
  }
  return changes;
}

std::string hunk_range(std::size_t first, std::size_t count) {
  // Empty ranges name the line before them.
  if (count == 0) return fmt::format("{},0", first);
  return count == 1 ? fmt::format("{}", first + 1) : fmt::format("{},{}", first + 1, count);
}

} // namespace

std::string unified_diff(std::string_view original, const EditSet& edits, const std::string& path) {
  constexpr std::size_t kContext = 3;
  const Lines lines(original);
  auto changes = line_changes(original, lines, edits);
  if (changes.empty()) return {};
  auto old_line = [&](std::size_t i) { return original.substr(lines.begin(i), lines.end(i) - lines.begin(i)); };

  std::string out = fmt::format("--- a/{}\n+++ b/{}\n", path, path);
  long delta = 0;
  for (std::size_t h = 0; h < changes.size();) {
    std::size_t last = h;
    while (last + 1 < changes.size() &&
           changes[last + 1].first <= changes[last].first + changes[last].removed + 2 * kContext)
      ++last;
    std::size_t a = changes[h].first > kContext ? changes[h].first - kContext : 0;
    std::size_t b = std::min(lines.count(), changes[last].first + changes[last].removed + kContext);
    std::size_t old_count = b - a;
    std::size_t new_count = old_count;
    for (std::size_t i = h; i <= last; ++i) new_count = new_count - changes[i].removed + changes[i].added.size();
    std::size_t new_first = static_cast<std::size_t>(static_cast<long>(a) + delta);
    out += fmt::format("@@ -{} +{} @@\n", hunk_range(a, old_count), hunk_range(new_first, new_count));
    std::size_t line = a;
    for (std::size_t i = h; i <= last; ++i) {
      const auto& c = changes[i];
      for (; line < c.first; ++line) emit_line(out, ' ', old_line(line));
      for (std::size_t k = 0; k < c.removed; ++k, ++line) emit_line(out, '-', old_line(line));
      for (const auto& added : c.added) emit_line(out, '+', added);
      delta += static_cast<long>(c.added.size()) - static_cast<long>(c.removed);
    }
    for (; line < b; ++line) emit_line(out, ' ', old_line(line));
    h = last + 1;
  }
  return out;
}


// ---------------------------------------------------------------------------
// Size maps

SizeMap SizeMap::parse(std::string_view text) {
  SizeMap m;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("size map: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("size map must be a JSON object");
  auto capacity = [](const json& v, const std::string& key) -> std::string {
    if (v.is_number_integer()) {
      auto n = v.get<std::int64_t>();
      if (n < 1) throw ValidationError("size map: capacity for '" + key + "' must be >= 1");
      return std::to_string(n);
    }
    if (v.is_string() && is_identifier(v.get<std::string>())) return v.get<std::string>();
    throw ValidationError("size map: capacity for '" + key + "' must be a positive integer or a macro name");
  };
  for (const auto& [key, value] : j.items()) {
    if (key == "$aliases") {
      if (!value.is_object()) throw ValidationError("size map: $aliases must be an object");
      for (const auto& [name, v] : value.items()) {
        if (!is_identifier(name) || !v.is_number_integer() || v.get<std::int64_t>() < 1)
          throw ValidationError("size map: alias '" + name + "' needs an identifier name and a positive integer");
        m.aliases[name] = v.get<std::int64_t>();
      }
    } else if (key == "$keep") {
      if (!value.is_array()) throw ValidationError("size map: $keep must be a list");
      for (const auto& v : value) m.keep.insert(v.get<std::string>());
    } else {
      std::vector<std::string> caps;
      if (value.is_array()) {
        for (const auto& v : value) caps.push_back(capacity(v, key));
      } else {
        caps.push_back(capacity(value, key));
      }
      if (caps.empty()) throw ValidationError("size map: '" + key + "' lists no capacities");
      m.entries[key] = std::move(caps);
    }
  }
  return m;
}

SizeMap SizeMap::load(const std::filesystem::path& path) { return parse(read_file(path)); }

const std::vector<std::string>* SizeMap::find(const std::string& scope, const std::string& name) const {
  if (!scope.empty())
    if (auto it = entries.find(scope + "::" + name); it != entries.end()) return &it->second;
  auto it = entries.find(name);
  return it == entries.end() ? nullptr : &it->second;
}

std::int64_t suggest_capacity(std::int64_t observed, double factor) {
  if (observed < 1) throw ValidationError("observed count must be >= 1");
  if (!(factor > 0) || !std::isfinite(factor)) throw ValidationError("capacity factor must be positive");
  long double target = std::ceil(static_cast<long double>(observed) * factor);
  if (target > std::ldexp(1.0L, 62)) throw ValidationError("suggested capacity overflows 64 bits");
  std::int64_t cap = 1;
  while (static_cast<long double>(cap) < target) cap <<= 1;
  return cap;
}

// ---------------------------------------------------------------------------
// static_mem

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v'; }

// Extends a statement span to whole lines when nothing else shares them.
Span removal_span(std::string_view text, Span s) {
  std::size_t line_begin = s.begin;
  while (line_begin > 0 && text[line_begin - 1] != '\n') --line_begin;
  std::size_t line_end = s.end;
  while (line_end < text.size() && text[line_end] != '\n') ++line_end;
  for (std::size_t i = line_begin; i < s.begin; ++i)
    if (!is_space(text[i])) return s;
  for (std::size_t i = s.end; i < line_end; ++i)
    if (!is_space(text[i])) return s;
  return {line_begin, line_end < text.size() ? line_end + 1 : line_end};
}

std::vector<std::size_t> code_tokens(const SourceUnit& unit) {
  std::vector<std::size_t> code;
  for (std::size_t i = 0; i < unit.tokens.size(); ++i)
    if (unit.tokens[i].kind != TokenKind::Comment && unit.tokens[i].kind != TokenKind::Preprocessor) code.push_back(i);
  return code;
}

bool is_null_initializer(const std::string& init) {
  auto t = trim(init);
  return t == "NULL" || t == "nullptr" || t == "0";
}

} // namespace

EditSet static_mem(const SourceUnit& unit, const SizeMap& sizes) {
  std::vector<Diagnostic> diags;
  EditSet edits;
  const std::string& text = unit.text;

  // name -> function spans it is converted in; an empty span list means unit-wide
  std::map<std::string, std::vector<Span>> converted;
  std::set<std::size_t> declared_names;
  std::set<std::string> aliases_used;

  std::map<std::string, Span> function_spans;
  for (const auto& f : unit.functions) function_spans[f.name] = f.span;

  for (const auto& d : unit.declarations) {
    for (const auto& dec : d.declarators) {
      if (dec.pointer_depth == 0 || dec.is_reference) continue;
      if (sizes.keep.count(dec.name) || (!d.scope.empty() && sizes.keep.count(d.scope + "::" + dec.name))) continue;
      auto loc = unit.location_of(dec.name_span.begin);
      const auto* caps = sizes.find(d.scope, dec.name);
      if (!caps) {
        diags.push_back({loc, fmt::format("no size entry for {} pointer '{}' (depth {})", to_string(d.context),
                                          dec.name, dec.pointer_depth)});
        continue;
      }
      if (static_cast<int>(caps->size()) != dec.pointer_depth) {
        diags.push_back({loc, fmt::format("size entry for '{}' has {} capacities but pointer depth is {}", dec.name,
                                          caps->size(), dec.pointer_depth)});
        continue;
      }
      bool ok = true;
      for (const auto& c : *caps) {
        if (std::isdigit(static_cast<unsigned char>(c[0]))) continue;
        if (sizes.aliases.count(c)) aliases_used.insert(c);
        else if (!unit.defined_macros.count(c)) {
          diags.push_back({loc, fmt::format("capacity '{}' for '{}' is neither a number nor a known macro", c, dec.name)});
          ok = false;
        }
      }
      if (dec.initializer) {
        auto init = trim(dec.initializer_text);
        if (init.rfind("new", 0) != 0 && !is_null_initializer(init)) {
          diags.push_back({loc, fmt::format("pointer '{}' is initialized from '{}'; only new[] or null can be "
                                            "converted",
                                            dec.name, init)});
          ok = false;
        }
      }
      if (!ok) continue;

      std::string dims;
      for (const auto& c : *caps) dims += "[" + c + "]";
      bool spaced = dec.stars.begin == 0 || is_space(text[dec.stars.begin - 1]);
      edits.add(dec.stars, spaced ? "" : " ");
      std::size_t end = dec.initializer ? dec.initializer->end : dec.suffix_end;
      edits.add({dec.suffix_end, end}, dims);
      declared_names.insert(dec.name_span.begin);

      auto& scopes = converted[dec.name];
      if (d.context == DeclContext::Local || d.context == DeclContext::Param) {
        auto it = function_spans.find(d.scope);
        if (it != function_spans.end()) scopes.push_back(it->second);
        else scopes.push_back({0, text.size()});
      } else {
        scopes.push_back({0, text.size()});
      }
    }
  }

  // Pointers declared elsewhere (e.g. a header) still have their allocations
  // removed when the size map covers them.
  auto removable = [&](const std::string& name) {
    if (converted.count(name)) return true;
    if (sizes.keep.count(name)) return false;
    if (sizes.entries.count(name)) return true;
    for (const auto& [key, _] : sizes.entries)
      if (key.size() > name.size() + 2 && key.compare(key.size() - name.size() - 2, std::string::npos, "::" + name) == 0)
        return true;
    return false;
  };

  std::vector<std::pair<Span, bool>> removals;  // span, in_compound
  for (const auto& l : unit.loops) {
    if (!l.memory_only_targets) continue;
    if (!std::all_of(l.memory_only_targets->begin(), l.memory_only_targets->end(), removable)) continue;
    bool nested = std::any_of(removals.begin(), removals.end(), [&](const auto& r) { return r.first.contains(l.span.begin); });
    if (!nested) removals.push_back({l.span, l.in_compound});
  }
  for (const auto& m : unit.memory) {
    if (!removable(m.target)) {
      if (m.op == MemoryOp::Allocate && !sizes.keep.count(m.target) && !converted.count(m.target)) {
        bool declared_pointer = false;
        for (const auto& d : unit.declarations)
          for (const auto& dec : d.declarators)
            if (dec.name == m.target && dec.pointer_depth > 0) declared_pointer = true;
        if (!declared_pointer)
          diags.push_back({m.loc, fmt::format("no size entry for allocation target '{}'", m.target)});
      }
      continue;
    }
    bool nested = std::any_of(removals.begin(), removals.end(), [&](const auto& r) { return r.first.contains(m.statement.begin); });
    if (!nested) removals.push_back({m.statement, m.in_compound});
  }
  for (const auto& [span, in_compound] : removals) {
    if (in_compound) edits.add(removal_span(text, span), "");
    else edits.add(span, ";");
  }

  // Uses the rewrite cannot express.
  auto code = code_tokens(unit);
  auto inside_removed = [&](std::size_t off) {
    return std::any_of(removals.begin(), removals.end(), [&](const auto& r) { return r.first.contains(off); });
  };
  auto tok_is = [&](std::size_t p, std::string_view s) { return p < code.size() && unit.tokens[code[p]].is(s); };
  for (std::size_t p = 0; p < code.size(); ++p) {
    const auto& tok = unit.tokens[code[p]];
    if (tok.kind != TokenKind::Identifier) continue;
    auto it = converted.find(tok.text);
    if (it == converted.end()) continue;
    if (declared_names.count(tok.span.begin) || inside_removed(tok.span.begin) || unit.in_opaque(tok.span.begin))
      continue;
    if (!std::any_of(it->second.begin(), it->second.end(), [&](const Span& s) { return s.contains(tok.span.begin); }))
      continue;
    bool arith = tok_is(p + 1, "++") || tok_is(p + 1, "--") || tok_is(p + 1, "+=") || tok_is(p + 1, "-=") ||
                 tok_is(p + 1, "+") || tok_is(p + 1, "-") ||
                 (p > 0 && (tok_is(p - 1, "++") || tok_is(p - 1, "--") || tok_is(p - 1, "+") || tok_is(p - 1, "-")));
    if (arith) {
      diags.push_back({tok.loc, fmt::format("pointer arithmetic on '{}' cannot be rewritten", tok.text)});
    } else if (tok_is(p + 1, "=")) {
      diags.push_back({tok.loc, fmt::format("'{}' is reassigned; a static array cannot be rebound", tok.text)});
    }
  }

  if (!diags.empty()) throw RefactorError(std::move(diags));

  std::string defines;
  for (const auto& a : aliases_used)
    if (!unit.defined_macros.count(a)) defines += fmt::format("#define {} {}\n", a, sizes.aliases.at(a));
  if (!defines.empty()) {
    std::size_t at = unit.after_last_include.value_or(0);
    if (at > 0 && text[at - 1] != '\n') defines = "\n" + defines;
    edits.add({at, at}, defines);
  }
  return edits;
}

// ---------------------------------------------------------------------------
// literal_typecast

namespace {

const std::set<std::string, std::less<>> kCastTypes = {"char", "short", "int", "long", "float", "double",
                                                      "signed", "unsigned", "bool", "size_t", "const"};

bool type_word(const SourceUnit& unit, const Token& t, const std::string& target) {
  if (t.kind != TokenKind::Identifier) return false;
  return t.text == target || kCastTypes.count(t.text) || unit.type_names.count(t.text) ||
         (t.text.size() > 2 && t.text.compare(t.text.size() - 2, 2, "_t") == 0);
}

bool cast_wrapped(const SourceUnit& unit, const std::vector<std::size_t>& code, std::size_t p,
                  const std::string& target) {
  auto at = [&](std::ptrdiff_t q) -> const Token* {
    if (q < 0 || static_cast<std::size_t>(q) >= code.size()) return nullptr;
    return &unit.tokens[code[static_cast<std::size_t>(q)]];
  };
  auto is = [&](std::ptrdiff_t q, std::string_view s) { return at(q) && at(q)->is(s); };
  const auto i = static_cast<std::ptrdiff_t>(p);
  auto callee_is_type = [&](std::ptrdiff_t q) { return at(q) && (type_word(unit, *at(q), target) || at(q)->is(">")); };

  if (is(i + 1, ")")) {
    if (is(i - 1, "(") && callee_is_type(i - 2)) return true;
    if ((is(i - 1, "-") || is(i - 1, "+")) && is(i - 2, "(") && callee_is_type(i - 3)) return true;
  }
  // C-style "(type)L"
  if (is(i - 1, ")")) {
    std::ptrdiff_t q = i - 2;
    bool saw_type = false;
    while (q >= 0 && !is(q, "(")) {
      if (at(q)->is("*")) {
      } else if (type_word(unit, *at(q), target)) {
        saw_type = true;
      } else {
        return false;
      }
      --q;
    }
    return q >= 0 && saw_type;
  }
  return false;
}

std::vector<const Literal*> cast_targets(const SourceUnit& unit, const std::string& target, LiteralScope scope) {
  if (!is_identifier(target)) throw ValidationError("cast target '" + target + "' is not an identifier");
  auto code = code_tokens(unit);
  std::map<std::size_t, std::size_t> position;
  for (std::size_t p = 0; p < code.size(); ++p) position[code[p]] = p;
  std::vector<const Literal*> out;
  for (const auto& lit : unit.literals) {
    if (lit.opaque || lit.in_brackets || lit.in_case_label) continue;
    if (scope == LiteralScope::FloatingOnly && !lit.is_float) continue;
    if (cast_wrapped(unit, code, position.at(lit.token), target)) continue;
    out.push_back(&lit);
  }
  return out;
}

} // namespace

EditSet literal_typecast(const SourceUnit& unit, const std::string& target_type, LiteralScope scope) {
  EditSet edits;
  for (const auto* lit : cast_targets(unit, target_type, scope))
    edits.add(lit->span, target_type + "(" + lit->text + ")");
  return edits;
}

std::size_t count_cast_candidates(const SourceUnit& unit, const std::string& target_type, LiteralScope scope) {
  return cast_targets(unit, target_type, scope).size();
}

// ---------------------------------------------------------------------------
// label_loops

std::string loop_label(const std::string& kernel_name, std::size_t ordinal) {
  std::string letters;
  std::size_t n = ordinal + 1;
  while (n > 0) {
    --n;
    letters.insert(letters.begin(), static_cast<char>('A' + n % 26));
    n /= 26;
  }
  std::string upper;
  for (char c : kernel_name) upper += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return "LOOP_" + upper + "_" + letters;
}

EditSet label_loops(const SourceUnit& unit, const std::string& kernel_name) {
  if (!is_identifier(kernel_name)) throw ValidationError("kernel name '" + kernel_name + "' is not an identifier");
  std::set<std::string> taken;
  for (const auto& t : unit.tokens)
    if (t.kind == TokenKind::Identifier) taken.insert(t.text);
  EditSet edits;
  std::size_t ordinal = 0;
  for (const auto& l : unit.loops) {
    if (l.label || unit.in_opaque(l.keyword.begin)) continue;
    std::string name;
    do {
      name = loop_label(kernel_name, ordinal++);
    } while (taken.count(name));
    taken.insert(name);
    edits.add({l.keyword.begin, l.keyword.begin}, name + ": ");
  }
  return edits;
}

// ---------------------------------------------------------------------------
// Checked application

std::string apply_static_mem(const std::string& text, const SizeMap& sizes, EditSet* edits_out) {
  auto unit = parse_subset(text);
  auto edits = static_mem(unit, sizes);
  std::set<std::string> converted;
  for (const auto& d : unit.declarations)
    for (const auto& dec : d.declarators)
      if (dec.pointer_depth > 0 && !dec.is_reference && sizes.find(d.scope, dec.name) &&
          !sizes.keep.count(dec.name))
        converted.insert(dec.name);
  std::string out = edits.apply(text);
  auto after = parse_subset(out);
  for (const auto& d : after.declarations)
    for (const auto& dec : d.declarators)
      if (converted.count(dec.name) && dec.pointer_depth > 0)
        throw Error(fmt::format("static_mem left '{}' declared as a pointer", dec.name));
  for (const auto& m : after.memory)
    if (converted.count(m.target) && m.op != MemoryOp::NullReset)
      throw Error(fmt::format("static_mem left a new[]/delete[] of '{}'", m.target));
  if (edits_out) *edits_out = std::move(edits);
  return out;
}

std::string apply_literal_typecast(const std::string& text, const std::string& target_type, LiteralScope scope,
                                   EditSet* edits_out) {
  auto unit = parse_subset(text);
  auto edits = literal_typecast(unit, target_type, scope);
  std::string out = edits.apply(text);
  auto after = parse_subset(out);
  if (auto left = count_cast_candidates(after, target_type, scope); left != 0)
    throw Error(fmt::format("literal_typecast left {} literal(s) uncast", left));
  if (edits_out) *edits_out = std::move(edits);
  return out;
}

std::string apply_label_loops(const std::string& text, const std::string& kernel_name, EditSet* edits_out) {
  auto unit = parse_subset(text);
  auto edits = label_loops(unit, kernel_name);
  std::string out = edits.apply(text);
  auto after = parse_subset(out);
  if (after.loops.size() != unit.loops.size()) throw Error("label_loops changed the number of loops");
  for (const auto& l : after.loops)
    if (!l.label && !after.in_opaque(l.keyword.begin)) throw Error("label_loops left an unlabeled loop");
  if (edits_out) *edits_out = std::move(edits);
  return out;
}

// ---------------------------------------------------------------------------
// CodeQL

std::string emit_ioquery(const std::string& function_name, const std::string& file_name) {
  if (function_name.empty() || !is_identifier(function_name))
    throw ValidationError("function name must be a non-empty identifier");
  if (file_name.empty()) throw ValidationError("file name must be non-empty");
  for (char c : file_name)
    if (c == '"' || c == '\\' || static_cast<unsigned char>(c) < 0x20)
      throw ValidationError("file name contains a character that cannot appear in a query string");
  return fmt::format(R"(import cpp

from Function f, Variable v,
     VariableAccess va, string usage,
     Function calledFunc
where
  f.getName() = "{}" and
  f.getFile().getBaseName() =
    "{}" and
  (
    (va.getEnclosingFunction() = f) or
    (exists(FunctionCall fc |
      fc.getEnclosingFunction() = f and
      fc.getTarget() = calledFunc and
      va.getEnclosingFunction() = calledFunc
    ))
  ) and
  va.getTarget() = v and
  if va.isUsedAsLValue()
  then usage = "OUTPUT"
  else usage = "INPUT"
select va,
  v.getName() + "," +
  v.getType().toString() + "," + usage
)",
                     function_name, file_name);
}

} // namespace hlsflow::refactor
