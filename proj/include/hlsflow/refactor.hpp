#pragma once
// C-subset parsing and the HLS-compatibility rewrites: pointer-to-static-array,
// literal typecasting and loop labeling, plus CodeQL I/O query emission.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "hlsflow/common.hpp"

namespace hlsflow::refactor {

struct Location {
  int line = 1;
  int col = 1;
};

struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool contains(std::size_t pos) const { return pos >= begin && pos < end; }
  friend bool operator==(const Span&, const Span&) = default;
};

class ParseError : public ValidationError {
public:
  ParseError(const std::string& message, Location loc)
      : ValidationError(std::to_string(loc.line) + ":" + std::to_string(loc.col) + ": " + message), loc_(loc) {}
  Location location() const { return loc_; }

private:
  Location loc_;
};

struct Diagnostic {
  Location loc;
  std::string message;

  std::string to_string() const;
};

// A transform that cannot proceed; carries every problem found.
class RefactorError : public ValidationError {
public:
  explicit RefactorError(std::vector<Diagnostic> diagnostics);
  const std::vector<Diagnostic>& diagnostics() const { return diagnostics_; }

private:
  std::vector<Diagnostic> diagnostics_;
};

enum class TokenKind { Identifier, Number, String, Char, Punct, Preprocessor, Comment };

struct Token {
  TokenKind kind = TokenKind::Punct;
  Span span;
  Location loc;
  std::string text;
  bool is_float = false;  // numbers only

  bool is(std::string_view s) const { return text == s && (kind == TokenKind::Punct || kind == TokenKind::Identifier); }
};

// Throws ParseError on unterminated comments, strings, chars and raw strings.
std::vector<Token> tokenize(std::string_view text);

enum class DeclContext { Global, Local, Param, Member };
std::string_view to_string(DeclContext c);

struct Declarator {
  std::string name;
  Span name_span;
  int pointer_depth = 0;
  Span stars;  // first '*' up to the name; empty when pointer_depth == 0
  bool is_reference = false;
  std::vector<Span> dims;      // each "[...]"
  std::size_t suffix_end = 0;  // end of name plus dims
  std::optional<Span> initializer;  // from '=' (or the opening brace/paren) to the end
  std::string initializer_text;      // without the '='
};

struct Declaration {
  DeclContext context = DeclContext::Global;
  std::string scope;  // struct name for members, function name for locals/params
  std::string base_type;
  Span span;
  std::vector<Declarator> declarators;
};

struct Function {
  std::string name;  // possibly qualified
  Span span;
  Span body;
  bool has_body = true;
};

struct Loop {
  enum class Kind { For, While, Do };
  Kind kind = Kind::For;
  Span span;
  Span keyword;
  Location loc;
  std::optional<std::string> label;
  int depth = 0;  // nesting among loops
  std::string function;
  bool in_compound = true;
  // Set when the body holds nothing but allocation/deallocation statements
  // (or loops of them); lists their targets.
  std::optional<std::vector<std::string>> memory_only_targets;
};

enum class MemoryOp { Allocate, Deallocate, NullReset };

struct MemoryStatement {
  MemoryOp op = MemoryOp::Allocate;
  std::string target;
  int index_depth = 0;  // x[i] = new ... has depth 1
  Span statement;       // through the ';'
  Location loc;
  bool in_compound = true;
  std::string function;
};

struct Literal {
  std::size_t token = 0;  // index into SourceUnit::tokens
  Span span;
  Location loc;
  std::string text;
  bool is_float = false;
  bool in_brackets = false;
  bool in_case_label = false;
  bool opaque = false;
};

struct SourceUnit {
  std::string text;
  std::vector<Token> tokens;  // comments and preprocessor lines included
  std::vector<Declaration> declarations;
  std::vector<Function> functions;
  std::vector<Loop> loops;  // depth-first source order
  std::vector<MemoryStatement> memory;
  std::vector<Literal> literals;
  std::vector<Span> opaque;
  std::set<std::string> type_names;       // typedef and struct names
  std::set<std::string> defined_macros;   // #define NAME
  std::optional<std::size_t> after_last_include;  // offset just past the last #include line

  Location location_of(std::size_t offset) const;
  bool in_opaque(std::size_t offset) const;
};

// Subset constructs become typed records; anything else is kept as opaque spans.
SourceUnit parse_subset(std::string text);

struct Edit {
  Span range;
  std::string replacement;
};

// Ordered, non-overlapping replacements over one original text.
class EditSet {
public:
  void add(Span range, std::string replacement);  // throws on overlap
  const std::vector<Edit>& edits() const { return edits_; }
  bool empty() const { return edits_.empty(); }
  std::size_t size() const { return edits_.size(); }
  std::string apply(std::string_view original) const;

private:
  std::vector<Edit> edits_;
};

// Hunks with three lines of context, covering exactly the edited lines.
std::string unified_diff(std::string_view original, const EditSet& edits, const std::string& path);

// Capacity entries are numbers or macro names; "$aliases" maps macro names to
// values emitted as #define lines. "Struct::member" keys win over bare names.
// Symbols listed under "$keep" stay pointers.
struct SizeMap {
  std::map<std::string, std::vector<std::string>> entries;
  std::map<std::string, std::int64_t> aliases;
  std::set<std::string> keep;

  static SizeMap parse(std::string_view json_text);
  static SizeMap load(const std::filesystem::path& path);
  const std::vector<std::string>* find(const std::string& scope, const std::string& name) const;
};

// Next power of two >= factor * observed.
std::int64_t suggest_capacity(std::int64_t observed, double factor = 10);

EditSet static_mem(const SourceUnit& unit, const SizeMap& sizes);

enum class LiteralScope { FloatingOnly, AllNumeric };
EditSet literal_typecast(const SourceUnit& unit, const std::string& target_type, LiteralScope scope);
// Literals literal_typecast would rewrite.
std::size_t count_cast_candidates(const SourceUnit& unit, const std::string& target_type, LiteralScope scope);

EditSet label_loops(const SourceUnit& unit, const std::string& kernel_name);
std::string loop_label(const std::string& kernel_name, std::size_t ordinal);  // LOOP_<KERNEL>_<A..Z, AA..>

// Apply a transform and re-parse the result, checking the intended shape.
std::string apply_static_mem(const std::string& text, const SizeMap& sizes, EditSet* edits_out = nullptr);
std::string apply_literal_typecast(const std::string& text, const std::string& target_type, LiteralScope scope,
                                   EditSet* edits_out = nullptr);
std::string apply_label_loops(const std::string& text, const std::string& kernel_name, EditSet* edits_out = nullptr);

std::string emit_ioquery(const std::string& function_name, const std::string& file_name);

} // namespace hlsflow::refactor
