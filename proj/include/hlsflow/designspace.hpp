#pragma once
// Design-space specifications: parsing, combinatorial expansion, directive
// script emission and the CSV manifest that ties points to results.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hlsflow/common.hpp"

namespace hlsflow::designspace {

class SpecError : public ValidationError {
public:
  SpecError(const std::string& message, int line = 0)
      : ValidationError(line > 0 ? "line " + std::to_string(line) + ": " + message : message), line_(line) {}
  int line() const { return line_; }

private:
  int line_;
};

enum class DirectiveType { DesignGoal, ClockPeriod, Unroll, PipelineII, Interleave };

std::string_view to_string(DirectiveType t);
std::optional<DirectiveType> directive_type_from_string(std::string_view s);
// UNROLL, PIPELINE_II and INTERLEAVE address a loop or array resource.
bool requires_target_path(DirectiveType t);

// One option of a dimension. The source text is kept verbatim so decimals
// re-emit with exactly the digits that were read ("2.0" stays "2.0").
class DimensionValue {
public:
  enum class Kind { Keyword, Integer, Decimal };

  static DimensionValue keyword(std::string word);
  static DimensionValue integer(std::int64_t v);
  static DimensionValue decimal(std::string text);  // throws SpecError if not a number
  // Classifies raw scalar text: integer, decimal, or keyword.
  static DimensionValue from_text(std::string_view text);

  Kind kind() const { return kind_; }
  const std::string& text() const { return text_; }
  bool is_number() const { return kind_ != Kind::Keyword; }
  std::int64_t as_integer() const;
  double as_number() const;

  friend bool operator==(const DimensionValue&, const DimensionValue&) = default;

private:
  Kind kind_ = Kind::Keyword;
  std::string text_;
  std::int64_t integer_ = 0;
  double number_ = 0;
};

struct Dimension {
  std::string id;
  DirectiveType type = DirectiveType::DesignGoal;
  std::optional<std::string> target_path;
  std::vector<DimensionValue> values;

  friend bool operator==(const Dimension&, const Dimension&) = default;
};

struct DesignSpaceSpec {
  std::string kernel_name;
  std::string base_directive_file;
  std::vector<Dimension> dimensions;

  friend bool operator==(const DesignSpaceSpec&, const DesignSpaceSpec&) = default;
};

// Throws SpecError with the offending line when known.
DesignSpaceSpec parse_spec(std::string_view yaml_text);
DesignSpaceSpec load_spec(const std::filesystem::path& path);
void validate(const DesignSpaceSpec& spec);
std::string serialize(const DesignSpaceSpec& spec);

struct Setting {
  std::string dimension_id;
  DirectiveType type = DirectiveType::DesignGoal;
  std::optional<std::string> target_path;
  DimensionValue value;

  friend bool operator==(const Setting&, const Setting&) = default;
};

struct DesignPoint {
  std::uint64_t index = 0;
  std::vector<Setting> assignment;  // spec dimension order, one per dimension

  const Setting* find(std::string_view dimension_id) const;
  friend bool operator==(const DesignPoint&, const DesignPoint&) = default;
};

// Product of cardinalities; throws SpecError on overflow of 64 bits.
std::uint64_t space_size(const DesignSpaceSpec& spec);
// Mixed-radix decode, last dimension fastest.
DesignPoint point_at(const DesignSpaceSpec& spec, std::uint64_t index);
std::vector<DesignPoint> expand(const DesignSpaceSpec& spec);

// A ceiling on interleave factor needed so every access of a (possibly
// unrolled) iteration window gets its own bank.
std::int64_t compute_interleave_requirement(std::int64_t accesses_per_iteration, std::int64_t unroll,
                                            std::optional<std::int64_t> initiation_interval);

struct DirectiveTemplates {
  std::map<DirectiveType, std::string> lines;

  static DirectiveTemplates defaults();
  // One `TYPE: template` line per directive type; unspecified types keep defaults.
  static DirectiveTemplates parse(std::string_view text);
  void validate() const;
  std::string render(const Setting& setting) const;  // empty for skip values
};

// "no" (UNROLL) and "none" (PIPELINE_II) leave the baseline untouched.
bool is_skip_value(const DimensionValue& v);

struct ManifestResult {
  std::string status;  // succeeded | synthesis_failed | timed_out | transport_failed
  std::optional<double> latency_ms;
  std::optional<double> area;
  std::optional<double> synth_seconds;

  friend bool operator==(const ManifestResult&, const ManifestResult&) = default;
};

struct ManifestRow {
  std::uint64_t index = 0;
  std::string script_path;           // relative to the manifest directory
  std::vector<std::string> values;   // one per dimension id, empty for baseline
  bool baseline = false;
  std::optional<ManifestResult> result;

  friend bool operator==(const ManifestRow&, const ManifestRow&) = default;
};

struct Manifest {
  std::vector<std::string> dimension_ids;
  std::vector<ManifestRow> rows;

  bool has_results() const;
  std::string to_csv() const;
  static Manifest from_csv(std::string_view text);
  static Manifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  // Dimension id -> value text, recovered from a row alone.
  std::vector<std::pair<std::string, std::string>> assignment_of(const ManifestRow& row) const;

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

inline constexpr std::string_view kManifestFile = "manifest.csv";
std::string script_name(std::uint64_t index);  // dp_%06d.tcl

struct EmitOptions {
  bool include_baseline = false;
  // Where base_directive_file is resolved when relative (usually the spec's directory).
  std::filesystem::path base_dir = ".";
};

Manifest emit_directives(const DesignSpaceSpec& spec, const std::vector<DesignPoint>& points,
                         const std::filesystem::path& out_dir, const DirectiveTemplates& templates,
                         const EmitOptions& options = {});

// Rebuilds the typed point for a manifest row using the spec's value lists.
DesignPoint point_from_row(const DesignSpaceSpec& spec, const Manifest& manifest, const ManifestRow& row);

} // namespace hlsflow::designspace
