#pragma once
// Fixed-point formats, trace quantization and per-typedef bit-width search.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hlsflow/common.hpp"

namespace hlsflow::bitwidth {

// Signed formats count the sign bit inside integer_bits:
// range [-2^(I-1), 2^(I-1)) signed, [0, 2^I) unsigned; step 2^-(W-I).
struct FixedPointFormat {
  int total_bits = 64;
  int integer_bits = 32;
  bool is_signed = true;

  int fractional_bits() const { return total_bits - integer_bits; }
  double step() const;
  double min_value() const;
  double max_value() const;  // largest representable value
  void validate() const;     // 1 <= I <= W <= 64
  std::string to_string() const;  // e.g. "(64,20,signed)"

  friend bool operator==(const FixedPointFormat&, const FixedPointFormat&) = default;
};

// Nearest multiple of the step (ties to even), then saturation. NaN maps to 0.
double quantize(double value, const FixedPointFormat& format);

// sum|q(v)-v| / sum|v|; 0 for an all-zero trace.
double trace_relative_error(const std::vector<double>& trace, const FixedPointFormat& format);

int min_integer_bits(double observed_min, double observed_max, bool is_signed);

double reduction_percent(int before_bits, int after_bits);

enum class TypeRole { Accumulator, Candidate, Coupled };
std::string_view to_string(TypeRole r);
TypeRole type_role_from_string(std::string_view s);

struct TypeBudget {
  std::string typedef_name;
  TypeRole role = TypeRole::Candidate;
  double observed_min = 0;
  double observed_max = 0;
  std::optional<bool> is_signed;          // default: signed iff observed_min < 0
  std::optional<int> integer_bits;        // non-candidates only; default min_integer_bits
  std::string coupling_reason;            // Coupled only

  bool signedness() const { return is_signed.value_or(observed_min < 0); }
  // Starting format: 64 total bits.
  FixedPointFormat initial_format() const;
};

// JSON list of {typedef_name, role, observed_min, observed_max[, signed, integer_bits, reason]}.
std::vector<TypeBudget> parse_budgets(std::string_view json_text);
std::vector<TypeBudget> load_budgets(const std::filesystem::path& path);

using Assignment = std::map<std::string, FixedPointFormat>;

struct Verdict {
  bool pass = false;
  double relative_error = 0;
};

// Must be deterministic for a fixed assignment; called sequentially.
class VerificationOracle {
public:
  virtual ~VerificationOracle() = default;
  virtual Verdict evaluate(const Assignment& assignment) = 0;
};

// Runs a shell command per evaluation. The assignment goes to stdin as
// {"Name": {"total_bits":W,"integer_bits":I,"signed":b}, ...}; stdout must
// contain a PASS or FAIL line and REL_ERR=<num>.
class CommandOracle : public VerificationOracle {
public:
  explicit CommandOracle(std::string command, double timeout_seconds = 600);
  Verdict evaluate(const Assignment& assignment) override;
  static Verdict parse_output(std::string_view stdout_text);

private:
  std::string command_;
  double timeout_seconds_;
};

std::string assignment_to_json(const Assignment& assignment);

struct TypeResult {
  std::string typedef_name;
  TypeRole role = TypeRole::Candidate;
  int before_bits = 64;
  int after_bits = 64;
  FixedPointFormat format;
  double reduction_percent = 0;
  std::string note;
};

struct SearchReport {
  std::vector<TypeResult> types;  // budget order
  Assignment assignment;          // committed formats
  std::size_t oracle_calls = 0;
  std::vector<std::string> notes;  // couplings and policy exceptions

  std::string to_text() const;
  std::string to_json() const;
};

struct SearchOptions {
  int floor_bits = 2;
};

SearchReport search_widths(const std::vector<TypeBudget>& budgets, VerificationOracle& oracle,
                           const SearchOptions& options = {});

struct ProbeStep {
  FixedPointFormat format;
  Verdict verdict;
};

// Keeps W fixed and returns the smallest passing I >= min_integer_bits.
// `context` holds the formats of the other types.
FixedPointFormat precision_first_probe(const TypeBudget& budget, const FixedPointFormat& initial,
                                       VerificationOracle& oracle, const Assignment& context = {},
                                       std::vector<ProbeStep>* steps = nullptr);

} // namespace hlsflow::bitwidth
