#include "hlsflow/bitwidth.hpp"

#include <cmath>
#include <limits>
#include <set>

#include <fmt/format.h>

#include "hlsflow/subprocess.hpp"
#include "json.hpp"

namespace hlsflow::bitwidth {

using json = nlohmann::json;

double FixedPointFormat::step() const { return std::ldexp(1.0, -fractional_bits()); }

double FixedPointFormat::min_value() const { return is_signed ? -std::ldexp(1.0, integer_bits - 1) : 0.0; }

double FixedPointFormat::max_value() const {
  long double top = std::ldexp(1.0L, is_signed ? integer_bits - 1 : integer_bits);
  long double v = top - std::ldexp(1.0L, -fractional_bits());
  double d = static_cast<double>(v);
  if (static_cast<long double>(d) > v) d = std::nextafter(d, 0.0);
  return d;
}

void FixedPointFormat::validate() const {
  if (integer_bits < 1 || integer_bits > total_bits || total_bits > 64)
    throw ValidationError(fmt::format("invalid fixed-point format W={} I={} (need 1 <= I <= W <= 64)", total_bits,
                                      integer_bits));
}

std::string FixedPointFormat::to_string() const {
  return fmt::format("({},{},{})", total_bits, integer_bits, is_signed ? "signed" : "unsigned");
}

double quantize(double value, const FixedPointFormat& f) {
  f.validate();
  if (std::isnan(value)) return 0.0;
  const int frac = f.fractional_bits();
  long double lo_code, hi_code;
  if (f.is_signed) {
    lo_code = -std::ldexp(1.0L, f.total_bits - 1);
    hi_code = std::ldexp(1.0L, f.total_bits - 1) - 1;
  } else {
    lo_code = 0;
    hi_code = std::ldexp(1.0L, f.total_bits) - 1;
  }
  long double code;
  if (std::isinf(value)) {
    code = value > 0 ? hi_code : lo_code;
  } else {
    code = std::nearbyintl(std::ldexp(static_cast<long double>(value), frac));
    code = std::clamp(code, lo_code, hi_code);
  }
  long double exact = std::ldexp(code, -frac);
  double out = static_cast<double>(exact);
  // Rounding the code back to double must not leave the representable range.
  if (static_cast<long double>(out) > std::ldexp(hi_code, -frac)) out = std::nextafter(out, 0.0);
  if (out == 0.0) out = 0.0;  // no negative zero
  return out;
}

double trace_relative_error(const std::vector<double>& trace, const FixedPointFormat& format) {
  long double err = 0, mag = 0;
  for (double v : trace) {
    err += std::fabs(static_cast<long double>(quantize(v, format)) - v);
    mag += std::fabs(static_cast<long double>(v));
  }
  return mag > 0 ? static_cast<double>(err / mag) : 0.0;
}

int min_integer_bits(double lo, double hi, bool is_signed) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) throw ValidationError("observed range must be finite");
  if (lo > hi) throw ValidationError(fmt::format("observed_min {} > observed_max {}", lo, hi));
  const double limit = std::ldexp(1.0, 63);
  if (std::fabs(lo) > limit || std::fabs(hi) > limit)
    throw ValidationError(fmt::format("observed magnitude exceeds 2^63 in [{}, {}]", lo, hi));
  if (!is_signed && lo < 0) throw ValidationError("unsigned format cannot hold negative observed_min");
  for (int i = 1; i <= 64; ++i) {
    if (is_signed) {
      double half = std::ldexp(1.0, i - 1);
      if (hi < half && lo >= -half) return i;
    } else if (hi < std::ldexp(1.0, i)) {
      return i;
    }
  }
  throw ValidationError(fmt::format("range [{}, {}] needs more than 64 integer bits", lo, hi));
}

double reduction_percent(int before_bits, int after_bits) {
  if (before_bits <= 0) throw ValidationError("before_bits must be positive");
  return 100.0 * (before_bits - after_bits) / before_bits;
}

std::string_view to_string(TypeRole r) {
  switch (r) {
  case TypeRole::Accumulator: return "accumulator";
  case TypeRole::Candidate: return "candidate";
  case TypeRole::Coupled: return "coupled";
  }
  return "?";
}

TypeRole type_role_from_string(std::string_view s) {
  std::string l;
  for (char c : s) l += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (l == "accumulator") return TypeRole::Accumulator;
  if (l == "candidate") return TypeRole::Candidate;
  if (l == "coupled") return TypeRole::Coupled;
  throw ValidationError("unknown type role '" + std::string(s) + "'");
}

FixedPointFormat TypeBudget::initial_format() const {
  FixedPointFormat f;
  f.total_bits = 64;
  f.is_signed = signedness();
  f.integer_bits = role != TypeRole::Candidate && integer_bits ? *integer_bits
                                                               : min_integer_bits(observed_min, observed_max, f.is_signed);
  f.validate();
  return f;
}

std::vector<TypeBudget> parse_budgets(std::string_view text) {
  std::vector<TypeBudget> out;
  std::set<std::string> names;
  try {
    auto j = json::parse(text);
    if (!j.is_array()) throw ValidationError("budget file must be a JSON list");
    for (const auto& e : j) {
      TypeBudget b;
      b.typedef_name = e.at("typedef_name").get<std::string>();
      if (!is_identifier(b.typedef_name)) throw ValidationError("invalid typedef_name '" + b.typedef_name + "'");
      if (!names.insert(b.typedef_name).second) throw ValidationError("duplicate typedef_name '" + b.typedef_name + "'");
      b.role = type_role_from_string(e.at("role").get<std::string>());
      b.observed_min = e.at("observed_min").get<double>();
      b.observed_max = e.at("observed_max").get<double>();
      if (e.contains("signed")) b.is_signed = e["signed"].get<bool>();
      if (e.contains("integer_bits")) b.integer_bits = e["integer_bits"].get<int>();
      b.coupling_reason = e.value("reason", "");
      b.initial_format();  // validates the range
      out.push_back(std::move(b));
    }
  } catch (const json::exception& ex) {
    throw ValidationError(std::string("budget file: ") + ex.what());
  }
  return out;
}

std::vector<TypeBudget> load_budgets(const std::filesystem::path& path) { return parse_budgets(read_file(path)); }

std::string assignment_to_json(const Assignment& a) {
  json j = json::object();
  for (const auto& [name, f] : a)
    j[name] = {{"total_bits", f.total_bits}, {"integer_bits", f.integer_bits}, {"signed", f.is_signed}};
  return j.dump();
}

CommandOracle::CommandOracle(std::string command, double timeout_seconds)
    : command_(std::move(command)), timeout_seconds_(timeout_seconds) {
  if (trim(command_).empty()) throw ValidationError("oracle command is empty");
}

Verdict CommandOracle::parse_output(std::string_view text) {
  std::optional<bool> pass;
  std::optional<double> err;
  for (const auto& raw : split_lines(text)) {
    auto line = trim(raw);
    if (line == "PASS") pass = true;
    else if (line == "FAIL") pass = false;
    else if (line.rfind("REL_ERR=", 0) == 0) err = parse_double(std::string_view(line).substr(8));
  }
  if (!pass || !err) throw Error("oracle output lacks a PASS/FAIL line or REL_ERR=<num>");
  return {*pass, *err};
}

Verdict CommandOracle::evaluate(const Assignment& assignment) {
  ProcessOptions opts;
  opts.stdin_text = assignment_to_json(assignment) + "\n";
  opts.timeout = std::chrono::milliseconds(static_cast<long long>(timeout_seconds_ * 1000));
  auto r = run_shell(command_, opts);
  if (r.spawn_failed) throw Error("oracle command could not start: " + r.error);
  if (r.timed_out) throw Error("oracle command timed out");
  return parse_output(r.stdout_text);
}

namespace {

std::string key_of(const Assignment& a) { return assignment_to_json(a); }

// Records every verdict and rejects an oracle that changes its mind.
class CheckedOracle {
public:
  explicit CheckedOracle(VerificationOracle& inner) : inner_(inner) {}

  Verdict operator()(const Assignment& a) {
    auto v = inner_.evaluate(a);
    ++calls;
    auto [it, fresh] = seen_.try_emplace(key_of(a), v);
    if (!fresh && it->second.pass != v.pass)
      throw Error("oracle nondeterminism: assignment " + it->first + " was " + (it->second.pass ? "PASS" : "FAIL") +
                  ", now " + (v.pass ? "PASS" : "FAIL"));
    return v;
  }

  std::size_t calls = 0;

private:
  VerificationOracle& inner_;
  std::map<std::string, Verdict> seen_;
};

} // namespace

SearchReport search_widths(const std::vector<TypeBudget>& budgets, VerificationOracle& oracle,
                           const SearchOptions& options) {
  if (options.floor_bits < 1 || options.floor_bits > 64) throw ValidationError("floor_bits must be in [1, 64]");
  CheckedOracle check(oracle);
  SearchReport report;
  for (const auto& b : budgets) report.assignment[b.typedef_name] = b.initial_format();

  auto base = check(report.assignment);
  if (!base.pass)
    throw Error(fmt::format("baseline 64-bit assignment fails verification (relative error {})",
                            format_number(base.relative_error)));

  for (const auto& b : budgets) {
    TypeResult tr;
    tr.typedef_name = b.typedef_name;
    tr.role = b.role;
    auto& current = report.assignment[b.typedef_name];
    tr.before_bits = current.total_bits;
    if (b.role == TypeRole::Accumulator) {
      tr.note = "scalability exception: accumulator kept at 64 bits";
      report.notes.push_back(b.typedef_name + ": " + tr.note);
    } else if (b.role == TypeRole::Coupled) {
      tr.note = "coupled: " + (b.coupling_reason.empty() ? std::string("width tied to another type") : b.coupling_reason);
      report.notes.push_back(b.typedef_name + ": " + tr.note);
    } else {
      int lo = std::max(current.integer_bits, options.floor_bits);
      int hi = current.total_bits;
      while (lo < hi) {
        int mid = lo + (hi - lo) / 2;
        Assignment trial = report.assignment;
        trial[b.typedef_name].total_bits = mid;
        if (check(trial).pass) hi = mid;
        else lo = mid + 1;
      }
      current.total_bits = hi;
      if (!check(report.assignment).pass)
        throw Error("committed assignment for " + b.typedef_name + " failed re-verification");
    }
    tr.after_bits = current.total_bits;
    tr.format = current;
    tr.reduction_percent = reduction_percent(tr.before_bits, tr.after_bits);
    report.types.push_back(std::move(tr));
  }
  report.oracle_calls = check.calls;
  return report;
}

FixedPointFormat precision_first_probe(const TypeBudget& budget, const FixedPointFormat& initial,
                                       VerificationOracle& oracle, const Assignment& context,
                                       std::vector<ProbeStep>* steps) {
  initial.validate();
  CheckedOracle check(oracle);
  double best = std::numeric_limits<double>::infinity();
  auto attempt = [&](const FixedPointFormat& f) {
    Assignment a = context;
    a[budget.typedef_name] = f;
    auto v = check(a);
    if (steps) steps->push_back({f, v});
    best = std::min(best, v.relative_error);
    return v.pass;
  };
  attempt(initial);
  int min_i = min_integer_bits(budget.observed_min, budget.observed_max, initial.is_signed);
  for (int i = min_i; i <= initial.total_bits; ++i) {
    FixedPointFormat f = initial;
    f.integer_bits = i;
    if (attempt(f)) return f;
  }
  throw Error(fmt::format("no integer width passes at W={} for {} (best relative error {})", initial.total_bits,
                          budget.typedef_name, format_number(best)));
}

std::string SearchReport::to_text() const {
  std::string out = fmt::format("{:<20} {:<12} {:>6} {:>6} {:<18} {:>9}\n", "Type", "Role", "Before", "After",
                                "Format", "Reduction");
  for (const auto& t : types) {
    out += fmt::format("{:<20} {:<12} {:>6} {:>6} {:<18} {:>8}%\n", t.typedef_name, to_string(t.role), t.before_bits,
                       t.after_bits, t.format.to_string(), format_fixed(t.reduction_percent, 1));
  }
  for (const auto& n : notes) out += "note: " + n + "\n";
  out += fmt::format("oracle calls: {}\n", oracle_calls);
  return out;
}

std::string SearchReport::to_json() const {
  json j;
  j["types"] = json::array();
  for (const auto& t : types) {
    j["types"].push_back({{"typedef_name", t.typedef_name},
                          {"role", std::string(to_string(t.role))},
                          {"before_bits", t.before_bits},
                          {"after_bits", t.after_bits},
                          {"integer_bits", t.format.integer_bits},
                          {"fractional_bits", t.format.fractional_bits()},
                          {"signed", t.format.is_signed},
                          {"reduction_percent", t.reduction_percent},
                          {"note", t.note}});
  }
  j["notes"] = notes;
  j["oracle_calls"] = oracle_calls;
  return j.dump(2) + "\n";
}

} // namespace hlsflow::bitwidth
