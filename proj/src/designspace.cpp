#include "hlsflow/designspace.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

namespace hlsflow::designspace {

namespace {

constexpr std::pair<DirectiveType, std::string_view> kTypeNames[] = {
    {DirectiveType::DesignGoal, "DESIGN_GOAL"}, {DirectiveType::ClockPeriod, "CLOCK_PERIOD"},
    {DirectiveType::Unroll, "UNROLL"},          {DirectiveType::PipelineII, "PIPELINE_II"},
    {DirectiveType::Interleave, "INTERLEAVE"},
};

bool looks_integer(std::string_view s) {
  if (!s.empty() && (s.front() == '-' || s.front() == '+')) s.remove_prefix(1);
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

bool looks_decimal(std::string_view s) {
  if (s.empty() || looks_integer(s)) return false;
  if (s.find_first_not_of("+-.0123456789eE") != std::string_view::npos) return false;
  return parse_double(s).has_value();
}

int line_of(const YAML::Node& node) { return node.Mark().line >= 0 ? node.Mark().line + 1 : 0; }

std::string yaml_quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
    case '"': out += "\\\""; break;
    case '\\': out += "\\\\"; break;
    case '\n': out += "\\n"; break;
    case '\t': out += "\\t"; break;
    default: out += c;
    }
  }
  out += '"';
  return out;
}

void check_value(const Dimension& dim, const DimensionValue& v, int line) {
  auto fail = [&](const std::string& why) {
    throw SpecError(fmt::format("dimension '{}': value '{}' {}", dim.id, v.text(), why), line);
  };
  switch (dim.type) {
  case DirectiveType::DesignGoal:
    if (v.kind() != DimensionValue::Kind::Keyword || (v.text() != "area" && v.text() != "latency"))
      fail("is not one of {area, latency}");
    break;
  case DirectiveType::ClockPeriod:
    if (!v.is_number() || !(v.as_number() > 0)) fail("must be a positive clock period in ns");
    break;
  case DirectiveType::Unroll:
    if (v.kind() == DimensionValue::Kind::Keyword ? v.text() != "no"
                                                  : (v.kind() != DimensionValue::Kind::Integer || v.as_integer() < 2))
      fail("must be \"no\" or an integer >= 2");
    break;
  case DirectiveType::PipelineII:
    if (v.kind() == DimensionValue::Kind::Keyword ? v.text() != "none"
                                                  : (v.kind() != DimensionValue::Kind::Integer || v.as_integer() < 1))
      fail("must be \"none\" or an integer >= 1");
    break;
  case DirectiveType::Interleave:
    if (v.kind() != DimensionValue::Kind::Integer || v.as_integer() < 1) fail("must be an integer >= 1");
    break;
  }
}

void check_dimension_shape(const Dimension& dim, int line) {
  if (!is_identifier(dim.id)) throw SpecError(fmt::format("dimension id '{}' is not an identifier", dim.id), line);
  if (requires_target_path(dim.type)) {
    if (!dim.target_path || dim.target_path->empty())
      throw SpecError(fmt::format("dimension '{}': {} requires target_hls_path", dim.id, to_string(dim.type)), line);
  } else if (dim.target_path) {
    throw SpecError(fmt::format("dimension '{}': {} does not take target_hls_path", dim.id, to_string(dim.type)), line);
  }
  if (dim.values.empty()) throw SpecError(fmt::format("dimension '{}': empty values list", dim.id), line);
}

} // namespace

std::string_view to_string(DirectiveType t) {
  for (auto& [type, name] : kTypeNames)
    if (type == t) return name;
  return "?";
}

std::optional<DirectiveType> directive_type_from_string(std::string_view s) {
  for (auto& [type, name] : kTypeNames)
    if (name == s) return type;
  return std::nullopt;
}

bool requires_target_path(DirectiveType t) {
  return t == DirectiveType::Unroll || t == DirectiveType::PipelineII || t == DirectiveType::Interleave;
}

DimensionValue DimensionValue::keyword(std::string word) {
  DimensionValue v;
  v.kind_ = Kind::Keyword;
  v.text_ = std::move(word);
  return v;
}

DimensionValue DimensionValue::integer(std::int64_t value) {
  DimensionValue v;
  v.kind_ = Kind::Integer;
  v.text_ = std::to_string(value);
  v.integer_ = value;
  v.number_ = static_cast<double>(value);
  return v;
}

DimensionValue DimensionValue::decimal(std::string text) {
  auto parsed = parse_double(text);
  if (!parsed) throw SpecError("'" + text + "' is not a number");
  DimensionValue v;
  v.kind_ = Kind::Decimal;
  v.text_ = std::move(text);
  v.number_ = *parsed;
  return v;
}

DimensionValue DimensionValue::from_text(std::string_view text) {
  if (looks_integer(text)) {
    auto i = parse_int(text);
    if (!i) throw SpecError("integer '" + std::string(text) + "' out of range");
    DimensionValue v = integer(*i);
    v.text_ = std::string(text);
    return v;
  }
  if (looks_decimal(text)) return decimal(std::string(text));
  return keyword(std::string(text));
}

std::int64_t DimensionValue::as_integer() const {
  if (kind_ != Kind::Integer) throw ValidationError("value '" + text_ + "' is not an integer");
  return integer_;
}

double DimensionValue::as_number() const {
  if (kind_ == Kind::Keyword) throw ValidationError("value '" + text_ + "' is not a number");
  return number_;
}

void validate(const DesignSpaceSpec& spec) {
  if (spec.kernel_name.empty()) throw SpecError("kernel_name is empty");
  if (spec.dimensions.empty()) throw SpecError("at least one dimension is required");
  std::set<std::string> seen;
  for (const auto& dim : spec.dimensions) {
    check_dimension_shape(dim, 0);
    if (!seen.insert(dim.id).second) throw SpecError("duplicate dimension id '" + dim.id + "'");
    for (const auto& v : dim.values) check_value(dim, v, 0);
  }
}

DesignSpaceSpec parse_spec(std::string_view yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(yaml_text));
  } catch (const YAML::ParserException& e) {
    throw SpecError("syntax error: " + e.msg, e.mark.line + 1);
  }
  if (!root.IsMap()) throw SpecError("top level must be a mapping", line_of(root));

  for (auto it = root.begin(); it != root.end(); ++it) {
    auto key = it->first.as<std::string>();
    if (key != "kernel_name" && key != "base_hls_tcl_file" && key != "dimensions")
      throw SpecError("unknown key '" + key + "'", line_of(it->first));
  }

  auto scalar = [](const YAML::Node& n, const char* what) {
    if (!n || !n.IsScalar()) throw SpecError(std::string(what) + " must be a scalar", n ? line_of(n) : 0);
    return n.Scalar();
  };

  DesignSpaceSpec spec;
  if (!root["kernel_name"]) throw SpecError("missing kernel_name");
  spec.kernel_name = scalar(root["kernel_name"], "kernel_name");
  if (!root["base_hls_tcl_file"]) throw SpecError("missing base_hls_tcl_file");
  spec.base_directive_file = scalar(root["base_hls_tcl_file"], "base_hls_tcl_file");

  auto dims = root["dimensions"];
  if (!dims) throw SpecError("missing dimensions");
  if (!dims.IsSequence()) throw SpecError("dimensions must be a list", line_of(dims));
  if (dims.size() == 0) throw SpecError("at least one dimension is required", line_of(dims));

  std::set<std::string> seen;
  for (const auto& node : dims) {
    int line = line_of(node);
    if (!node.IsMap()) throw SpecError("dimension entry must be a mapping", line);
    for (auto it = node.begin(); it != node.end(); ++it) {
      auto key = it->first.as<std::string>();
      if (key != "id" && key != "type" && key != "target_hls_path" && key != "values")
        throw SpecError("unknown dimension key '" + key + "'", line_of(it->first));
    }
    Dimension dim;
    if (!node["id"]) throw SpecError("dimension without id", line);
    dim.id = scalar(node["id"], "id");
    if (!node["type"]) throw SpecError("dimension '" + dim.id + "' without type", line);
    auto type_text = scalar(node["type"], "type");
    auto type = directive_type_from_string(type_text);
    if (!type) throw SpecError("unknown directive type '" + type_text + "'", line_of(node["type"]));
    dim.type = *type;
    if (node["target_hls_path"]) dim.target_path = scalar(node["target_hls_path"], "target_hls_path");
    auto values = node["values"];
    if (!values) throw SpecError("dimension '" + dim.id + "' has no values", line);
    if (!values.IsSequence()) throw SpecError("values must be a list", line_of(values));
    for (const auto& v : values) dim.values.push_back(DimensionValue::from_text(scalar(v, "value")));

    check_dimension_shape(dim, line);
    if (!seen.insert(dim.id).second) throw SpecError("duplicate dimension id '" + dim.id + "'", line);
    for (std::size_t i = 0; i < dim.values.size(); ++i) check_value(dim, dim.values[i], line_of(values[i]));
    spec.dimensions.push_back(std::move(dim));
  }
  if (spec.kernel_name.empty()) throw SpecError("kernel_name is empty", line_of(root["kernel_name"]));
  return spec;
}

DesignSpaceSpec load_spec(const std::filesystem::path& path) { return parse_spec(read_file(path)); }

std::string serialize(const DesignSpaceSpec& spec) {
  std::string out;
  out += "kernel_name: " + yaml_quote(spec.kernel_name) + "\n";
  out += "base_hls_tcl_file: " + yaml_quote(spec.base_directive_file) + "\n";
  out += "dimensions:\n";
  for (std::size_t d = 0; d < spec.dimensions.size(); ++d) {
    const auto& dim = spec.dimensions[d];
    if (d) out += "\n";
    out += "  - id: " + yaml_quote(dim.id) + "\n";
    out += "    type: " + yaml_quote(to_string(dim.type)) + "\n";
    if (dim.target_path) out += "    target_hls_path: " + yaml_quote(*dim.target_path) + "\n";
    out += "    values: [";
    for (std::size_t i = 0; i < dim.values.size(); ++i) {
      if (i) out += ", ";
      out += dim.values[i].text();
    }
    out += "]\n";
  }
  return out;
}

const Setting* DesignPoint::find(std::string_view dimension_id) const {
  for (const auto& s : assignment)
    if (s.dimension_id == dimension_id) return &s;
  return nullptr;
}

std::uint64_t space_size(const DesignSpaceSpec& spec) {
  std::uint64_t total = 1;
  for (const auto& dim : spec.dimensions) {
    if (__builtin_mul_overflow(total, static_cast<std::uint64_t>(dim.values.size()), &total))
      throw SpecError("design space size overflows 64 bits");
  }
  return total;
}

DesignPoint point_at(const DesignSpaceSpec& spec, std::uint64_t index) {
  auto total = space_size(spec);
  if (index >= total) throw ValidationError(fmt::format("point index {} out of range ({} points)", index, total));
  DesignPoint p;
  p.index = index;
  p.assignment.resize(spec.dimensions.size());
  std::uint64_t rest = index;
  for (std::size_t d = spec.dimensions.size(); d-- > 0;) {
    const auto& dim = spec.dimensions[d];
    auto radix = static_cast<std::uint64_t>(dim.values.size());
    p.assignment[d] = Setting{dim.id, dim.type, dim.target_path, dim.values[rest % radix]};
    rest /= radix;
  }
  return p;
}

std::vector<DesignPoint> expand(const DesignSpaceSpec& spec) {
  validate(spec);
  auto total = space_size(spec);
  if (total > std::vector<DesignPoint>().max_size()) throw SpecError("design space too large to enumerate");
  std::vector<DesignPoint> points;
  points.reserve(static_cast<std::size_t>(total));
  // Odometer over value indices; the last dimension turns fastest.
  std::vector<std::size_t> digits(spec.dimensions.size(), 0);
  for (std::uint64_t i = 0; i < total; ++i) {
    DesignPoint p;
    p.index = i;
    for (std::size_t d = 0; d < digits.size(); ++d) {
      const auto& dim = spec.dimensions[d];
      p.assignment.push_back(Setting{dim.id, dim.type, dim.target_path, dim.values[digits[d]]});
    }
    points.push_back(std::move(p));
    for (std::size_t d = digits.size(); d-- > 0;) {
      if (++digits[d] < spec.dimensions[d].values.size()) break;
      digits[d] = 0;
    }
  }
  return points;
}

std::int64_t compute_interleave_requirement(std::int64_t accesses_per_iteration, std::int64_t unroll,
                                            std::optional<std::int64_t> initiation_interval) {
  if (accesses_per_iteration < 1 || unroll < 1)
    throw ValidationError("interleave requirement needs K >= 1 and U >= 1");
  if (initiation_interval && *initiation_interval < 1) throw ValidationError("initiation interval must be >= 1");
  std::int64_t ii_eff = initiation_interval ? *initiation_interval : unroll;
  std::int64_t demand = accesses_per_iteration * unroll;
  return std::max<std::int64_t>(1, (demand + ii_eff - 1) / ii_eff);
}

DirectiveTemplates DirectiveTemplates::defaults() {
  DirectiveTemplates t;
  t.lines[DirectiveType::DesignGoal] = "directive set -DESIGN_GOAL {value}";
  t.lines[DirectiveType::ClockPeriod] = "directive set -CLOCK_PERIOD {value}";
  t.lines[DirectiveType::Unroll] = "directive set {path} -UNROLL {value}";
  t.lines[DirectiveType::PipelineII] = "directive set {path} -PIPELINE_INIT_INTERVAL {value}";
  t.lines[DirectiveType::Interleave] = "directive set {path} -INTERLEAVE {value}";
  return t;
}

DirectiveTemplates DirectiveTemplates::parse(std::string_view text) {
  auto t = defaults();
  int line_no = 0;
  for (const auto& raw : split_lines(text)) {
    ++line_no;
    auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    auto colon = line.find(':');
    if (colon == std::string::npos) throw SpecError("template line must be 'TYPE: template'", line_no);
    auto name = trim(std::string_view(line).substr(0, colon));
    auto type = directive_type_from_string(name);
    if (!type) throw SpecError("unknown directive type '" + name + "' in templates", line_no);
    t.lines[*type] = trim(std::string_view(line).substr(colon + 1));
  }
  t.validate();
  return t;
}

void DirectiveTemplates::validate() const {
  for (auto& [type, name] : kTypeNames) {
    auto it = lines.find(type);
    if (it == lines.end()) throw SpecError(fmt::format("no template for {}", name));
    if (it->second.find("{value}") == std::string::npos)
      throw SpecError(fmt::format("template for {} lacks {{value}}", name));
    if (requires_target_path(type) && it->second.find("{path}") == std::string::npos)
      throw SpecError(fmt::format("template for {} lacks {{path}}", name));
  }
}

namespace {
void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
    s.replace(pos, from.size(), to);
}
} // namespace

bool is_skip_value(const DimensionValue& v) {
  return v.kind() == DimensionValue::Kind::Keyword && (v.text() == "no" || v.text() == "none");
}

std::string DirectiveTemplates::render(const Setting& setting) const {
  if (is_skip_value(setting.value)) return {};
  auto it = lines.find(setting.type);
  if (it == lines.end()) throw SpecError(fmt::format("no template for {}", to_string(setting.type)));
  std::string line = it->second;
  replace_all(line, "{path}", setting.target_path.value_or(""));
  replace_all(line, "{value}", setting.value.text());
  return line;
}

std::string script_name(std::uint64_t index) { return fmt::format("dp_{:06d}.tcl", index); }

bool Manifest::has_results() const {
  return std::any_of(rows.begin(), rows.end(), [](const ManifestRow& r) { return r.result.has_value(); });
}

namespace {
std::string opt_number(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

std::optional<double> parse_opt_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  auto v = parse_double(s);
  if (!v) throw ValidationError("manifest: bad number '" + s + "'");
  return v;
}

const std::vector<std::string> kResultColumns = {"status", "latency_ms", "area", "synth_seconds"};
} // namespace

std::string Manifest::to_csv() const {
  bool results = has_results();
  std::vector<std::string> header = {"index", "path"};
  header.insert(header.end(), dimension_ids.begin(), dimension_ids.end());
  if (results) header.insert(header.end(), kResultColumns.begin(), kResultColumns.end());
  std::string out = csv::format_row(header);
  for (const auto& row : rows) {
    std::vector<std::string> fields = {std::to_string(row.index), row.script_path};
    if (row.baseline) fields.resize(fields.size() + dimension_ids.size());
    else fields.insert(fields.end(), row.values.begin(), row.values.end());
    if (results) {
      if (row.result) {
        fields.push_back(row.result->status);
        fields.push_back(opt_number(row.result->latency_ms));
        fields.push_back(opt_number(row.result->area));
        fields.push_back(opt_number(row.result->synth_seconds));
      } else {
        fields.resize(fields.size() + kResultColumns.size());
      }
    }
    out += csv::format_row(fields);
  }
  return out;
}

Manifest Manifest::from_csv(std::string_view text) {
  auto table = csv::parse(text);
  if (table.empty()) throw ValidationError("manifest: missing header row");
  const auto& header = table.front();
  if (header.size() < 2 || header[0] != "index" || header[1] != "path")
    throw ValidationError("manifest: header must start with index,path");
  Manifest m;
  std::size_t dim_end = header.size();
  if (header.size() >= 2 + kResultColumns.size() &&
      std::equal(kResultColumns.begin(), kResultColumns.end(), header.end() - static_cast<long>(kResultColumns.size())))
    dim_end = header.size() - kResultColumns.size();
  bool results = dim_end != header.size();
  m.dimension_ids.assign(header.begin() + 2, header.begin() + static_cast<long>(dim_end));
  for (std::size_t r = 1; r < table.size(); ++r) {
    const auto& fields = table[r];
    if (fields.size() != header.size())
      throw ValidationError(fmt::format("manifest row {}: expected {} fields, got {}", r, header.size(), fields.size()));
    ManifestRow row;
    auto idx = parse_int(fields[0]);
    if (!idx || *idx < 0) throw ValidationError("manifest row " + std::to_string(r) + ": bad index");
    row.index = static_cast<std::uint64_t>(*idx);
    row.script_path = fields[1];
    row.values.assign(fields.begin() + 2, fields.begin() + static_cast<long>(dim_end));
    row.baseline = !row.values.empty() &&
                   std::all_of(row.values.begin(), row.values.end(), [](const std::string& s) { return s.empty(); });
    if (row.baseline) row.values.clear();
    if (results && !fields[dim_end].empty()) {
      ManifestResult res;
      res.status = fields[dim_end];
      res.latency_ms = parse_opt_number(fields[dim_end + 1]);
      res.area = parse_opt_number(fields[dim_end + 2]);
      res.synth_seconds = parse_opt_number(fields[dim_end + 3]);
      row.result = res;
    }
    m.rows.push_back(std::move(row));
  }
  return m;
}

Manifest Manifest::load(const std::filesystem::path& path) { return from_csv(read_file(path)); }

void Manifest::save(const std::filesystem::path& path) const { write_file(path, to_csv()); }

std::vector<std::pair<std::string, std::string>> Manifest::assignment_of(const ManifestRow& row) const {
  std::vector<std::pair<std::string, std::string>> out;
  if (row.baseline) return out;
  for (std::size_t i = 0; i < dimension_ids.size() && i < row.values.size(); ++i)
    out.emplace_back(dimension_ids[i], row.values[i]);
  return out;
}

Manifest emit_directives(const DesignSpaceSpec& spec, const std::vector<DesignPoint>& points,
                         const std::filesystem::path& out_dir, const DirectiveTemplates& templates,
                         const EmitOptions& options) {
  validate(spec);
  templates.validate();
  std::filesystem::path base = spec.base_directive_file;
  if (base.is_relative()) base = options.base_dir / base;
  std::string baseline = read_file(base);
  if (!baseline.empty() && baseline.back() != '\n') baseline += '\n';

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  Manifest manifest;
  for (const auto& dim : spec.dimensions) manifest.dimension_ids.push_back(dim.id);

  for (const auto& point : points) {
    if (point.assignment.size() != spec.dimensions.size())
      throw ValidationError(fmt::format("point {} does not cover every dimension", point.index));
    std::string script = baseline;
    ManifestRow row;
    row.index = point.index;
    row.script_path = script_name(point.index);
    for (std::size_t d = 0; d < spec.dimensions.size(); ++d) {
      const auto& setting = point.assignment[d];
      if (setting.dimension_id != spec.dimensions[d].id)
        throw ValidationError(fmt::format("point {}: assignment order differs from spec", point.index));
      auto line = templates.render(setting);
      if (!line.empty()) script += line + "\n";
      row.values.push_back(setting.value.text());
    }
    write_file(out_dir / row.script_path, script);
    manifest.rows.push_back(std::move(row));
  }
  if (options.include_baseline) {
    std::uint64_t index = space_size(spec);
    ManifestRow row;
    row.index = index;
    row.script_path = script_name(index);
    row.baseline = true;
    write_file(out_dir / row.script_path, baseline);
    manifest.rows.push_back(std::move(row));
  }
  manifest.save(out_dir / kManifestFile);
  return manifest;
}

DesignPoint point_from_row(const DesignSpaceSpec& spec, const Manifest& manifest, const ManifestRow& row) {
  if (row.baseline) throw ValidationError("baseline row has no design point");
  DesignPoint p;
  p.index = row.index;
  auto assignment = manifest.assignment_of(row);
  if (assignment.size() != spec.dimensions.size())
    throw ValidationError(fmt::format("manifest row {} does not match the spec's dimensions", row.index));
  for (std::size_t d = 0; d < spec.dimensions.size(); ++d) {
    const auto& dim = spec.dimensions[d];
    if (assignment[d].first != dim.id)
      throw ValidationError(fmt::format("manifest column '{}' does not match dimension '{}'", assignment[d].first, dim.id));
    auto it = std::find_if(dim.values.begin(), dim.values.end(),
                           [&](const DimensionValue& v) { return v.text() == assignment[d].second; });
    if (it == dim.values.end())
      throw ValidationError(fmt::format("manifest row {}: '{}' is not a value of '{}'", row.index, assignment[d].second, dim.id));
    p.assignment.push_back(Setting{dim.id, dim.type, dim.target_path, *it});
  }
  return p;
}

} // namespace hlsflow::designspace
