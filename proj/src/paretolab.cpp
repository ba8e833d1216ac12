#include "hlsflow/paretolab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <fmt/format.h>

namespace hlsflow::paretolab {

std::vector<DesignRecord> records_from_manifest(const designspace::Manifest& manifest) {
  std::vector<DesignRecord> out;
  out.reserve(manifest.rows.size());
  for (const auto& row : manifest.rows) {
    DesignRecord r;
    r.point_index = row.index;
    r.assignment = manifest.assignment_of(row);
    if (row.result) {
      const auto& res = *row.result;
      r.outcome.synth_seconds = res.synth_seconds.value_or(0);
      if (res.status == "succeeded" && res.latency_ms && res.area) {
        r.outcome.success = true;
        r.outcome.latency_ms = res.latency_ms;
        r.outcome.area = res.area;
      } else {
        r.outcome.log_text = res.status.empty() ? "not run" : res.status;
      }
    } else {
      r.outcome.log_text = "not run";
    }
    out.push_back(std::move(r));
  }
  return out;
}

ParetoFront pareto_front(const std::vector<DesignRecord>& records) {
  std::vector<const DesignRecord*> ok;
  for (const auto& r : records)
    if (r.has_metrics()) ok.push_back(&r);
  std::sort(ok.begin(), ok.end(), [](const DesignRecord* a, const DesignRecord* b) {
    return std::tie(*a->outcome.latency_ms, *a->outcome.area, a->point_index) <
           std::tie(*b->outcome.latency_ms, *b->outcome.area, b->point_index);
  });
  ParetoFront front;
  double best_area = std::numeric_limits<double>::infinity();
  for (const auto* r : ok) {
    if (*r->outcome.area < best_area) {
      front.indices.push_back(r->point_index);
      best_area = *r->outcome.area;
    }
  }
  return front;
}

std::string SummaryStats::success_rate_text() const { return format_fixed(success_rate, 1) + "%"; }

SummaryStats summarize(const std::vector<DesignRecord>& records) {
  SummaryStats s;
  s.total_points = records.size();
  for (const auto& r : records)
    if (r.has_metrics()) ++s.succeeded;
  s.success_rate = s.total_points ? 100.0 * static_cast<double>(s.succeeded) / static_cast<double>(s.total_points) : 0;

  auto front = pareto_front(records);
  s.pareto_count = front.indices.size();
  if (s.pareto_count == 0) return s;
  std::set<std::uint64_t> members(front.indices.begin(), front.indices.end());
  double lat_lo = std::numeric_limits<double>::infinity(), lat_hi = 0;
  double area_lo = std::numeric_limits<double>::infinity(), area_hi = 0;
  for (const auto& r : records) {
    if (!r.has_metrics() || !members.count(r.point_index)) continue;
    lat_lo = std::min(lat_lo, *r.outcome.latency_ms);
    lat_hi = std::max(lat_hi, *r.outcome.latency_ms);
    area_lo = std::min(area_lo, *r.outcome.area);
    area_hi = std::max(area_hi, *r.outcome.area);
  }
  s.latency_span_ratio = lat_lo > 0 ? lat_hi / lat_lo : std::numeric_limits<double>::infinity();
  s.area_span_ratio = area_lo > 0 ? area_hi / area_lo : std::numeric_limits<double>::infinity();
  if (s.pareto_count == 1) s.latency_span_ratio = s.area_span_ratio = 1;
  return s;
}

ReportFormat report_format_from_string(std::string_view s) {
  if (s == "text-table") return ReportFormat::TextTable;
  if (s == "csv") return ReportFormat::Csv;
  if (s == "plot-data") return ReportFormat::PlotData;
  throw ValidationError("unknown report format '" + std::string(s) + "' (expected text-table, csv or plot-data)");
}

namespace {

std::string text_table(const std::vector<DesignRecord>& records, const ParetoFront& front, std::string_view kernel) {
  const std::vector<std::string> header = {"Kernel", "DSE points", "Successful syntheses", "Synthesis Success Rate",
                                           "Pareto-optimal designs"};
  std::vector<std::vector<std::string>> rows = {header};
  if (!records.empty()) {
    auto s = summarize(records);
    rows.push_back({std::string(kernel), std::to_string(s.total_points), std::to_string(s.succeeded),
                    s.success_rate_text(), std::to_string(front.indices.size())});
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::string out;
  auto line = [&](const std::vector<std::string>& row) {
    std::string l;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) l += " | ";
      l += c == 0 ? fmt::format("{:<{}}", row[c], width[c]) : fmt::format("{:>{}}", row[c], width[c]);
    }
    out += l + "\n";
  };
  line(rows[0]);
  std::string rule;
  for (std::size_t c = 0; c < width.size(); ++c) rule += (c ? "-+-" : "") + std::string(width[c], '-');
  out += rule + "\n";
  for (std::size_t i = 1; i < rows.size(); ++i) line(rows[i]);
  return out;
}

std::string opt_text(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

std::string csv_report(const std::vector<DesignRecord>& records, const std::set<std::uint64_t>& members) {
  std::vector<std::string> dims;
  for (const auto& r : records)
    for (const auto& [id, _] : r.assignment)
      if (std::find(dims.begin(), dims.end(), id) == dims.end()) dims.push_back(id);
  std::vector<std::string> header = {"index"};
  header.insert(header.end(), dims.begin(), dims.end());
  for (const char* h : {"success", "latency_ms", "area", "synth_seconds", "is_pareto"}) header.push_back(h);
  std::string out = csv::format_row(header);
  for (const auto& r : records) {
    std::vector<std::string> row = {std::to_string(r.point_index)};
    for (const auto& d : dims) {
      auto it = std::find_if(r.assignment.begin(), r.assignment.end(), [&](const auto& kv) { return kv.first == d; });
      row.push_back(it == r.assignment.end() ? "" : it->second);
    }
    bool ok = r.has_metrics();
    row.push_back(ok ? "1" : "0");
    row.push_back(ok ? opt_text(r.outcome.latency_ms) : "");
    row.push_back(ok ? opt_text(r.outcome.area) : "");
    row.push_back(format_number(r.outcome.synth_seconds));
    row.push_back(members.count(r.point_index) ? "1" : "0");
    out += csv::format_row(row);
  }
  return out;
}

std::string plot_data(const std::vector<DesignRecord>& records, const std::set<std::uint64_t>& members) {
  std::string out = "latency_ms\tarea\tsynth_seconds\tis_pareto\n";
  for (const auto& r : records) {
    if (!r.has_metrics()) continue;
    out += fmt::format("{}\t{}\t{}\t{}\n", format_number(*r.outcome.latency_ms), format_number(*r.outcome.area),
                       format_number(r.outcome.synth_seconds), members.count(r.point_index) ? 1 : 0);
  }
  return out;
}

} // namespace

std::string emit_report(const std::vector<DesignRecord>& records, const ParetoFront& front, ReportFormat format,
                        std::string_view kernel_name) {
  std::set<std::uint64_t> members(front.indices.begin(), front.indices.end());
  switch (format) {
  case ReportFormat::TextTable: return text_table(records, front, kernel_name);
  case ReportFormat::Csv: return csv_report(records, members);
  case ReportFormat::PlotData: return plot_data(records, members);
  }
  throw ValidationError("unknown report format");
}

} // namespace hlsflow::paretolab
