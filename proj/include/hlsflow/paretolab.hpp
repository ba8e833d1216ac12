#pragma once
// Pareto-front extraction on (latency, area) plus summary tables and plot data.

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hlsflow/designspace.hpp"
#include "hlsflow/synthrunner.hpp"

namespace hlsflow::paretolab {

struct DesignRecord {
  std::uint64_t point_index = 0;
  std::vector<std::pair<std::string, std::string>> assignment;
  synthrunner::SynthesisOutcome outcome;

  bool has_metrics() const { return outcome.success && outcome.latency_ms && outcome.area; }
};

// One record per manifest row; rows without a succeeded status carry no metrics.
std::vector<DesignRecord> records_from_manifest(const designspace::Manifest& manifest);

struct ParetoFront {
  std::vector<std::uint64_t> indices;  // ascending latency
};

ParetoFront pareto_front(const std::vector<DesignRecord>& records);

struct SummaryStats {
  std::size_t total_points = 0;
  std::size_t succeeded = 0;
  double success_rate = 0;  // percent, unrounded
  std::size_t pareto_count = 0;
  double latency_span_ratio = 0;  // 0 when the front is empty
  double area_span_ratio = 0;

  std::string success_rate_text() const;  // one decimal
};

SummaryStats summarize(const std::vector<DesignRecord>& records);

enum class ReportFormat { TextTable, Csv, PlotData };
ReportFormat report_format_from_string(std::string_view s);  // text-table | csv | plot-data

std::string emit_report(const std::vector<DesignRecord>& records, const ParetoFront& front, ReportFormat format,
                        std::string_view kernel_name = "kernel");

} // namespace hlsflow::paretolab
