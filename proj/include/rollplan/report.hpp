#pragma once

#include <filesystem>
#include <istream>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rollplan/metrics.hpp"

namespace rollplan {

class ReportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Header plus rows, '#' comment lines skipped.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::optional<Provenance> provenance;  // from a "# config_hash=... seed=..." line
};

/// Inverse of provenance_comment(); nullopt when the line does not match.
std::optional<Provenance> parse_provenance_comment(const std::string& line);

CsvTable read_csv(std::istream& in);

std::vector<SuccessRow> success_rows(const CsvTable& table);
std::vector<TimingRow> timing_rows(const CsvTable& table);
std::vector<ModelErrorRow> model_rows(const CsvTable& table);

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;  // sorted by x
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

/// Static SVG: axes, ticks, one polyline with markers per series, legend.
std::string render_svg(const LineChart& chart);

/// Success rate vs a planner knob ("n" or "l"), one series per task, for a
/// single backend. Rows whose other knob differs are kept as-is, so callers
/// should pass one sweep at a time.
LineChart success_curve(const std::vector<SuccessRow>& rows, Backend backend, const std::string& knob);

struct ReportSummary {
  std::vector<std::filesystem::path> written;
  std::size_t success_rows = 0;
  std::size_t timing_rows = 0;
  std::size_t model_rows = 0;
};

/// Reads every CSV under `dir` (sorted by file name), classifies it by
/// header, and writes summary.md, merged CSVs and SVG charts into `out_dir`.
ReportSummary write_report(const std::filesystem::path& dir, const std::filesystem::path& out_dir);

}  // namespace rollplan
