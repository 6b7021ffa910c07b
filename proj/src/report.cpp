#include "rollplan/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

namespace rollplan {

namespace {

const std::vector<std::string> kSuccessHeader = {"task", "backend", "n",     "l",           "seed",
                                                 "success", "partial", "steps", "plan_time_ms"};
const std::vector<std::string> kTimingHeader = {"n", "workers", "median_ms", "p90_ms"};
const std::vector<std::string> kModelHeader = {"horizon", "l1", "ofl", "extract_err"};

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <typename T>
T to_num(const std::string& s, const char* what) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw ReportError(std::string("bad ") + what + " value '" + s + "'");
  }
  return v;
}

void expect_header(const CsvTable& t, const std::vector<std::string>& want, const char* kind) {
  if (t.header != want) throw ReportError(std::string("not a ") + kind + " CSV (header mismatch)");
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

/// Round-number tick positions covering [lo, hi].
std::vector<double> ticks(double lo, double hi, int target) {
  const double span = hi - lo;
  const double raw = span / std::max(target, 1);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  }
  std::vector<double> out;
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * span; t += step) out.push_back(t);
  return out;
}

void write_text(const std::filesystem::path& p, const std::string& text, ReportSummary& summary) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw ReportError("cannot write '" + p.string() + "'");
  out << text;
  summary.written.push_back(p);
}

}  // namespace

std::optional<Provenance> parse_provenance_comment(const std::string& line) {
  static const std::string kHash = "# config_hash=", kSeed = " seed=";
  if (line.rfind(kHash, 0) != 0 || line.size() < kHash.size() + 16 + kSeed.size()) return std::nullopt;
  const char* h = line.data() + kHash.size();
  Provenance p;
  auto r = std::from_chars(h, h + 16, p.config_hash, 16);
  if (r.ec != std::errc{} || r.ptr != h + 16) return std::nullopt;
  if (line.compare(kHash.size() + 16, kSeed.size(), kSeed) != 0) return std::nullopt;
  const char* s = h + 16 + kSeed.size();
  const char* end = line.data() + line.size();
  r = std::from_chars(s, end, p.seed);
  if (r.ec != std::errc{} || r.ptr != end) return std::nullopt;
  return p;
}

CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (!have_header && !t.provenance) t.provenance = parse_provenance_comment(line);
      continue;
    }
    auto cells = split_csv_line(line);
    if (!have_header) {
      t.header = std::move(cells);
      have_header = true;
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw ReportError("row has " + std::to_string(cells.size()) + " cells, header has " +
                        std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(cells));
  }
  if (!have_header) throw ReportError("CSV has no header row");
  return t;
}

std::vector<SuccessRow> success_rows(const CsvTable& table) {
  expect_header(table, kSuccessHeader, "success");
  std::vector<SuccessRow> out;
  for (const auto& c : table.rows) {
    SuccessRow r;
    r.task = c[0];
    try {
      r.backend = backend_from_string(c[1]);
    } catch (const std::invalid_argument& e) {
      throw ReportError(e.what());
    }
    r.n = to_num<int>(c[2], "n");
    r.l = to_num<int>(c[3], "l");
    r.seed = to_num<std::uint64_t>(c[4], "seed");
    r.success = to_num<int>(c[5], "success") != 0;
    r.partial = to_num<int>(c[6], "partial") != 0;
    r.steps = to_num<int>(c[7], "steps");
    r.plan_time_ms = to_num<double>(c[8], "plan_time_ms");
    out.push_back(r);
  }
  return out;
}

std::vector<TimingRow> timing_rows(const CsvTable& table) {
  expect_header(table, kTimingHeader, "timing");
  std::vector<TimingRow> out;
  for (const auto& c : table.rows) {
    out.push_back({to_num<int>(c[0], "n"), to_num<int>(c[1], "workers"), to_num<double>(c[2], "median_ms"),
                   to_num<double>(c[3], "p90_ms")});
  }
  return out;
}

std::vector<ModelErrorRow> model_rows(const CsvTable& table) {
  expect_header(table, kModelHeader, "model");
  std::vector<ModelErrorRow> out;
  for (const auto& c : table.rows) {
    out.push_back({to_num<int>(c[0], "horizon"), to_num<double>(c[1], "l1"), to_num<double>(c[2], "ofl"),
                   to_num<double>(c[3], "extract_err")});
  }
  return out;
}

std::string render_svg(const LineChart& chart) {
  constexpr double W = 640, H = 420, left = 70, right = 170, top = 40, bottom = 60;
  const double pw = W - left - right, ph = H - top - bottom;

  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : chart.series) {
    for (const auto& [x, y] : s.points) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax == xmin) xmin -= 0.5, xmax += 0.5;
  ymin = std::min(ymin, 0.0);
  if (ymax <= ymin) ymax = ymin + 1.0;
  ymax += 0.05 * (ymax - ymin);

  auto sx = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto sy = [&](double y) { return top + ph - (y - ymin) / (ymax - ymin) * ph; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
     << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(chart.title)
     << "</text>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
     << "\" stroke=\"black\"/>\n";

  std::set<double> xs;
  for (const auto& s : chart.series) {
    for (const auto& p : s.points) xs.insert(p.first);
  }
  const std::vector<double> xt = xs.size() <= 12 ? std::vector<double>(xs.begin(), xs.end()) : ticks(xmin, xmax, 8);
  for (double x : xt) {
    os << "<line x1=\"" << fixed(sx(x), 2) << "\" y1=\"" << top + ph << "\" x2=\"" << fixed(sx(x), 2) << "\" y2=\""
       << top + ph + 5 << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << fixed(sx(x), 2) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">"
       << fixed(x, std::floor(x) == x ? 0 : 2) << "</text>\n";
  }
  for (double y : ticks(ymin, ymax, 5)) {
    os << "<line x1=\"" << left - 5 << "\" y1=\"" << fixed(sy(y), 2) << "\" x2=\"" << left + pw << "\" y2=\""
       << fixed(sy(y), 2) << "\" stroke=\"#dddddd\"/>\n";
    os << "<text x=\"" << left - 8 << "\" y=\"" << fixed(sy(y) + 4, 2) << "\" text-anchor=\"end\">" << fixed(y, 2)
       << "</text>\n";
  }
  os << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\">"
     << xml_escape(chart.x_label) << "</text>\n";
  os << "<text transform=\"translate(18," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
     << xml_escape(chart.y_label) << "</text>\n";

  for (std::size_t i = 0; i < chart.series.size(); ++i) {
    const auto& s = chart.series[i];
    const char* color = kPalette[i % std::size(kPalette)];
    os << "<g class=\"series\" data-name=\"" << xml_escape(s.name) << "\">\n<polyline fill=\"none\" stroke=\""
       << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t k = 0; k < s.points.size(); ++k) {
      if (k) os << ' ';
      os << fixed(sx(s.points[k].first), 2) << ',' << fixed(sy(s.points[k].second), 2);
    }
    os << "\"/>\n";
    for (const auto& [x, y] : s.points) {
      os << "<circle cx=\"" << fixed(sx(x), 2) << "\" cy=\"" << fixed(sy(y), 2) << "\" r=\"3\" fill=\"" << color
         << "\"/>\n";
    }
    os << "</g>\n";
    const double ly = top + 10 + 18.0 * static_cast<double>(i);
    os << "<line x1=\"" << left + pw + 15 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 35 << "\" y2=\"" << ly
       << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << left + pw + 40 << "\" y=\"" << ly + 4 << "\">" << xml_escape(s.name) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

LineChart success_curve(const std::vector<SuccessRow>& rows, Backend backend, const std::string& knob) {
  if (knob != "n" && knob != "l") throw ReportError("knob must be n or l");
  std::map<std::string, std::map<int, Rate>> by_task;
  for (const auto& r : rows) {
    if (r.backend != backend) continue;
    auto& rate = by_task[r.task][knob == "n" ? r.n : r.l];
    rate.hits += r.success ? 1 : 0;
    ++rate.total;
  }
  LineChart chart;
  chart.title = "Success rate vs " + std::string(knob == "n" ? "number of candidates" : "rollout length") + " (" +
                to_string(backend) + ")";
  chart.x_label = knob == "n" ? "candidates n" : "rollout length l";
  chart.y_label = "success rate";
  for (const auto& [task, pts] : by_task) {
    Series s;
    s.name = task;
    for (const auto& [x, rate] : pts) s.points.emplace_back(x, rate.value());
    chart.series.push_back(std::move(s));
  }
  return chart;
}

ReportSummary write_report(const std::filesystem::path& dir, const std::filesystem::path& out_dir) {
  if (!std::filesystem::is_directory(dir)) throw ReportError("'" + dir.string() + "' is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());

  std::vector<SuccessRow> success;
  std::vector<TimingRow> timing;
  std::vector<ModelErrorRow> model;
  std::vector<std::pair<std::string, std::optional<Provenance>>> sources;
  for (const auto& f : files) {
    if (f.filename().string().rfind("merged_", 0) == 0) continue;
    std::ifstream in(f);
    if (!in) throw ReportError("cannot read '" + f.string() + "'");
    CsvTable t;
    try {
      t = read_csv(in);
    } catch (const ReportError& e) {
      throw ReportError(f.string() + ": " + e.what());
    }
    bool known = true;
    if (t.header == kSuccessHeader) {
      auto rows = success_rows(t);
      success.insert(success.end(), rows.begin(), rows.end());
    } else if (t.header == kTimingHeader) {
      auto rows = timing_rows(t);
      timing.insert(timing.end(), rows.begin(), rows.end());
    } else if (t.header == kModelHeader) {
      auto rows = model_rows(t);
      model.insert(model.end(), rows.begin(), rows.end());
    } else {
      known = false;
    }
    if (known) sources.emplace_back(f.filename().string(), t.provenance);
  }

  std::filesystem::create_directories(out_dir);
  ReportSummary summary;
  summary.success_rows = success.size();
  summary.timing_rows = timing.size();
  summary.model_rows = model.size();
  // Shared provenance is kept as-is. Mixed inputs get a hash over the
  // source stamps and seed 0; the summary lists every source.
  Provenance merged{};
  bool uniform = !sources.empty();
  std::string stamps;
  for (const auto& [name, prov] : sources) {
    stamps += prov ? provenance_comment(*prov) : std::string("# none");
    stamps += '\n';
    if (!prov || !sources.front().second || !(*prov == *sources.front().second)) uniform = false;
  }
  if (uniform) {
    merged = *sources.front().second;
  } else {
    merged.config_hash = fnv1a64(stamps);
  }
  const Provenance& prov = merged;

  std::ostringstream md;
  md << "# Benchmark summary\n\n";
  if (!success.empty()) {
    std::ostringstream csv;
    write_success_csv(csv, success, prov);
    write_text(out_dir / "merged_success.csv", csv.str(), summary);

    // backend, n, l -> task -> counts
    std::map<std::tuple<std::string, int, int>, std::map<std::string, std::pair<Rate, Rate>>> table;
    std::set<std::string> tasks;
    for (const auto& r : success) {
      auto& cell = table[{to_string(r.backend), r.n, r.l}][r.task];
      cell.first.hits += r.success ? 1 : 0;
      ++cell.first.total;
      cell.second.hits += r.partial ? 1 : 0;
      ++cell.second.total;
      tasks.insert(r.task);
    }
    md << "## Success rate\n\n| backend | n | l |";
    for (const auto& t : tasks) md << ' ' << t << " |";
    md << " overall | partial | episodes |\n|---|---|---|";
    for (std::size_t i = 0; i < tasks.size(); ++i) md << "---|";
    md << "---|---|---|\n";
    for (const auto& [key, per_task] : table) {
      const auto& [backend, n, l] = key;
      md << "| " << backend << " | " << n << " | " << l << " |";
      Rate all, partial;
      for (const auto& t : tasks) {
        auto it = per_task.find(t);
        if (it == per_task.end()) {
          md << " - |";
          continue;
        }
        md << ' ' << fixed(it->second.first.value(), 3) << " |";
        all.hits += it->second.first.hits;
        all.total += it->second.first.total;
        partial.hits += it->second.second.hits;
        partial.total += it->second.second.total;
      }
      md << ' ' << fixed(all.value(), 3) << " | " << fixed(partial.value(), 3) << " | " << all.total << " |\n";
    }
    md << '\n';

    for (Backend b : {Backend::env_sim, Backend::dynamics}) {
      for (const char* knob : {"n", "l"}) {
        std::set<int> values;
        for (const auto& r : success) {
          if (r.backend == b) values.insert(std::string(knob) == "n" ? r.n : r.l);
        }
        if (values.size() < 2) continue;
        const auto name = "success_vs_" + std::string(knob) + "_" + to_string(b) + ".svg";
        write_text(out_dir / name, render_svg(success_curve(success, b, knob)), summary);
        md << "![" << name << "](" << name << ")\n\n";
      }
    }
  }
  if (!timing.empty()) {
    std::ostringstream csv;
    write_timing_csv(csv, timing, prov);
    write_text(out_dir / "merged_timing.csv", csv.str(), summary);
    md << "## Planning time per step\n\n| n | workers | median ms | p90 ms |\n|---|---|---|---|\n";
    std::map<int, Series> by_workers;
    for (const auto& r : timing) {
      md << "| " << r.n << " | " << r.workers << " | " << fixed(r.median_ms, 3) << " | " << fixed(r.p90_ms, 3)
         << " |\n";
      auto& s = by_workers[r.workers];
      s.name = std::to_string(r.workers) + " worker" + (r.workers == 1 ? "" : "s");
      s.points.emplace_back(r.n, r.median_ms);
    }
    LineChart chart{"Median planning time per step", "candidates n", "ms", {}};
    for (auto& [w, s] : by_workers) {
      std::sort(s.points.begin(), s.points.end());
      chart.series.push_back(std::move(s));
    }
    write_text(out_dir / "timing.svg", render_svg(chart), summary);
    md << "\n![timing.svg](timing.svg)\n\n";
  }
  if (!model.empty()) {
    std::ostringstream csv;
    write_model_csv(csv, model, prov);
    write_text(out_dir / "merged_model.csv", csv.str(), summary);
    md << "## Dynamics model error\n\nPixel L1 and extraction error stand in for image-quality scores that need "
          "pretrained networks; the motion metric compares frame differences.\n\n"
          "| horizon | L1 | motion L1 | extraction error (px) |\n|---|---|---|---|\n";
    Series l1{"pixel L1", {}};
    for (const auto& r : model) {
      md << "| " << r.horizon << " | " << fixed(r.l1, 5) << " | " << fixed(r.ofl, 5) << " | "
         << fixed(r.extract_err, 3) << " |\n";
      l1.points.emplace_back(r.horizon, r.l1);
    }
    std::sort(l1.points.begin(), l1.points.end());
    write_text(out_dir / "model_error.svg", render_svg({"Open-loop prediction error", "horizon", "L1", {l1}}),
               summary);
    md << "\n![model_error.svg](model_error.svg)\n";
  }
  md << "\n## Sources\n\n";
  for (const auto& [name, prov] : sources) {
    md << "- " << name << ": " << (prov ? provenance_comment(*prov).substr(2) : std::string("no provenance line"))
       << '\n';
  }
  write_text(out_dir / "summary.md", md.str(), summary);
  return summary;
}

}  // namespace rollplan
