#include "eraps/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace eraps {

namespace {

void check_lengths(std::span<const PredictionSet> sets, std::span<const int> labels) {
  if (sets.size() != labels.size()) {
    throw DimensionError("metrics: " + std::to_string(sets.size()) + " sets but " +
                            std::to_string(labels.size()) + " labels");
  }
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw PreconditionError("csv: bad number '" + s + "'");
  return v;
}

std::optional<double> parse_optional(const std::string& s) {
  const double v = parse_double(s);
  if (std::isnan(v)) return std::nullopt;
  return v;
}

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<double> optional_from_json(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

MarginalMetrics marginal_metrics(std::span<const PredictionSet> sets, std::span<const int> labels) {
  check_lengths(sets, labels);
  if (sets.empty()) throw PreconditionError("metrics: no test points");
  std::size_t covered = 0;
  std::size_t total_size = 0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    covered += sets[i].contains(labels[i]) ? 1 : 0;
    total_size += sets[i].size();
  }
  const auto n = static_cast<double>(sets.size());
  return {static_cast<double>(covered) / n, static_cast<double>(total_size) / n};
}

std::vector<ClassMetrics> class_conditional_metrics(std::span<const PredictionSet> sets,
                                                    std::span<const int> labels, std::size_t num_classes) {
  check_lengths(sets, labels);
  std::vector<std::size_t> covered(num_classes, 0), sizes(num_classes, 0);
  std::vector<ClassMetrics> out(num_classes);
  for (std::size_t i = 0; i < sets.size(); ++i) {
    if (labels[i] == kUnseenLabel) continue;
    const auto c = static_cast<std::size_t>(labels[i]);
    ++out.at(c).count;
    covered[c] += sets[i].contains(labels[i]) ? 1 : 0;
    sizes[c] += sets[i].size();
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (out[c].count == 0) continue;
    const auto n = static_cast<double>(out[c].count);
    out[c].coverage = static_cast<double>(covered[c]) / n;
    out[c].mean_size = static_cast<double>(sizes[c]) / n;
  }
  return out;
}

std::vector<StratumMetrics> set_stratified_metrics(std::span<const PredictionSet> sets,
                                                   std::span<const int> labels, std::span<const double> edges,
                                                   std::size_t num_classes) {
  check_lengths(sets, labels);
  if (edges.size() < 2) throw PreconditionError("strata: need at least two edges");
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (!(edges[i] > edges[i - 1])) throw PreconditionError("strata: edges must be strictly increasing");
  }
  if (edges.front() > 0.0 || edges.back() < static_cast<double>(num_classes)) {
    throw PreconditionError("strata: edges must cover [0, K]");
  }
  const std::size_t bins = edges.size() - 1;
  std::vector<StratumMetrics> out(bins);
  std::vector<std::size_t> covered(bins, 0);
  for (std::size_t b = 0; b < bins; ++b) {
    out[b].lower = edges[b];
    out[b].upper = edges[b + 1];
  }
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const auto size = static_cast<double>(sets[i].size());
    std::size_t b = static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), size) - edges.begin());
    b = std::min(b == 0 ? 0 : b - 1, bins - 1);
    ++out[b].count;
    covered[b] += sets[i].contains(labels[i]) ? 1 : 0;
  }
  for (std::size_t b = 0; b < bins; ++b) {
    if (out[b].count > 0) out[b].coverage = static_cast<double>(covered[b]) / static_cast<double>(out[b].count);
  }
  return out;
}

std::vector<double> default_strata_edges(std::size_t num_classes) {
  std::vector<double> edges{0.0};
  while (edges.back() < static_cast<double>(num_classes)) edges.push_back(edges.back() + 2.0);
  return edges;
}

EvalReport evaluate(std::span<const PredictionSet> sets, std::span<const int> labels, std::size_t num_classes,
                    double alpha, const RegParams& reg, const ReportContext& context) {
  EvalReport r;
  r.method = context.method;
  r.alpha = alpha;
  r.reg = reg;
  r.seed = context.seed;
  r.calibration = context.calibration;
  r.num_points = sets.size();
  const auto m = marginal_metrics(sets, labels);
  r.coverage = m.coverage;
  r.mean_size = m.mean_size;
  r.per_class = class_conditional_metrics(sets, labels, num_classes);
  const auto edges = context.strata_edges.empty() ? default_strata_edges(num_classes) : context.strata_edges;
  r.strata = set_stratified_metrics(sets, labels, edges, num_classes);
  return r;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    classes.push_back({{"class", c},
                       {"count", r.per_class[c].count},
                       {"coverage", optional_json(r.per_class[c].coverage)},
                       {"mean_size", optional_json(r.per_class[c].mean_size)}});
  }
  nlohmann::json strata = nlohmann::json::array();
  for (const auto& s : r.strata) {
    strata.push_back({{"lower", s.lower}, {"upper", s.upper}, {"count", s.count},
                      {"coverage", optional_json(s.coverage)}});
  }
  return {{"method", r.method},
          {"alpha", r.alpha},
          {"lambda", r.reg.lambda},
          {"k_reg", r.reg.k_reg},
          {"seed", r.seed},
          {"calibration", r.calibration},
          {"num_points", r.num_points},
          {"coverage", r.coverage},
          {"mean_size", r.mean_size},
          {"per_class", classes},
          {"strata", strata}};
}

EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.method = j.at("method").get<std::string>();
  r.alpha = j.at("alpha").get<double>();
  r.reg.lambda = j.at("lambda").get<double>();
  r.reg.k_reg = j.at("k_reg").get<int>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.calibration = j.at("calibration").get<std::string>();
  r.num_points = j.at("num_points").get<std::size_t>();
  r.coverage = j.at("coverage").get<double>();
  r.mean_size = j.at("mean_size").get<double>();
  for (const auto& c : j.at("per_class")) {
    r.per_class.push_back({c.at("count").get<std::size_t>(), optional_from_json(c.at("coverage")),
                           optional_from_json(c.at("mean_size"))});
  }
  for (const auto& s : j.at("strata")) {
    r.strata.push_back({s.at("lower").get<double>(), s.at("upper").get<double>(), s.at("count").get<std::size_t>(),
                        optional_from_json(s.at("coverage"))});
  }
  return r;
}

std::string format_number(double value) {
  if (std::isnan(value)) return "NaN";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

std::string format_optional(const std::optional<double>& value) {
  return value ? format_number(*value) : "NaN";
}

std::string csv_header(const EvalReport& shape) {
  std::string h = "method,alpha,lambda,k_reg,seed,calibration,n,coverage,set_size";
  for (std::size_t c = 0; c < shape.per_class.size(); ++c) {
    const auto p = "class_" + std::to_string(c);
    h += "," + p + "_n," + p + "_coverage," + p + "_size";
  }
  for (const auto& s : shape.strata) {
    const auto p = "stratum_" + format_number(s.lower) + "_" + format_number(s.upper);
    h += "," + p + "_n," + p + "_coverage";
  }
  return h;
}

std::string csv_row(const EvalReport& r) {
  std::string row = r.method + "," + format_number(r.alpha) + "," + format_number(r.reg.lambda) + "," +
                    std::to_string(r.reg.k_reg) + "," + std::to_string(r.seed) + "," + r.calibration + "," +
                    std::to_string(r.num_points) + "," + format_number(r.coverage) + "," +
                    format_number(r.mean_size);
  for (const auto& c : r.per_class) {
    row += "," + std::to_string(c.count) + "," + format_optional(c.coverage) + "," + format_optional(c.mean_size);
  }
  for (const auto& s : r.strata) row += "," + std::to_string(s.count) + "," + format_optional(s.coverage);
  return row;
}

std::string to_csv(std::span<const EvalReport> reports) {
  if (reports.empty()) return {};
  std::string out = csv_header(reports.front()) + "\n";
  for (const auto& r : reports) {
    if (r.per_class.size() != reports.front().per_class.size() || r.strata.size() != reports.front().strata.size()) {
      throw PreconditionError("to_csv: reports have different column layouts");
    }
    out += csv_row(r) + "\n";
  }
  return out;
}

std::vector<EvalReport> reports_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) return {};
  const auto header = split_line(line);
  constexpr std::size_t kFixed = 9;
  if (header.size() < kFixed || header[0] != "method") throw PreconditionError("csv: unrecognized header");

  std::size_t num_classes = 0;
  std::vector<std::pair<double, double>> strata;
  for (std::size_t i = kFixed; i < header.size(); ++i) {
    const auto& name = header[i];
    if (name.starts_with("class_") && name.ends_with("_n")) {
      ++num_classes;
    } else if (name.starts_with("stratum_") && name.ends_with("_n")) {
      const auto body = name.substr(8, name.size() - 10);
      const auto sep = body.find('_');
      strata.emplace_back(parse_double(body.substr(0, sep)), parse_double(body.substr(sep + 1)));
    }
  }
  if (header.size() != kFixed + 3 * num_classes + 2 * strata.size()) throw PreconditionError("csv: bad header");

  std::vector<EvalReport> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != header.size()) {
      throw PreconditionError("csv: row " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                              " cells, expected " + std::to_string(header.size()));
    }
    EvalReport r;
    r.method = cells[0];
    r.alpha = parse_double(cells[1]);
    r.reg.lambda = parse_double(cells[2]);
    r.reg.k_reg = std::stoi(cells[3]);
    r.seed = std::stoull(cells[4]);
    r.calibration = cells[5];
    r.num_points = std::stoull(cells[6]);
    r.coverage = parse_double(cells[7]);
    r.mean_size = parse_double(cells[8]);
    std::size_t i = kFixed;
    for (std::size_t c = 0; c < num_classes; ++c, i += 3) {
      r.per_class.push_back({std::stoull(cells[i]), parse_optional(cells[i + 1]), parse_optional(cells[i + 2])});
    }
    for (const auto& [lo, hi] : strata) {
      r.strata.push_back({lo, hi, std::stoull(cells[i]), parse_optional(cells[i + 1])});
      i += 2;
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<RegParams> default_sweep_grid(std::size_t num_classes) {
  if (num_classes < 2) throw PreconditionError("regularizer sweep needs K >= 2");
  constexpr int kSteps = 10;
  std::vector<RegParams> grid;
  grid.reserve(kSteps * kSteps);
  const double k_hi = static_cast<double>(num_classes - 1);
  for (int i = 0; i < kSteps; ++i) {
    const double lambda = 0.01 + (10.0 - 0.01) * i / (kSteps - 1);
    for (int j = 0; j < kSteps; ++j) {
      const double k = 1.0 + (k_hi - 1.0) * j / (kSteps - 1);
      grid.push_back({lambda, static_cast<int>(std::lround(k))});
    }
  }
  return grid;
}

std::vector<EvalReport> regularizer_sweep(const ConformalInputs& inputs, std::span<const int> test_labels,
                                          double alpha, std::vector<RegParams> grid, const StreamOptions& stream,
                                          const ReportContext& context) {
  if (grid.empty()) throw PreconditionError("regularizer sweep: empty grid");
  if (inputs.num_classes < 2) throw PreconditionError("regularizer sweep needs K >= 2");
  std::stable_sort(grid.begin(), grid.end(), [](const RegParams& a, const RegParams& b) {
    return a.lambda != b.lambda ? a.lambda < b.lambda : a.k_reg < b.k_reg;
  });
  std::vector<EvalReport> out;
  out.reserve(grid.size());
  for (const auto& reg : grid) {
    const auto sets = run_conformal(inputs, test_labels, alpha, reg, stream);
    out.push_back(evaluate(sets, test_labels, inputs.num_classes, alpha, reg, context));
  }
  return out;
}

}  // namespace eraps
