#include "eraps/app/ingest.hpp"

#include <cmath>
#include <fstream>

namespace eraps::app {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Splits one CSV record; double quotes group commas and "" escapes a quote.
std::vector<std::string> split_record(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (ch == '"') {
      if (quoted && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else {
        quoted = !quoted;
      }
    } else if (ch == ',' && !quoted) {
      cells.push_back(trim(cell));
      cell.clear();
    } else {
      cell += ch;
    }
  }
  cells.push_back(trim(cell));
  return cells;
}

}  // namespace

int LabelDictionary::insert(const std::string& name) {
  if (auto it = index_.find(name); it != index_.end()) return it->second;
  const int id = static_cast<int>(names_.size());
  names_.push_back(name);
  index_.emplace(name, id);
  return id;
}

int LabelDictionary::lookup(const std::string& name) const {
  const auto it = index_.find(name);
  return it == index_.end() ? kUnseenLabel : it->second;
}

IngestResult ingest_csv(std::istream& in, const IngestOptions& options) {
  std::string line;
  if (!std::getline(in, line)) throw PreconditionError("ingest: missing header row");
  const auto header = split_record(line);
  std::size_t label_col = header.size();
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == options.label_column) label_col = i;
  }
  if (label_col == header.size()) {
    throw PreconditionError("ingest: label column '" + options.label_column + "' not found in header");
  }
  if (header.size() < 2) throw PreconditionError("ingest: need at least one feature column");

  IngestResult out;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i != label_col) out.feature_names.push_back(header[i]);
  }
  const std::size_t d = out.feature_names.size();

  std::vector<double> features;
  std::vector<std::string> raw_labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_record(line);
    if (cells.size() != header.size()) {
      throw PreconditionError("ingest: row " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                              " cells, header has " + std::to_string(header.size()));
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i == label_col) continue;
      char* end = nullptr;
      const double v = std::strtod(cells[i].c_str(), &end);
      if (cells[i].empty() || end != cells[i].c_str() + cells[i].size() || !std::isfinite(v)) {
        throw PreconditionError("ingest: row " + std::to_string(line_no) + ", column '" + header[i] +
                                "': non-numeric value '" + cells[i] + "'");
      }
      features.push_back(v);
    }
    if (cells[label_col].empty()) {
      throw PreconditionError("ingest: row " + std::to_string(line_no) + ": empty label");
    }
    raw_labels.push_back(cells[label_col]);
  }

  const std::size_t n = raw_labels.size();
  if (n == 0) throw PreconditionError("ingest: no data rows");
  const std::size_t n_train = options.train_count
                                  ? *options.train_count
                                  : static_cast<std::size_t>(std::floor(options.train_fraction * static_cast<double>(n)));
  if (n_train == 0) throw PreconditionError("ingest: empty training split");
  if (n_train >= n) throw PreconditionError("ingest: empty test split");

  for (const auto& c : options.classes) out.dictionary.insert(c);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n_train; ++i) labels[i] = out.dictionary.insert(raw_labels[i]);
  for (std::size_t i = n_train; i < n; ++i) {
    labels[i] = out.dictionary.lookup(raw_labels[i]);
    if (labels[i] == kUnseenLabel) ++out.unseen_test_labels;
  }

  const std::size_t K = out.dictionary.size();
  auto take = [&](std::size_t begin, std::size_t end) {
    return LabeledSeries(K, d,
                         std::vector<double>(features.begin() + static_cast<std::ptrdiff_t>(begin * d),
                                             features.begin() + static_cast<std::ptrdiff_t>(end * d)),
                         std::vector<int>(labels.begin() + static_cast<std::ptrdiff_t>(begin),
                                          labels.begin() + static_cast<std::ptrdiff_t>(end)));
  };
  out.train = take(0, n_train);
  out.test = take(n_train, n);
  return out;
}

IngestResult ingest_csv_file(const std::string& path, const IngestOptions& options) {
  std::ifstream in(path);
  if (!in) throw PreconditionError("ingest: cannot open '" + path + "'");
  return ingest_csv(in, options);
}

}  // namespace eraps::app
