#ifndef ERAPS_APP_INGEST_HPP_
#define ERAPS_APP_INGEST_HPP_

#include <istream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "eraps/core.hpp"

namespace eraps::app {

/// Raw label string <-> dense 0-based class index.
class LabelDictionary {
 public:
  /// Index of `name`, adding it if new.
  int insert(const std::string& name);
  /// Index of `name`, or kUnseenLabel.
  int lookup(const std::string& name) const;

  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> index_;
};

struct IngestOptions {
  std::string label_column = "label";
  std::optional<std::size_t> train_count;
  double train_fraction = 0.5;
  /// Pre-declared classes take the first indices, in this order.
  std::vector<std::string> classes;
};

struct IngestResult {
  LabeledSeries train;
  LabeledSeries test;
  LabelDictionary dictionary;
  std::vector<std::string> feature_names;
  std::size_t unseen_test_labels = 0;
};

/// Reads a CSV with a header row, one label column and numeric feature
/// columns. Row order is time order; the first train_count rows (or
/// floor(train_fraction * rows)) form the training split. Classes are indexed
/// by first appearance in the training rows; test rows with a class never
/// seen in training get kUnseenLabel.
IngestResult ingest_csv(std::istream& in, const IngestOptions& options);
IngestResult ingest_csv_file(const std::string& path, const IngestOptions& options);

}  // namespace eraps::app

#endif  // ERAPS_APP_INGEST_HPP_
