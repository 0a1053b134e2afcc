// Acceptance suite: prints one PASS/FAIL/SKIP line per criterion and exits
// nonzero if any criterion fails. Usage: acceptance <path-to-eraps-cli>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "eraps/app/ingest.hpp"
#include "eraps/conformal.hpp"
#include "eraps/eval.hpp"
#include "eraps/scores.hpp"
#include "eraps/synth.hpp"
#include "test_support.hpp"

using namespace eraps;

namespace {

enum class Outcome { kPass, kFail, kSkip };

struct Result {
  Outcome outcome;
  std::string detail;
};

int failures = 0;
std::size_t prefix_sets_checked = 0;
std::size_t prefix_violations = 0;

void record_prefixes(std::span<const PredictionSet> sets, std::span<const ProbVector> probs) {
  for (std::size_t i = 0; i < sets.size(); ++i) {
    ++prefix_sets_checked;
    if (!is_descending_prefix(sets[i], probs[i])) ++prefix_violations;
  }
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream out;
  out.precision(digits);
  out << std::fixed << v;
  return out.str();
}

void criterion(int id, const std::string& name, const std::function<Result()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Result r;
  try {
    r = body();
  } catch (const std::exception& e) {
    r = {Outcome::kFail, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const char* tag = r.outcome == Outcome::kPass ? "PASS" : r.outcome == Outcome::kFail ? "FAIL" : "SKIP";
  if (r.outcome == Outcome::kFail) ++failures;
  std::cout << "[" << tag << "] " << id << ". " << name << ": " << r.detail << " (" << fmt(secs, 1) << "s)"
            << std::endl;
}

std::vector<int> labels_of(const LabeledSeries& s) { return {s.labels().begin(), s.labels().end()}; }

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

Result coverage_guarantee() {
  const auto start = std::chrono::steady_clock::now();
  const SyntheticDGP dgp(DgpConfig{});
  double total = 0.0;
  const std::size_t seeds = 20;
  for (std::uint64_t seed = 0; seed < seeds; ++seed) {
    const auto sample = dgp.generate(3000, seed);
    const auto train = sample.series.slice(0, 2000);
    const auto test = sample.series.slice(2000, 3000);
    ErapsOptions opt;
    opt.seed = seed;
    const auto fit = eraps_fit(train, opt);
    const auto sets = eraps_predict_stream(fit, test, 0.1, RegParams{1.0, 2}, 1);
    record_prefixes(sets, fit.prepare(test).test_probs);
    total += marginal_metrics(sets, labels_of(test)).coverage;
  }
  const double mean = total / static_cast<double>(seeds);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool ok = mean >= 0.87 && mean <= 0.93 && secs <= 300.0;
  return {ok ? Outcome::kPass : Outcome::kFail,
          "mean coverage " + fmt(mean) + " over 20 seeds, target [0.87, 0.93], runtime " + fmt(secs, 1) +
              "s <= 300s"};
}

Result gap_shrinkage() {
  ExperimentOptions opt;
  const std::vector<double> alphas{0.1};
  const std::vector<std::size_t> sizes{200, 800, 3200};
  const auto r = coverage_gap_experiment(DgpConfig{}, opt, alphas, sizes, 20);
  const auto& first = r.gap.front();
  const auto& last = r.gap.back();
  const double se = std::hypot(first.gap_std_error, last.gap_std_error);
  const bool ok = last.mean_gap <= 0.03 && last.mean_gap <= first.mean_gap + se;
  std::string detail = "mean gap";
  for (const auto& g : r.gap) detail += " T=" + std::to_string(g.T) + ":" + fmt(g.mean_gap);
  detail += "; need T=3200 <= 0.03 and <= T=200 gap + " + fmt(se);
  return {ok ? Outcome::kPass : Outcome::kFail, detail};
}

Result set_convergence() {
  ExperimentOptions opt;
  const std::vector<std::size_t> sizes{5000};
  const auto est = set_convergence_experiment(DgpConfig{}, opt, 0.1, sizes, 10);
  opt.method = TheoryMethod::kOracle;
  const auto orc = set_convergence_experiment(DgpConfig{}, opt, 0.1, sizes, 10);
  const double fe = est.convergence[0].fraction_within_one;
  const double fo = orc.convergence[0].fraction_within_one;
  const bool ok = fe >= 0.95 && fo >= 0.99;
  return {ok ? Outcome::kPass : Outcome::kFail,
          "fraction |C delta C*| <= 1 at T=5000: ERAPS " + fmt(fe) + " (need >= 0.95), true-pi plug-in " + fmt(fo) +
              " (need >= 0.99); mean |C delta C*| " + fmt(est.convergence[0].mean_difference) + " and " +
              fmt(orc.convergence[0].mean_difference)};
}

Result dkw() {
  const std::vector<std::size_t> sizes{1000};
  const auto r = dkw_experiment(sizes, 500, 0);
  const auto& row = r.dkw.front();
  const bool ok = row.exceedance <= row.bound;
  return {ok ? Outcome::kPass : Outcome::kFail,
          "exceedance " + fmt(row.exceedance) + " <= bound " + fmt(row.bound) + " (mean sup distance " +
              fmt(row.mean_distance) + ")"};
}

Result threshold_equivalence() {
  const RandomSource rs(20240);
  std::size_t disagree = 0, ties = 0;
  const std::size_t trials = 10000;
  for (std::uint64_t trial = 0; trial < trials; ++trial) {
    const std::uint64_t base = trial * 512;
    const std::size_t n = 1 + rs.index_at(base, 100);
    const double alpha = rs.uniform_at(base + 1) < 0.3 ? static_cast<double>(rs.index_at(base + 2, 20)) / 20.0
                                                       : rs.uniform_at(base + 3);
    std::vector<double> scores(n);
    const bool coarse = rs.uniform_at(base + 4) < 0.5;
    for (std::size_t j = 0; j < n; ++j) {
      scores[j] = coarse ? static_cast<double>(rs.index_at(base + 10 + j, 8)) / 8.0 : 2.0 * rs.uniform_at(base + 10 + j);
    }
    const double candidate = rs.uniform_at(base + 5) < 0.5 ? scores[rs.index_at(base + 6, n)] : 2.0 * rs.uniform_at(base + 7);
    ties += std::count(scores.begin(), scores.end(), candidate) > 0 ? 1 : 0;
    const bool ours = candidate < calibration_threshold(scores, alpha);
    disagree += ours != testing::counting_rule_includes(scores, candidate, alpha) ? 1 : 0;
  }
  return {disagree == 0 ? Outcome::kPass : Outcome::kFail,
          std::to_string(disagree) + " disagreements in " + std::to_string(trials) + " triples (" +
              std::to_string(ties) + " with the candidate tied to a calibration score)"};
}

Result nesting() {
  const RandomSource rs(606);
  std::size_t violations = 0, sets_checked = 0;
  for (std::uint64_t cfg = 0; cfg < 100; ++cfg) {
    const RandomSource r = rs.derive(cfg);
    ConformalInputs in;
    in.num_classes = 2 + r.index_at(0, 9);
    const std::size_t n_cal = 1 + r.index_at(1, 200);
    const std::size_t n_test = 1 + r.index_at(2, 100);
    const bool ties = r.uniform_at(3) < 0.5;
    for (std::size_t i = 0; i < n_cal; ++i) {
      in.cal_probs.push_back(testing::random_prob(r, 1000 + i * 32, in.num_classes, ties));
      in.cal_labels.push_back(static_cast<int>(r.index_at(100000 + i, in.num_classes)));
      in.cal_u.push_back(r.uniform_at(200000 + i));
    }
    std::vector<int> y;
    for (std::size_t i = 0; i < n_test; ++i) {
      in.test_probs.push_back(testing::random_prob(r, 300000 + i * 32, in.num_classes, ties));
      in.test_u.push_back(r.uniform_at(400000 + i));
      y.push_back(static_cast<int>(r.index_at(500000 + i, in.num_classes)));
    }
    const RegParams reg{r.uniform_at(4) * 2.0, 1 + static_cast<int>(r.index_at(5, in.num_classes))};
    StreamOptions stream;
    stream.batch_size = r.index_at(6, 4);  // 0 keeps the threshold fixed
    const auto wide = run_conformal(in, y, 0.05, reg, stream);
    const auto narrow = run_conformal(in, y, 0.2, reg, stream);
    record_prefixes(wide, in.test_probs);
    record_prefixes(narrow, in.test_probs);
    for (std::size_t i = 0; i < wide.size(); ++i) {
      ++sets_checked;
      violations += testing::is_subset(narrow[i], wide[i]) ? 0 : 1;
    }
  }
  const bool ok = violations == 0 && prefix_violations == 0;
  return {ok ? Outcome::kPass : Outcome::kFail,
          std::to_string(prefix_violations) + " non-prefix sets of " + std::to_string(prefix_sets_checked) +
              " emitted; " + std::to_string(violations) + " nesting violations over 100 configs (" +
              std::to_string(sets_checked) + " set pairs)"};
}

Result score_examples() {
  const ProbVector p(std::vector<double>{0.5, 0.3, 0.2});
  const double a = raps_score(p, 1, 0.5, RegParams{1.0, 1});
  const double b = raps_score(p, p.argmax(), 0.0, RegParams{0.0, 1});
  double worst_c = 0.0;
  const auto u = ProbVector::uniform(4);
  for (int c = 0; c < 4; ++c) worst_c = std::max(worst_c, std::abs(raps_score(u, c, 0.2, RegParams{2.0, 1}) - 0.05));
  const bool ok = std::abs(a - 1.65) <= 1e-12 && b == 0.0 && worst_c <= 1e-12;
  std::ostringstream d;
  d << "1.65 case error " << std::abs(a - 1.65) << " (<= 1e-12), top-label score " << b
    << ", uniform case max error " << worst_c;
  return {ok ? Outcome::kPass : Outcome::kFail, d.str()};
}

Result gradient_checks() {
  const auto make = [](std::uint64_t seed) {
    LabeledSeries s(3, 4);
    const RandomSource rs(seed);
    for (std::size_t i = 0; i < 20; ++i) {
      std::vector<double> x(4);
      for (std::size_t j = 0; j < 4; ++j) x[j] = rs.normal_at(i * 4 + j);
      s.push_back(x, static_cast<int>(rs.index_at(1000 + i, 3)));
    }
    return s;
  };
  ClassifierSpec lin;
  lin.l2 = 0.01;
  ClassifierSpec net = lin;
  net.kind = ClassifierKind::kOneHiddenLayer;
  net.hidden_width = 8;
  double el = 0.0, en = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    el = std::max(el, gradient_check(lin, make(seed), seed));
    en = std::max(en, gradient_check(net, make(seed + 100), seed));
  }
  const bool ok = el <= 1e-4 && en <= 1e-3;
  std::ostringstream d;
  d << "max relative error logistic " << el << " (<= 1e-4), net " << en << " (<= 1e-3)";
  return {ok ? Outcome::kPass : Outcome::kFail, d.str()};
}

Result determinism(const std::string& cli) {
  if (cli.empty()) return {Outcome::kFail, "no CLI path given"};
  const auto dir = std::filesystem::temp_directory_path() / "eraps_acceptance_determinism";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const auto out = (dir / "report").string();
  std::vector<std::string> blobs;
  for (int run = 0; run < 2; ++run) {
    const std::string cmd = "\"" + cli + "\" run --seed 7 --method eraps,sraps,saps,naive --output \"" + out +
                            "\" > \"" + (dir / "log.txt").string() + "\" 2>&1";
    if (std::system(cmd.c_str()) != 0) return {Outcome::kFail, "CLI exited nonzero: " + read_file(dir / "log.txt")};
    auto j = nlohmann::json::parse(read_file(out + ".json"));
    j.erase("generated_at");
    blobs.push_back(j.dump(2) + "\n" + read_file(out + ".csv"));
  }
  std::filesystem::remove_all(dir);
  return {blobs[0] == blobs[1] ? Outcome::kPass : Outcome::kFail,
          "two runs, " + std::to_string(blobs[0].size()) + " report bytes, " +
              (blobs[0] == blobs[1] ? "identical" : "different") + " outside the timestamp"};
}

Result empty_set_fidelity() {
  // Large feature scale makes pi nearly a point mass, so the fitted
  // classifier is near-perfect and most calibration scores are p(y) * u.
  DgpConfig cfg;
  cfg.noise_scale = 10.0;
  const SyntheticDGP dgp(cfg);
  const auto sample = dgp.generate(3000, 1);
  const auto train = sample.series.slice(0, 2000);
  const auto test = sample.series.slice(2000, 3000);
  const auto fit = eraps_fit(train, ErapsOptions{});
  const auto sets = eraps_predict_stream(fit, test, 0.2, RegParams{0.0, 1}, 1);
  record_prefixes(sets, fit.prepare(test).test_probs);
  const auto m = marginal_metrics(sets, labels_of(test));
  const bool ok = m.mean_size < 1.0 && m.coverage >= 0.75;
  return {ok ? Outcome::kPass : Outcome::kFail,
          "ERAPS lambda=0 alpha=0.2: mean size " + fmt(m.mean_size) + " (< 1), coverage " + fmt(m.coverage) +
              " (>= 0.75)"};
}

Result pedestrian() {
  const char* path = std::getenv("ERAPS_PEDESTRIAN_CSV");
  if (!path || !std::filesystem::exists(path)) {
    return {Outcome::kSkip, "set ERAPS_PEDESTRIAN_CSV to a CSV with a 'label' column to run"};
  }
  app::IngestOptions opt;
  if (const char* n = std::getenv("ERAPS_PEDESTRIAN_TRAIN_COUNT")) opt.train_count = std::stoul(n);
  const auto data = app::ingest_csv_file(path, opt);
  const auto fit = eraps_fit(data.train, ErapsOptions{});
  const auto sets = eraps_predict_stream(fit, data.test, 0.05, RegParams{1.0, 2}, 1);
  const auto m = marginal_metrics(sets, labels_of(data.test));
  const bool ok = m.coverage >= 0.92 && m.mean_size <= 3.0;
  return {ok ? Outcome::kPass : Outcome::kFail,
          "coverage " + fmt(m.coverage) + " (>= 0.92), mean size " + fmt(m.mean_size) + " (<= 3.0) on " +
              std::to_string(data.train.size()) + " train / " + std::to_string(data.test.size()) + " test rows"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli = argc > 1 ? argv[1] : "";
  criterion(1, "coverage guarantee", coverage_guarantee);
  criterion(2, "coverage gap shrinkage", gap_shrinkage);
  criterion(3, "set convergence", set_convergence);
  criterion(4, "DKW exceedance", dkw);
  criterion(5, "threshold rule equals counting rule", threshold_equivalence);
  criterion(7, "score examples", score_examples);
  criterion(8, "gradient checks", gradient_checks);
  criterion(9, "run determinism", [&] { return determinism(cli); });
  criterion(10, "empty-set fidelity", empty_set_fidelity);
  criterion(11, "Pedestrian replication", pedestrian);
  // Runs last so the prefix count covers every set emitted above.
  criterion(6, "prefix and nesting properties", nesting);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
