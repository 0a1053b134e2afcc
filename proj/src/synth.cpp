#include "eraps/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "eraps/eval.hpp"
#include "eraps/parallel.hpp"

namespace eraps {

void DgpConfig::validate() const {
  if (num_classes < 2) throw PreconditionError("dgp: K must be >= 2");
  if (dim < 1) throw PreconditionError("dgp: d must be >= 1");
  if (!(rho >= 0.0 && rho < 1.0)) throw PreconditionError("dgp: rho must lie in [0, 1)");
  if (!(noise_scale > 0.0)) throw PreconditionError("dgp: noise scale must be positive");
}

SyntheticDGP::SyntheticDGP(DgpConfig config) : config_(config) {
  config_.validate();
  const std::size_t n = config_.num_classes * config_.dim;
  const RandomSource root(config_.seed);
  const RandomSource w = root.derive("weights");
  const RandomSource dir = root.derive("drift");
  weights_.resize(n);
  drift_direction_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    weights_[i] = w.normal_at(i);
    drift_direction_[i] = dir.normal_at(i);
  }
}

ProbVector SyntheticDGP::pi(std::span<const double> x, std::size_t t) const {
  if (x.size() != config_.dim) throw DimensionError("dgp: wrong feature length");
  const std::size_t K = config_.num_classes;
  const std::size_t d = config_.dim;
  const double shift = config_.drift * static_cast<double>(t);
  std::vector<double> z(K);
  for (std::size_t k = 0; k < K; ++k) {
    double v = 0.0;
    for (std::size_t j = 0; j < d; ++j) v += (weights_[k * d + j] + shift * drift_direction_[k * d + j]) * x[j];
    z[k] = v;
  }
  const double top = *std::max_element(z.begin(), z.end());
  for (double& v : z) v = std::max(std::exp(v - top), std::numeric_limits<double>::min());
  return ProbVector(std::move(z));
}

SyntheticSample SyntheticDGP::generate(std::size_t n, std::uint64_t draw_seed) const {
  if (n == 0) throw PreconditionError("dgp: n must be >= 1");
  const std::size_t K = config_.num_classes;
  const std::size_t d = config_.dim;
  const RandomSource root(draw_seed);
  const RandomSource eps = root.derive("features");
  const RandomSource pick = root.derive("labels");
  const double innovation = std::sqrt(1.0 - config_.rho * config_.rho) * config_.noise_scale;

  SyntheticSample out{LabeledSeries(K, d), {}};
  out.true_pi.reserve(n);
  std::vector<double> x(d);
  for (std::size_t j = 0; j < d; ++j) x[j] = config_.noise_scale * eps.normal_at(j);
  for (std::size_t t = 0; t < n; ++t) {
    if (t > 0) {
      for (std::size_t j = 0; j < d; ++j) x[j] = config_.rho * x[j] + innovation * eps.normal_at(t * d + j);
    }
    ProbVector p = pi(x, t);
    const double u = pick.uniform_at(t);
    int y = static_cast<int>(K) - 1;
    double cum = 0.0;
    for (std::size_t c = 0; c < K; ++c) {
      cum += p[c];
      if (u < cum) {
        y = static_cast<int>(c);
        break;
      }
    }
    out.series.push_back(x, y);
    out.true_pi.push_back(std::move(p));
  }
  return out;
}

PredictionSet oracle_set(const ProbVector& pi, double alpha, std::size_t index) {
  return naive_set(pi, alpha, index);
}

std::size_t symmetric_difference_size(const PredictionSet& a, const PredictionSet& b) {
  std::size_t diff = 0;
  for (int c : a.labels) diff += b.contains(c) ? 0 : 1;
  for (int c : b.labels) diff += a.contains(c) ? 0 : 1;
  return diff;
}

double ks_distance_uniform(std::vector<double> sample) {
  if (sample.empty()) throw PreconditionError("ks distance: empty sample");
  std::sort(sample.begin(), sample.end());
  const auto n = static_cast<double>(sample.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = std::clamp(sample[i], 0.0, 1.0);
    const double below = static_cast<double>(i) / n;      // F_n just left of the jump
    const double above = static_cast<double>(i + 1) / n;  // F_n at the jump
    worst = std::max({worst, f - below, above - f});
  }
  return worst;
}

double dkw_rate(std::size_t T) {
  const auto t = static_cast<double>(T);
  return std::sqrt(std::log(16.0 * t) / t);
}

std::string to_string(TheoryMethod method) {
  switch (method) {
    case TheoryMethod::kEraps: return "eraps";
    case TheoryMethod::kSraps: return "sraps";
    case TheoryMethod::kOracle: return "oracle";
  }
  return "eraps";
}

TheoryMethod theory_method_from_string(const std::string& name) {
  if (name == "eraps") return TheoryMethod::kEraps;
  if (name == "sraps") return TheoryMethod::kSraps;
  if (name == "oracle") return TheoryMethod::kOracle;
  throw PreconditionError("unknown theory method '" + name + "'");
}

namespace {

std::uint64_t rep_seed(std::uint64_t seed, std::size_t T, std::size_t rep) {
  return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(T) * 0x100000001b3ULL + rep));
}

// Fitted conformal inputs for one realization; training = first T points.
ConformalInputs fit_inputs(const SyntheticSample& sample, std::size_t T, const ExperimentOptions& options,
                           std::uint64_t seed, bool randomize) {
  const LabeledSeries train = sample.series.slice(0, T);
  const LabeledSeries test = sample.series.slice(T, sample.series.size());
  switch (options.method) {
    case TheoryMethod::kEraps: {
      ErapsOptions eo;
      eo.num_models = options.num_models;
      eo.phi = options.phi;
      eo.spec = options.spec;
      eo.seed = seed;
      eo.randomize = randomize;
      return eraps_fit(train, eo).prepare(test);
    }
    case TheoryMethod::kSraps: {
      SrapsOptions so;
      so.spec = options.spec;
      so.seed = seed;
      so.randomize = randomize;
      return sraps_fit(train, test, so).inputs;
    }
    case TheoryMethod::kOracle: {
      const RandomSource u = RandomSource(seed).derive("u");
      ConformalInputs in;
      in.num_classes = train.num_classes();
      for (std::size_t t = 0; t < T; ++t) {
        in.cal_probs.push_back(sample.true_pi[t]);
        in.cal_labels.push_back(train.label(t));
        in.cal_u.push_back(randomize ? u.uniform_at(t) : 0.0);
      }
      in.first_test_index = T;
      for (std::size_t t = T; t < sample.series.size(); ++t) {
        in.test_probs.push_back(sample.true_pi[t]);
        in.test_u.push_back(randomize ? u.uniform_at(t) : 0.0);
      }
      return in;
    }
  }
  throw PreconditionError("unknown theory method");
}

std::size_t stream_batch(const ExperimentOptions& options) {
  return options.method == TheoryMethod::kSraps ? 0 : options.batch_size;
}

void check_sizes(std::span<const std::size_t> sizes, std::size_t reps) {
  if (reps == 0) throw PreconditionError("experiment: reps must be >= 1");
  if (sizes.empty()) throw PreconditionError("experiment: empty T list");
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] < 2) throw PreconditionError("experiment: T must be >= 2");
    if (i > 0 && sizes[i] <= sizes[i - 1]) throw PreconditionError("experiment: T list must be increasing");
  }
}

}  // namespace

TheoryReport coverage_gap_experiment(const DgpConfig& dgp_config, const ExperimentOptions& options,
                                     std::span<const double> alphas, std::span<const std::size_t> sizes,
                                     std::size_t reps) {
  check_sizes(sizes, reps);
  if (alphas.empty()) throw PreconditionError("coverage gap: empty alpha list");
  if (options.test_size == 0) throw PreconditionError("coverage gap: test size must be >= 1");
  const SyntheticDGP dgp(dgp_config);
  TheoryReport report;
  report.experiment = "coverage-gap";
  report.method = to_string(options.method);
  report.seed = options.seed;

  for (std::size_t T : sizes) {
    // coverage[rep][alpha]
    std::vector<std::vector<double>> coverage(reps, std::vector<double>(alphas.size()));
    parallel_for(reps, [&](std::size_t rep) {
      const std::uint64_t seed = rep_seed(options.seed, T, rep);
      const auto sample = dgp.generate(T + options.test_size, seed);
      const auto inputs = fit_inputs(sample, T, options, seed, true);
      const auto labels = sample.series.labels().subspan(T);
      for (std::size_t a = 0; a < alphas.size(); ++a) {
        const auto sets = run_conformal(inputs, labels, alphas[a], options.reg, {stream_batch(options)});
        coverage[rep][a] = marginal_metrics(sets, labels).coverage;
      }
    });
    for (std::size_t a = 0; a < alphas.size(); ++a) {
      GapRow row{alphas[a], T, reps, 0.0, 0.0, 0.0, dkw_rate(T)};
      std::vector<double> gaps(reps);
      for (std::size_t r = 0; r < reps; ++r) {
        row.mean_coverage += coverage[r][a];
        gaps[r] = std::abs(coverage[r][a] - (1.0 - alphas[a]));
      }
      row.mean_coverage /= static_cast<double>(reps);
      row.mean_gap = std::accumulate(gaps.begin(), gaps.end(), 0.0) / static_cast<double>(reps);
      if (reps > 1) {
        double ss = 0.0;
        for (double g : gaps) ss += (g - row.mean_gap) * (g - row.mean_gap);
        row.gap_std_error = std::sqrt(ss / static_cast<double>(reps - 1) / static_cast<double>(reps));
      }
      report.gap.push_back(row);
    }
  }
  std::stable_sort(report.gap.begin(), report.gap.end(),
                   [](const GapRow& a, const GapRow& b) { return a.alpha < b.alpha; });
  for (std::size_t i = 1; i < report.gap.size(); ++i) {
    const auto& prev = report.gap[i - 1];
    const auto& cur = report.gap[i];
    if (prev.alpha != cur.alpha) continue;
    const double se = std::hypot(prev.gap_std_error, cur.gap_std_error);
    if (cur.mean_gap > prev.mean_gap + se) report.gap_nonincreasing = false;
  }
  return report;
}

TheoryReport set_convergence_experiment(const DgpConfig& dgp_config, const ExperimentOptions& options, double alpha,
                                        std::span<const std::size_t> sizes, std::size_t reps) {
  check_sizes(sizes, reps);
  const SyntheticDGP dgp(dgp_config);
  const RegParams total_mass{0.0, 1};
  TheoryReport report;
  report.experiment = "set-convergence";
  report.method = to_string(options.method);
  report.seed = options.seed;

  for (std::size_t T : sizes) {
    std::vector<std::size_t> within(reps, 0), total_diff(reps, 0);
    parallel_for(reps, [&](std::size_t rep) {
      const std::uint64_t seed = rep_seed(options.seed, T, rep);
      const auto sample = dgp.generate(T + options.test_size, seed);
      const auto inputs = fit_inputs(sample, T, options, seed, false);
      const auto labels = sample.series.labels().subspan(T);
      const auto sets = run_conformal(inputs, labels, alpha, total_mass, {stream_batch(options)});
      for (std::size_t j = 0; j < sets.size(); ++j) {
        const auto diff = symmetric_difference_size(sets[j], oracle_set(sample.true_pi[T + j], alpha));
        within[rep] += diff <= 1 ? 1 : 0;
        total_diff[rep] += diff;
      }
    });
    ConvergenceRow row{alpha, T, reps, reps * options.test_size, 0.0, 0.0};
    const auto n = static_cast<double>(row.points);
    row.fraction_within_one = static_cast<double>(std::accumulate(within.begin(), within.end(), std::size_t{0})) / n;
    row.mean_difference = static_cast<double>(std::accumulate(total_diff.begin(), total_diff.end(), std::size_t{0})) / n;
    report.convergence.push_back(row);
  }
  return report;
}

TheoryReport dkw_experiment(std::span<const std::size_t> sizes, std::size_t reps, std::uint64_t seed) {
  if (reps == 0) throw PreconditionError("dkw: reps must be >= 1");
  if (sizes.empty()) throw PreconditionError("dkw: empty T list");
  TheoryReport report;
  report.experiment = "dkw";
  report.method = "uniform";
  report.seed = seed;
  for (std::size_t T : sizes) {
    if (T == 0) throw PreconditionError("dkw: T must be >= 1");
    const double bound = dkw_rate(T);
    std::size_t exceed = 0;
    double total = 0.0;
    for (std::size_t rep = 0; rep < reps; ++rep) {
      const RandomSource rs(rep_seed(seed, T, rep));
      std::vector<double> sample(T);
      for (std::size_t i = 0; i < T; ++i) sample[i] = rs.uniform_at(i);
      const double dist = ks_distance_uniform(std::move(sample));
      exceed += dist > bound ? 1 : 0;
      total += dist;
    }
    report.dkw.push_back({T, reps, static_cast<double>(exceed) / static_cast<double>(reps), bound,
                          total / static_cast<double>(reps)});
  }
  return report;
}

nlohmann::json to_json(const TheoryReport& r) {
  nlohmann::json j{{"experiment", r.experiment}, {"method", r.method}, {"seed", r.seed}};
  if (r.experiment == "coverage-gap") {
    j["gap_nonincreasing"] = r.gap_nonincreasing;
    auto& rows = j["rows"] = nlohmann::json::array();
    for (const auto& g : r.gap) {
      rows.push_back({{"alpha", g.alpha}, {"T", g.T}, {"reps", g.reps}, {"mean_coverage", g.mean_coverage},
                      {"mean_gap", g.mean_gap}, {"gap_std_error", g.gap_std_error}, {"rate", g.rate}});
    }
  } else if (r.experiment == "set-convergence") {
    auto& rows = j["rows"] = nlohmann::json::array();
    for (const auto& c : r.convergence) {
      rows.push_back({{"alpha", c.alpha}, {"T", c.T}, {"reps", c.reps}, {"points", c.points},
                      {"fraction_within_one", c.fraction_within_one}, {"mean_difference", c.mean_difference}});
    }
  } else {
    auto& rows = j["rows"] = nlohmann::json::array();
    for (const auto& d : r.dkw) {
      rows.push_back({{"T", d.T}, {"reps", d.reps}, {"exceedance", d.exceedance}, {"bound", d.bound},
                      {"mean_distance", d.mean_distance}});
    }
  }
  return j;
}

std::string to_csv(const TheoryReport& r) {
  std::string out;
  if (r.experiment == "coverage-gap") {
    out = "alpha,T,reps,mean_coverage,mean_gap,gap_std_error,rate\n";
    for (const auto& g : r.gap) {
      out += format_number(g.alpha) + "," + std::to_string(g.T) + "," + std::to_string(g.reps) + "," +
             format_number(g.mean_coverage) + "," + format_number(g.mean_gap) + "," +
             format_number(g.gap_std_error) + "," + format_number(g.rate) + "\n";
    }
  } else if (r.experiment == "set-convergence") {
    out = "alpha,T,reps,points,fraction_within_one,mean_difference\n";
    for (const auto& c : r.convergence) {
      out += format_number(c.alpha) + "," + std::to_string(c.T) + "," + std::to_string(c.reps) + "," +
             std::to_string(c.points) + "," + format_number(c.fraction_within_one) + "," +
             format_number(c.mean_difference) + "\n";
    }
  } else {
    out = "T,reps,exceedance,bound,mean_distance\n";
    for (const auto& d : r.dkw) {
      out += std::to_string(d.T) + "," + std::to_string(d.reps) + "," + format_number(d.exceedance) + "," +
             format_number(d.bound) + "," + format_number(d.mean_distance) + "\n";
    }
  }
  return out;
}

}  // namespace eraps
