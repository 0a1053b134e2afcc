#include "eraps/app/runner.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>

#include "eraps/app/ingest.hpp"

namespace eraps::app {

namespace {

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("config field 'output': cannot write '" + path + "'");
  out << text;
}

ReportContext context_for(Method method, const RunConfig& config) {
  ReportContext ctx;
  ctx.method = to_string(method);
  ctx.seed = config.seed;
  ctx.calibration = method == Method::kNaive ? "none" : to_string(config.calibration);
  ctx.strata_edges = config.strata;
  return ctx;
}

StreamOptions stream_for(Method method, const RunConfig& config) {
  StreamOptions s;
  s.mode = config.calibration;
  s.batch_size = method == Method::kEraps ? config.batch_size : 0;
  return s;
}

// SRAPS and SAPS share one split fit.
Method fit_family(Method m) { return m == Method::kSaps ? Method::kSraps : m; }

void check_reg(const RegParams& reg, std::size_t K) {
  if (static_cast<std::size_t>(reg.k_reg) > K) {
    throw ConfigError("config field 'k_reg': " + std::to_string(reg.k_reg) + " exceeds the class count " +
                      std::to_string(K));
  }
}

}  // namespace

Dataset load_dataset(const RunConfig& config) {
  Dataset data;
  if (!config.dataset.empty()) {
    IngestOptions opts;
    opts.label_column = config.label_column;
    opts.train_count = config.train_count;
    opts.train_fraction = config.train_fraction;
    opts.classes = config.classes;
    auto ingested = ingest_csv_file(config.dataset, opts);
    data.train = std::move(ingested.train);
    data.test = std::move(ingested.test);
    data.class_names = ingested.dictionary.names();
    data.source = config.dataset;
    return data;
  }
  const SyntheticDGP dgp(config.synth.dgp);
  const auto sample = dgp.generate(config.synth.train_size + config.synth.test_size,
                                   splitmix64(config.seed ^ 0x5eedULL));
  data.train = sample.series.slice(0, config.synth.train_size);
  data.test = sample.series.slice(config.synth.train_size, sample.series.size());
  for (std::size_t c = 0; c < config.synth.dgp.num_classes; ++c) data.class_names.push_back(std::to_string(c));
  data.source = "synthetic";
  return data;
}

ConformalInputs fit_method(Method method, const Dataset& data, const RunConfig& config) {
  switch (fit_family(method)) {
    case Method::kEraps: {
      ErapsOptions opts;
      opts.num_models = config.num_models;
      opts.phi = config.phi;
      opts.spec = config.classifier;
      opts.seed = config.seed;
      return eraps_fit(data.train, opts).prepare(data.test);
    }
    case Method::kSraps: {
      SrapsOptions opts;
      opts.spec = config.classifier;
      opts.split = config.split;
      opts.split_seed = config.split_seed;
      opts.seed = config.seed;
      return sraps_fit(data.train, data.test, opts).inputs;
    }
    case Method::kNaive: {
      const auto model = fit(config.classifier, data.train);
      ConformalInputs in;
      in.num_classes = data.train.num_classes();
      in.first_test_index = data.train.size();
      for (std::size_t j = 0; j < data.test.size(); ++j) {
        in.test_probs.push_back(model.predict_proba(data.test.row(j)));
        in.test_u.push_back(0.0);
      }
      return in;
    }
    default:
      break;
  }
  throw ConfigError("config field 'method': unsupported method");
}

RegParams effective_reg(Method method, const RunConfig& config) {
  RegParams reg = config.reg;
  if (method == Method::kSaps) reg.lambda = 0.0;
  return reg;
}

std::vector<EvalReport> run_reports(const RunConfig& config, const Dataset& data, std::ostream& log) {
  const std::size_t K = data.train.num_classes();
  std::map<Method, ConformalInputs> fitted;
  std::vector<EvalReport> reports;
  const auto labels = data.test.labels();
  for (Method method : config.methods) {
    const RegParams reg = effective_reg(method, config);
    if (method == Method::kSaps && config.reg.lambda != 0.0) {
      log << "warning: method saps forces lambda = 0 (configured lambda = " << config.reg.lambda << ")\n";
    }
    if (method != Method::kNaive) check_reg(reg, K);
    const Method family = fit_family(method);
    if (!fitted.contains(family)) fitted.emplace(family, fit_method(family, data, config));
    const auto& inputs = fitted.at(family);
    for (double alpha : config.alphas) {
      const auto sets = method == Method::kNaive
                            ? run_naive(inputs, alpha)
                            : run_conformal(inputs, labels, alpha, reg, stream_for(method, config));
      reports.push_back(evaluate(sets, labels, K, alpha, reg, context_for(method, config)));
    }
  }
  return reports;
}

std::vector<EvalReport> run_sweep(const RunConfig& config, const Dataset& data, std::ostream& log) {
  const std::size_t K = data.train.num_classes();
  std::vector<RegParams> grid;
  if (config.sweep.lambdas.empty() && config.sweep.k_regs.empty()) {
    grid = default_sweep_grid(K);
  } else {
    const auto lambdas = config.sweep.lambdas.empty() ? std::vector<double>{config.reg.lambda} : config.sweep.lambdas;
    const auto k_regs = config.sweep.k_regs.empty() ? std::vector<int>{config.reg.k_reg} : config.sweep.k_regs;
    for (double l : lambdas) {
      for (int k : k_regs) grid.push_back({l, k});
    }
  }
  for (const auto& reg : grid) check_reg(reg, K);

  std::vector<EvalReport> out;
  const auto labels = data.test.labels();
  for (Method method : config.methods) {
    if (method == Method::kNaive || method == Method::kSaps) {
      log << "note: sweep skips method " << to_string(method) << " (it does not use the regularizer pair)\n";
      continue;
    }
    const auto inputs = fit_method(method, data, config);
    auto reports = regularizer_sweep(inputs, labels, config.sweep.alpha, grid, stream_for(method, config),
                                     context_for(method, config));
    out.insert(out.end(), reports.begin(), reports.end());
  }
  return out;
}

VerifyResult run_verify(const RunConfig& config) {
  ExperimentOptions opts;
  opts.method = theory_method_from_string(config.verify.method);
  opts.num_models = config.num_models;
  opts.phi = config.phi;
  opts.spec = config.classifier;
  opts.reg = config.reg;
  opts.test_size = config.verify.test_size;
  opts.batch_size = config.batch_size;
  opts.seed = config.seed;

  VerifyResult r;
  const double alpha = config.verify.alpha;
  const std::vector<double> alphas{alpha};
  r.gap = coverage_gap_experiment(config.synth.dgp, opts, alphas, config.verify.gap_sizes, config.verify.gap_reps);
  r.convergence = set_convergence_experiment(config.synth.dgp, opts, alpha, config.verify.convergence_sizes,
                                             config.verify.convergence_reps);
  r.dkw = dkw_experiment(config.verify.dkw_sizes, config.verify.dkw_reps, config.seed);

  const auto& first = r.gap.gap.front();
  const auto& last = r.gap.gap.back();
  const double se = std::hypot(first.gap_std_error, last.gap_std_error);
  r.checks.push_back({"coverage gap at largest T <= 0.03", last.mean_gap <= 0.03,
                      "gap " + format_number(last.mean_gap) + " at T=" + std::to_string(last.T)});
  r.checks.push_back({"coverage gap does not grow with T", last.mean_gap <= first.mean_gap + se,
                      "gap(T_max) " + format_number(last.mean_gap) + " vs gap(T_min) + se " +
                          format_number(first.mean_gap + se)});
  const auto& conv = r.convergence.convergence.back();
  r.checks.push_back({"|C delta C*| <= 1 for >= 95% of points", conv.fraction_within_one >= 0.95,
                      "fraction " + format_number(conv.fraction_within_one) + " at T=" + std::to_string(conv.T)});
  for (const auto& d : r.dkw.dkw) {
    r.checks.push_back({"DKW exceedance <= bound at T=" + std::to_string(d.T), d.exceedance <= d.bound,
                        "exceedance " + format_number(d.exceedance) + ", bound " + format_number(d.bound)});
  }
  return r;
}

void write_run_outputs(const RunConfig& config, const std::vector<EvalReport>& reports) {
  nlohmann::json j{{"generated_at", timestamp()}, {"config", config_to_json(config)}};
  auto& arr = j["reports"] = nlohmann::json::array();
  for (const auto& r : reports) arr.push_back(to_json(r));
  write_text(config.output + ".json", j.dump(2) + "\n");
  write_text(config.output + ".csv", to_csv(reports));
}

void write_sweep_outputs(const RunConfig& config, const std::vector<EvalReport>& reports) {
  std::map<std::string, std::string> by_method;
  for (const auto& r : reports) {
    auto& text = by_method[r.method];
    if (text.empty()) text = "lambda,k_reg,coverage,mean_size\n";
    text += format_number(r.reg.lambda) + "," + std::to_string(r.reg.k_reg) + "," + format_number(r.coverage) + "," +
            format_number(r.mean_size) + "\n";
  }
  for (const auto& [method, text] : by_method) write_text(config.output + "_sweep_" + method + ".csv", text);
  nlohmann::json j{{"generated_at", timestamp()}, {"config", config_to_json(config)}};
  auto& arr = j["reports"] = nlohmann::json::array();
  for (const auto& r : reports) arr.push_back(to_json(r));
  write_text(config.output + "_sweep.json", j.dump(2) + "\n");
}

void write_verify_outputs(const RunConfig& config, const VerifyResult& result) {
  const std::pair<const char*, const TheoryReport*> parts[] = {
      {"gap", &result.gap}, {"convergence", &result.convergence}, {"dkw", &result.dkw}};
  for (const auto& [name, report] : parts) {
    write_text(config.output + "_" + name + ".json", to_json(*report).dump(2) + "\n");
    write_text(config.output + "_" + name + ".csv", to_csv(*report));
  }
}

void print_summary(std::ostream& out, const std::vector<EvalReport>& reports) {
  out << std::left << std::setw(8) << "method" << std::right << std::setw(8) << "alpha" << std::setw(8) << "lambda"
      << std::setw(7) << "k_reg" << std::setw(10) << "coverage" << std::setw(10) << "set size" << "\n";
  for (const auto& r : reports) {
    out << std::left << std::setw(8) << r.method << std::right << std::fixed << std::setprecision(3) << std::setw(8)
        << r.alpha << std::setw(8) << r.reg.lambda << std::setw(7) << r.reg.k_reg << std::setw(10) << r.coverage
        << std::setw(10) << r.mean_size << "\n";
  }
  out.unsetf(std::ios::fixed);
}

}  // namespace eraps::app
