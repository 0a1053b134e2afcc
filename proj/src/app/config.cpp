#include "eraps/app/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace eraps::app {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Strips a trailing comment that is not inside a quoted string.
std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

nlohmann::json parse_scalar(const std::string& raw, std::size_t line_no) {
  const std::string v = trim(raw);
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  if (v == "true") return true;
  if (v == "false") return false;
  std::string digits = v;
  digits.erase(std::remove(digits.begin(), digits.end(), '_'), digits.end());
  const bool integral = !digits.empty() && digits.find_first_of(".eEn") == std::string::npos;
  try {
    std::size_t used = 0;
    if (integral) {
      if (digits.front() == '-') {
        const long long x = std::stoll(digits, &used);
        if (used == digits.size()) return x;
      } else {
        const unsigned long long x = std::stoull(digits, &used);
        if (used == digits.size()) return x;
      }
    } else {
      const double x = std::stod(digits, &used);
      if (used == digits.size()) return x;
    }
  } catch (const std::exception&) {
  }
  throw ConfigError("config line " + std::to_string(line_no) + ": cannot parse value '" + v + "'");
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (char ch : s) {
    if (ch == '"') quoted = !quoted;
    if (ch == ',' && !quoted) {
      out.push_back(cell);
      cell.clear();
    } else {
      cell += ch;
    }
  }
  if (!trim(cell).empty()) out.push_back(cell);
  return out;
}

[[noreturn]] void field_error(const std::string& field, const std::string& what) {
  throw ConfigError("config field '" + field + "': " + what);
}

template <typename T>
T get_field(const nlohmann::json& j, const std::string& field) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception& e) {
    field_error(field, std::string("wrong type (") + e.what() + ")");
  }
}

template <typename T>
std::vector<T> get_list(const nlohmann::json& j, const std::string& field) {
  if (!j.is_array()) return {get_field<T>(j, field)};
  std::vector<T> out;
  for (const auto& e : j) out.push_back(get_field<T>(e, field));
  return out;
}

void check_keys(const nlohmann::json& j, const std::string& table, const std::set<std::string>& allowed) {
  if (!j.is_object()) field_error(table, "expected a table");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) field_error(table.empty() ? key : table + "." + key, "unknown key");
  }
}

}  // namespace

std::string to_string(Method method) {
  switch (method) {
    case Method::kEraps: return "eraps";
    case Method::kSraps: return "sraps";
    case Method::kSaps: return "saps";
    case Method::kNaive: return "naive";
  }
  return "eraps";
}

Method method_from_string(const std::string& name) {
  if (name == "eraps") return Method::kEraps;
  if (name == "sraps") return Method::kSraps;
  if (name == "saps") return Method::kSaps;
  if (name == "naive") return Method::kNaive;
  field_error("method", "unknown method '" + name + "'");
}

nlohmann::json parse_toml(const std::string& text) {
  nlohmann::json root = nlohmann::json::object();
  nlohmann::json* table = &root;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("config line " + std::to_string(line_no) + ": bad table header");
      const std::string name = trim(line.substr(1, line.size() - 2));
      if (name.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty table name");
      table = &root[name];
      if (table->is_null()) *table = nlohmann::json::object();
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    if (!value.empty() && value.front() == '[') {
      if (value.back() != ']') throw ConfigError("config line " + std::to_string(line_no) + ": arrays must fit on one line");
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& cell : split_commas(value.substr(1, value.size() - 2))) arr.push_back(parse_scalar(cell, line_no));
      (*table)[key] = arr;
    } else {
      (*table)[key] = parse_scalar(value, line_no);
    }
  }
  return root;
}

nlohmann::json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config field 'config': cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  if (path.ends_with(".json")) {
    try {
      return nlohmann::json::parse(buf.str());
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config field 'config': invalid JSON in '" + path + "': " + e.what());
    }
  }
  return parse_toml(buf.str());
}

void apply_override(nlohmann::json& tree, const std::string& key, const std::string& value) {
  static const nlohmann::json defaults = config_to_json(RunConfig{});
  nlohmann::json* target = &tree;
  const nlohmann::json* shape = &defaults;
  std::string rest = key;
  for (auto dot = rest.find('.'); dot != std::string::npos; dot = rest.find('.')) {
    const std::string table = rest.substr(0, dot);
    target = &(*target)[table];
    shape = shape->contains(table) ? &(*shape)[table] : nullptr;
    if (!shape) field_error(key, "unknown key");
    rest = rest.substr(dot + 1);
  }
  if (!shape->contains(rest)) field_error(key, "unknown key");
  const auto& like = (*shape)[rest];
  if (like.is_array()) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& cell : split_commas(value)) {
      const std::string c = trim(cell);
      if (!like.empty() && like.front().is_string()) {
        arr.push_back(c);
      } else if (rest == "method" || rest == "classes") {
        arr.push_back(c);
      } else {
        arr.push_back(parse_scalar(c, 0));
      }
    }
    (*target)[rest] = arr;
  } else if (like.is_string()) {
    (*target)[rest] = value;
  } else if (like.is_boolean()) {
    (*target)[rest] = value == "true" || value == "1" || value == "on";
  } else {
    try {
      (*target)[rest] = parse_scalar(value, 0);
    } catch (const ConfigError&) {
      field_error(key, "cannot parse '" + value + "'");
    }
  }
}

RunConfig config_from_json(const nlohmann::json& tree) {
  RunConfig c;
  check_keys(tree, "", {"method", "alpha", "lambda", "k_reg", "B", "phi", "batch_size", "seed", "output",
                        "calibration", "strata", "split", "split_seed", "data", "synth", "classifier", "sweep",
                        "verify"});
  if (tree.contains("method")) {
    c.methods.clear();
    for (const auto& m : get_list<std::string>(tree["method"], "method")) c.methods.push_back(method_from_string(m));
  }
  if (tree.contains("alpha")) c.alphas = get_list<double>(tree["alpha"], "alpha");
  if (tree.contains("lambda")) c.reg.lambda = get_field<double>(tree["lambda"], "lambda");
  if (tree.contains("k_reg")) c.reg.k_reg = get_field<int>(tree["k_reg"], "k_reg");
  if (tree.contains("B")) c.num_models = get_field<std::size_t>(tree["B"], "B");
  if (tree.contains("phi")) {
    try {
      c.phi = aggregation_from_string(get_field<std::string>(tree["phi"], "phi"));
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      field_error("phi", e.what());
    }
  }
  if (tree.contains("batch_size")) c.batch_size = get_field<std::size_t>(tree["batch_size"], "batch_size");
  if (tree.contains("seed")) c.seed = get_field<std::uint64_t>(tree["seed"], "seed");
  if (tree.contains("output")) c.output = get_field<std::string>(tree["output"], "output");
  if (tree.contains("calibration")) {
    try {
      c.calibration = calibration_mode_from_string(get_field<std::string>(tree["calibration"], "calibration"));
    } catch (const PreconditionError& e) {
      field_error("calibration", e.what());
    }
  }
  if (tree.contains("strata")) c.strata = get_list<double>(tree["strata"], "strata");
  if (tree.contains("split")) {
    const auto s = get_field<std::string>(tree["split"], "split");
    if (s == "sequential" || s == "sequential-half") c.split = SplitMode::kSequentialHalf;
    else if (s == "random") c.split = SplitMode::kRandom;
    else field_error("split", "expected 'sequential' or 'random'");
  }
  if (tree.contains("split_seed")) c.split_seed = get_field<std::uint64_t>(tree["split_seed"], "split_seed");

  if (tree.contains("data")) {
    const auto& d = tree["data"];
    check_keys(d, "data", {"path", "label_column", "train_count", "train_fraction", "classes"});
    if (d.contains("path")) c.dataset = get_field<std::string>(d["path"], "data.path");
    if (d.contains("label_column")) c.label_column = get_field<std::string>(d["label_column"], "data.label_column");
    if (d.contains("train_count") && !d["train_count"].is_null()) {
      c.train_count = get_field<std::size_t>(d["train_count"], "data.train_count");
    }
    if (d.contains("train_fraction")) c.train_fraction = get_field<double>(d["train_fraction"], "data.train_fraction");
    if (d.contains("classes")) c.classes = get_list<std::string>(d["classes"], "data.classes");
  }
  if (tree.contains("synth")) {
    const auto& s = tree["synth"];
    check_keys(s, "synth", {"K", "d", "rho", "noise_scale", "drift", "seed", "train_size", "test_size"});
    auto& g = c.synth.dgp;
    if (s.contains("K")) g.num_classes = get_field<std::size_t>(s["K"], "synth.K");
    if (s.contains("d")) g.dim = get_field<std::size_t>(s["d"], "synth.d");
    if (s.contains("rho")) g.rho = get_field<double>(s["rho"], "synth.rho");
    if (s.contains("noise_scale")) g.noise_scale = get_field<double>(s["noise_scale"], "synth.noise_scale");
    if (s.contains("drift")) g.drift = get_field<double>(s["drift"], "synth.drift");
    if (s.contains("seed")) g.seed = get_field<std::uint64_t>(s["seed"], "synth.seed");
    if (s.contains("train_size")) c.synth.train_size = get_field<std::size_t>(s["train_size"], "synth.train_size");
    if (s.contains("test_size")) c.synth.test_size = get_field<std::size_t>(s["test_size"], "synth.test_size");
  }
  if (tree.contains("classifier")) {
    const auto& k = tree["classifier"];
    check_keys(k, "classifier", {"kind", "hidden_width", "l2", "learning_rate", "epochs", "init_seed"});
    auto& spec = c.classifier;
    if (k.contains("kind")) {
      try {
        spec.kind = classifier_kind_from_string(get_field<std::string>(k["kind"], "classifier.kind"));
      } catch (const PreconditionError& e) {
        field_error("classifier.kind", e.what());
      }
    }
    if (k.contains("hidden_width")) spec.hidden_width = get_field<int>(k["hidden_width"], "classifier.hidden_width");
    if (k.contains("l2")) spec.l2 = get_field<double>(k["l2"], "classifier.l2");
    if (k.contains("learning_rate")) spec.learning_rate = get_field<double>(k["learning_rate"], "classifier.learning_rate");
    if (k.contains("epochs")) spec.epochs = get_field<int>(k["epochs"], "classifier.epochs");
    if (k.contains("init_seed")) spec.init_seed = get_field<std::uint64_t>(k["init_seed"], "classifier.init_seed");
  }
  if (tree.contains("sweep")) {
    const auto& s = tree["sweep"];
    check_keys(s, "sweep", {"alpha", "lambdas", "k_regs"});
    if (s.contains("alpha")) c.sweep.alpha = get_field<double>(s["alpha"], "sweep.alpha");
    if (s.contains("lambdas")) c.sweep.lambdas = get_list<double>(s["lambdas"], "sweep.lambdas");
    if (s.contains("k_regs")) c.sweep.k_regs = get_list<int>(s["k_regs"], "sweep.k_regs");
  }
  if (tree.contains("verify")) {
    const auto& v = tree["verify"];
    check_keys(v, "verify", {"alpha", "method", "gap_sizes", "gap_reps", "convergence_sizes", "convergence_reps",
                             "dkw_sizes", "dkw_reps", "test_size", "reps"});
    auto& vc = c.verify;
    if (v.contains("alpha")) vc.alpha = get_field<double>(v["alpha"], "verify.alpha");
    if (v.contains("method")) vc.method = get_field<std::string>(v["method"], "verify.method");
    if (v.contains("gap_sizes")) vc.gap_sizes = get_list<std::size_t>(v["gap_sizes"], "verify.gap_sizes");
    if (v.contains("convergence_sizes")) {
      vc.convergence_sizes = get_list<std::size_t>(v["convergence_sizes"], "verify.convergence_sizes");
    }
    if (v.contains("dkw_sizes")) vc.dkw_sizes = get_list<std::size_t>(v["dkw_sizes"], "verify.dkw_sizes");
    if (v.contains("reps") && !v["reps"].is_null()) {
      // One knob for all three experiments.
      const auto reps = get_field<std::size_t>(v["reps"], "verify.reps");
      vc.gap_reps = vc.convergence_reps = vc.dkw_reps = reps;
    }
    if (v.contains("gap_reps")) vc.gap_reps = get_field<std::size_t>(v["gap_reps"], "verify.gap_reps");
    if (v.contains("convergence_reps")) {
      vc.convergence_reps = get_field<std::size_t>(v["convergence_reps"], "verify.convergence_reps");
    }
    if (v.contains("dkw_reps")) vc.dkw_reps = get_field<std::size_t>(v["dkw_reps"], "verify.dkw_reps");
    if (v.contains("test_size")) vc.test_size = get_field<std::size_t>(v["test_size"], "verify.test_size");
  }
  c.validate();
  return c;
}

void RunConfig::validate() const {
  if (methods.empty()) field_error("method", "at least one method required");
  if (alphas.empty()) field_error("alpha", "at least one alpha required");
  for (double a : alphas) {
    if (!(a > 0.0 && a < 1.0)) field_error("alpha", "every alpha must lie in (0, 1)");
  }
  if (!(reg.lambda >= 0.0) || !std::isfinite(reg.lambda)) field_error("lambda", "must be finite and >= 0");
  if (reg.k_reg < 1) field_error("k_reg", "must be >= 1");
  if (num_models < 1) field_error("B", "must be >= 1");
  if (batch_size < 1) field_error("batch_size", "must be >= 1");
  if (label_column.empty()) field_error("data.label_column", "must not be empty");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) field_error("data.train_fraction", "must lie in (0, 1)");
  if (train_count && *train_count == 0) field_error("data.train_count", "must be >= 1");
  try {
    classifier.validate();
  } catch (const PreconditionError& e) {
    field_error("classifier", e.what());
  }
  if (dataset.empty()) {
    try {
      synth.dgp.validate();
    } catch (const PreconditionError& e) {
      field_error("synth", e.what());
    }
    if (synth.train_size < 2) field_error("synth.train_size", "must be >= 2");
    if (synth.test_size < 1) field_error("synth.test_size", "must be >= 1");
  }
  if (!(sweep.alpha > 0.0 && sweep.alpha < 1.0)) field_error("sweep.alpha", "must lie in (0, 1)");
  for (double l : sweep.lambdas) {
    if (!(l >= 0.0)) field_error("sweep.lambdas", "values must be >= 0");
  }
  for (int k : sweep.k_regs) {
    if (k < 1) field_error("sweep.k_regs", "values must be >= 1");
  }
  if (!(verify.alpha > 0.0 && verify.alpha < 1.0)) field_error("verify.alpha", "must lie in (0, 1)");
  if (verify.gap_reps == 0 || verify.convergence_reps == 0 || verify.dkw_reps == 0) {
    field_error("verify.reps", "must be >= 1");
  }
  if (verify.test_size == 0) field_error("verify.test_size", "must be >= 1");
  try {
    theory_method_from_string(verify.method);
  } catch (const PreconditionError& e) {
    field_error("verify.method", e.what());
  }
}

nlohmann::json config_to_json(const RunConfig& c) {
  nlohmann::json methods = nlohmann::json::array();
  for (auto m : c.methods) methods.push_back(to_string(m));
  return {
      {"method", methods},
      {"alpha", c.alphas},
      {"lambda", c.reg.lambda},
      {"k_reg", c.reg.k_reg},
      {"B", c.num_models},
      {"phi", to_string(c.phi)},
      {"batch_size", c.batch_size},
      {"seed", c.seed},
      {"output", c.output},
      {"calibration", to_string(c.calibration)},
      {"strata", c.strata},
      {"split", c.split == SplitMode::kRandom ? "random" : "sequential"},
      {"split_seed", c.split_seed},
      {"data",
       {{"path", c.dataset},
        {"label_column", c.label_column},
        {"train_count", c.train_count ? nlohmann::json(*c.train_count) : nlohmann::json(nullptr)},
        {"train_fraction", c.train_fraction},
        {"classes", c.classes}}},
      {"synth",
       {{"K", c.synth.dgp.num_classes},
        {"d", c.synth.dgp.dim},
        {"rho", c.synth.dgp.rho},
        {"noise_scale", c.synth.dgp.noise_scale},
        {"drift", c.synth.dgp.drift},
        {"seed", c.synth.dgp.seed},
        {"train_size", c.synth.train_size},
        {"test_size", c.synth.test_size}}},
      {"classifier",
       {{"kind", to_string(c.classifier.kind)},
        {"hidden_width", c.classifier.hidden_width},
        {"l2", c.classifier.l2},
        {"learning_rate", c.classifier.learning_rate},
        {"epochs", c.classifier.epochs},
        {"init_seed", c.classifier.init_seed}}},
      {"sweep", {{"alpha", c.sweep.alpha}, {"lambdas", c.sweep.lambdas}, {"k_regs", c.sweep.k_regs}}},
      {"verify",
       {{"alpha", c.verify.alpha},
        {"method", c.verify.method},
        {"gap_sizes", c.verify.gap_sizes},
        {"gap_reps", c.verify.gap_reps},
        {"convergence_sizes", c.verify.convergence_sizes},
        {"convergence_reps", c.verify.convergence_reps},
        {"dkw_sizes", c.verify.dkw_sizes},
        {"dkw_reps", c.verify.dkw_reps},
        {"test_size", c.verify.test_size},
        {"reps", nullptr}}},
  };
}

}  // namespace eraps::app
