#include "hetsgd/config.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace hetsgd {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& expected) {
  throw std::invalid_argument("config: key '" + key + "' expects " + expected + ", got '" +
                              value + "'");
}

Real parse_real(const std::string& key, const std::string& value, bool allow_inf = false) {
  char* end = nullptr;
  const double v = std::strtod(value.c_str(), &end);
  if (end != value.c_str() + value.size() || value.empty())
    bad_value(key, value, "a real number");
  if (!allow_inf && !std::isfinite(v)) bad_value(key, value, "a finite real number");
  if (std::isnan(v)) bad_value(key, value, "a real number");
  return v;
}

long parse_long(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const long v = std::strtol(value.c_str(), &end, 10);
  if (end != value.c_str() + value.size() || value.empty())
    bad_value(key, value, "an integer");
  return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  if (!value.empty() && value[0] == '-') bad_value(key, value, "a non-negative integer");
  char* end = nullptr;
  const unsigned long long v = std::strtoull(value.c_str(), &end, 10);
  if (end != value.c_str() + value.size() || value.empty())
    bad_value(key, value, "a non-negative integer");
  return v;
}

std::vector<Real> parse_real_list(const std::string& key, const std::string& value) {
  std::vector<Real> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) bad_value(key, value, "a comma-separated list of reals");
    out.push_back(parse_real(key, item));
  }
  if (out.empty()) bad_value(key, value, "a comma-separated list of reals");
  return out;
}

std::string fmt_real(Real v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(line_no) +
                                  " is not of the form 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::invalid_argument("config: line " + std::to_string(line_no) + " has an empty key");
    if (value.empty())
      throw std::invalid_argument("config: key '" + key + "' has an empty value");
    if (!cfg.explicit_keys.insert(key).second)
      throw std::invalid_argument("config: duplicate key '" + key + "'");

    if (key == "policy") cfg.policy = value;
    else if (key == "preset") cfg.preset = value;
    else if (key == "workers") cfg.workers = static_cast<int>(parse_long(key, value));
    else if (key == "base_batch_time") cfg.base_batch_time = parse_real(key, value);
    else if (key == "static_factors") cfg.static_factors = parse_real_list(key, value);
    else if (key == "dynamic_range") cfg.dynamic_range = parse_real(key, value);
    else if (key == "comm_alpha") cfg.comm_alpha = parse_real(key, value);
    else if (key == "comm_beta") cfg.comm_beta = parse_real(key, value);
    else if (key == "model") cfg.model = value;
    else if (key == "mlp_hidden") cfg.mlp_hidden = static_cast<int>(parse_long(key, value));
    else if (key == "dim") cfg.dim = static_cast<int>(parse_long(key, value));
    else if (key == "dataset_size") cfg.dataset_size = parse_long(key, value);
    else if (key == "noise") cfg.noise = parse_real(key, value);
    else if (key == "feature_scale") cfg.feature_scale = parse_real(key, value);
    else if (key == "dataset_csv") cfg.dataset_csv = value;
    else if (key == "seed") cfg.seed = parse_u64(key, value);
    else if (key == "mr") cfg.hyper.reference_batch = parse_long(key, value);
    else if (key == "gamma") cfg.hyper.gamma = parse_real(key, value);
    else if (key == "lambda") cfg.hyper.lambda = parse_real(key, value);
    else if (key == "iterations") cfg.hyper.iterations = parse_long(key, value);
    else if (key == "staleness") cfg.hyper.staleness = parse_long(key, value);
    else if (key == "k_max") cfg.hyper.k_max = static_cast<int>(parse_long(key, value));
    else if (key == "loss_threshold") cfg.loss_threshold = parse_real(key, value, true);
    else if (key == "holdout_fraction") cfg.holdout_fraction = parse_real(key, value);
    else if (key == "accuracy_threshold") cfg.accuracy_threshold = parse_real(key, value);
    else if (key == "cadence") cfg.cadence = parse_long(key, value);
    else if (key == "dbs_epoch_len") cfg.dbs_epoch_len = parse_long(key, value);
    else if (key == "fstar_iters") cfg.fstar_iters = parse_long(key, value);
    else if (key == "sigma_probes") cfg.sigma_probes = parse_long(key, value);
    else if (key == "lipschitz_probes") cfg.lipschitz_probes = parse_long(key, value);
    else if (key == "lipschitz_radius") cfg.lipschitz_radius = parse_real(key, value);
    else throw std::invalid_argument("config: unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

void ExperimentConfig::validate() const {
  require(policy == "abs" || policy == "bsp" || policy == "dbs" || policy == "asp" ||
              policy == "ssp",
          "config: policy must be one of abs|bsp|dbs|asp|ssp, got '" + policy + "'");
  require(has("seed"), "config: 'seed' is required (runs never draw wall-clock entropy)");
  require(workers >= 1, "config: workers must be >= 1");
  require(base_batch_time > 0.0, "config: base_batch_time must be > 0");
  require(dynamic_range >= 0.0, "config: dynamic_range must be >= 0");
  if (!preset.empty())
    require(!has("static_factors") && !has("dynamic_range"),
            "config: 'preset' conflicts with explicit 'static_factors'/'dynamic_range'");
  if (!static_factors.empty())
    require(static_cast<int>(static_factors.size()) == workers,
            "config: static_factors needs one entry per worker");
  build_profiles();  // surfaces preset-name and factor errors
  build_comm().validate();

  require(model == "logistic" || model == "mlp",
          "config: model must be logistic or mlp, got '" + model + "'");
  require(mlp_hidden >= 1, "config: mlp_hidden must be >= 1");
  if (!dataset_csv.empty())
    require(!has("dim") && !has("dataset_size") && !has("noise") && !has("feature_scale"),
            "config: 'dataset_csv' conflicts with dim/dataset_size/noise/feature_scale");
  require(dim >= 1, "config: dim must be >= 1");
  require(dataset_size >= 2, "config: dataset_size must be >= 2");
  require(noise >= 0.0 && noise < 1.0, "config: noise must be in [0, 1)");
  require(feature_scale > 0.0, "config: feature_scale must be > 0");

  hyper.validate();
  require(loss_threshold > 0.0, "config: loss_threshold must be > 0 (inf allowed)");
  require(holdout_fraction >= 0.0 && holdout_fraction <= 0.9,
          "config: holdout_fraction must be in [0, 0.9]");
  require(accuracy_threshold >= 0.0 && accuracy_threshold <= 1.0,
          "config: accuracy_threshold must be in [0, 1]");
  if (accuracy_threshold > 0.0)
    require(holdout_fraction > 0.0,
            "config: accuracy_threshold needs a positive holdout_fraction");
  require(cadence >= 1, "config: cadence must be >= 1");
  require(dbs_epoch_len >= 1, "config: dbs_epoch_len must be >= 1");
  require(fstar_iters >= 1, "config: fstar_iters must be >= 1");
  require(sigma_probes >= 1, "config: sigma_probes must be >= 1");
  require(lipschitz_probes >= 1, "config: lipschitz_probes must be >= 1");
  require(lipschitz_radius > 0.0, "config: lipschitz_radius must be > 0");
}

std::vector<WorkerProfile> ExperimentConfig::build_profiles() const {
  if (!preset.empty()) return cluster_preset(preset, base_batch_time, workers);
  std::vector<WorkerProfile> out;
  for (int i = 0; i < workers; ++i) {
    WorkerProfile p;
    p.base_batch_time = base_batch_time;
    p.static_factor = static_factors.empty() ? 0.0 : static_factors[static_cast<std::size_t>(i)];
    p.dynamic_range = dynamic_range;
    p.validate();
    out.push_back(p);
  }
  return out;
}

Model ExperimentConfig::build_model(int data_dim) const {
  Model m;
  m.kind = model_kind_from_string(model);
  m.input_dim = data_dim;
  m.hidden = (m.kind == ModelKind::kTwoLayerMlp) ? mlp_hidden : 0;
  return m;
}

std::string ExperimentConfig::comparison_key() const {
  std::ostringstream os;
  os << "model=" << model << "|hidden=" << mlp_hidden << "|dim=" << dim
     << "|size=" << dataset_size << "|noise=" << fmt_real(noise)
     << "|scale=" << fmt_real(feature_scale) << "|csv=" << dataset_csv << "|seed=" << seed
     << "|loss_thr=" << fmt_real(loss_threshold) << "|holdout=" << fmt_real(holdout_fraction)
     << "|acc_thr=" << fmt_real(accuracy_threshold);
  return os.str();
}

}  // namespace hetsgd
