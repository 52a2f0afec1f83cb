#include "streamad/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace streamad {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long n = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return n;
  } catch (...) {
    throw std::invalid_argument("config: key '" + key + "' expects an integer, got '" + v + "'");
  }
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return d;
  } catch (...) {
    throw std::invalid_argument("config: key '" + key + "' expects a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: key '" + key + "' expects true/false, got '" + v + "'");
}

const std::vector<std::string>& known_metrics() {
  static const std::vector<std::string> m = {"auroc_image", "f1_image",
                                             "auroc_pixel", "f1_pixel",
                                             "pr_auc_pixel", "aupro"};
  return m;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                  " is not key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));

    if (key == "method") cfg.method = val;
    else if (key == "strategy") cfg.strategy = strategy_from_string(val);
    else if (key == "stream.kind") cfg.stream_kind = val;
    else if (key == "stream.root") cfg.stream_root = val;
    else if (key == "stream.categories") cfg.categories = split_list(val);
    else if (key == "stream.n_tasks") cfg.n_tasks = static_cast<int>(parse_int(key, val));
    else if (key == "stream.n_train") cfg.n_train = static_cast<int>(parse_int(key, val));
    else if (key == "stream.n_test") cfg.n_test = static_cast<int>(parse_int(key, val));
    else if (key == "stream.image_h") cfg.image_h = static_cast<int>(parse_int(key, val));
    else if (key == "stream.image_w") cfg.image_w = static_cast<int>(parse_int(key, val));
    else if (key == "stream.seed") cfg.stream_seed = static_cast<std::uint64_t>(parse_int(key, val));
    else if (key == "replay_capacity") {
      if (val == "none") cfg.replay_capacity.reset();
      else cfg.replay_capacity = static_cast<int>(parse_int(key, val));
    } else if (key == "bank_capacity") {
      if (val == "none") cfg.bank_capacity.reset();
      else cfg.bank_capacity = static_cast<int>(parse_int(key, val));
    } else if (key == "joint_prefix_curves") cfg.joint_prefix_curves = parse_bool(key, val);
    else if (key == "seeds") {
      cfg.seeds.clear();
      for (const auto& s : split_list(val))
        cfg.seeds.push_back(static_cast<std::uint64_t>(parse_int(key, s)));
    } else if (key == "metrics") cfg.metrics = split_list(val);
    else if (key == "output_dir") cfg.output_dir = val;
    else if (key == "hp.stride") cfg.method_cfg.stride = static_cast<int>(parse_int(key, val));
    else if (key == "hp.feat_dim") cfg.method_cfg.feat_dim = static_cast<int>(parse_int(key, val));
    else if (key == "hp.epochs") cfg.method_cfg.epochs = static_cast<int>(parse_int(key, val));
    else if (key == "hp.batch_size") cfg.method_cfg.batch_size = static_cast<int>(parse_int(key, val));
    else if (key == "hp.lr") cfg.method_cfg.lr = static_cast<float>(parse_real(key, val));
    else if (key == "hp.smoothing_sigma") cfg.method_cfg.smoothing_sigma = parse_real(key, val);
    else if (key == "hp.backbone_seed") cfg.method_cfg.backbone_seed = static_cast<std::uint64_t>(parse_int(key, val));
    else if (key == "hp.padim_reduced") cfg.method_cfg.padim_reduced = static_cast<int>(parse_int(key, val));
    else if (key == "hp.padim_epsilon") cfg.method_cfg.padim_epsilon = parse_real(key, val);
    else if (key == "hp.cfa_bank_k") cfg.method_cfg.cfa_bank_k = static_cast<int>(parse_int(key, val));
    else if (key == "hp.stfpm_hidden") cfg.method_cfg.stfpm_hidden = static_cast<int>(parse_int(key, val));
    else if (key == "hp.stfpm_out") cfg.method_cfg.stfpm_out = static_cast<int>(parse_int(key, val));
    else if (key == "hp.flow_layers") cfg.method_cfg.flow_layers = static_cast<int>(parse_int(key, val));
    else if (key == "hp.flow_hidden") cfg.method_cfg.flow_hidden = static_cast<int>(parse_int(key, val));
    else if (key == "hp.pdn_dim") cfg.method_cfg.pdn_dim = static_cast<int>(parse_int(key, val));
    else if (key == "hp.ae_bottleneck") cfg.method_cfg.ae_bottleneck = static_cast<int>(parse_int(key, val));
    else if (key == "hp.draem_opacity") cfg.method_cfg.draem_opacity = static_cast<float>(parse_real(key, val));
    else throw std::invalid_argument("config: unknown key '" + key + "'");
  }
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

void validate_config(const ExperimentConfig& cfg) {
  const auto& names = method_names();
  if (std::find(names.begin(), names.end(), cfg.method) == names.end())
    throw std::invalid_argument("config: key 'method' has unknown value '" +
                                cfg.method + "'");
  if (!strategy_valid_for(cfg.method, cfg.strategy))
    throw std::invalid_argument("config: key 'strategy' value '" +
                                to_string(cfg.strategy) +
                                "' is not valid for method '" + cfg.method + "'");
  if (cfg.strategy == Strategy::replay && !cfg.replay_capacity)
    throw std::invalid_argument(
        "config: key 'replay_capacity' is required for strategy 'replay'");
  if (cfg.replay_capacity && *cfg.replay_capacity < 1)
    throw std::invalid_argument("config: key 'replay_capacity' must be >= 1");
  if (cfg.bank_capacity && *cfg.bank_capacity < 1)
    throw std::invalid_argument("config: key 'bank_capacity' must be >= 1");
  if (cfg.stream_kind != "synthetic" && cfg.stream_kind != "mvtec")
    throw std::invalid_argument(
        "config: key 'stream.kind' must be synthetic or mvtec");
  if (cfg.stream_kind == "mvtec" && cfg.stream_root.empty())
    throw std::invalid_argument(
        "config: key 'stream.root' is required for stream.kind mvtec");
  if (cfg.n_tasks < 1) throw std::invalid_argument("config: key 'stream.n_tasks' must be >= 1");
  if (cfg.n_train < 2) throw std::invalid_argument("config: key 'stream.n_train' must be >= 2");
  if (cfg.n_test < 2) throw std::invalid_argument("config: key 'stream.n_test' must be >= 2");
  if (cfg.image_h < 8 || cfg.image_w < 8)
    throw std::invalid_argument("config: keys 'stream.image_h/w' must be >= 8");
  if (cfg.seeds.empty()) throw std::invalid_argument("config: key 'seeds' must be non-empty");
  for (const auto& m : cfg.metrics)
    if (std::find(known_metrics().begin(), known_metrics().end(), m) ==
        known_metrics().end())
      throw std::invalid_argument("config: key 'metrics' has unknown entry '" + m + "'");
  if (cfg.metrics.empty())
    throw std::invalid_argument("config: key 'metrics' must be non-empty");
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out.precision(17);
  auto list = [](const auto& v) {
    std::ostringstream s;
    for (std::size_t i = 0; i < v.size(); ++i) s << (i ? "," : "") << v[i];
    return s.str();
  };
  out << "method = " << cfg.method << "\n";
  out << "strategy = " << to_string(cfg.strategy) << "\n";
  out << "stream.kind = " << cfg.stream_kind << "\n";
  if (!cfg.stream_root.empty()) out << "stream.root = " << cfg.stream_root << "\n";
  if (!cfg.categories.empty())
    out << "stream.categories = " << list(cfg.categories) << "\n";
  out << "stream.n_tasks = " << cfg.n_tasks << "\n";
  out << "stream.n_train = " << cfg.n_train << "\n";
  out << "stream.n_test = " << cfg.n_test << "\n";
  out << "stream.image_h = " << cfg.image_h << "\n";
  out << "stream.image_w = " << cfg.image_w << "\n";
  out << "stream.seed = " << cfg.stream_seed << "\n";
  out << "replay_capacity = "
      << (cfg.replay_capacity ? std::to_string(*cfg.replay_capacity) : "none") << "\n";
  out << "bank_capacity = "
      << (cfg.bank_capacity ? std::to_string(*cfg.bank_capacity) : "none") << "\n";
  out << "joint_prefix_curves = " << (cfg.joint_prefix_curves ? "true" : "false") << "\n";
  out << "seeds = " << list(cfg.seeds) << "\n";
  out << "metrics = " << list(cfg.metrics) << "\n";
  out << "output_dir = " << cfg.output_dir << "\n";
  const auto& hp = cfg.method_cfg;
  out << "hp.stride = " << hp.stride << "\n";
  out << "hp.feat_dim = " << hp.feat_dim << "\n";
  out << "hp.epochs = " << hp.epochs << "\n";
  out << "hp.batch_size = " << hp.batch_size << "\n";
  out << "hp.lr = " << hp.lr << "\n";
  out << "hp.smoothing_sigma = " << hp.smoothing_sigma << "\n";
  out << "hp.backbone_seed = " << hp.backbone_seed << "\n";
  out << "hp.padim_reduced = " << hp.padim_reduced << "\n";
  out << "hp.padim_epsilon = " << hp.padim_epsilon << "\n";
  out << "hp.cfa_bank_k = " << hp.cfa_bank_k << "\n";
  out << "hp.stfpm_hidden = " << hp.stfpm_hidden << "\n";
  out << "hp.stfpm_out = " << hp.stfpm_out << "\n";
  out << "hp.flow_layers = " << hp.flow_layers << "\n";
  out << "hp.flow_hidden = " << hp.flow_hidden << "\n";
  out << "hp.pdn_dim = " << hp.pdn_dim << "\n";
  out << "hp.ae_bottleneck = " << hp.ae_bottleneck << "\n";
  out << "hp.draem_opacity = " << hp.draem_opacity << "\n";
  return out.str();
}

}  // namespace streamad
