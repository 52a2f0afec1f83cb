#include "streamad/runner.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "streamad/methods.hpp"

namespace streamad {

namespace fs = std::filesystem;
using nlohmann::json;

std::string provenance_hash(const std::string& resolved_config,
                            std::uint64_t seed) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 1099511628211ULL;
  };
  for (char c : resolved_config) mix(static_cast<unsigned char>(c));
  for (int i = 0; i < 8; ++i) mix(static_cast<unsigned char>(seed >> (8 * i)));
  std::ostringstream out;
  out << std::hex << h;
  return out.str();
}

std::string RunRecord::run_dir_name() const {
  return config.method + "_" + to_string(config.strategy) + "_seed" +
         std::to_string(seed);
}

TaskStream build_stream(const ExperimentConfig& cfg) {
  if (cfg.stream_kind == "synthetic")
    return make_synthetic_stream(cfg.n_tasks, cfg.n_train, cfg.n_test,
                                 cfg.image_h, cfg.image_w, cfg.stream_seed);
  const auto& cats =
      cfg.categories.empty() ? mvtec_object_categories() : cfg.categories;
  return load_mvtec_stream(cfg.stream_root, cats, cfg.image_h, cfg.image_w);
}

namespace {

std::map<std::string, double> evaluate_task(const MethodAdapter& adapter,
                                            const Task& task,
                                            const std::vector<std::string>& metrics) {
  std::vector<double> img_scores, px_scores;
  std::vector<int> img_labels, px_labels;
  std::vector<FloatMap> maps;
  std::vector<MaskU8> masks;
  for (const auto& s : task.test) {
    AnomalyMap r = adapter.score(s.image);
    img_scores.push_back(r.image_score);
    img_labels.push_back(s.label == Label::anomalous ? 1 : 0);
    MaskU8 mask = s.mask ? *s.mask : MaskU8(r.map.h, r.map.w, 0);
    for (int y = 0; y < r.map.h; ++y)
      for (int x = 0; x < r.map.w; ++x) {
        px_scores.push_back(r.map.at(y, x));
        px_labels.push_back(mask.at(y, x) ? 1 : 0);
      }
    maps.push_back(std::move(r.map));
    masks.push_back(std::move(mask));
  }

  std::map<std::string, double> out;
  for (const auto& m : metrics) {
    if (m == "auroc_image") out[m] = auroc(img_scores, img_labels);
    else if (m == "f1_image") out[m] = f1_max(img_scores, img_labels).f1;
    else if (m == "auroc_pixel") out[m] = auroc(px_scores, px_labels);
    else if (m == "f1_pixel") out[m] = f1_max(px_scores, px_labels).f1;
    else if (m == "pr_auc_pixel") out[m] = pr_auc(px_scores, px_labels);
    else if (m == "aupro") out[m] = aupro(maps, masks);
    else throw std::invalid_argument("unknown metric: " + m);
  }
  return out;
}

}  // namespace

RunRecord run_experiment(const ExperimentConfig& cfg, std::uint64_t seed) {
  validate_config(cfg);
  TaskStream stream = build_stream(cfg);
  const int T = static_cast<int>(stream.tasks.size());

  MethodConfig mc = cfg.method_cfg;
  if (cfg.bank_capacity) mc.bank_capacity = *cfg.bank_capacity;
  auto adapter = make_adapter(cfg.method, mc);
  adapter->reset(seed);

  std::optional<ReplayBuffer> replay;
  if (cfg.replay_capacity &&
      (cfg.strategy == Strategy::replay || cfg.strategy == Strategy::cl_bank))
    replay.emplace(*cfg.replay_capacity, seed + 17);

  RunRecord rec;
  rec.config = cfg;
  rec.seed = seed;
  for (const auto& m : cfg.metrics) rec.matrices.emplace(m, ResultMatrix(m, T));

  std::vector<TimingEvent> events;
  for (int t = 0; t < T; ++t) {
    const bool skip = cfg.strategy == Strategy::joint &&
                      !cfg.joint_prefix_curves && t < T - 1;
    if (skip) continue;

    const auto start = std::chrono::steady_clock::now();
    if (cfg.strategy == Strategy::joint) {
      adapter->reset(seed);
      Task pooled;
      pooled.name = "pooled";
      pooled.index = t;
      for (int i = 0; i <= t; ++i)
        pooled.train.insert(pooled.train.end(), stream.tasks[i].train.begin(),
                            stream.tasks[i].train.end());
      adapter->train_on_task(pooled, Strategy::joint, nullptr);
    } else {
      adapter->train_on_task(stream.tasks[t], cfg.strategy,
                             replay ? &*replay : nullptr);
      if (replay) replay->update_after_task(stream.tasks[t].train, t);
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    events.push_back({t, seconds});

    for (int i = 0; i <= t; ++i) {
      auto vals = evaluate_task(*adapter, stream.tasks[i], cfg.metrics);
      for (const auto& [m, v] : vals) rec.matrices.at(m).set(t, i, v);
    }
  }

  rec.timing = timing_report(events);
  std::size_t extra = adapter->additional_bytes();
  if (replay) extra += replay->memory_bytes();
  rec.memory = memory_report(adapter->architecture_params(), extra);
  rec.provenance = provenance_hash(serialize_config(cfg), seed);
  return rec;
}

void save_run_record(const RunRecord& record, const std::string& results_dir) {
  const fs::path dir = fs::path(results_dir) / record.run_dir_name();
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "config.txt");
    out << serialize_config(record.config);
  }
  for (const auto& [name, matrix] : record.matrices) {
    std::ofstream out(dir / ("matrix_" + name + ".csv"));
    out << matrix.to_csv();
  }
  json j;
  j["seed"] = record.seed;
  j["provenance"] = record.provenance;
  j["memory"]["architecture_mb"] = record.memory.architecture_mb;
  j["memory"]["additional_mb"] = record.memory.additional_mb;
  j["timing"]["per_task_seconds"] = record.timing.per_task_seconds;
  j["timing"]["total_seconds"] = record.timing.total_seconds;
  std::ofstream out(dir / "record.json");
  out << j.dump(2) << "\n";
}

RunRecord load_run_record(const std::string& run_dir) {
  const fs::path dir(run_dir);
  RunRecord rec;
  {
    std::ifstream in(dir / "config.txt");
    if (!in) throw std::invalid_argument("not a run directory: " + run_dir);
    std::stringstream ss;
    ss << in.rdbuf();
    rec.config = parse_config_text(ss.str());
  }
  {
    std::ifstream in(dir / "record.json");
    json j;
    in >> j;
    rec.seed = j.at("seed").get<std::uint64_t>();
    rec.provenance = j.at("provenance").get<std::string>();
    rec.memory.architecture_mb = j.at("memory").at("architecture_mb").get<double>();
    rec.memory.additional_mb = j.at("memory").at("additional_mb").get<double>();
    rec.timing.per_task_seconds =
        j.at("timing").at("per_task_seconds").get<std::vector<double>>();
    rec.timing.total_seconds = j.at("timing").at("total_seconds").get<double>();
  }
  for (const auto& m : rec.config.metrics) {
    std::ifstream in(dir / ("matrix_" + m + ".csv"));
    if (!in) throw std::invalid_argument("missing matrix_" + m + ".csv in " + run_dir);
    std::stringstream ss;
    ss << in.rdbuf();
    rec.matrices.emplace(m, ResultMatrix::from_csv(ss.str(), m));
  }
  return rec;
}

std::vector<RunRecord> load_all_records(const std::string& results_dir) {
  std::vector<RunRecord> out;
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(results_dir))
    if (entry.is_directory() && fs::exists(entry.path() / "config.txt"))
      dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  for (const auto& d : dirs) out.push_back(load_run_record(d.string()));
  return out;
}

namespace {

std::string stream_signature(const ExperimentConfig& c) {
  std::ostringstream s;
  s << c.stream_kind << '|' << c.stream_root << '|';
  for (const auto& cat : c.categories) s << cat << ',';
  s << '|' << c.n_tasks << 'x' << c.n_train << 'x' << c.n_test << '|'
    << c.image_h << 'x' << c.image_w << '|' << c.stream_seed;
  return s.str();
}

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string fmt_pct(double v) { return fmt2(v) + "%"; }

// average-so-far value at row t (mean over defined entries i <= t)
double avg_so_far(const ResultMatrix& r, int t) {
  double sum = 0;
  int n = 0;
  for (int i = 0; i <= t; ++i) {
    const double v = r.get(t, i);
    if (!std::isnan(v)) {
      sum += v;
      ++n;
    }
  }
  return n ? sum / n : std::nan("");
}

void write_curves_svg(const std::string& path,
                      const std::map<std::string, std::vector<double>>& lines,
                      int T, const std::string& title) {
  const int width = 480, height = 320;
  const int ml = 50, mr = 130, mt = 30, mb = 40;
  const int pw = width - ml - mr, ph = height - mt - mb;
  static const std::vector<std::string> colors = {"#1f77b4", "#d62728",
                                                  "#2ca02c", "#9467bd"};
  std::ofstream out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\">\n";
  out << "<text x=\"" << ml << "\" y=\"18\" font-size=\"13\">" << title
      << "</text>\n";
  out << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw
      << "\" height=\"" << ph << "\" fill=\"none\" stroke=\"#888\"/>\n";
  for (int g = 0; g <= 4; ++g) {
    const double v = g / 4.0;
    const int y = mt + ph - static_cast<int>(v * ph);
    out << "<text x=\"8\" y=\"" << y + 4 << "\" font-size=\"10\">" << fmt2(v)
        << "</text>\n";
  }
  for (int t = 0; t < T; ++t) {
    const int x = ml + (T == 1 ? pw / 2 : t * pw / (T - 1));
    out << "<text x=\"" << x - 4 << "\" y=\"" << height - 20
        << "\" font-size=\"10\">" << t + 1 << "</text>\n";
  }
  out << "<text x=\"" << ml + pw / 2 - 30 << "\" y=\"" << height - 6
      << "\" font-size=\"11\">tasks seen</text>\n";
  int idx = 0;
  for (const auto& [label, ys] : lines) {
    const auto& color = colors[idx % colors.size()];
    std::ostringstream pts;
    for (int t = 0; t < T; ++t) {
      if (std::isnan(ys[t])) continue;
      const int x = ml + (T == 1 ? pw / 2 : t * pw / (T - 1));
      const int y = mt + ph - static_cast<int>(std::clamp(ys[t], 0.0, 1.0) * ph);
      pts << x << "," << y << " ";
    }
    out << "<polyline points=\"" << pts.str() << "\" fill=\"none\" stroke=\""
        << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << ml + pw + 8 << "\" y=\"" << mt + 14 + 16 * idx
        << "\" font-size=\"11\" fill=\"" << color << "\">" << label
        << "</text>\n";
    ++idx;
  }
  out << "</svg>\n";
}

}  // namespace

void write_report(const std::vector<RunRecord>& records,
                  const std::string& out_dir) {
  if (records.empty()) throw std::invalid_argument("no records to report");
  const std::string sig = stream_signature(records.front().config);
  for (const auto& r : records)
    if (stream_signature(r.config) != sig)
      throw std::invalid_argument("refusing to merge records from different streams");
  fs::create_directories(out_dir);

  // joint baseline per method: mean final-average pixel f1 over joint records
  std::map<std::string, std::pair<double, int>> joint_acc;
  for (const auto& r : records) {
    if (r.config.strategy != Strategy::joint) continue;
    auto it = r.matrices.find("f1_pixel");
    if (it == r.matrices.end()) continue;
    auto& acc = joint_acc[r.config.method];
    acc.first += average_over_tasks(it->second);
    acc.second += 1;
  }

  static const std::vector<std::pair<std::string, std::string>> metric_rows = {
      {"auroc_image", "image AUROC"}, {"f1_image", "image f1"},
      {"auroc_pixel", "pixel AUROC"}, {"f1_pixel", "pixel f1"},
      {"pr_auc_pixel", "PR AUC"},     {"aupro", "AUPRO"}};

  std::ofstream table(fs::path(out_dir) / "table.csv");
  table << "metric";
  for (const auto& r : records)
    table << "," << r.config.method << "/" << to_string(r.config.strategy)
          << "/s" << r.seed;
  table << "\n";
  for (const auto& [key, label] : metric_rows) {
    table << label;
    for (const auto& r : records) {
      auto it = r.matrices.find(key);
      table << ","
            << (it != r.matrices.end() ? fmt2(average_over_tasks(it->second)) : "-");
    }
    table << "\n";
  }
  table << "training time (s)";
  for (const auto& r : records) table << "," << fmt2(r.timing.total_seconds);
  table << "\n";
  table << "architecture MB";
  for (const auto& r : records) table << "," << fmt2(r.memory.architecture_mb);
  table << "\n";
  table << "additional MB";
  for (const auto& r : records) table << "," << fmt2(r.memory.additional_mb);
  table << "\n";
  table << "relative gap";
  for (const auto& r : records) {
    auto it = r.matrices.find("f1_pixel");
    auto jt = joint_acc.find(r.config.method);
    if (r.config.strategy == Strategy::joint || it == r.matrices.end() ||
        jt == joint_acc.end() || jt->second.second == 0) {
      table << ",-";
    } else {
      const double joint_final = jt->second.first / jt->second.second;
      table << ","
            << fmt_pct(relative_gap(average_over_tasks(it->second), joint_final));
    }
  }
  table << "\n";
  table << "average forgetting";
  for (const auto& r : records) {
    auto it = r.matrices.find("f1_pixel");
    bool ok = r.config.strategy != Strategy::joint && it != r.matrices.end();
    if (ok) {
      try {
        table << "," << fmt_pct(average_forgetting(it->second));
      } catch (const std::exception&) {
        ok = false;
      }
    }
    if (!ok) table << ",-";
  }
  table << "\n";

  // per-method curves: average-so-far pixel f1, one line per strategy
  std::set<std::string> methods;
  for (const auto& r : records) methods.insert(r.config.method);
  for (const auto& method : methods) {
    std::map<std::string, std::vector<std::vector<double>>> per_strategy;
    int T = 0;
    for (const auto& r : records) {
      if (r.config.method != method) continue;
      auto it = r.matrices.find("f1_pixel");
      if (it == r.matrices.end()) continue;
      T = it->second.n_tasks();
      std::vector<double> ys(T);
      for (int t = 0; t < T; ++t) ys[t] = avg_so_far(it->second, t);
      per_strategy[to_string(r.config.strategy)].push_back(ys);
    }
    if (per_strategy.empty()) continue;
    std::map<std::string, std::vector<double>> lines;
    for (const auto& [strat, runs] : per_strategy) {
      std::vector<double> mean(T, 0.0);
      for (int t = 0; t < T; ++t) {
        double sum = 0;
        int n = 0;
        for (const auto& ys : runs)
          if (!std::isnan(ys[t])) {
            sum += ys[t];
            ++n;
          }
        mean[t] = n ? sum / n : std::nan("");
      }
      lines[strat] = mean;
    }
    write_curves_svg((fs::path(out_dir) / ("curve_" + method + ".svg")).string(),
                     lines, T, method + ": average pixel f1 on seen tasks");
  }
}

}  // namespace streamad
