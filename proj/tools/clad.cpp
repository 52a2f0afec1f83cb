#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <optional>

#include "streamad/runner.hpp"

using namespace streamad;

namespace {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> device;
  std::optional<std::string> output;
};

void apply(ExperimentConfig& cfg, const Overrides& ov) {
  if (ov.seed) cfg.seeds = {*ov.seed};
  if (ov.output) cfg.output_dir = *ov.output;
  if (ov.device && *ov.device != "cpu")
    throw std::invalid_argument("device '" + *ov.device + "' not available (cpu only)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"continual anomaly-detection experiment runner"};
  app.require_subcommand(1);

  Overrides ov;
  std::string config_path, results_dir;

  auto* run = app.add_subcommand("run", "train and evaluate a config");
  run->add_option("config", config_path, "config file")->required();
  run->add_option("--seed", ov.seed, "override the seed list with one seed");
  run->add_option("--device", ov.device, "compute device (cpu)");
  run->add_option("--output", ov.output, "override output_dir");

  auto* report = app.add_subcommand("report", "emit table and curves for a results dir");
  report->add_option("results", results_dir, "results directory")->required();
  report->add_option("--output", ov.output, "report output directory");

  int st_tasks = 3, st_train = 20, st_test = 8, st_h = 64, st_w = 64;
  std::uint64_t st_seed = 0;
  std::string st_out = "synth-stream";
  auto* synth = app.add_subcommand("synth-stream", "materialize a synthetic dataset");
  synth->add_option("--tasks", st_tasks, "number of tasks");
  synth->add_option("--train", st_train, "train images per task");
  synth->add_option("--test", st_test, "test images per task");
  synth->add_option("--height", st_h, "image height");
  synth->add_option("--width", st_w, "image width");
  synth->add_option("--seed", st_seed, "stream seed");
  synth->add_option("--output", st_out, "output directory");

  auto* validate = app.add_subcommand("validate", "check a config file");
  validate->add_option("config", config_path, "config file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      ExperimentConfig cfg = parse_config_file(config_path);
      apply(cfg, ov);
      validate_config(cfg);
      for (std::uint64_t seed : cfg.seeds) {
        RunRecord rec = run_experiment(cfg, seed);
        save_run_record(rec, cfg.output_dir);
        std::cout << (std::filesystem::path(cfg.output_dir) / rec.run_dir_name()).string()
                  << "\n";
      }
    } else if (report->parsed()) {
      auto records = load_all_records(results_dir);
      const std::string out =
          ov.output ? *ov.output
                    : (std::filesystem::path(results_dir) / "report").string();
      write_report(records, out);
      std::cout << out << "\n";
    } else if (synth->parsed()) {
      auto stream = make_synthetic_stream(st_tasks, st_train, st_test, st_h, st_w, st_seed);
      save_stream_mvtec_layout(stream, st_out);
      std::cout << st_out << "\n";
    } else if (validate->parsed()) {
      ExperimentConfig cfg = parse_config_file(config_path);
      apply(cfg, ov);
      validate_config(cfg);
      std::cout << "ok\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
