#pragma once

#include <optional>
#include <string>
#include <vector>

#include "streamad/methods.hpp"

namespace streamad {

// Flat key=value experiment description. parse_* fills defaults, rejects
// unknown keys, and validate_config() enforces the cross-field rules.
struct ExperimentConfig {
  std::string method = "padim";
  Strategy strategy = Strategy::finetune;

  // stream
  std::string stream_kind = "synthetic";  // synthetic | mvtec
  std::string stream_root;                // mvtec only
  std::vector<std::string> categories;    // mvtec; empty = the ten objects
  int n_tasks = 3;
  int n_train = 20;
  int n_test = 8;
  int image_h = 64;
  int image_w = 64;
  std::uint64_t stream_seed = 0;

  std::optional<int> replay_capacity;
  std::optional<int> bank_capacity;
  bool joint_prefix_curves = false;

  std::vector<std::uint64_t> seeds = {0};
  std::vector<std::string> metrics = {"auroc_image", "f1_image",  "auroc_pixel",
                                      "f1_pixel",    "pr_auc_pixel", "aupro"};
  std::string output_dir = "results";

  MethodConfig method_cfg;
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);

// Throws std::invalid_argument naming the offending key.
void validate_config(const ExperimentConfig& cfg);

// Fully-resolved key=value form; parses back to an equivalent config.
std::string serialize_config(const ExperimentConfig& cfg);

}  // namespace streamad
