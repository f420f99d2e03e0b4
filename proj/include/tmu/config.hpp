#pragma once

#include "tmu/unlearn.hpp"

#include <map>

namespace tmu {

enum class GoldPolicy { Train, Load, Skip };

// Resolved experiment description: dataset, architecture, per-stage
// sub-configs, and the run matrix (classes x seeds x methods).
struct ExperimentConfig {
  std::string name = "experiment";
  std::string dataset = "cifar10:subset=20000";
  std::string dataset_root = "data";
  std::string arch = "resnet18-small";
  std::vector<int> forget_classes = {0, 1, 2};
  int n_forget = 100;
  std::vector<uint64_t> seeds = {1, 2, 3};
  std::vector<std::string> methods = {"finetune", "neggrad", "randlabel",
                                      "badteacher", "fisher", "tmu"};
  GoldPolicy gold_policy = GoldPolicy::Train;
  std::string out_dir = "runs/desk";
  int workers = 1;

  TrainConfig train;
  TrainConfig twin_ft;
  double twin_replay_mix = 0.0;
  AttackConfig attack;
  int curriculum_epochs = 1;
  double curriculum_fraction = 0.3;
  PredictorConfig predictor;
  UnlearnConfig unlearn_base;
  // per-method overrides from [unlearn.<method>] sections
  std::map<std::string, std::map<std::string, std::string>> method_overrides;

  std::vector<int> sweep_sizes;  // [sweep] sizes

  void validate() const;
  UnlearnConfig unlearn_for(const std::string& method) const;
  std::string fingerprint() const;  // config-only content hash
};

// Built-in profiles: "desk" (subsampled CIFAR-10, small nets, short
// schedule) and "paper" (full dataset, full-width nets, 200-epoch schedule).
ExperimentConfig profile_config(const std::string& profile);

// Plain-text key=value sections; unknown keys are rejected.
ExperimentConfig parse_config_text(const std::string& text, const ExperimentConfig& base);
ExperimentConfig load_config_file(const std::string& path, const std::string& profile);

std::string render_config(const ExperimentConfig& cfg);  // echoed into the out dir

}  // namespace tmu
