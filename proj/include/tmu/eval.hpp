#pragma once

#include "tmu/model.hpp"

#include <optional>

namespace tmu {

// Per-run metrics. Gold-dependent fields are absent (not zero) when no gold
// model is available.
struct UnlearnReport {
  std::string method;
  int forget_class = -1;
  double acc_test = 0.0;
  double acc_forget = 0.0;
  double acc_remain = 0.0;
  std::optional<double> gold_acc_test;
  std::optional<double> gold_acc_forget;
  std::optional<double> delta;
  std::optional<double> activation_distance;
  std::optional<int> n_easy;
  std::optional<int> n_hard;
  double wall_clock_seconds = 0.0;
  std::string config_fingerprint;
};

// |acc_forget - gold_acc_forget|, both in [0,100].
double alignment_delta(double acc_forget, double gold_acc_forget);

// Mean L2 distance between the two models' penultimate activations over the
// sample set. A pseudometric: nonnegative, symmetric, zero on identical
// models.
double activation_distance(const TrainedModel& model_a, const TrainedModel& model_b,
                           const LabeledDataset& samples);

struct EvalInputs {
  std::string method;
  std::optional<int> n_easy;
  std::optional<int> n_hard;
  double wall_clock_seconds = 0.0;
  std::string config_fingerprint;
};

UnlearnReport evaluate_run(const TrainedModel& unlearned, const TrainedModel* gold,
                           const DataSplit& split, const EvalInputs& extras);

void save_report(const UnlearnReport& report, const std::string& path);
UnlearnReport load_report(const std::string& path);

std::string report_csv_header();
std::string report_csv_row(const UnlearnReport& report);

}  // namespace tmu
