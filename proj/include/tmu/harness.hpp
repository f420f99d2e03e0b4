#pragma once

#include "tmu/config.hpp"
#include "tmu/eval.hpp"

namespace tmu {

// Pipeline stages in execution order; subcommands stop after their stage.
enum class Stage { Train, Gold, Twin, Features, Predict, Unlearn, Eval };

// Failures are tagged with the stage that produced them.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& msg)
      : std::runtime_error("stage " + stage + ": " + msg), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct RunResult {
  int forget_class = -1;
  uint64_t seed = 0;
  std::string run_dir;
  std::vector<UnlearnReport> reports;
};

struct ExperimentResult {
  std::string out_dir;
  std::vector<RunResult> runs;
};

// Executes train-original -> split -> gold -> twin -> features -> predictor
// -> unlearn(methods) -> evaluate, persisting every artifact under the out
// directory. Stages whose input fingerprints match the manifest are loaded
// instead of recomputed, so an unchanged re-run does no training.
ExperimentResult run_experiment(const ExperimentConfig& cfg, Stage stop_after = Stage::Eval);

struct SweepRow {
  int size = 0;
  std::string method;
  int runs = 0;
  double mean_acc_test = 0.0;
  double mean_acc_forget = 0.0;
  double mean_delta = 0.0;
};

struct SweepResult {
  std::vector<int> sizes;
  std::vector<UnlearnReport> reports;  // every (size, class, seed, method) run
  std::vector<SweepRow> aggregate;     // one row per (size, method)
};

SweepResult sweep_forget_size(const ExperimentConfig& cfg, const std::vector<int>& sizes);

// Renders report.md, report.csv and SVG plots from the persisted reports
// under out_dir (including sweep subdirectories). Throws when no reports
// exist.
void emit_report(const std::string& out_dir);

// Side-by-side comparison of aggregated run results against the built-in
// reference tables ("table1", "table3", "table4", "allcnn", "vit",
// "cifar100", "forget500", "fisher"); pass empty run results to print the
// reference alone.
std::string diff_against_reference(const std::string& table_id, const std::string& out_dir);

}  // namespace tmu
