#include "tmu/harness.hpp"
#include "tmu/paper_reference.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

struct GlobalOpts {
  std::string config_path;
  std::string out_dir;
  std::string profile = "desk";
  int64_t seed = -1;
  int workers = 0;
};

tmu::ExperimentConfig resolve(const GlobalOpts& g) {
  tmu::ExperimentConfig cfg = g.config_path.empty()
                                  ? tmu::profile_config(g.profile)
                                  : tmu::load_config_file(g.config_path, g.profile);
  if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
  if (g.seed >= 0) cfg.seeds = {static_cast<uint64_t>(g.seed)};
  if (g.workers > 0) cfg.workers = g.workers;
  return cfg;
}

int run_stage(const GlobalOpts& g, tmu::Stage stage, const char* done_msg) {
  const tmu::ExperimentConfig cfg = resolve(g);
  const tmu::ExperimentResult res = tmu::run_experiment(cfg, stage);
  std::cout << done_msg << " -> " << res.out_dir << "\n";
  for (const auto& run : res.runs) {
    for (const auto& r : run.reports) {
      std::cout << "class " << r.forget_class << " method " << r.method << ": ACC_Dtest "
                << r.acc_test << " ACC_Df " << r.acc_forget;
      if (r.delta) std::cout << " delta " << *r.delta;
      std::cout << "\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"twin machine unlearning benchmark toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOpts g;
  app.add_option("--config", g.config_path, "experiment config file (key = value sections)");
  app.add_option("--out", g.out_dir, "output directory override");
  app.add_option("--seed", g.seed, "single-seed override");
  app.add_option("--workers", g.workers, "parallel worker processes for (class, seed) runs");
  app.add_option("--profile", g.profile, "base profile: desk or paper")
      ->check(CLI::IsMember({"desk", "paper"}));

  auto* c_train = app.add_subcommand("train", "train (or load) the original models");
  auto* c_gold = app.add_subcommand("gold", "train the per-class gold models");
  auto* c_twin = app.add_subcommand("twin", "construct the twin unlearning problems");
  auto* c_feat = app.add_subcommand("features", "extract twin and transfer features");
  auto* c_pred = app.add_subcommand("predict", "train the generalization-label predictor");
  auto* c_unlearn = app.add_subcommand("unlearn", "run the configured unlearning methods");
  auto* c_eval = app.add_subcommand("eval", "evaluate unlearned checkpoints into reports");
  auto* c_sweep = app.add_subcommand("sweep", "run the forget-set size sweep");
  auto* c_report = app.add_subcommand("report", "render tables and plots from reports");

  std::vector<int> sweep_sizes;
  c_sweep->add_option("--sizes", sweep_sizes, "ascending forget-set sizes")->delimiter(',');

  std::string diff_table;
  c_report->add_option("--diff-paper", diff_table,
                       "compare run aggregates against a published reference table");
  bool list_tables = false;
  c_report->add_flag("--list-tables", list_tables, "list reference table ids");

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_train->parsed()) return run_stage(g, tmu::Stage::Train, "original models ready");
    if (c_gold->parsed()) return run_stage(g, tmu::Stage::Gold, "gold models ready");
    if (c_twin->parsed()) return run_stage(g, tmu::Stage::Twin, "twin problems ready");
    if (c_feat->parsed()) return run_stage(g, tmu::Stage::Features, "feature matrices ready");
    if (c_pred->parsed()) return run_stage(g, tmu::Stage::Predict, "predictors ready");
    if (c_unlearn->parsed())
      return run_stage(g, tmu::Stage::Unlearn, "unlearned checkpoints ready");
    if (c_eval->parsed()) return run_stage(g, tmu::Stage::Eval, "evaluation reports ready");
    if (c_sweep->parsed()) {
      tmu::ExperimentConfig cfg = resolve(g);
      const std::vector<int> sizes = sweep_sizes.empty() ? cfg.sweep_sizes : sweep_sizes;
      if (sizes.empty())
        throw std::invalid_argument("sweep: pass --sizes or set [sweep] sizes in the config");
      const tmu::SweepResult res = tmu::sweep_forget_size(cfg, sizes);
      std::cout << "sweep complete -> " << cfg.out_dir << "/sweep.csv\n";
      for (const auto& row : res.aggregate)
        std::cout << "size " << row.size << " method " << row.method << ": mean delta "
                  << row.mean_delta << " (over " << row.runs << " runs)\n";
      return 0;
    }
    if (c_report->parsed()) {
      if (list_tables) {
        for (const auto& id : tmu::reference::table_ids()) std::cout << id << "\n";
        return 0;
      }
      const tmu::ExperimentConfig cfg = resolve(g);
      if (!diff_table.empty()) {
        std::cout << tmu::diff_against_reference(diff_table, cfg.out_dir);
        return 0;
      }
      tmu::emit_report(cfg.out_dir);
      std::cout << "report written -> " << cfg.out_dir << "/report.md, report.csv, *.svg\n";
      return 0;
    }
  } catch (const tmu::StageError& e) {
    std::cerr << "failed at stage '" << e.stage() << "': " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
