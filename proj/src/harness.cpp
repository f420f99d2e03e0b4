#include "tmu/harness.hpp"

#include "tmu/features.hpp"
#include "tmu/twin.hpp"

#include <json.hpp>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

using nlohmann::json;
namespace fs = std::filesystem;

namespace tmu {

namespace {

// Revision salts mixed into stage fingerprints: the pipeline salt roots every
// stage, the unlearn salt only the unlearning/eval stages. Bumped when a
// stage's semantics change so caches from older binaries are recomputed.
constexpr const char* kPipelineRevision = "r3";
constexpr const char* kUnlearnRevision = "u2";

using clock_t_ = std::chrono::steady_clock;

double seconds_since(clock_t_::time_point t0) {
  return std::chrono::duration<double>(clock_t_::now() - t0).count();
}

// Per-directory stage ledger: stage -> {fingerprint, outputs, status}.
class Manifest {
 public:
  explicit Manifest(std::string path) : path_(std::move(path)) {
    std::ifstream in(path_);
    if (in) data_ = json::parse(in, nullptr, /*allow_exceptions=*/false);
    if (!data_.is_object()) data_ = json::object();
  }

  bool fresh(const std::string& key, const std::string& fp,
             const std::vector<std::string>& outputs) const {
    if (!data_.contains(key)) return false;
    const auto& rec = data_.at(key);
    if (rec.value("fingerprint", "") != fp || rec.value("status", "") != "ok") return false;
    for (const auto& o : outputs)
      if (!fs::exists(o)) return false;
    return true;
  }

  void record(const std::string& key, const std::string& fp,
              const std::vector<std::string>& outputs, double seconds,
              const std::string& status, const std::string& error = "") {
    json rec;
    rec["fingerprint"] = fp;
    rec["outputs"] = outputs;
    rec["seconds"] = seconds;
    rec["status"] = status;
    if (!error.empty()) rec["error"] = error;
    data_[key] = rec;
    save();
  }

  double seconds(const std::string& key) const {
    return data_.contains(key) ? data_.at(key).value("seconds", 0.0) : 0.0;
  }

 private:
  void save() const {
    std::ofstream out(path_);
    if (!out) throw std::runtime_error("cannot write manifest: " + path_);
    out << data_.dump(2) << "\n";
  }
  std::string path_;
  json data_;
};

// Runs compute+save unless the manifest already has this fingerprint with
// outputs on disk, in which case load() is used. Records failures.
template <typename T>
T stage(Manifest& man, const std::string& stage_name, const std::string& key,
        const std::string& fp, const std::vector<std::string>& outputs,
        const std::function<T()>& load, const std::function<T()>& compute_and_save) {
  if (man.fresh(key, fp, outputs)) {
    try {
      return load();
    } catch (const std::exception& e) {
      std::cerr << "[harness] cached " << key << " unreadable (" << e.what()
                << "); recomputing\n";
    }
  }
  const auto t0 = clock_t_::now();
  try {
    T value = compute_and_save();
    man.record(key, fp, outputs, seconds_since(t0), "ok");
    return value;
  } catch (const std::exception& e) {
    man.record(key, fp, outputs, seconds_since(t0), "failed", e.what());
    throw StageError(stage_name, e.what());
  }
}

std::string chain(std::initializer_list<std::string> parts) {
  ContentHash h;
  for (const auto& p : parts) {
    h.update(p);
    h.update("|", 1);
  }
  return h.hex();
}

struct RunContext {
  const ExperimentConfig* cfg;
  const DatasetPair* data;
  std::string dataset_fp;
  const TrainedModel* original;
  std::string original_fp;
  int forget_class;
  uint64_t seed;
  std::string run_dir;
};

TrainConfig seeded(TrainConfig t, uint64_t seed) {
  t.seed = seed;
  return t;
}

std::string original_path(const ExperimentConfig& cfg, uint64_t seed) {
  return (fs::path(cfg.out_dir) / "models" / ("original_seed" + std::to_string(seed) + ".ckpt"))
      .string();
}

TrainedModel train_original(const ExperimentConfig& cfg, const DatasetPair& data,
                            const std::string& dataset_fp, uint64_t seed, Manifest& man) {
  const std::string path = original_path(cfg, seed);
  const TrainConfig tc = seeded(cfg.train, mix_seed(seed, "original-train"));
  const std::string fp =
      chain({dataset_fp, cfg.arch, tc.summary(), std::to_string(seed), "original"});
  return stage<TrainedModel>(
      man, "train", "original_seed" + std::to_string(seed), fp, {path},
      [&] { return load_checkpoint(path); },
      [&] {
        const InputShape shape{data.train.height, data.train.width, data.train.channels};
        TrainedModel init =
            build_model(cfg.arch, shape, data.train.num_classes, mix_seed(seed, "original-init"));
        TrainedModel m = train(init, data.train, tc);
        save_checkpoint(m, path);
        return m;
      });
}

struct RunArtifacts {
  DataSplit split;
  std::string split_fp;
  std::optional<TrainedModel> gold;
  std::string gold_fp;
};

DataSplit stage_split(const RunContext& rc, Manifest& man, std::string& fp_out) {
  const auto& cfg = *rc.cfg;
  const uint64_t split_seed = mix_seed(rc.seed, "split-" + std::to_string(rc.forget_class));
  const std::string path = rc.run_dir + "/split.json";
  const std::string fp = chain({rc.dataset_fp, std::to_string(rc.forget_class),
                                std::to_string(cfg.n_forget), std::to_string(split_seed)});
  fp_out = fp;
  return stage<DataSplit>(
      man, "split", "split", fp, {path},
      [&] { return load_split_manifest(rc.data->train, path, &rc.data->test); },
      [&] {
        DataSplit s = make_removal_split(rc.data->train, rc.forget_class, cfg.n_forget,
                                         split_seed, &rc.data->test);
        save_split_manifest(s, path);
        return s;
      });
}

std::optional<TrainedModel> stage_gold(const RunContext& rc, const DataSplit& split,
                                       const std::string& split_fp, Manifest& man,
                                       std::string& fp_out) {
  const auto& cfg = *rc.cfg;
  const std::string path = rc.run_dir + "/gold.ckpt";
  if (cfg.gold_policy == GoldPolicy::Skip) {
    fp_out = "gold-skipped";
    return std::nullopt;
  }
  if (cfg.gold_policy == GoldPolicy::Load) {
    if (!fs::exists(path))
      throw StageError("gold", "gold_model=load but no checkpoint at " + path);
    TrainedModel g = load_checkpoint(path);
    fp_out = model_content_hash(g);
    return g;
  }
  // The gold model retrains from the original's initialization: with an
  // independent init the representations land in a different basin and the
  // activation distance measures basin misalignment instead of method
  // behavior.
  const TrainConfig tc = seeded(cfg.train, mix_seed(rc.seed, "gold-train"));
  const uint64_t init_seed = mix_seed(rc.seed, "original-init");
  const std::string fp =
      chain({split_fp, cfg.arch, tc.summary(), std::to_string(init_seed), "gold"});
  fp_out = fp;
  return stage<TrainedModel>(
      man, "gold", "gold", fp, {path}, [&] { return load_checkpoint(path); },
      [&] {
        const InputShape shape{split.remain.height, split.remain.width, split.remain.channels};
        TrainedModel init =
            build_model(cfg.arch, shape, split.remain.num_classes, init_seed);
        TrainedModel g = train(init, split.remain, tc);
        save_checkpoint(g, path);
        return g;
      });
}

TwinProblem stage_twin(const RunContext& rc, const DataSplit& split,
                       const std::string& split_fp, Manifest& man, std::string& fp_out) {
  const auto& cfg = *rc.cfg;
  const uint64_t twin_seed = mix_seed(rc.seed, "twin-" + std::to_string(rc.forget_class));
  const std::string dir = rc.run_dir + "/twin";
  const std::string fp =
      chain({rc.original_fp, split_fp, cfg.twin_ft.summary(),
             std::to_string(cfg.twin_replay_mix), std::to_string(twin_seed), "twin"});
  fp_out = fp;
  return stage<TwinProblem>(
      man, "twin", "twin", fp,
      {dir + "/twin_model.ckpt", dir + "/twin_manifest.json"},
      [&] { return load_twin(dir, rc.data->test, *rc.original); },
      [&] {
        TwinProblem t = construct_twin(*rc.original, rc.data->test, split, cfg.twin_ft,
                                       twin_seed, cfg.twin_replay_mix);
        save_twin(t, dir);
        return t;
      });
}

TrainedModel stage_curriculum(const RunContext& rc, const DataSplit& split,
                              const TwinProblem& twin, const std::string& twin_fp,
                              Manifest& man, std::string& fp_out) {
  const auto& cfg = *rc.cfg;
  const uint64_t cur_seed = mix_seed(rc.seed, "curriculum-" + std::to_string(rc.forget_class));
  const std::string path = rc.run_dir + "/curriculum.ckpt";
  const std::string fp =
      chain({twin_fp, cfg.arch, std::to_string(cfg.curriculum_epochs),
             std::to_string(cfg.curriculum_fraction), std::to_string(cur_seed), "curriculum"});
  fp_out = fp;
  return stage<TrainedModel>(
      man, "features", "curriculum", fp, {path}, [&] { return load_checkpoint(path); },
      [&] {
        const InputShape shape{split.remain.height, split.remain.width, split.remain.channels};
        TrainedModel m =
            train_curriculum_model(split, twin.twin_forget, cfg.arch, shape, cur_seed,
                                   cfg.curriculum_epochs, cfg.curriculum_fraction);
        save_checkpoint(m, path);
        return m;
      });
}

FeatureMatrix stage_twin_features(const RunContext& rc, const DataSplit& split,
                                  const TwinProblem& twin, const TrainedModel& curriculum,
                                  const std::string& twin_fp, const std::string& cur_fp,
                                  Manifest& man, std::string& fp_out) {
  const auto& cfg = *rc.cfg;
  const std::string path = rc.run_dir + "/features_twin.txt";
  const std::string fp = chain({twin_fp, cur_fp, cfg.attack.summary(), "twin-features"});
  fp_out = fp;
  return stage<FeatureMatrix>(
      man, "features", "features_twin", fp, {path, path + ".stats"},
      [&] { return load_feature_matrix(path); },
      [&] {
        const LabeledDataset reference = concat(split.remain, split.forget);
        FeatureContext ctx{&twin.twin_model, &curriculum, &reference, cfg.attack};
        FeatureMatrix fm = extract_feature_matrix(twin.twin_forget, ctx, nullptr);
        for (const auto& l : label_generalization(twin.gold_model, twin.twin_forget))
          fm.label(l.sample_index) = l.easy ? 1 : 0;
        save_feature_matrix(fm, path);
        return fm;
      });
}

FeatureMatrix stage_transfer_features(const RunContext& rc, const DataSplit& split,
                                      const TrainedModel& curriculum,
                                      const FeatureMatrix& twin_features,
                                      const std::string& twin_features_fp,
                                      const std::string& cur_fp, Manifest& man,
                                      std::string& fp_out) {
  const auto& cfg = *rc.cfg;
  const std::string path = rc.run_dir + "/features_transfer.txt";
  const std::string fp =
      chain({rc.original_fp, cur_fp, cfg.attack.summary(), twin_features_fp, "transfer"});
  fp_out = fp;
  return stage<FeatureMatrix>(
      man, "features", "features_transfer", fp, {path, path + ".stats"},
      [&] { return load_feature_matrix(path); },
      [&] {
        FeatureContext ctx{rc.original, &curriculum, &split.remain, cfg.attack};
        FeatureMatrix fm = extract_feature_matrix(split.forget, ctx, &twin_features.stats);
        save_feature_matrix(fm, path);
        return fm;
      });
}

GenLabelPredictor stage_predictor(const RunContext& rc, const FeatureMatrix& twin_features,
                                  const std::string& twin_features_fp, Manifest& man,
                                  std::string& fp_out) {
  const auto& cfg = *rc.cfg;
  PredictorConfig pcfg = cfg.predictor;
  pcfg.seed = mix_seed(rc.seed, "predictor-" + std::to_string(rc.forget_class));
  const std::string path = rc.run_dir + "/predictor.json";
  const std::string fp = chain({twin_features_fp, pcfg.summary(), "predictor-v2"});
  fp_out = fp;
  return stage<GenLabelPredictor>(
      man, "predict", "predictor", fp, {path},
      [&] { return GenLabelPredictor::load(path); },
      [&] {
        GenLabelPredictor p = train_predictor(twin_features, pcfg);
        p.save(path);
        return p;
      });
}

void save_partition(const DataSplit& split, const ForgetPartition& part,
                    const LabelPrediction& pred, const std::string& path) {
  json j;
  std::vector<int> easy_ids, hard_ids;
  for (int r : part.easy) easy_ids.push_back(split.forget.index(r));
  for (int r : part.hard) hard_ids.push_back(split.forget.index(r));
  j["easy_ids"] = easy_ids;
  j["hard_ids"] = hard_ids;
  std::vector<double> probs(pred.probability.data(),
                            pred.probability.data() + pred.probability.size());
  j["probability_easy"] = probs;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write partition: " + path);
  out << j.dump(2) << "\n";
}

void run_one(const RunContext& rc, Stage stop_after, std::vector<UnlearnReport>* reports_out) {
  const auto& cfg = *rc.cfg;
  fs::create_directories(rc.run_dir);
  Manifest man(rc.run_dir + "/manifest.json");

  std::string split_fp;
  const DataSplit split = stage_split(rc, man, split_fp);

  std::string gold_fp;
  std::optional<TrainedModel> gold;
  if (stop_after >= Stage::Gold) gold = stage_gold(rc, split, split_fp, man, gold_fp);
  if (stop_after <= Stage::Gold) return;

  const bool needs_tmu_pipeline =
      std::find(cfg.methods.begin(), cfg.methods.end(), "tmu") != cfg.methods.end();
  const bool pipeline_only = stop_after < Stage::Unlearn;  // twin/features/predict commands

  std::optional<TwinProblem> twin;
  std::optional<TrainedModel> curriculum;
  std::optional<FeatureMatrix> twin_features, transfer_features;
  std::optional<GenLabelPredictor> predictor;
  std::optional<ForgetPartition> partition;
  std::string twin_fp, cur_fp, twin_features_fp, transfer_fp, predictor_fp, partition_fp;

  if (needs_tmu_pipeline || pipeline_only) {
    twin = stage_twin(rc, split, split_fp, man, twin_fp);
    if (stop_after <= Stage::Twin) return;

    curriculum = stage_curriculum(rc, split, *twin, twin_fp, man, cur_fp);
    twin_features = stage_twin_features(rc, split, *twin, *curriculum, twin_fp, cur_fp, man,
                                        twin_features_fp);
    transfer_features = stage_transfer_features(rc, split, *curriculum, *twin_features,
                                                twin_features_fp, cur_fp, man, transfer_fp);
    if (stop_after <= Stage::Features) return;

    predictor = stage_predictor(rc, *twin_features, twin_features_fp, man, predictor_fp);
    partition_fp = chain({predictor_fp, transfer_fp, "partition"});
    const std::string part_path = rc.run_dir + "/partition.json";
    partition = stage<ForgetPartition>(
        man, "predict", "partition", partition_fp, {part_path},
        [&] {
          std::ifstream in(part_path);
          json j = json::parse(in);
          ForgetPartition p;
          std::map<int, int> id_to_row;
          for (int i = 0; i < split.forget.size(); ++i) id_to_row[split.forget.index(i)] = i;
          for (int id : j.at("easy_ids").get<std::vector<int>>())
            p.easy.push_back(id_to_row.at(id));
          for (int id : j.at("hard_ids").get<std::vector<int>>())
            p.hard.push_back(id_to_row.at(id));
          return p;
        },
        [&] {
          const LabelPrediction pred = predict_labels(*predictor, *transfer_features);
          ForgetPartition p = partition_forget_set(split, pred);
          save_partition(split, p, pred, part_path);
          return p;
        });
    if (stop_after <= Stage::Predict) return;
  }

  // the gold model gets its own report row (the reference column in tables)
  if (gold && stop_after >= Stage::Eval) {
    const std::string gold_report_path = rc.run_dir + "/report_gold.json";
    const std::string gfp = chain({gold_fp, "gold-report"});
    (void)stage<UnlearnReport>(
        man, "eval", "report_gold", gfp, {gold_report_path},
        [&] { return load_report(gold_report_path); },
        [&] {
          EvalInputs extras;
          extras.method = "gold";
          extras.wall_clock_seconds = man.seconds("gold");
          extras.config_fingerprint = gold_fp;
          UnlearnReport r = evaluate_run(*gold, nullptr, split, extras);
          save_report(r, gold_report_path);
          return r;
        });
  }

  for (const auto& method : cfg.methods) {
    UnlearnConfig ucfg = cfg.unlearn_for(method);
    ucfg.seed = mix_seed(rc.seed, "unlearn-" + method + "-" + std::to_string(rc.forget_class));
    const std::string ckpt = rc.run_dir + "/unlearned_" + method + ".ckpt";
    const std::string log_path = rc.run_dir + "/log_" + method + ".txt";
    std::string ufp =
        chain({kUnlearnRevision, rc.original_fp, split_fp, ucfg.summary(), method});
    if (method == "tmu")
      ufp = chain({ufp, twin_fp, predictor_fp, transfer_fp,
                   std::to_string(cfg.curriculum_epochs),
                   std::to_string(cfg.curriculum_fraction)});

    std::optional<int> n_easy, n_hard;
    if (method == "tmu" && partition) {
      n_easy = static_cast<int>(partition->easy.size());
      n_hard = static_cast<int>(partition->hard.size());
    }

    const TrainedModel unlearned = stage<TrainedModel>(
        man, "unlearn", "unlearn_" + method, ufp, {ckpt},
        [&] { return load_checkpoint(ckpt); },
        [&] {
          std::vector<std::string> log;
          ucfg.epoch_log = &log;
          TrainedModel m = [&] {
            switch (ucfg.method) {
              case UnlearnMethod::Finetune: return unlearn_finetune(*rc.original, split, ucfg);
              case UnlearnMethod::NegGrad:
                return unlearn_negative_gradient(*rc.original, split, split.forget, ucfg);
              case UnlearnMethod::RandLabel:
                return unlearn_random_label(*rc.original, split, split.forget, ucfg);
              case UnlearnMethod::BadTeacher:
                return unlearn_bad_teacher(*rc.original, split, split.forget, ucfg);
              case UnlearnMethod::Fisher: return unlearn_fisher(*rc.original, split, ucfg);
              case UnlearnMethod::Tmu: {
                TmuPipelineConfig pipe;
                pipe.attack = cfg.attack;
                pipe.predictor = cfg.predictor;
                pipe.curriculum_epochs = cfg.curriculum_epochs;
                pipe.curriculum_fraction = cfg.curriculum_fraction;
                TmuPrecomputed pre;
                pre.twin_features = &*twin_features;
                pre.predictor = &*predictor;
                pre.transfer_features = &*transfer_features;
                pre.curriculum_model = &*curriculum;
                TmuResult res = unlearn_tmu(*rc.original, split, *twin, ucfg, pipe, &pre);
                return res.model;
              }
            }
            throw std::logic_error("unreachable");
          }();
          std::ofstream lf(log_path);
          for (const auto& row : log) lf << row << "\n";
          save_checkpoint(m, ckpt);
          return m;
        });

    if (stop_after <= Stage::Unlearn) continue;

    const std::string report_path = rc.run_dir + "/report_" + method + ".json";
    const std::string rfp = chain({ufp, gold ? gold_fp : "nogold", "report"});
    const UnlearnReport report = stage<UnlearnReport>(
        man, "eval", "report_" + method, rfp, {report_path},
        [&] { return load_report(report_path); },
        [&] {
          EvalInputs extras;
          extras.method = method;
          extras.n_easy = n_easy;
          extras.n_hard = n_hard;
          extras.wall_clock_seconds = man.seconds("unlearn_" + method);
          extras.config_fingerprint = ufp;
          UnlearnReport r = evaluate_run(unlearned, gold ? &*gold : nullptr, split, extras);
          save_report(r, report_path);
          return r;
        });
    if (reports_out) reports_out->push_back(report);
  }
}

std::vector<std::pair<int, uint64_t>> job_list(const ExperimentConfig& cfg) {
  std::vector<std::pair<int, uint64_t>> jobs;
  for (int k : cfg.forget_classes)
    for (uint64_t s : cfg.seeds) jobs.emplace_back(k, s);
  return jobs;
}

std::string run_dir_for(const ExperimentConfig& cfg, int k, uint64_t s) {
  return (fs::path(cfg.out_dir) /
          ("class" + std::to_string(k) + "_seed" + std::to_string(s)))
      .string();
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, Stage stop_after) {
  cfg.validate();
  fs::create_directories(fs::path(cfg.out_dir) / "models");
  {
    std::ofstream echo(fs::path(cfg.out_dir) / "config.ini");
    echo << render_config(cfg);
  }

  DatasetPair data = [&] {
    try {
      return load_dataset(cfg.dataset, cfg.dataset_root);
    } catch (const std::exception& e) {
      throw StageError("train", e.what());
    }
  }();
  const std::string dataset_fp = chain(
      {kPipelineRevision, dataset_fingerprint(data.train), dataset_fingerprint(data.test)});

  Manifest top((fs::path(cfg.out_dir) / "manifest.json").string());
  std::map<uint64_t, TrainedModel> originals;
  for (uint64_t s : cfg.seeds)
    originals.emplace(s, train_original(cfg, data, dataset_fp, s, top));

  ExperimentResult result;
  result.out_dir = cfg.out_dir;
  if (stop_after == Stage::Train) return result;

  const auto jobs = job_list(cfg);
  auto make_context = [&](const std::pair<int, uint64_t>& job) {
    RunContext rc;
    rc.cfg = &cfg;
    rc.data = &data;
    rc.dataset_fp = dataset_fp;
    rc.original = &originals.at(job.second);
    rc.original_fp = model_content_hash(*rc.original);
    rc.forget_class = job.first;
    rc.seed = job.second;
    rc.run_dir = run_dir_for(cfg, job.first, job.second);
    return rc;
  };

  if (cfg.workers <= 1 || jobs.size() <= 1) {
    for (const auto& job : jobs) {
      RunContext rc = make_context(job);
      RunResult rr;
      rr.forget_class = job.first;
      rr.seed = job.second;
      rr.run_dir = rc.run_dir;
      run_one(rc, stop_after, &rr.reports);
      result.runs.push_back(std::move(rr));
    }
    return result;
  }

  // parallel isolated processes over (class, seed) jobs
  const int workers = std::min<int>(cfg.workers, static_cast<int>(jobs.size()));
  std::vector<pid_t> pids;
  for (int w = 0; w < workers; ++w) {
    const pid_t pid = fork();
    if (pid < 0) throw StageError("harness", "fork failed");
    if (pid == 0) {
      int rcode = 0;
      for (size_t j = static_cast<size_t>(w); j < jobs.size(); j += static_cast<size_t>(workers)) {
        try {
          run_one(make_context(jobs[j]), stop_after, nullptr);
        } catch (const std::exception& e) {
          std::cerr << "[worker " << w << "] " << e.what() << "\n";
          rcode = 1;
        }
      }
      _exit(rcode);
    }
    pids.push_back(pid);
  }
  bool failed = false;
  for (pid_t pid : pids) {
    int status = 0;
    waitpid(pid, &status, 0);
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) failed = true;
  }
  if (failed) throw StageError("harness", "one or more worker processes failed");

  // collect reports persisted by the workers
  for (const auto& job : jobs) {
    RunResult rr;
    rr.forget_class = job.first;
    rr.seed = job.second;
    rr.run_dir = run_dir_for(cfg, job.first, job.second);
    if (stop_after >= Stage::Eval) {
      for (const auto& method : cfg.methods) {
        const std::string path = rr.run_dir + "/report_" + method + ".json";
        if (fs::exists(path)) rr.reports.push_back(load_report(path));
      }
    }
    result.runs.push_back(std::move(rr));
  }
  return result;
}

SweepResult sweep_forget_size(const ExperimentConfig& cfg, const std::vector<int>& sizes) {
  if (sizes.empty()) throw std::invalid_argument("sweep: no sizes");
  if (!std::is_sorted(sizes.begin(), sizes.end()))
    throw std::invalid_argument("sweep: sizes must be ascending");

  SweepResult sweep;
  sweep.sizes = sizes;
  for (int size : sizes) {
    ExperimentConfig sub = cfg;
    sub.n_forget = size;
    sub.out_dir = (fs::path(cfg.out_dir) / ("size_" + std::to_string(size))).string();
    const ExperimentResult res = run_experiment(sub, Stage::Eval);

    std::map<std::string, SweepRow> rows;
    for (const auto& run : res.runs) {
      for (const auto& r : run.reports) {
        sweep.reports.push_back(r);
        auto& row = rows[r.method];
        row.size = size;
        row.method = r.method;
        row.runs += 1;
        row.mean_acc_test += r.acc_test;
        row.mean_acc_forget += r.acc_forget;
        row.mean_delta += r.delta.value_or(0.0);
      }
    }
    for (auto& [method, row] : rows) {
      row.mean_acc_test /= row.runs;
      row.mean_acc_forget /= row.runs;
      row.mean_delta /= row.runs;
      sweep.aggregate.push_back(row);
    }
  }

  std::ofstream csv(fs::path(cfg.out_dir) / "sweep.csv");
  if (!csv) throw std::runtime_error("cannot write sweep.csv under " + cfg.out_dir);
  csv << "size,method,runs,mean_acc_test,mean_acc_forget,mean_delta\n";
  for (const auto& row : sweep.aggregate) {
    char buf[200];
    std::snprintf(buf, sizeof(buf), "%d,%s,%d,%.17g,%.17g,%.17g\n", row.size,
                  row.method.c_str(), row.runs, row.mean_acc_test, row.mean_acc_forget,
                  row.mean_delta);
    csv << buf;
  }
  return sweep;
}

}  // namespace tmu
