// Acceptance suite: drives the full pipeline on the deterministic synthetic
// benchmark fixture and checks every exit criterion at its stated tolerance,
// printing one PASS/FAIL line per criterion. CIFAR-scale runs use the same
// code paths via the desk/paper profiles when the dataset files are present.

#include "tmu/features.hpp"
#include "tmu/harness.hpp"
#include "tmu/paper_reference.hpp"
#include "tmu/twin.hpp"
#include "tmu/unlearn.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

using namespace tmu;
namespace fs = std::filesystem;

namespace {

const char* kFixtureDataset =
    "synthetic-image:classes=10,hw=16,train=6000,test=1600,noise=0.19,ambig=0.3,"
    "mixlo=0.32,mixhi=0.62,seed=7";

fs::path acceptance_root() {
  const auto p = fs::temp_directory_path() / "tmu_acceptance";
  fs::create_directories(p);
  return p;
}

std::string fixture_config(const std::string& out_dir, const std::string& classes,
                           const std::string& seeds, const std::string& methods,
                           int n_forget, const std::string& gold) {
  return std::string("[experiment]\n") + "name = acceptance\ndataset = " + kFixtureDataset +
         "\narch = mlp\nforget_classes = " + classes + "\nn_forget = " +
         std::to_string(n_forget) + "\nseeds = " + seeds + "\nmethods = " + methods +
         "\ngold_model = " + gold + "\nout = " + out_dir + R"(

[train]
epochs = 40
learning_rate = 0.01
lr_milestones = 20,30
batch_size = 64

[twin]
epochs = 12
learning_rate = 0.01
lr_milestones =
batch_size = 32

[attack]
epsilon = 0.015686274509803921

[predictor]
epochs = 300
threshold_policy = match-prior

[unlearn]
epochs = 40
learning_rate = 0.005
retain_replay_fraction = 0.3
neggrad_target_forget_acc = 5

[unlearn.finetune]
epochs = 2
learning_rate = 0.002

[unlearn.randlabel]
epochs = 100
learning_rate = 0.02

[unlearn.badteacher]
epochs = 8
learning_rate = 0.0075
retain_replay_fraction = 0.8

[unlearn.tmu]
tmu_inner_method = randlabel
epochs = 30
learning_rate = 0.01
)";
}

struct MethodStats {
  int n = 0;
  double acc_test = 0, acc_forget = 0, delta = 0, act = 0;
  void add(const UnlearnReport& r) {
    ++n;
    acc_test += r.acc_test;
    acc_forget += r.acc_forget;
    delta += r.delta.value_or(0.0);
    act += r.activation_distance.value_or(0.0);
  }
  double mean_test() const { return acc_test / n; }
  double mean_forget() const { return acc_forget / n; }
  double mean_delta() const { return delta / n; }
  double mean_act() const { return act / n; }
};

void verdict(int criterion, bool pass, const std::string& detail) {
  std::cout << "[ACCEPTANCE] criterion " << criterion << ": " << (pass ? "PASS" : "FAIL")
            << " — " << detail << "\n"
            << std::flush;
}

std::string f1(double v) {
  char b[32];
  std::snprintf(b, sizeof(b), "%.1f", v);
  return b;
}

const ExperimentResult& main_matrix() {
  static const ExperimentResult res = [] {
    const std::string out = (acceptance_root() / "main").string();
    const ExperimentConfig cfg = parse_config_text(
        fixture_config(out, "0,1,2", "11,12,13", "finetune,neggrad,randlabel,badteacher,tmu",
                       100, "train"),
        profile_config("desk"));
    return run_experiment(cfg);
  }();
  return res;
}

std::map<std::string, MethodStats> stats_by_method(const ExperimentResult& res) {
  std::map<std::string, MethodStats> by;
  for (const auto& run : res.runs)
    for (const auto& r : run.reports) by[r.method].add(r);
  return by;
}

}  // namespace

TEST_CASE("criterion 1: baseline sanity over 3 classes x 3 seeds") {
  const auto by = stats_by_method(main_matrix());
  REQUIRE(by.count("finetune"));
  REQUIRE(by.count("randlabel"));
  const double ft_df = by.at("finetune").mean_forget();
  const double rl_df = by.at("randlabel").mean_forget();
  const bool pass = ft_df >= 95.0 && rl_df <= 5.0;
  verdict(1, pass, "finetune ACC_Df " + f1(ft_df) + " (>= 95), randlabel ACC_Df " +
                       f1(rl_df) + " (<= 5), 9 runs each");
  CHECK(ft_df >= 95.0);
  CHECK(rl_df <= 5.0);
}

TEST_CASE("criterion 2: alignment ordering tmu < badteacher < neggrad") {
  const auto by = stats_by_method(main_matrix());
  const double d_tmu = by.at("tmu").mean_delta();
  const double d_bt = by.at("badteacher").mean_delta();
  const double d_ng = by.at("neggrad").mean_delta();
  const bool pass = d_tmu < d_bt && d_bt < d_ng && d_tmu <= 10.0;
  verdict(2, pass, "mean delta: tmu " + f1(d_tmu) + " < badteacher " + f1(d_bt) +
                       " < neggrad " + f1(d_ng) + ", tmu <= 10");
  CHECK(d_tmu < d_bt);
  CHECK(d_bt < d_ng);
  CHECK(d_tmu <= 10.0);
}

TEST_CASE("criterion 3: tmu preserves test utility within 2 points of the original") {
  const auto& res = main_matrix();
  const auto by = stats_by_method(res);

  // original models' test accuracy, averaged over the three seeds
  const DatasetPair data = load_dataset(kFixtureDataset, "");
  double orig_test = 0;
  int n = 0;
  for (const char* s : {"11", "12", "13"}) {
    const TrainedModel m = load_checkpoint(
        (fs::path(res.out_dir) / "models" / (std::string("original_seed") + s + ".ckpt"))
            .string());
    orig_test += accuracy(m, data.test);
    ++n;
  }
  orig_test /= n;
  const double tmu_test = by.at("tmu").mean_test();
  const double gap = std::abs(tmu_test - orig_test);
  const bool pass = gap <= 2.0;
  verdict(3, pass, "original ACC_Dtest " + f1(orig_test) + ", tmu " + f1(tmu_test) +
                       ", gap " + f1(gap) + " (<= 2)");
  CHECK(gap <= 2.0);
}

TEST_CASE("criterion 4: predictor quality and feature ablation") {
  const auto& res = main_matrix();

  // pooled held-out accuracy and class-prior baseline per class (over seeds)
  std::map<int, double> correct_n, total_n, prior_n;
  for (const auto& run : res.runs) {
    std::ifstream in(fs::path(run.run_dir) / "predictor.json");
    REQUIRE(in.good());
    const nlohmann::json j = nlohmann::json::parse(in);
    const double acc = j.at("heldout_accuracy").get<double>();
    const double prior = j.at("heldout_prior").get<double>();
    const int size = j.at("heldout_size").get<int>();
    correct_n[run.forget_class] += acc / 100.0 * size;
    prior_n[run.forget_class] += prior / 100.0 * size;
    total_n[run.forget_class] += size;
  }
  bool pass_quality = true;
  std::string detail;
  for (const auto& [cls, total] : total_n) {
    const double acc = 100.0 * correct_n[cls] / total;
    const double prior = 100.0 * prior_n[cls] / total;
    if (!(acc >= 70.0 && acc >= prior)) pass_quality = false;
    detail += "class " + std::to_string(cls) + ": heldout " + f1(acc) + " vs prior " +
              f1(prior) + "; ";
    CHECK(acc >= 70.0);
    CHECK(acc >= prior);
  }

  // ablation: joint features within 2 points of each single feature, on
  // average over the runs
  double joint = 0, nf = 0, af = 0, cf = 0;
  int n = 0;
  for (const auto& run : res.runs) {
    const FeatureMatrix fm =
        load_feature_matrix((fs::path(run.run_dir) / "features_twin.txt").string());
    for (uint64_t abl_seed = 1; abl_seed <= 3; ++abl_seed) {
      PredictorConfig pc;
      pc.epochs = 300;  // the profile's setting, so the comparison is apples to apples
      pc.seed = mix_seed(99 + abl_seed, run.run_dir);
      joint += train_predictor(fm, pc).heldout_accuracy();
      PredictorConfig p1 = pc;
      p1.use_af = p1.use_cf = false;
      nf += train_predictor(fm, p1).heldout_accuracy();
      PredictorConfig p2 = pc;
      p2.use_nf = p2.use_cf = false;
      af += train_predictor(fm, p2).heldout_accuracy();
      PredictorConfig p3 = pc;
      p3.use_nf = p3.use_af = false;
      cf += train_predictor(fm, p3).heldout_accuracy();
      ++n;
    }
  }
  joint /= n;
  nf /= n;
  af /= n;
  cf /= n;
  const bool pass_ablation =
      joint >= nf - 2.0 && joint >= af - 2.0 && joint >= cf - 2.0;
  verdict(4, pass_quality && pass_ablation,
          detail + "ablation joint " + f1(joint) + " vs nf " + f1(nf) + " af " + f1(af) +
              " cf " + f1(cf));
  CHECK(joint >= nf - 2.0);
  CHECK(joint >= af - 2.0);
  CHECK(joint >= cf - 2.0);

  // end-to-end transfer property: the predicted easy fraction of the forget
  // set tracks the gold model's accuracy there within 10 points
  for (const auto& run : res.runs) {
    for (const auto& r : run.reports) {
      if (r.method != "tmu") continue;
      REQUIRE(r.n_easy.has_value());
      REQUIRE(r.gold_acc_forget.has_value());
      const double frac = 100.0 * *r.n_easy / (*r.n_easy + *r.n_hard);
      CHECK(std::abs(frac - *r.gold_acc_forget) <= 10.0);
    }
  }
}

TEST_CASE("criterion 5: activation-distance ordering over all 10 fixture classes") {
  const std::string out = (acceptance_root() / "c5").string();
  const ExperimentConfig cfg = parse_config_text(
      fixture_config(out, "0,1,2,3,4,5,6,7,8,9", "11", "randlabel,badteacher,tmu", 100,
                     "train"),
      profile_config("desk"));
  const ExperimentResult res = run_experiment(cfg);

  int tmu_le_rl = 0, tmu_le_bt = 0, classes = 0;
  for (const auto& run : res.runs) {
    std::map<std::string, double> act;
    for (const auto& r : run.reports) {
      REQUIRE(r.activation_distance.has_value());
      act[r.method] = *r.activation_distance;
    }
    ++classes;
    if (act.at("tmu") <= act.at("randlabel")) ++tmu_le_rl;
    if (act.at("tmu") <= act.at("badteacher")) ++tmu_le_bt;
  }
  const bool pass = tmu_le_rl == classes && tmu_le_bt >= 7;
  verdict(5, pass, "tmu <= randlabel on " + std::to_string(tmu_le_rl) + "/10 classes, tmu <= badteacher on " +
                       std::to_string(tmu_le_bt) + "/10 (need 10 and >= 7)");
  CHECK(tmu_le_rl == classes);
  CHECK(tmu_le_bt >= 7);
}

TEST_CASE("criterion 6: parameter-noise scrubbing is catastrophic, nothing else is") {
  const std::string out = (acceptance_root() / "c6").string();
  std::string text = fixture_config(out, "0", "11",
                                    "finetune,neggrad,randlabel,badteacher,fisher,tmu", 100,
                                    "skip");
  // the resnet run uses a reduced training set to keep the desk budget
  const std::string small_dataset =
      "synthetic-image:classes=10,hw=16,train=2500,test=1000,noise=0.19,ambig=0.3,"
      "mixlo=0.32,mixhi=0.62,seed=7";
  text.replace(text.find(kFixtureDataset), std::string(kFixtureDataset).size(),
               small_dataset);
  ExperimentConfig cfg = parse_config_text(text, profile_config("desk"));
  cfg.arch = "resnet18-small";
  cfg.train.epochs = 12;
  cfg.train.learning_rate = Scalar(0.05);
  cfg.train.lr_milestones = {8};
  const ExperimentResult res = run_experiment(cfg);

  REQUIRE(res.runs.size() == 1);
  std::map<std::string, double> acc_test;
  for (const auto& r : res.runs[0].reports) acc_test[r.method] = r.acc_test;
  REQUIRE(acc_test.size() == 6);
  bool pass = acc_test.at("fisher") < 30.0;
  std::string detail = "fisher ACC_Dtest " + f1(acc_test.at("fisher")) + " (< 30); others:";
  for (const auto& [m, acc] : acc_test) {
    if (m == "fisher") continue;
    detail += " " + m + " " + f1(acc);
    if (acc <= 75.0) pass = false;
    CHECK(acc > 75.0);
  }
  verdict(6, pass, detail + " (> 75)");
  CHECK(acc_test.at("fisher") < 30.0);
}

TEST_CASE("criterion 7: size sweep keeps tmu bounded and below badteacher") {
  const std::string out = (acceptance_root() / "c7").string();
  const ExperimentConfig cfg = parse_config_text(
      fixture_config(out, "0,1,2", "11", "badteacher,tmu", 100, "train"),
      profile_config("desk"));
  const SweepResult sweep = sweep_forget_size(cfg, {100, 500});

  std::map<std::pair<int, std::string>, double> delta;
  for (const auto& row : sweep.aggregate) delta[{row.size, row.method}] = row.mean_delta;
  REQUIRE(delta.size() == 4);
  const double tmu100 = delta.at({100, "tmu"});
  const double tmu500 = delta.at({500, "tmu"});
  const double bt100 = delta.at({100, "badteacher"});
  const double bt500 = delta.at({500, "badteacher"});
  const bool pass =
      (tmu500 - tmu100) <= 6.0 && tmu100 < bt100 && tmu500 < bt500;
  verdict(7, pass, "tmu delta 100->" + f1(tmu100) + ", 500->" + f1(tmu500) +
                       " (growth <= 6); badteacher " + f1(bt100) + " / " + f1(bt500));
  CHECK(tmu500 - tmu100 <= 6.0);
  CHECK(tmu100 < bt100);
  CHECK(tmu500 < bt500);
}

TEST_CASE("criterion 8: property suites") {
  bool pass = true;

  // sizing slack invariant over 1000 random pairs
  {
    Rng rng(2024);
    std::uniform_int_distribution<long> forget_d(1, 5000);
    for (int t = 0; t < 1000; ++t) {
      const long nf = forget_d(rng);
      std::uniform_int_distribution<long> remain_d(nf, 100 * nf);
      const long nr = remain_d(rng);
      const TwinSizing s = twin_sizing(nr, nf);
      if (!(std::abs(s.ratio_twin - s.ratio_original) <= 1.0 / (nr + nf) + 1e-15))
        pass = false;
      CHECK(std::abs(s.ratio_twin - s.ratio_original) <= 1.0 / (nr + nf) + 1e-15);
    }
  }

  const DatasetPair gauss =
      load_dataset("synthetic-gauss:classes=4,dim=8,train=400,test=100,sigma=0.2,seed=3", "");
  const DataSplit split = make_removal_split(gauss.train, 1, 30, 5, &gauss.test);
  TrainConfig tc;
  tc.epochs = 10;
  tc.lr_milestones = {};
  tc.learning_rate = Scalar(0.05);
  const TrainedModel model =
      train(build_model("mlp", {1, 1, 8}, 4, 3), gauss.train, tc);

  // zero-budget attack equals the clean entropy
  {
    AttackConfig atk;
    atk.epsilon = 0.0;
    const Matrix x = split.forget.images.row(0);
    const double af = adversarial_feature(x, split.forget.labels(0), model, atk);
    const double h = entropy_nats(softmax_rows(model.logits(x)).row(0));
    if (std::abs(af - h) > 1e-6) pass = false;
    CHECK(af == doctest::Approx(h).epsilon(1e-6));
  }

  // uniform-logit curriculum loss equals ln K
  {
    TrainedModel uniform = build_model("mlp", {1, 1, 8}, 10, 2);
    auto params = uniform.net.params();
    params[params.size() - 2].value->setZero();
    params[params.size() - 1].value->setZero();
    const double cf =
        curriculum_loss_feature(Matrix::Constant(1, 8, Scalar(0.3)), 4, uniform);
    if (std::abs(cf - std::log(10.0)) > 1e-6) pass = false;
    CHECK(cf == doctest::Approx(std::log(10.0)).epsilon(1e-6));
  }

  // nearest-distance brute-force oracle on a 10-sample fixture
  {
    std::vector<int> rows;
    for (int i = 0; i < split.remain.size() && static_cast<int>(rows.size()) < 10; ++i)
      if (split.remain.labels(i) == 1) rows.push_back(i);
    const LabeledDataset ref = split.remain.take(rows);
    const Matrix x = split.forget.images.row(2);
    const Matrix ref_emb = model.embeddings(ref.images);
    const Matrix x_emb = model.embeddings(x);
    std::vector<double> d;
    for (int i = 0; i < ref.size(); ++i)
      d.push_back(std::sqrt(
          static_cast<double>((ref_emb.row(i) - x_emb.row(0)).squaredNorm())));
    std::sort(d.begin(), d.end());
    const double expect = (d[0] + d[1] + d[2] + d[3] + d[4]) / 5.0;
    const double got = nearest_distance_feature(x, ref, model);
    if (std::abs(got - expect) > 1e-9 * std::max(1.0, expect)) pass = false;
    CHECK(got == doctest::Approx(expect).epsilon(1e-9));
  }

  // activation distance pseudometric axioms
  {
    const TrainedModel other = build_model("mlp", {1, 1, 8}, 4, 17);
    const double ab = activation_distance(model, other, split.forget);
    const double ba = activation_distance(other, model, split.forget);
    CHECK(activation_distance(model, model, split.forget) == doctest::Approx(0.0));
    CHECK(ab == doctest::Approx(ba));
    CHECK(ab >= 0.0);
  }

  // split disjointness
  {
    std::set<int> remain_ids(split.remain.index.data(),
                             split.remain.index.data() + split.remain.index.size());
    for (int i = 0; i < split.forget.size(); ++i) {
      if (remain_ids.count(split.forget.index(i))) pass = false;
      CHECK(!remain_ids.count(split.forget.index(i)));
    }
    CHECK(split.remain.size() + split.forget.size() == gauss.train.size());
  }

  // checkpoint round-trip is bit-exact
  {
    const auto dir = acceptance_root() / "c8";
    fs::create_directories(dir);
    save_checkpoint(model, (dir / "m.ckpt").string());
    const TrainedModel re = load_checkpoint((dir / "m.ckpt").string());
    const Matrix probe = gauss.test.images.topRows(16);
    if ((re.logits(probe) - model.logits(probe)).cwiseAbs().maxCoeff() != 0.0f) pass = false;
    CHECK((re.logits(probe) - model.logits(probe)).cwiseAbs().maxCoeff() == 0.0f);
    CHECK(model_content_hash(re) == model_content_hash(model));
  }

  // deterministic re-runs are byte-identical
  {
    const auto dir = acceptance_root() / "c8";
    TrainConfig ft;
    ft.epochs = 3;
    ft.lr_milestones = {};
    ft.batch_size = 16;
    const TwinProblem t1 = construct_twin(model, gauss.test, split, ft, 9);
    const TwinProblem t2 = construct_twin(model, gauss.test, split, ft, 9);
    save_twin(t1, (dir / "twin1").string());
    save_twin(t2, (dir / "twin2").string());
    for (const char* f : {"twin_model.ckpt", "twin_manifest.json"}) {
      std::ifstream a(dir / "twin1" / f, std::ios::binary), b(dir / "twin2" / f, std::ios::binary);
      std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
      std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
      if (sa != sb || sa.empty()) pass = false;
      CHECK(sa == sb);
      CHECK(!sa.empty());
    }
  }

  verdict(8, pass,
          "sizing slack x1000, zero-budget attack identity, ln K curriculum loss, "
          "top-5 oracle, pseudometric axioms, split disjointness, checkpoint round-trip, "
          "byte-identical re-runs");
}

TEST_CASE("criterion 9: published tables are encoded and diffable, not reproduced") {
  bool pass = true;

  // frozen reference values spot-checked against the publication
  const auto& t1 = reference::resnet18_cifar10_100();
  CHECK(t1.rows.size() == 10);
  CHECK(t1.avg.tmu.delta == doctest::Approx(4.2));
  CHECK(t1.avg.badteacher.delta == doctest::Approx(8.0));
  CHECK(t1.avg.neggrad.delta == doctest::Approx(76.3));
  CHECK(t1.original_avg_acc == doctest::Approx(85.37));
  CHECK(reference::resnet18_cifar10_500().avg.tmu.delta == doctest::Approx(5.52));
  CHECK(reference::fisher_comparison()[0].fisher_acc_test == doctest::Approx(10.37));
  if (t1.avg.tmu.delta != 4.2) pass = false;

  // every reference table renders through the diff entry point
  for (const auto& id : reference::table_ids()) {
    const std::string text = diff_against_reference(id, main_matrix().out_dir);
    if (text.find("reference") == std::string::npos) pass = false;
    CHECK(text.find("reference") != std::string::npos);
  }

  // the report command renders tables, plots and the paper diff
  emit_report(main_matrix().out_dir);
  CHECK(fs::exists(fs::path(main_matrix().out_dir) / "report.md"));
  CHECK(fs::exists(fs::path(main_matrix().out_dir) / "report.csv"));
  CHECK(fs::file_size(fs::path(main_matrix().out_dir) / "activation_distance.svg") > 0);

#ifdef TMU_CLI_PATH
  {
    const std::string cmd = std::string(TMU_CLI_PATH) + " report --out " +
                            main_matrix().out_dir + " --diff-paper table1 > " +
                            (acceptance_root() / "diff.txt").string();
    const int rc = std::system(cmd.c_str());
    if (rc != 0) pass = false;
    CHECK(rc == 0);
    std::ifstream in(acceptance_root() / "diff.txt");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(text.find("85.31") != std::string::npos);  // gold avg ACC_Dtest from the table
    CHECK(text.find("tmu") != std::string::npos);
  }
#endif

  verdict(9, pass,
          "reference tables frozen (table1 avg delta 4.2 / 8 / 76.3), diff rendering and "
          "report outputs verified; absolute values are reference-only at desk scale");
}
