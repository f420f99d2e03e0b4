#pragma once

#include "tmu/predictor.hpp"

namespace tmu {

enum class UnlearnMethod { Finetune, NegGrad, RandLabel, BadTeacher, Fisher, Tmu };

UnlearnMethod parse_method(const std::string& name);
std::string method_name(UnlearnMethod m);

struct FisherConfig {
  double noise_scale = 3e-5;  // alpha: per-parameter noise variance scale
  double damping = 1e-3;      // lambda added to the diagonal Fisher
  int max_samples = 2000;     // 0 = use all of remain
};

struct UnlearnConfig {
  UnlearnMethod method = UnlearnMethod::NegGrad;
  int epochs = 3;
  Scalar learning_rate = Scalar(0.01);
  Scalar momentum = Scalar(0.9);
  Scalar weight_decay = Scalar(5e-4);
  int batch_size = 64;
  double retain_replay_fraction = 0.3;
  UnlearnMethod tmu_inner_method = UnlearnMethod::NegGrad;
  FisherConfig fisher;
  double distill_temperature = 1.0;
  double neggrad_target_forget_acc = 5.0;  // early stop when forget acc <= this
  uint64_t seed = 1;
  // harness hook: when set, methods append one plain-text row per epoch
  std::vector<std::string>* epoch_log = nullptr;

  void validate() const;
  std::string summary() const;
};

// Every unlearning op leaves the input model untouched and returns a new one.

// Fine-tune on the remaining data only, slightly larger learning rate.
TrainedModel unlearn_finetune(const TrainedModel& model, const DataSplit& split,
                              const UnlearnConfig& cfg);

// Gradient ascent on the forget subset interleaved with descent on a retain
// replay sample; stops early once forget accuracy reaches the target. An
// extra replay pool (the TMU easy subset) may be appended.
TrainedModel unlearn_negative_gradient(const TrainedModel& model, const DataSplit& split,
                                       const LabeledDataset& forget_subset,
                                       const UnlearnConfig& cfg,
                                       const LabeledDataset* extra_replay = nullptr);

// Replay training with forget labels resampled uniformly from the wrong
// classes each epoch.
TrainedModel unlearn_random_label(const TrainedModel& model, const DataSplit& split,
                                  const LabeledDataset& forget_subset,
                                  const UnlearnConfig& cfg,
                                  const LabeledDataset* extra_replay = nullptr);

// Student initialized from the model; per step, KL(student || random teacher)
// on a forget batch and KL(student || original) on a replay batch, 1:1.
TrainedModel unlearn_bad_teacher(const TrainedModel& model, const DataSplit& split,
                                 const LabeledDataset& forget_subset,
                                 const UnlearnConfig& cfg);

// Diagonal empirical Fisher over the remaining data; perturbs each parameter
// with zero-mean Gaussian noise of variance alpha/(F_i + lambda).
TrainedModel unlearn_fisher(const TrainedModel& model, const DataSplit& split,
                            const UnlearnConfig& cfg);

struct TmuPipelineConfig {
  AttackConfig attack;
  PredictorConfig predictor;
  int curriculum_epochs = 1;
  double curriculum_fraction = 0.3;
};

// Precomputed stage artifacts (when the harness already ran those stages).
struct TmuPrecomputed {
  const FeatureMatrix* twin_features = nullptr;
  const GenLabelPredictor* predictor = nullptr;
  const FeatureMatrix* transfer_features = nullptr;
  const TrainedModel* curriculum_model = nullptr;
};

struct TmuDiagnostics {
  double predictor_heldout_accuracy = 0.0;
  double predictor_heldout_prior = 0.0;
  int n_easy = 0;
  int n_hard = 0;
  bool degenerate_all_easy = false;
  double seconds_features = 0.0;
  double seconds_predictor = 0.0;
  double seconds_inner = 0.0;
};

struct TmuResult {
  TrainedModel model;
  ForgetPartition partition;
  TmuDiagnostics diagnostics;
  // artifacts for persistence
  FeatureMatrix twin_features;
  FeatureMatrix transfer_features;
  GenLabelPredictor predictor;
  TrainedModel curriculum_model;
};

// Full pipeline: twin features -> predictor -> transfer -> partition ->
// inner unlearning on the hard subset with the easy subset added to the
// retain replay pool.
TmuResult unlearn_tmu(const TrainedModel& model, const DataSplit& split,
                      const TwinProblem& twin, const UnlearnConfig& cfg,
                      const TmuPipelineConfig& pipeline,
                      const TmuPrecomputed* precomputed = nullptr);

}  // namespace tmu
