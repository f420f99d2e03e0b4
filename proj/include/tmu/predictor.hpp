#pragma once

#include "tmu/features.hpp"

namespace tmu {

enum class ThresholdPolicy { Fixed, MatchPrior };

struct PredictorConfig {
  int epochs = 100;
  Scalar learning_rate = Scalar(0.01);
  Scalar momentum = Scalar(0.9);
  Scalar weight_decay = Scalar(5e-4);
  int batch_size = 32;
  double threshold = 0.5;
  // MatchPrior re-derives the threshold after training so that the predicted
  // easy fraction on the training portion matches its label prior.
  ThresholdPolicy threshold_policy = ThresholdPolicy::Fixed;
  double holdout_fraction = 0.2;
  uint64_t seed = 1;
  // feature ablation mask (nf, af, cf)
  bool use_nf = true;
  bool use_af = true;
  bool use_cf = true;

  void validate() const;
  std::string summary() const;
};

// Binary easy/hard classifier: 3 -> 64 -> 32 -> 1 MLP with ReLU, trained with
// class-weighted binary cross-entropy. Bound to the norm stats it was fitted
// with; refuses to score features standardized under different stats.
class GenLabelPredictor {
 public:
  GenLabelPredictor() = default;

  VectorXd predict_proba(const FeatureMatrix& features) const;

  double threshold() const { return threshold_; }
  bool matches_prior() const { return policy_ == ThresholdPolicy::MatchPrior; }
  double prior_rate() const { return prior_rate_; }
  const NormStats& stats() const { return stats_; }
  double heldout_accuracy() const { return heldout_accuracy_; }
  double heldout_prior_baseline() const { return heldout_prior_; }
  int heldout_size() const { return heldout_size_; }
  const PredictorConfig& config() const { return cfg_; }

  void save(const std::string& path) const;
  static GenLabelPredictor load(const std::string& path);

  friend GenLabelPredictor train_predictor(const FeatureMatrix&, const PredictorConfig&);

 private:
  Network net_;
  PredictorConfig cfg_;
  NormStats stats_;
  // class-weighted training shifts the learned odds by w_easy/w_hard; this
  // logit offset undoes the shift so predict_proba returns calibrated
  // probabilities
  double calibration_offset_ = 0.0;
  double threshold_ = 0.5;
  ThresholdPolicy policy_ = ThresholdPolicy::Fixed;
  double prior_rate_ = 0.5;  // training-portion easy fraction (MatchPrior)
  double heldout_accuracy_ = 0.0;
  double heldout_prior_ = 0.0;
  int heldout_size_ = 0;
};

GenLabelPredictor train_predictor(const FeatureMatrix& features, const PredictorConfig& cfg);

struct LabelPrediction {
  VectorXi label;  // 1 easy, 0 hard
  VectorXd probability;
};

LabelPrediction predict_labels(const GenLabelPredictor& predictor,
                               const FeatureMatrix& features);

// Row positions into the forget set, disjoint and covering.
struct ForgetPartition {
  std::vector<int> easy;
  std::vector<int> hard;
};

ForgetPartition partition_forget_set(const DataSplit& split, const LabelPrediction& pred);

}  // namespace tmu
