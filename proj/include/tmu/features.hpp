#pragma once

#include "tmu/twin.hpp"

namespace tmu {

// Untargeted L-infinity PGD settings. epsilon is in pixel units; step size 0
// means epsilon/4. No random start, so attacks are deterministic.
struct AttackConfig {
  double epsilon = 4.0 / 255.0;
  int steps = 10;
  double step_size = 0.0;
  bool swap_ce_orientation = false;

  double effective_step() const { return step_size > 0.0 ? step_size : epsilon / 4.0; }
  void validate() const;
  std::string summary() const;
};

// Per-sample rows of (nf, af, cf) plus the standardization statistics fitted
// on the twin problem and reused verbatim at transfer time.
struct FeatureMatrix {
  MatrixXd raw;    // N x 3, columns nf, af, cf
  VectorXi index;  // stable sample ids
  VectorXi label;  // 1 easy, 0 hard, -1 unlabeled
  NormStats stats;
  std::string context_fingerprint;

  int rows() const { return static_cast<int>(raw.rows()); }
  MatrixXd standardized() const { return stats.apply(raw); }
};

// Mean of the 5 smallest penultimate-embedding L2 distances from x to the
// reference samples; falls back to the mean over all when the reference has
// fewer than 5 samples (with a warning).
double nearest_distance_feature(const Matrix& x, const LabeledDataset& reference,
                                const TrainedModel& model);

// Batched PGD maximizing classification loss within ||r||_inf < epsilon,
// clipped to the valid pixel range.
Matrix pgd_attack(const TrainedModel& model, const Matrix& x, const VectorXi& y,
                  const AttackConfig& cfg);

// H(s(x_adv), s(x)) with the adversarial distribution as the weighting
// distribution and the clean one inside the log (swap flag flips them).
double adversarial_feature(const Matrix& x, int y, const TrainedModel& model,
                           const AttackConfig& cfg);

// M_r: fresh random init, same architecture family as the original model,
// trained briefly on a 30% sample of remain+forget plus the twin forget set.
TrainedModel train_curriculum_model(const DataSplit& split, const LabeledDataset& twin_forget,
                                    const std::string& arch, const InputShape& input,
                                    uint64_t seed, int epochs, double fraction = 0.3);

// Per-sample cross-entropy of the briefly trained network.
double curriculum_loss_feature(const Matrix& x, int y, const TrainedModel& m_r);

struct FeatureContext {
  const TrainedModel* context_model = nullptr;     // M_t when fitting, M_o at transfer
  const TrainedModel* curriculum_model = nullptr;  // M_r, shared between contexts
  const LabeledDataset* reference = nullptr;       // same-class pool for NF
  AttackConfig attack;
};

// One row per input sample in input order. Fits norm stats when reuse is
// null; otherwise reuses the given stats verbatim (transfer time).
FeatureMatrix extract_feature_matrix(const LabeledDataset& samples, const FeatureContext& ctx,
                                     const NormStats* reuse = nullptr);

// Columnar plain-text persistence (index nf af cf label) with a stats
// sidecar; reload is bit-exact.
void save_feature_matrix(const FeatureMatrix& fm, const std::string& path);
FeatureMatrix load_feature_matrix(const std::string& path);

}  // namespace tmu
