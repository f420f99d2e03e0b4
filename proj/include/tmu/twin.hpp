#pragma once

#include "tmu/train.hpp"

namespace tmu {

// The auxiliary unlearning problem whose gold model is known by construction:
// the twin model is the original fine-tuned on a ratio-matched test subset,
// and that subset plays the role of the twin's forgetting data. The twin's
// gold model is exactly the original model.
struct TwinProblem {
  TrainedModel twin_model;
  LabeledDataset twin_forget;
  TrainedModel gold_model;       // the original model, by value
  std::string gold_model_hash;   // content hash of gold_model
  TwinSizing sizing;
  uint64_t seed = 0;
};

struct GeneralizationLabel {
  int sample_index;  // position within the queried dataset
  bool easy;         // gold argmax equals the ground-truth label
};

// replay_mix > 0 mixes round(replay_mix * |twin_forget|) training samples into
// the twin fine-tune set (default: the test subset alone).
TwinProblem construct_twin(const TrainedModel& original, const LabeledDataset& test_set,
                           const DataSplit& split, const TrainConfig& ft_cfg, uint64_t seed,
                           double replay_mix = 0.0);

std::vector<GeneralizationLabel> label_generalization(const TrainedModel& gold,
                                                      const LabeledDataset& samples);

// Persistence: twin checkpoint + manifest {sizing, resize seed, gold hash}.
// The twin forget set is re-derived deterministically from the test set.
void save_twin(const TwinProblem& twin, const std::string& dir);
TwinProblem load_twin(const std::string& dir, const LabeledDataset& test_set,
                      const TrainedModel& gold);

}  // namespace tmu
