#pragma once

#include "tmu/dataset.hpp"
#include "tmu/model.hpp"

#include <functional>

namespace tmu {

struct TrainConfig {
  int epochs = 40;
  Scalar learning_rate = Scalar(0.01);
  Scalar momentum = Scalar(0.9);
  Scalar weight_decay = Scalar(5e-4);
  std::vector<int> lr_milestones = {20, 30};
  Scalar lr_decay_factor = Scalar(0.1);
  int batch_size = 64;
  uint64_t seed = 1;

  void validate() const;
  std::string summary() const;
};

// lr at epoch e equals base * decay^(#milestones <= e).
Scalar lr_at_epoch(const TrainConfig& cfg, int epoch);

class SgdOptimizer {
 public:
  explicit SgdOptimizer(std::vector<ParamRef> params);
  void zero_grad();
  void step(Scalar lr, Scalar momentum, Scalar weight_decay);

 private:
  std::vector<ParamRef> params_;
  std::vector<Matrix> velocity_;
};

// Loss hook at the logits: fills grad (dLoss/dlogits) and returns the loss.
using LogitLoss = std::function<double(const Matrix& logits, const VectorXi& labels,
                                       Matrix& grad)>;

// One pass of minibatch SGD over `data` with per-epoch reshuffling. Throws on
// non-finite loss.
void sgd_train(Network& net, const LabeledDataset& data, const TrainConfig& cfg,
               const LogitLoss& loss);

// Supervised training from the given starting point; the input model is left
// untouched and a trained copy is returned.
TrainedModel train(const TrainedModel& model, const LabeledDataset& data,
                   const TrainConfig& cfg);

// Same loop warm-started from an already trained model.
TrainedModel finetune(const TrainedModel& model, const LabeledDataset& data,
                      const TrainConfig& cfg);

}  // namespace tmu
