#include "tmu/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace tmu {

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("TrainConfig: negative epochs");
  if (learning_rate < Scalar(0))
    throw std::invalid_argument("TrainConfig: learning_rate must be >= 0");
  if (momentum < Scalar(0) || momentum >= Scalar(1))
    throw std::invalid_argument("TrainConfig: momentum must be in [0,1)");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  for (size_t i = 0; i < lr_milestones.size(); ++i) {
    if (lr_milestones[i] >= epochs)
      throw std::invalid_argument("TrainConfig: milestone >= epochs");
    if (i > 0 && lr_milestones[i] <= lr_milestones[i - 1])
      throw std::invalid_argument("TrainConfig: milestones must be strictly increasing");
  }
}

std::string TrainConfig::summary() const {
  std::ostringstream ss;
  ss << "epochs=" << epochs << " lr=" << learning_rate << " momentum=" << momentum
     << " wd=" << weight_decay << " batch=" << batch_size << " decay=" << lr_decay_factor
     << " milestones=";
  for (size_t i = 0; i < lr_milestones.size(); ++i)
    ss << (i ? "," : "") << lr_milestones[i];
  ss << " seed=" << seed;
  return ss.str();
}

Scalar lr_at_epoch(const TrainConfig& cfg, int epoch) {
  int hits = 0;
  for (int m : cfg.lr_milestones)
    if (m <= epoch) ++hits;
  return cfg.learning_rate * static_cast<Scalar>(std::pow(cfg.lr_decay_factor, hits));
}

SgdOptimizer::SgdOptimizer(std::vector<ParamRef> params) : params_(std::move(params)) {
  velocity_.reserve(params_.size());
  for (const auto& p : params_)
    velocity_.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
}

void SgdOptimizer::zero_grad() {
  for (auto& p : params_) p.grad->setZero();
}

void SgdOptimizer::step(Scalar lr, Scalar momentum, Scalar weight_decay) {
  for (size_t i = 0; i < params_.size(); ++i) {
    Matrix& v = velocity_[i];
    v = momentum * v + *params_[i].grad + weight_decay * *params_[i].value;
    *params_[i].value -= lr * v;
  }
}

void sgd_train(Network& net, const LabeledDataset& data, const TrainConfig& cfg,
               const LogitLoss& loss) {
  cfg.validate();
  if (data.size() == 0) throw std::invalid_argument("sgd_train: empty dataset");

  SgdOptimizer opt(net.params());
  std::vector<int> order(static_cast<size_t>(data.size()));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(cfg.seed, "sgd-shuffle"));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const Scalar lr = lr_at_epoch(cfg, epoch);
    for (int b0 = 0; b0 < data.size(); b0 += cfg.batch_size) {
      const int n = std::min(cfg.batch_size, data.size() - b0);
      Matrix batch(n, data.dim());
      VectorXi labels(n);
      for (int i = 0; i < n; ++i) {
        batch.row(i) = data.images.row(order[static_cast<size_t>(b0 + i)]);
        labels(i) = data.labels(order[static_cast<size_t>(b0 + i)]);
      }
      const Matrix logits = net.forward(batch, true);
      Matrix grad;
      const double l = loss(logits, labels, grad);
      if (!std::isfinite(l))
        throw std::runtime_error("sgd_train: diverged (non-finite loss at epoch " +
                                 std::to_string(epoch) + ", batch " +
                                 std::to_string(b0 / cfg.batch_size) + ", lr " +
                                 std::to_string(lr) + ")");
      opt.zero_grad();
      net.backward(grad);
      opt.step(lr, cfg.momentum, cfg.weight_decay);
    }
  }
}

namespace {
double ce_logit_loss(const Matrix& logits, const VectorXi& labels, Matrix& grad) {
  grad = cross_entropy_grad(logits, labels);
  return cross_entropy_mean(logits, labels);
}
}  // namespace

TrainedModel train(const TrainedModel& model, const LabeledDataset& data,
                   const TrainConfig& cfg) {
  cfg.validate();
  if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
  if (data.labels.maxCoeff() >= model.num_classes)
    throw std::invalid_argument("train: label exceeds model classes");

  TrainedModel out = model;
  sgd_train(out.net, data, cfg, ce_logit_loss);
  out.provenance.dataset_fingerprint = dataset_fingerprint(data);
  out.provenance.config_summary = cfg.summary();
  out.provenance.epochs_trained = model.provenance.epochs_trained + cfg.epochs;
  return out;
}

TrainedModel finetune(const TrainedModel& model, const LabeledDataset& data,
                      const TrainConfig& cfg) {
  return train(model, data, cfg);
}

}  // namespace tmu
