#pragma once

#include "tmu/dataset.hpp"
#include "tmu/math.hpp"
#include "tmu/types.hpp"

#include <memory>
#include <string>
#include <vector>

namespace tmu {

struct ParamRef {
  Matrix* value;
  Matrix* grad;
};

// Minimal layer protocol. forward() caches what backward() needs; infer() is
// the cache-free const path used for read-only inference. backward() returns
// the gradient with respect to the layer input and accumulates parameter
// gradients, which also gives the network input gradients used by the
// adversarial attack.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Matrix forward(const Matrix& x, bool training) = 0;
  virtual Matrix infer(const Matrix& x) const = 0;
  virtual Matrix backward(const Matrix& grad_out) = 0;
  virtual void collect_params(std::vector<ParamRef>& out) {}
  virtual void collect_buffers(std::vector<Matrix*>& out) {}
  virtual std::unique_ptr<Layer> clone() const = 0;
};

class Dense final : public Layer {
 public:
  Dense(int in_dim, int out_dim, Rng& rng);
  Matrix forward(const Matrix& x, bool training) override;
  Matrix infer(const Matrix& x) const override;
  Matrix backward(const Matrix& grad_out) override;
  void collect_params(std::vector<ParamRef>& out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Dense>(*this); }

  Matrix weight;  // in_dim x out_dim
  Matrix bias;    // 1 x out_dim
  Matrix grad_weight, grad_bias;

 private:
  Matrix input_;
};

class Relu final : public Layer {
 public:
  Matrix forward(const Matrix& x, bool training) override;
  Matrix infer(const Matrix& x) const override;
  Matrix backward(const Matrix& grad_out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Relu>(*this); }

 private:
  Matrix mask_;
};

// 2-D convolution over CHW rows, implemented with per-sample im2col.
class Conv2d final : public Layer {
 public:
  Conv2d(int in_c, int in_h, int in_w, int out_c, int kernel, int stride, int pad, Rng& rng);
  Matrix forward(const Matrix& x, bool training) override;
  Matrix infer(const Matrix& x) const override;
  Matrix backward(const Matrix& grad_out) override;
  void collect_params(std::vector<ParamRef>& out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2d>(*this); }

  int out_h() const { return out_h_; }
  int out_w() const { return out_w_; }
  int out_c() const { return out_c_; }

  Matrix weight;  // out_c x (in_c*k*k)
  Matrix bias;    // 1 x out_c
  Matrix grad_weight, grad_bias;

 private:
  void im2col(const Matrix& x, int row, Matrix& col) const;
  int in_c_, in_h_, in_w_, out_c_, k_, stride_, pad_;
  int out_h_, out_w_;
  Matrix input_;
};

// Per-channel batch normalization over CHW rows.
class BatchNorm2d final : public Layer {
 public:
  BatchNorm2d(int channels, int spatial, Scalar momentum = Scalar(0.1),
              Scalar eps = Scalar(1e-5));
  Matrix forward(const Matrix& x, bool training) override;
  Matrix infer(const Matrix& x) const override;
  Matrix backward(const Matrix& grad_out) override;
  void collect_params(std::vector<ParamRef>& out) override;
  void collect_buffers(std::vector<Matrix*>& out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<BatchNorm2d>(*this); }

  Matrix gamma, beta;  // 1 x channels
  Matrix grad_gamma, grad_beta;
  Matrix running_mean, running_var;  // 1 x channels

 private:
  int channels_, spatial_;
  Scalar momentum_, eps_;
  bool trained_forward_ = false;
  Matrix xhat_;
  Vector batch_std_;
};

class GlobalAvgPool final : public Layer {
 public:
  GlobalAvgPool(int channels, int spatial) : channels_(channels), spatial_(spatial) {}
  Matrix forward(const Matrix& x, bool training) override;
  Matrix infer(const Matrix& x) const override;
  Matrix backward(const Matrix& grad_out) override;
  std::unique_ptr<Layer> clone() const override {
    return std::make_unique<GlobalAvgPool>(*this);
  }

 private:
  int channels_, spatial_;
};

// Pre-activation-free basic residual block: conv-bn-relu-conv-bn plus skip
// (1x1 conv + bn when shape changes), relu after the sum.
class ResidualBlock final : public Layer {
 public:
  ResidualBlock(int in_c, int in_h, int in_w, int out_c, int stride, Rng& rng);
  ResidualBlock(const ResidualBlock& other);
  Matrix forward(const Matrix& x, bool training) override;
  Matrix infer(const Matrix& x) const override;
  Matrix backward(const Matrix& grad_out) override;
  void collect_params(std::vector<ParamRef>& out) override;
  void collect_buffers(std::vector<Matrix*>& out) override;
  std::unique_ptr<Layer> clone() const override {
    return std::make_unique<ResidualBlock>(*this);
  }

 private:
  std::unique_ptr<Conv2d> conv1_, conv2_, conv_skip_;
  std::unique_ptr<BatchNorm2d> bn1_, bn2_, bn_skip_;
  Relu relu1_;
  Matrix sum_mask_;
};

// Layer stack whose final layer is always the Dense classifier; the input to
// that classifier is the penultimate embedding g(x).
class Network {
 public:
  Network() = default;
  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }
  size_t layer_count() const { return layers_.size(); }

  Matrix forward(const Matrix& x, bool training);
  Matrix backward(const Matrix& grad_logits);  // returns grad wrt input
  Matrix infer_logits(const Matrix& x) const;
  Matrix infer_embedding(const Matrix& x) const;  // output of the penultimate layer
  int embedding_dim() const;

  std::vector<ParamRef> params();
  std::vector<Matrix*> buffers();
  std::vector<const Matrix*> params_const() const;
  std::vector<const Matrix*> buffers_const() const;
  void zero_grad();

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

struct Provenance {
  std::string dataset_fingerprint;
  std::string config_summary;
  int epochs_trained = 0;
};

struct InputShape {
  int height = 0, width = 0, channels = 0;
  int dim() const { return height * width * channels; }
};

// A classifier checkpoint: architecture tag, seed, provenance, and the layer
// stack with logits and penultimate-embedding hooks.
struct TrainedModel {
  std::string arch;
  int num_classes = 0;
  InputShape input;
  uint64_t seed = 0;
  Provenance provenance;
  Network net;

  Matrix logits(const Matrix& batch) const;
  Matrix embeddings(const Matrix& batch) const;
  int embedding_dim() const { return net.embedding_dim(); }
};

struct PredictOutput {
  Matrix logits;
  Matrix probabilities;
  VectorXi labels;
};

std::vector<std::string> registered_archs();
TrainedModel build_model(const std::string& arch, const InputShape& input, int num_classes,
                         uint64_t seed);

PredictOutput predict(const TrainedModel& model, const Matrix& batch);
double accuracy(const TrainedModel& model, const LabeledDataset& data);

std::string model_content_hash(const TrainedModel& model);

// Checkpoint = binary weight blob at `path` + plain-text JSON sidecar at
// `path + ".json"`.
void save_checkpoint(const TrainedModel& model, const std::string& path);
TrainedModel load_checkpoint(const std::string& path);

}  // namespace tmu
