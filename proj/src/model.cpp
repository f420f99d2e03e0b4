#include "tmu/model.hpp"

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

using nlohmann::json;

namespace tmu {

namespace {

void he_init(Matrix& w, int fan_in, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, std::sqrt(2.0 / fan_in));
  for (Eigen::Index c = 0; c < w.cols(); ++c)
    for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = static_cast<Scalar>(gauss(rng));
}

}  // namespace

// ---------------------------------------------------------------------------
// Dense

Dense::Dense(int in_dim, int out_dim, Rng& rng) {
  weight.resize(in_dim, out_dim);
  he_init(weight, in_dim, rng);
  bias = Matrix::Zero(1, out_dim);
  grad_weight = Matrix::Zero(in_dim, out_dim);
  grad_bias = Matrix::Zero(1, out_dim);
}

Matrix Dense::forward(const Matrix& x, bool) {
  input_ = x;
  return (x * weight).rowwise() + bias.row(0);
}

Matrix Dense::infer(const Matrix& x) const {
  return (x * weight).rowwise() + bias.row(0);
}

Matrix Dense::backward(const Matrix& grad_out) {
  grad_weight.noalias() += input_.transpose() * grad_out;
  grad_bias.row(0) += grad_out.colwise().sum();
  return grad_out * weight.transpose();
}

void Dense::collect_params(std::vector<ParamRef>& out) {
  out.push_back({&weight, &grad_weight});
  out.push_back({&bias, &grad_bias});
}

// ---------------------------------------------------------------------------
// Relu

Matrix Relu::forward(const Matrix& x, bool) {
  mask_ = (x.array() > Scalar(0)).cast<Scalar>();
  return x.cwiseMax(Scalar(0));
}

Matrix Relu::infer(const Matrix& x) const { return x.cwiseMax(Scalar(0)); }

Matrix Relu::backward(const Matrix& grad_out) { return grad_out.cwiseProduct(mask_); }

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(int in_c, int in_h, int in_w, int out_c, int kernel, int stride, int pad,
               Rng& rng)
    : in_c_(in_c), in_h_(in_h), in_w_(in_w), out_c_(out_c), k_(kernel), stride_(stride),
      pad_(pad) {
  out_h_ = (in_h + 2 * pad - kernel) / stride + 1;
  out_w_ = (in_w + 2 * pad - kernel) / stride + 1;
  if (out_h_ <= 0 || out_w_ <= 0) throw std::invalid_argument("Conv2d: non-positive output");
  weight.resize(out_c, in_c * kernel * kernel);
  he_init(weight, in_c * kernel * kernel, rng);
  bias = Matrix::Zero(1, out_c);
  grad_weight = Matrix::Zero(weight.rows(), weight.cols());
  grad_bias = Matrix::Zero(1, out_c);
}

void Conv2d::im2col(const Matrix& x, int row, Matrix& col) const {
  // col: (in_c*k*k) x (out_h*out_w)
  for (int c = 0; c < in_c_; ++c) {
    for (int ky = 0; ky < k_; ++ky) {
      for (int kx = 0; kx < k_; ++kx) {
        const int r = (c * k_ + ky) * k_ + kx;
        for (int oy = 0; oy < out_h_; ++oy) {
          const int sy = oy * stride_ + ky - pad_;
          for (int ox = 0; ox < out_w_; ++ox) {
            const int sx = ox * stride_ + kx - pad_;
            Scalar v = Scalar(0);
            if (sy >= 0 && sy < in_h_ && sx >= 0 && sx < in_w_)
              v = x(row, (c * in_h_ + sy) * in_w_ + sx);
            col(r, oy * out_w_ + ox) = v;
          }
        }
      }
    }
  }
}

Matrix Conv2d::forward(const Matrix& x, bool) {
  input_ = x;
  return infer(x);
}

Matrix Conv2d::infer(const Matrix& x) const {
  const int n = static_cast<int>(x.rows());
  const int out_hw = out_h_ * out_w_;
  Matrix out(n, out_c_ * out_hw);
  Matrix col(in_c_ * k_ * k_, out_hw);
  Matrix prod(out_c_, out_hw);
  for (int i = 0; i < n; ++i) {
    im2col(x, i, col);
    prod.noalias() = weight * col;
    prod.colwise() += bias.row(0).transpose();
    for (int o = 0; o < out_c_; ++o)
      out.row(i).segment(o * out_hw, out_hw) = prod.row(o);
  }
  return out;
}

Matrix Conv2d::backward(const Matrix& grad_out) {
  const int n = static_cast<int>(grad_out.rows());
  const int out_hw = out_h_ * out_w_;
  Matrix grad_in = Matrix::Zero(n, in_c_ * in_h_ * in_w_);
  Matrix col(in_c_ * k_ * k_, out_hw);
  Matrix dout(out_c_, out_hw);
  Matrix dcol(in_c_ * k_ * k_, out_hw);
  for (int i = 0; i < n; ++i) {
    for (int o = 0; o < out_c_; ++o) dout.row(o) = grad_out.row(i).segment(o * out_hw, out_hw);
    im2col(input_, i, col);
    grad_weight.noalias() += dout * col.transpose();
    grad_bias.row(0) += dout.rowwise().sum().transpose();
    dcol.noalias() = weight.transpose() * dout;
    // col2im scatter-add
    for (int c = 0; c < in_c_; ++c) {
      for (int ky = 0; ky < k_; ++ky) {
        for (int kx = 0; kx < k_; ++kx) {
          const int r = (c * k_ + ky) * k_ + kx;
          for (int oy = 0; oy < out_h_; ++oy) {
            const int sy = oy * stride_ + ky - pad_;
            if (sy < 0 || sy >= in_h_) continue;
            for (int ox = 0; ox < out_w_; ++ox) {
              const int sx = ox * stride_ + kx - pad_;
              if (sx < 0 || sx >= in_w_) continue;
              grad_in(i, (c * in_h_ + sy) * in_w_ + sx) += dcol(r, oy * out_w_ + ox);
            }
          }
        }
      }
    }
  }
  return grad_in;
}

void Conv2d::collect_params(std::vector<ParamRef>& out) {
  out.push_back({&weight, &grad_weight});
  out.push_back({&bias, &grad_bias});
}

// ---------------------------------------------------------------------------
// BatchNorm2d

BatchNorm2d::BatchNorm2d(int channels, int spatial, Scalar momentum, Scalar eps)
    : channels_(channels), spatial_(spatial), momentum_(momentum), eps_(eps) {
  gamma = Matrix::Ones(1, channels);
  beta = Matrix::Zero(1, channels);
  grad_gamma = Matrix::Zero(1, channels);
  grad_beta = Matrix::Zero(1, channels);
  running_mean = Matrix::Zero(1, channels);
  running_var = Matrix::Ones(1, channels);
}

Matrix BatchNorm2d::forward(const Matrix& x, bool training) {
  trained_forward_ = training;
  if (!training) {
    // Eval path still caches xhat for backward (used by the attack).
    Matrix out(x.rows(), x.cols());
    xhat_.resize(x.rows(), x.cols());
    batch_std_.resize(channels_);
    for (int c = 0; c < channels_; ++c) {
      const Scalar sd = std::sqrt(running_var(0, c) + eps_);
      batch_std_(c) = sd;
      auto xb = x.middleCols(c * spatial_, spatial_);
      xhat_.middleCols(c * spatial_, spatial_) = (xb.array() - running_mean(0, c)) / sd;
      out.middleCols(c * spatial_, spatial_) =
          xhat_.middleCols(c * spatial_, spatial_) * gamma(0, c) + Matrix::Constant(x.rows(), spatial_, beta(0, c));
    }
    return out;
  }
  const Scalar m = static_cast<Scalar>(x.rows() * spatial_);
  Matrix out(x.rows(), x.cols());
  xhat_.resize(x.rows(), x.cols());
  batch_std_.resize(channels_);
  for (int c = 0; c < channels_; ++c) {
    auto xb = x.middleCols(c * spatial_, spatial_);
    const Scalar mean = xb.sum() / m;
    const Scalar var = (xb.array() - mean).square().sum() / m;
    const Scalar sd = std::sqrt(var + eps_);
    batch_std_(c) = sd;
    xhat_.middleCols(c * spatial_, spatial_) = (xb.array() - mean) / sd;
    out.middleCols(c * spatial_, spatial_) =
        xhat_.middleCols(c * spatial_, spatial_) * gamma(0, c) + Matrix::Constant(x.rows(), spatial_, beta(0, c));
    running_mean(0, c) = (Scalar(1) - momentum_) * running_mean(0, c) + momentum_ * mean;
    running_var(0, c) = (Scalar(1) - momentum_) * running_var(0, c) + momentum_ * var;
  }
  return out;
}

Matrix BatchNorm2d::infer(const Matrix& x) const {
  Matrix out(x.rows(), x.cols());
  for (int c = 0; c < channels_; ++c) {
    const Scalar sd = std::sqrt(running_var(0, c) + eps_);
    out.middleCols(c * spatial_, spatial_) =
        ((x.middleCols(c * spatial_, spatial_).array() - running_mean(0, c)) / sd * gamma(0, c) +
         beta(0, c))
            .matrix();
  }
  return out;
}

Matrix BatchNorm2d::backward(const Matrix& grad_out) {
  Matrix grad_in(grad_out.rows(), grad_out.cols());
  const Scalar m = static_cast<Scalar>(grad_out.rows() * spatial_);
  for (int c = 0; c < channels_; ++c) {
    auto dy = grad_out.middleCols(c * spatial_, spatial_);
    auto xh = xhat_.middleCols(c * spatial_, spatial_);
    grad_gamma(0, c) += dy.cwiseProduct(xh).sum();
    grad_beta(0, c) += dy.sum();
    if (!trained_forward_) {
      grad_in.middleCols(c * spatial_, spatial_) = dy * (gamma(0, c) / batch_std_(c));
      continue;
    }
    const Scalar sum_dy = dy.sum();
    const Scalar sum_dy_xh = dy.cwiseProduct(xh).sum();
    grad_in.middleCols(c * spatial_, spatial_) =
        (gamma(0, c) / (m * batch_std_(c))) *
        (m * dy.array() - sum_dy - xh.array() * sum_dy_xh).matrix();
  }
  return grad_in;
}

void BatchNorm2d::collect_params(std::vector<ParamRef>& out) {
  out.push_back({&gamma, &grad_gamma});
  out.push_back({&beta, &grad_beta});
}

void BatchNorm2d::collect_buffers(std::vector<Matrix*>& out) {
  out.push_back(&running_mean);
  out.push_back(&running_var);
}

// ---------------------------------------------------------------------------
// GlobalAvgPool

Matrix GlobalAvgPool::forward(const Matrix& x, bool) { return infer(x); }

Matrix GlobalAvgPool::infer(const Matrix& x) const {
  Matrix out(x.rows(), channels_);
  for (int c = 0; c < channels_; ++c)
    out.col(c) = x.middleCols(c * spatial_, spatial_).rowwise().mean();
  return out;
}

Matrix GlobalAvgPool::backward(const Matrix& grad_out) {
  Matrix grad_in(grad_out.rows(), channels_ * spatial_);
  const Scalar inv = Scalar(1) / static_cast<Scalar>(spatial_);
  for (int c = 0; c < channels_; ++c)
    grad_in.middleCols(c * spatial_, spatial_) =
        grad_out.col(c).replicate(1, spatial_) * inv;
  return grad_in;
}

// ---------------------------------------------------------------------------
// ResidualBlock

ResidualBlock::ResidualBlock(int in_c, int in_h, int in_w, int out_c, int stride, Rng& rng) {
  conv1_ = std::make_unique<Conv2d>(in_c, in_h, in_w, out_c, 3, stride, 1, rng);
  bn1_ = std::make_unique<BatchNorm2d>(out_c, conv1_->out_h() * conv1_->out_w());
  conv2_ = std::make_unique<Conv2d>(out_c, conv1_->out_h(), conv1_->out_w(), out_c, 3, 1, 1, rng);
  bn2_ = std::make_unique<BatchNorm2d>(out_c, conv2_->out_h() * conv2_->out_w());
  if (stride != 1 || in_c != out_c) {
    conv_skip_ = std::make_unique<Conv2d>(in_c, in_h, in_w, out_c, 1, stride, 0, rng);
    bn_skip_ = std::make_unique<BatchNorm2d>(out_c, conv_skip_->out_h() * conv_skip_->out_w());
  }
}

ResidualBlock::ResidualBlock(const ResidualBlock& other)
    : conv1_(std::make_unique<Conv2d>(*other.conv1_)),
      conv2_(std::make_unique<Conv2d>(*other.conv2_)),
      bn1_(std::make_unique<BatchNorm2d>(*other.bn1_)),
      bn2_(std::make_unique<BatchNorm2d>(*other.bn2_)),
      relu1_(other.relu1_),
      sum_mask_(other.sum_mask_) {
  if (other.conv_skip_) {
    conv_skip_ = std::make_unique<Conv2d>(*other.conv_skip_);
    bn_skip_ = std::make_unique<BatchNorm2d>(*other.bn_skip_);
  }
}

Matrix ResidualBlock::forward(const Matrix& x, bool training) {
  Matrix h = conv1_->forward(x, training);
  h = bn1_->forward(h, training);
  h = relu1_.forward(h, training);
  h = conv2_->forward(h, training);
  h = bn2_->forward(h, training);
  Matrix skip = x;
  if (conv_skip_) {
    skip = conv_skip_->forward(x, training);
    skip = bn_skip_->forward(skip, training);
  }
  h += skip;
  sum_mask_ = (h.array() > Scalar(0)).cast<Scalar>();
  return h.cwiseMax(Scalar(0));
}

Matrix ResidualBlock::infer(const Matrix& x) const {
  Matrix h = conv1_->infer(x);
  h = bn1_->infer(h);
  h = h.cwiseMax(Scalar(0));
  h = conv2_->infer(h);
  h = bn2_->infer(h);
  Matrix skip = x;
  if (conv_skip_) {
    skip = conv_skip_->infer(x);
    skip = bn_skip_->infer(skip);
  }
  h += skip;
  return h.cwiseMax(Scalar(0));
}

Matrix ResidualBlock::backward(const Matrix& grad_out) {
  const Matrix d_sum = grad_out.cwiseProduct(sum_mask_);
  Matrix d_main = bn2_->backward(d_sum);
  d_main = conv2_->backward(d_main);
  d_main = relu1_.backward(d_main);
  d_main = bn1_->backward(d_main);
  d_main = conv1_->backward(d_main);
  Matrix d_skip = d_sum;
  if (conv_skip_) {
    d_skip = bn_skip_->backward(d_skip);
    d_skip = conv_skip_->backward(d_skip);
  }
  return d_main + d_skip;
}

void ResidualBlock::collect_params(std::vector<ParamRef>& out) {
  conv1_->collect_params(out);
  bn1_->collect_params(out);
  conv2_->collect_params(out);
  bn2_->collect_params(out);
  if (conv_skip_) {
    conv_skip_->collect_params(out);
    bn_skip_->collect_params(out);
  }
}

void ResidualBlock::collect_buffers(std::vector<Matrix*>& out) {
  bn1_->collect_buffers(out);
  bn2_->collect_buffers(out);
  if (bn_skip_) bn_skip_->collect_buffers(out);
}

// ---------------------------------------------------------------------------
// Network

Network::Network(const Network& other) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Network& Network::operator=(const Network& other) {
  if (this == &other) return *this;
  layers_.clear();
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
  return *this;
}

Matrix Network::forward(const Matrix& x, bool training) {
  Matrix h = x;
  for (auto& l : layers_) h = l->forward(h, training);
  return h;
}

Matrix Network::backward(const Matrix& grad_logits) {
  Matrix g = grad_logits;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

Matrix Network::infer_logits(const Matrix& x) const {
  Matrix h = x;
  for (const auto& l : layers_) h = l->infer(h);
  return h;
}

Matrix Network::infer_embedding(const Matrix& x) const {
  if (layers_.empty()) throw std::runtime_error("Network: empty");
  Matrix h = x;
  for (size_t i = 0; i + 1 < layers_.size(); ++i) h = layers_[i]->infer(h);
  return h;
}

int Network::embedding_dim() const {
  const auto* tail = dynamic_cast<const Dense*>(layers_.back().get());
  if (!tail) throw std::runtime_error("Network: classifier layer is not Dense");
  return static_cast<int>(tail->weight.rows());
}

std::vector<ParamRef> Network::params() {
  std::vector<ParamRef> out;
  for (auto& l : layers_) l->collect_params(out);
  return out;
}

std::vector<Matrix*> Network::buffers() {
  std::vector<Matrix*> out;
  for (auto& l : layers_) l->collect_buffers(out);
  return out;
}

std::vector<const Matrix*> Network::params_const() const {
  auto& self = const_cast<Network&>(*this);
  std::vector<const Matrix*> out;
  for (auto p : self.params()) out.push_back(p.value);
  return out;
}

std::vector<const Matrix*> Network::buffers_const() const {
  auto& self = const_cast<Network&>(*this);
  std::vector<const Matrix*> out;
  for (auto* b : self.buffers()) out.push_back(b);
  return out;
}

void Network::zero_grad() {
  for (auto p : params()) p.grad->setZero();
}

// ---------------------------------------------------------------------------
// Registry

namespace {

Network build_mlp(const InputShape& in, int num_classes, Rng& rng) {
  Network net;
  net.add(std::make_unique<Dense>(in.dim(), 256, rng));
  net.add(std::make_unique<Relu>());
  net.add(std::make_unique<Dense>(256, 128, rng));
  net.add(std::make_unique<Relu>());
  net.add(std::make_unique<Dense>(128, num_classes, rng));
  return net;
}

Network build_allcnn(const InputShape& in, int num_classes, int width, Rng& rng) {
  Network net;
  auto c1 = std::make_unique<Conv2d>(in.channels, in.height, in.width, width, 3, 1, 1, rng);
  int h = c1->out_h(), w = c1->out_w();
  net.add(std::move(c1));
  net.add(std::make_unique<Relu>());
  auto c2 = std::make_unique<Conv2d>(width, h, w, width, 3, 2, 1, rng);
  h = c2->out_h();
  w = c2->out_w();
  net.add(std::move(c2));
  net.add(std::make_unique<Relu>());
  auto c3 = std::make_unique<Conv2d>(width, h, w, 2 * width, 3, 1, 1, rng);
  h = c3->out_h();
  w = c3->out_w();
  net.add(std::move(c3));
  net.add(std::make_unique<Relu>());
  auto c4 = std::make_unique<Conv2d>(2 * width, h, w, 2 * width, 3, 2, 1, rng);
  h = c4->out_h();
  w = c4->out_w();
  net.add(std::move(c4));
  net.add(std::make_unique<Relu>());
  auto c5 = std::make_unique<Conv2d>(2 * width, h, w, 2 * width, 1, 1, 0, rng);
  h = c5->out_h();
  w = c5->out_w();
  net.add(std::move(c5));
  net.add(std::make_unique<Relu>());
  net.add(std::make_unique<GlobalAvgPool>(2 * width, h * w));
  net.add(std::make_unique<Dense>(2 * width, num_classes, rng));
  return net;
}

Network build_resnet18(const InputShape& in, int num_classes, int width, Rng& rng) {
  Network net;
  auto stem = std::make_unique<Conv2d>(in.channels, in.height, in.width, width, 3, 1, 1, rng);
  int h = stem->out_h(), w = stem->out_w();
  net.add(std::move(stem));
  net.add(std::make_unique<BatchNorm2d>(width, h * w));
  net.add(std::make_unique<Relu>());
  int c = width;
  const int stage_mult[4] = {1, 2, 4, 8};
  for (int s = 0; s < 4; ++s) {
    const int out_c = width * stage_mult[s];
    const int stride = s == 0 ? 1 : 2;
    net.add(std::make_unique<ResidualBlock>(c, h, w, out_c, stride, rng));
    h = (h + 2 - 3) / stride + 1;
    w = (w + 2 - 3) / stride + 1;
    net.add(std::make_unique<ResidualBlock>(out_c, h, w, out_c, 1, rng));
    c = out_c;
  }
  net.add(std::make_unique<GlobalAvgPool>(c, h * w));
  net.add(std::make_unique<Dense>(c, num_classes, rng));
  return net;
}

}  // namespace

std::vector<std::string> registered_archs() {
  return {"mlp", "allcnn-small", "allcnn", "resnet18-small", "resnet18"};
}

TrainedModel build_model(const std::string& arch, const InputShape& input, int num_classes,
                         uint64_t seed) {
  if (num_classes < 2) throw std::invalid_argument("build_model: need at least 2 classes");
  if (input.dim() <= 0) throw std::invalid_argument("build_model: empty input shape");
  Rng rng(mix_seed(seed, "init-" + arch));
  TrainedModel m;
  m.arch = arch;
  m.num_classes = num_classes;
  m.input = input;
  m.seed = seed;
  if (arch == "mlp") {
    m.net = build_mlp(input, num_classes, rng);
  } else if (arch == "allcnn-small") {
    m.net = build_allcnn(input, num_classes, 16, rng);
  } else if (arch == "allcnn") {
    m.net = build_allcnn(input, num_classes, 96, rng);
  } else if (arch == "resnet18-small") {
    m.net = build_resnet18(input, num_classes, 8, rng);
  } else if (arch == "resnet18") {
    m.net = build_resnet18(input, num_classes, 64, rng);
  } else {
    std::string known;
    for (const auto& a : registered_archs()) known += (known.empty() ? "" : ", ") + a;
    throw std::invalid_argument("unknown arch: " + arch + " (registered: " + known + ")");
  }
  return m;
}

Matrix TrainedModel::logits(const Matrix& batch) const {
  if (batch.cols() != input.dim())
    throw std::invalid_argument("logits: batch dim " + std::to_string(batch.cols()) +
                                " does not match input dim " + std::to_string(input.dim()));
  return net.infer_logits(batch);
}

Matrix TrainedModel::embeddings(const Matrix& batch) const {
  if (batch.cols() != input.dim()) throw std::invalid_argument("embeddings: shape mismatch");
  return net.infer_embedding(batch);
}

PredictOutput predict(const TrainedModel& model, const Matrix& batch) {
  PredictOutput out;
  out.logits = model.logits(batch);
  if (!out.logits.allFinite()) throw std::runtime_error("predict: non-finite logits");
  out.probabilities = softmax_rows(out.logits);
  out.labels = argmax_rows(out.logits);
  return out;
}

double accuracy(const TrainedModel& model, const LabeledDataset& data) {
  if (data.size() == 0) throw std::invalid_argument("accuracy: empty dataset");
  const int chunk = 512;
  long correct = 0;
  for (int i0 = 0; i0 < data.size(); i0 += chunk) {
    const int n = std::min(chunk, data.size() - i0);
    const Matrix logits = model.logits(data.images.middleRows(i0, n));
    for (int i = 0; i < n; ++i)
      if (argmax_row(logits.row(i)) == data.labels(i0 + i)) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(data.size());
}

std::string model_content_hash(const TrainedModel& model) {
  ContentHash h;
  h.update(model.arch);
  h.update_pod(model.num_classes);
  for (const auto* p : model.net.params_const()) h.update_matrix(*p);
  for (const auto* b : model.net.buffers_const()) h.update_matrix(*b);
  return h.hex();
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {
constexpr char kMagic[8] = {'T', 'M', 'U', 'C', '0', '0', '0', '1'};

void write_matrix(std::ofstream& out, const Matrix& m) {
  const uint32_t rows = static_cast<uint32_t>(m.rows());
  const uint32_t cols = static_cast<uint32_t>(m.cols());
  out.write(reinterpret_cast<const char*>(&rows), 4);
  out.write(reinterpret_cast<const char*>(&cols), 4);
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(sizeof(Scalar) * m.size()));
}

void read_matrix(std::ifstream& in, Matrix& m) {
  uint32_t rows = 0, cols = 0;
  in.read(reinterpret_cast<char*>(&rows), 4);
  in.read(reinterpret_cast<char*>(&cols), 4);
  if (!in || rows != m.rows() || cols != m.cols())
    throw std::runtime_error("checkpoint: tensor shape mismatch");
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(Scalar) * m.size()));
  if (!in) throw std::runtime_error("checkpoint: truncated tensor data");
}
}  // namespace

void save_checkpoint(const TrainedModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(kMagic, 8);
  const uint32_t arch_len = static_cast<uint32_t>(model.arch.size());
  out.write(reinterpret_cast<const char*>(&arch_len), 4);
  out.write(model.arch.data(), arch_len);
  const int32_t k = model.num_classes;
  out.write(reinterpret_cast<const char*>(&k), 4);
  const int32_t shape[3] = {model.input.height, model.input.width, model.input.channels};
  out.write(reinterpret_cast<const char*>(shape), 12);
  out.write(reinterpret_cast<const char*>(&model.seed), 8);
  auto params = model.net.params_const();
  auto buffers = model.net.buffers_const();
  const uint32_t np = static_cast<uint32_t>(params.size());
  const uint32_t nb = static_cast<uint32_t>(buffers.size());
  out.write(reinterpret_cast<const char*>(&np), 4);
  out.write(reinterpret_cast<const char*>(&nb), 4);
  for (const auto* p : params) write_matrix(out, *p);
  for (const auto* b : buffers) write_matrix(out, *b);

  json meta;
  meta["arch"] = model.arch;
  meta["num_classes"] = model.num_classes;
  meta["seed"] = model.seed;
  meta["input"] = {{"height", model.input.height},
                   {"width", model.input.width},
                   {"channels", model.input.channels}};
  meta["dataset_fingerprint"] = model.provenance.dataset_fingerprint;
  meta["config_summary"] = model.provenance.config_summary;
  meta["epochs_trained"] = model.provenance.epochs_trained;
  meta["content_hash"] = model_content_hash(model);
  std::ofstream side(path + ".json");
  if (!side) throw std::runtime_error("cannot write checkpoint sidecar: " + path + ".json");
  side << meta.dump(2) << "\n";
}

TrainedModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic (version mismatch or corrupt): " + path);
  uint32_t arch_len = 0;
  in.read(reinterpret_cast<char*>(&arch_len), 4);
  if (!in || arch_len > 256) throw std::runtime_error("checkpoint: corrupt header");
  std::string arch(arch_len, '\0');
  in.read(arch.data(), arch_len);
  int32_t k = 0;
  in.read(reinterpret_cast<char*>(&k), 4);
  int32_t shape[3];
  in.read(reinterpret_cast<char*>(shape), 12);
  uint64_t seed = 0;
  in.read(reinterpret_cast<char*>(&seed), 8);

  TrainedModel m = build_model(arch, InputShape{shape[0], shape[1], shape[2]}, k, seed);

  uint32_t np = 0, nb = 0;
  in.read(reinterpret_cast<char*>(&np), 4);
  in.read(reinterpret_cast<char*>(&nb), 4);
  auto params = m.net.params();
  auto buffers = m.net.buffers();
  if (np != params.size() || nb != buffers.size())
    throw std::runtime_error("checkpoint: tensor count mismatch for arch " + arch);
  for (auto p : params) read_matrix(in, *p.value);
  for (auto* b : buffers) read_matrix(in, *b);

  std::ifstream side(path + ".json");
  if (side) {
    json meta = json::parse(side);
    const std::string meta_arch = meta.value("arch", arch);
    if (meta_arch != arch)
      throw std::runtime_error("checkpoint: sidecar arch '" + meta_arch +
                               "' does not match blob arch '" + arch + "'");
    const std::string want_hash = meta.value("content_hash", std::string());
    if (!want_hash.empty() && want_hash != model_content_hash(m))
      throw std::runtime_error("checkpoint: content hash mismatch (corrupt file): " + path);
    m.provenance.dataset_fingerprint = meta.value("dataset_fingerprint", std::string());
    m.provenance.config_summary = meta.value("config_summary", std::string());
    m.provenance.epochs_trained = meta.value("epochs_trained", 0);
  }
  return m;
}

}  // namespace tmu
