#pragma once

#include "tmu/types.hpp"

#include <cmath>
#include <stdexcept>

namespace tmu {

// Floor applied inside every log() over probabilities.
inline constexpr double kProbFloor = 1e-12;

// Row-wise numerically stable softmax. Rows are samples, columns classes.
template <typename Derived>
Matrix softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const Scalar m = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - m).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

// First maximum wins, so ties break toward the lowest class index.
template <typename Derived>
int argmax_row(const Eigen::MatrixBase<Derived>& row) {
  Eigen::Index idx = 0;
  row.maxCoeff(&idx);
  return static_cast<int>(idx);
}

template <typename Derived>
VectorXi argmax_rows(const Eigen::MatrixBase<Derived>& m) {
  VectorXi out(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) out(i) = argmax_row(m.row(i));
  return out;
}

// Shannon entropy of one probability row, nats.
template <typename Derived>
double entropy_nats(const Eigen::MatrixBase<Derived>& probs) {
  double h = 0.0;
  for (Eigen::Index k = 0; k < probs.size(); ++k) {
    const double p = static_cast<double>(probs(k));
    if (p > 0.0) h -= p * std::log(std::max(p, kProbFloor));
  }
  return h;
}

// H(p, q) = -sum_k p_k log q_k with q floored.
template <typename DerivedP, typename DerivedQ>
double cross_entropy_between(const Eigen::MatrixBase<DerivedP>& p,
                             const Eigen::MatrixBase<DerivedQ>& q) {
  if (p.size() != q.size()) throw std::invalid_argument("cross_entropy_between: size mismatch");
  double h = 0.0;
  for (Eigen::Index k = 0; k < p.size(); ++k)
    h -= static_cast<double>(p(k)) * std::log(std::max(static_cast<double>(q(k)), kProbFloor));
  return h;
}

// Mean softmax cross-entropy of logits against integer labels.
template <typename Derived>
double cross_entropy_mean(const Eigen::MatrixBase<Derived>& logits, const VectorXi& labels) {
  if (logits.rows() != labels.size())
    throw std::invalid_argument("cross_entropy_mean: batch size mismatch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const Scalar m = logits.row(i).maxCoeff();
    const double lse =
        static_cast<double>(m) + std::log((logits.row(i).array() - m).exp().sum());
    total += lse - static_cast<double>(logits(i, labels(i)));
  }
  return total / static_cast<double>(logits.rows());
}

// Gradient of mean softmax cross-entropy at the logits: (softmax - onehot)/N.
template <typename Derived>
Matrix cross_entropy_grad(const Eigen::MatrixBase<Derived>& logits, const VectorXi& labels) {
  Matrix g = softmax_rows(logits);
  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(logits.rows());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) g(i, labels(i)) -= Scalar(1);
  g *= inv_n;
  return g;
}

// Column-wise mean/std standardization statistics over a fitting population.
struct NormStats {
  VectorXd mean;
  VectorXd stddev;
  std::string fingerprint;

  static NormStats fit(const MatrixXd& rows) {
    NormStats s;
    const double n = static_cast<double>(rows.rows());
    s.mean = rows.colwise().mean();
    s.stddev = ((rows.rowwise() - s.mean.transpose()).array().square().colwise().sum() / n)
                   .sqrt()
                   .matrix();
    for (Eigen::Index j = 0; j < s.stddev.size(); ++j)
      if (s.stddev(j) < 1e-12) s.stddev(j) = 1e-12;
    ContentHash h;
    h.update_matrix(s.mean);
    h.update_matrix(s.stddev);
    s.fingerprint = h.hex();
    return s;
  }

  MatrixXd apply(const MatrixXd& rows) const {
    if (rows.cols() != mean.size()) throw std::invalid_argument("NormStats: column mismatch");
    return (rows.rowwise() - mean.transpose()).array().rowwise() /
           stddev.transpose().array();
  }
};

}  // namespace tmu
