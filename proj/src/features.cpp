#include "tmu/features.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace tmu {

void AttackConfig::validate() const {
  if (epsilon < 0.0) throw std::invalid_argument("AttackConfig: epsilon must be >= 0");
  if (steps < 1) throw std::invalid_argument("AttackConfig: steps must be >= 1");
  if (step_size < 0.0) throw std::invalid_argument("AttackConfig: step_size must be >= 0");
}

std::string AttackConfig::summary() const {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "eps=%.9g steps=%d step=%.9g swap=%d", epsilon, steps,
                effective_step(), swap_ce_orientation ? 1 : 0);
  return buf;
}

namespace {

Matrix embed_dataset(const TrainedModel& model, const LabeledDataset& data) {
  Matrix out(data.size(), model.embedding_dim());
  const int chunk = 512;
  for (int i0 = 0; i0 < data.size(); i0 += chunk) {
    const int n = std::min(chunk, data.size() - i0);
    out.middleRows(i0, n) = model.embeddings(data.images.middleRows(i0, n));
  }
  return out;
}

double top5_mean_distance(const Eigen::RowVectorXf& emb, const Matrix& ref_embs,
                          bool* warned_small) {
  const int n = static_cast<int>(ref_embs.rows());
  if (n == 0) throw std::invalid_argument("nearest_distance_feature: empty reference");
  std::vector<double> d2(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    d2[static_cast<size_t>(i)] = static_cast<double>((ref_embs.row(i) - emb).squaredNorm());
  const int k = std::min(5, n);
  if (n < 5 && warned_small && !*warned_small) {
    std::cerr << "[features] warning: nearest-distance reference has " << n
              << " samples (< 5); averaging over all of them\n";
    *warned_small = true;
  }
  std::partial_sort(d2.begin(), d2.begin() + k, d2.end());
  double sum = 0.0;
  for (int i = 0; i < k; ++i) sum += std::sqrt(d2[static_cast<size_t>(i)]);
  return sum / k;
}

}  // namespace

double nearest_distance_feature(const Matrix& x, const LabeledDataset& reference,
                                const TrainedModel& model) {
  if (x.rows() != 1) throw std::invalid_argument("nearest_distance_feature: one sample row");
  const Matrix ref_embs = embed_dataset(model, reference);
  const Matrix emb = model.embeddings(x);
  bool warned = false;
  return top5_mean_distance(emb.row(0), ref_embs, &warned);
}

Matrix pgd_attack(const TrainedModel& model, const Matrix& x0, const VectorXi& y,
                  const AttackConfig& cfg) {
  cfg.validate();
  if (x0.rows() != y.size()) throw std::invalid_argument("pgd_attack: batch size mismatch");
  if (x0.minCoeff() < Scalar(0) || x0.maxCoeff() > Scalar(1))
    throw std::invalid_argument("pgd_attack: inputs must lie in [0,1]");
  if (cfg.epsilon == 0.0) return x0;

  Network scratch = model.net;  // private caches for backward
  const Scalar alpha = static_cast<Scalar>(cfg.effective_step());
  // Box bounds computed in double and rounded inward, so the float clamp can
  // never exceed the budget.
  Matrix lo(x0.rows(), x0.cols()), hi(x0.rows(), x0.cols());
  for (Eigen::Index c = 0; c < x0.cols(); ++c) {
    for (Eigen::Index r = 0; r < x0.rows(); ++r) {
      const double base = static_cast<double>(x0(r, c));
      const double lo_d = std::max(base - cfg.epsilon, 0.0);
      const double hi_d = std::min(base + cfg.epsilon, 1.0);
      Scalar lo_f = static_cast<Scalar>(lo_d);
      Scalar hi_f = static_cast<Scalar>(hi_d);
      if (static_cast<double>(lo_f) < lo_d) lo_f = std::nextafter(lo_f, Scalar(2));
      if (static_cast<double>(hi_f) > hi_d) hi_f = std::nextafter(hi_f, Scalar(-1));
      lo(r, c) = std::min(lo_f, x0(r, c));
      hi(r, c) = std::max(hi_f, x0(r, c));
    }
  }

  Matrix x = x0;
  for (int s = 0; s < cfg.steps; ++s) {
    const Matrix logits = scratch.forward(x, false);
    if (!logits.allFinite()) throw std::runtime_error("pgd_attack: non-finite logits");
    const Matrix gl = cross_entropy_grad(logits, y);
    scratch.zero_grad();
    const Matrix gx = scratch.backward(gl);
    x += alpha * gx.array().sign().matrix();
    x = x.cwiseMax(lo).cwiseMin(hi);
  }
  return x;
}

namespace {

VectorXd adversarial_feature_rows(const TrainedModel& model, const Matrix& clean,
                                  const Matrix& adv, bool swap) {
  const Matrix pc = softmax_rows(model.logits(clean));
  const Matrix pa = softmax_rows(model.logits(adv));
  VectorXd out(clean.rows());
  for (Eigen::Index i = 0; i < clean.rows(); ++i)
    out(i) = swap ? cross_entropy_between(pc.row(i), pa.row(i))
                  : cross_entropy_between(pa.row(i), pc.row(i));
  return out;
}

VectorXd curriculum_loss_rows(const TrainedModel& m_r, const Matrix& x, const VectorXi& y) {
  const Matrix logits = m_r.logits(x);
  VectorXd out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Scalar m = logits.row(i).maxCoeff();
    const double lse =
        static_cast<double>(m) + std::log((logits.row(i).array() - m).exp().sum());
    out(i) = lse - static_cast<double>(logits(i, y(i)));
  }
  return out;
}

}  // namespace

double adversarial_feature(const Matrix& x, int y, const TrainedModel& model,
                           const AttackConfig& cfg) {
  VectorXi yy(1);
  yy << y;
  const Matrix adv = pgd_attack(model, x, yy, cfg);
  return adversarial_feature_rows(model, x, adv, cfg.swap_ce_orientation)(0);
}

TrainedModel train_curriculum_model(const DataSplit& split, const LabeledDataset& twin_forget,
                                    const std::string& arch, const InputShape& input,
                                    uint64_t seed, int epochs, double fraction) {
  if (epochs < 1) throw std::invalid_argument("train_curriculum_model: epochs must be >= 1");
  if (fraction < 0.0 || fraction > 1.0)
    throw std::invalid_argument("train_curriculum_model: fraction in [0,1]");
  const LabeledDataset pool = concat(split.remain, split.forget);
  const int n_pool = static_cast<int>(std::lround(fraction * pool.size()));
  LabeledDataset sample = resize_to(pool, n_pool, mix_seed(seed, "curriculum-sample"), false);
  LabeledDataset train_set = concat(sample, twin_forget);

  TrainedModel m_r = build_model(arch, input, pool.num_classes, mix_seed(seed, "curriculum"));
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.lr_milestones = {};
  cfg.seed = mix_seed(seed, "curriculum-train");
  return train(m_r, train_set, cfg);
}

double curriculum_loss_feature(const Matrix& x, int y, const TrainedModel& m_r) {
  VectorXi yy(1);
  yy << y;
  return curriculum_loss_rows(m_r, x, yy)(0);
}

FeatureMatrix extract_feature_matrix(const LabeledDataset& samples, const FeatureContext& ctx,
                                     const NormStats* reuse) {
  if (!ctx.context_model || !ctx.curriculum_model || !ctx.reference)
    throw std::invalid_argument("extract_feature_matrix: incomplete context");
  ctx.attack.validate();

  FeatureMatrix fm;
  fm.raw.resize(samples.size(), 3);
  fm.index = samples.index;
  fm.label = VectorXi::Constant(samples.size(), -1);

  // NF: reference embeddings grouped by class, restricted per sample.
  const Matrix ref_embs = embed_dataset(*ctx.context_model, *ctx.reference);
  std::map<int, std::vector<int>> by_class;
  for (int i = 0; i < ctx.reference->size(); ++i)
    by_class[ctx.reference->labels(i)].push_back(i);
  std::map<int, Matrix> class_embs;
  for (const auto& [cls, rows] : by_class) {
    Matrix m(static_cast<int>(rows.size()), ref_embs.cols());
    for (size_t r = 0; r < rows.size(); ++r)
      m.row(static_cast<Eigen::Index>(r)) = ref_embs.row(rows[r]);
    class_embs[cls] = std::move(m);
  }
  const Matrix sample_embs = embed_dataset(*ctx.context_model, samples);
  bool warned = false;
  for (int i = 0; i < samples.size(); ++i) {
    auto it = class_embs.find(samples.labels(i));
    if (it == class_embs.end())
      throw std::runtime_error("extract_feature_matrix: no reference samples of class " +
                               std::to_string(samples.labels(i)));
    fm.raw(i, 0) = top5_mean_distance(sample_embs.row(i), it->second, &warned);
  }

  // AF and CF, batched.
  const int chunk = 128;
  for (int i0 = 0; i0 < samples.size(); i0 += chunk) {
    const int n = std::min(chunk, samples.size() - i0);
    const Matrix clean = samples.images.middleRows(i0, n);
    const VectorXi y = samples.labels.segment(i0, n);
    const Matrix adv = pgd_attack(*ctx.context_model, clean, y, ctx.attack);
    fm.raw.col(1).segment(i0, n) =
        adversarial_feature_rows(*ctx.context_model, clean, adv, ctx.attack.swap_ce_orientation);
    fm.raw.col(2).segment(i0, n) = curriculum_loss_rows(*ctx.curriculum_model, clean, y);
  }

  if (!fm.raw.allFinite())
    throw std::runtime_error("extract_feature_matrix: non-finite feature value");

  fm.stats = reuse ? *reuse : NormStats::fit(fm.raw);

  ContentHash h;
  h.update(model_content_hash(*ctx.context_model));
  h.update(model_content_hash(*ctx.curriculum_model));
  h.update(ctx.attack.summary());
  h.update(dataset_fingerprint(*ctx.reference));
  fm.context_fingerprint = h.hex();
  return fm;
}

// ---------------------------------------------------------------------------
// Persistence

void save_feature_matrix(const FeatureMatrix& fm, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write feature matrix: " + path);
  out << "# index nf af cf label\n";
  char buf[160];
  for (int i = 0; i < fm.rows(); ++i) {
    std::snprintf(buf, sizeof(buf), "%d %.17g %.17g %.17g %d\n", fm.index(i), fm.raw(i, 0),
                  fm.raw(i, 1), fm.raw(i, 2), fm.label(i));
    out << buf;
  }
  std::ofstream side(path + ".stats");
  if (!side) throw std::runtime_error("cannot write feature stats: " + path + ".stats");
  side << "context " << fm.context_fingerprint << "\n";
  side << "fingerprint " << fm.stats.fingerprint << "\n";
  for (int j = 0; j < 3; ++j) {
    std::snprintf(buf, sizeof(buf), "col %d mean %.17g std %.17g\n", j, fm.stats.mean(j),
                  fm.stats.stddev(j));
    side << buf;
  }
}

FeatureMatrix load_feature_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read feature matrix: " + path);
  std::string line;
  std::getline(in, line);  // header
  std::vector<std::array<double, 3>> rows;
  std::vector<int> ids, labels;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    int id, label;
    double nf, af, cf;
    if (!(ss >> id >> nf >> af >> cf >> label))
      throw std::runtime_error("corrupt feature matrix row: " + line);
    ids.push_back(id);
    labels.push_back(label);
    rows.push_back({nf, af, cf});
  }
  FeatureMatrix fm;
  fm.raw.resize(static_cast<int>(rows.size()), 3);
  fm.index.resize(static_cast<int>(rows.size()));
  fm.label.resize(static_cast<int>(rows.size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    fm.index(ii) = ids[i];
    fm.label(ii) = labels[i];
    for (int j = 0; j < 3; ++j) fm.raw(ii, j) = rows[i][static_cast<size_t>(j)];
  }

  std::ifstream side(path + ".stats");
  if (!side) throw std::runtime_error("missing feature stats sidecar: " + path + ".stats");
  std::string word;
  side >> word >> fm.context_fingerprint;
  std::string fingerprint;
  side >> word >> fingerprint;
  fm.stats.mean.resize(3);
  fm.stats.stddev.resize(3);
  for (int j = 0; j < 3; ++j) {
    int col;
    side >> word >> col >> word >> fm.stats.mean(j) >> word >> fm.stats.stddev(j);
  }
  fm.stats.fingerprint = fingerprint;
  ContentHash h;
  h.update_matrix(fm.stats.mean);
  h.update_matrix(fm.stats.stddev);
  if (h.hex() != fingerprint)
    throw std::runtime_error("feature stats sidecar fingerprint mismatch: " + path);
  return fm;
}

}  // namespace tmu
