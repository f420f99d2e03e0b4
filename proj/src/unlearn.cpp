#include "tmu/unlearn.hpp"

#include <chrono>
#include <cstdarg>
#include <cmath>
#include <iostream>
#include <numeric>
#include <sstream>

namespace tmu {

UnlearnMethod parse_method(const std::string& name) {
  if (name == "finetune") return UnlearnMethod::Finetune;
  if (name == "neggrad") return UnlearnMethod::NegGrad;
  if (name == "randlabel") return UnlearnMethod::RandLabel;
  if (name == "badteacher") return UnlearnMethod::BadTeacher;
  if (name == "fisher") return UnlearnMethod::Fisher;
  if (name == "tmu") return UnlearnMethod::Tmu;
  throw std::invalid_argument(
      "unknown unlearning method: " + name +
      " (known: finetune, neggrad, randlabel, badteacher, fisher, tmu)");
}

std::string method_name(UnlearnMethod m) {
  switch (m) {
    case UnlearnMethod::Finetune: return "finetune";
    case UnlearnMethod::NegGrad: return "neggrad";
    case UnlearnMethod::RandLabel: return "randlabel";
    case UnlearnMethod::BadTeacher: return "badteacher";
    case UnlearnMethod::Fisher: return "fisher";
    case UnlearnMethod::Tmu: return "tmu";
  }
  return "?";
}

void UnlearnConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("UnlearnConfig: epochs must be >= 1");
  if (learning_rate <= Scalar(0))
    throw std::invalid_argument("UnlearnConfig: learning_rate must be > 0");
  if (retain_replay_fraction < 0.0 || retain_replay_fraction > 1.0)
    throw std::invalid_argument("UnlearnConfig: retain_replay_fraction in [0,1]");
  if (batch_size < 1) throw std::invalid_argument("UnlearnConfig: batch_size >= 1");
  if (fisher.noise_scale < 0.0 || fisher.damping <= 0.0)
    throw std::invalid_argument("UnlearnConfig: fisher noise_scale >= 0, damping > 0");
  if (tmu_inner_method != UnlearnMethod::NegGrad &&
      tmu_inner_method != UnlearnMethod::RandLabel)
    throw std::invalid_argument("UnlearnConfig: tmu_inner_method must be neggrad or randlabel");
}

std::string UnlearnConfig::summary() const {
  std::ostringstream ss;
  ss << method_name(method) << " epochs=" << epochs << " lr=" << learning_rate
     << " mom=" << momentum << " wd=" << weight_decay << " batch=" << batch_size
     << " replay=" << retain_replay_fraction << " inner=" << method_name(tmu_inner_method)
     << " fisher=" << fisher.noise_scale << "/" << fisher.damping << "/" << fisher.max_samples
     << " temp=" << distill_temperature << " ngtarget=" << neggrad_target_forget_acc
     << " seed=" << seed;
  return ss.str();
}

namespace {

LabeledDataset sample_replay(const LabeledDataset& remain, double fraction, uint64_t seed,
                             int epoch, const LabeledDataset* extra) {
  const int n = static_cast<int>(std::lround(fraction * remain.size()));
  LabeledDataset replay =
      resize_to(remain, n, mix_seed(seed, "replay-" + std::to_string(epoch)), false);
  if (extra && extra->size() > 0) replay = concat(replay, *extra);
  return replay;
}

struct BatchView {
  Matrix images;
  VectorXi labels;
};

std::vector<BatchView> make_batches(const LabeledDataset& data, int batch_size, Rng& rng) {
  std::vector<int> order(static_cast<size_t>(data.size()));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<BatchView> out;
  for (int b0 = 0; b0 < data.size(); b0 += batch_size) {
    const int n = std::min(batch_size, data.size() - b0);
    BatchView b;
    b.images.resize(n, data.dim());
    b.labels.resize(n);
    for (int i = 0; i < n; ++i) {
      b.images.row(i) = data.images.row(order[static_cast<size_t>(b0 + i)]);
      b.labels(i) = data.labels(order[static_cast<size_t>(b0 + i)]);
    }
    out.push_back(std::move(b));
  }
  return out;
}

double descend_batch(Network& net, SgdOptimizer& opt, const BatchView& b,
                     const UnlearnConfig& cfg, Scalar sign) {
  const Matrix logits = net.forward(b.images, true);
  const double loss = cross_entropy_mean(logits, b.labels);
  if (!std::isfinite(loss))
    throw std::runtime_error("unlearn: diverged (non-finite loss, method " +
                             method_name(cfg.method) + ")");
  Matrix grad = cross_entropy_grad(logits, b.labels) * sign;
  opt.zero_grad();
  net.backward(grad);
  opt.step(cfg.learning_rate, cfg.momentum, cfg.weight_decay);
  return loss;
}

// Distillation divergence KL(teacher || student) with temperature; returns
// the mean loss and fills the gradient at the student logits. The gradient
// (student - teacher)/N stays informative even when the student is already
// confident, which the reverse direction does not.
double kl_student_teacher(const Matrix& student_logits, const Matrix& teacher_logits,
                          double temperature, Matrix& grad) {
  const Scalar invt = static_cast<Scalar>(1.0 / temperature);
  const Matrix s = softmax_rows(student_logits * invt);
  const Matrix t = softmax_rows(teacher_logits * invt);
  const int n = static_cast<int>(s.rows());
  grad.resize(s.rows(), s.cols());
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    double kl = 0.0;
    for (int k = 0; k < s.cols(); ++k) {
      const double si = std::max(static_cast<double>(s(i, k)), kProbFloor);
      const double ti = std::max(static_cast<double>(t(i, k)), kProbFloor);
      kl += ti * (std::log(ti) - std::log(si));
      grad(i, k) = static_cast<Scalar>((si - ti) / (temperature * n));
    }
    total += kl;
  }
  return total / n;
}

void log_row(const UnlearnConfig& cfg, const std::string& row) {
  if (cfg.epoch_log) cfg.epoch_log->push_back(row);
}

std::string fmt_row(const char* fmt, ...) {
  char buf[256];
  va_list args;
  va_start(args, fmt);
  std::vsnprintf(buf, sizeof(buf), fmt, args);
  va_end(args);
  return buf;
}

}  // namespace

TrainedModel unlearn_finetune(const TrainedModel& model, const DataSplit& split,
                              const UnlearnConfig& cfg) {
  cfg.validate();
  TrainedModel out = model;
  SgdOptimizer opt(out.net.params());
  Rng rng(mix_seed(cfg.seed, "unlearn-finetune"));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    int batches = 0;
    for (const auto& b : make_batches(split.remain, cfg.batch_size, rng)) {
      loss_sum += descend_batch(out.net, opt, b, cfg, 1);
      ++batches;
    }
    log_row(cfg, fmt_row("method=finetune epoch=%d mean_loss=%.6f", epoch,
                         loss_sum / std::max(batches, 1)));
  }
  out.provenance.dataset_fingerprint = dataset_fingerprint(split.remain);
  out.provenance.config_summary = cfg.summary();
  out.provenance.epochs_trained = model.provenance.epochs_trained + cfg.epochs;
  return out;
}

TrainedModel unlearn_negative_gradient(const TrainedModel& model, const DataSplit& split,
                                       const LabeledDataset& forget_subset,
                                       const UnlearnConfig& cfg,
                                       const LabeledDataset* extra_replay) {
  cfg.validate();
  TrainedModel out = model;
  if (forget_subset.size() == 0) return out;

  SgdOptimizer opt(out.net.params());
  Rng rng(mix_seed(cfg.seed, "neggrad"));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const LabeledDataset replay =
        sample_replay(split.remain, cfg.retain_replay_fraction, cfg.seed, epoch, extra_replay);
    auto replay_batches = make_batches(replay, cfg.batch_size, rng);
    auto forget_batches = make_batches(forget_subset, cfg.batch_size, rng);

    // joint steps: every step descends on a replay batch while ascending on
    // a forget batch (cycled), weighted per sample as if both were drawn
    // from one combined fine-tuning stream; batch-mean weighting would let
    // a small forget batch dominate the step and collapse the whole class
    const size_t steps = std::max(replay_batches.size(), forget_batches.size());
    bool reached_target = false;
    for (size_t s = 0; s < steps; ++s) {
      opt.zero_grad();
      double loss = 0.0;
      Eigen::Index replay_n = cfg.batch_size;
      if (!replay_batches.empty()) {
        const BatchView& b = replay_batches[s % replay_batches.size()];
        replay_n = b.images.rows();
        const Matrix logits = out.net.forward(b.images, true);
        loss += cross_entropy_mean(logits, b.labels);
        out.net.backward(cross_entropy_grad(logits, b.labels));
      }
      if (!forget_batches.empty()) {
        const BatchView& b = forget_batches[s % forget_batches.size()];
        const Matrix logits = out.net.forward(b.images, true);
        // samples whose loss already exceeds the cap are done; ascending
        // them further only blows up the logits
        const double cap = std::log(static_cast<double>(model.num_classes)) + 2.0;
        const Scalar scale =
            static_cast<Scalar>(b.images.rows()) / static_cast<Scalar>(replay_n);
        Matrix g = cross_entropy_grad(logits, b.labels) * (-scale);
        for (int i = 0; i < logits.rows(); ++i) {
          VectorXi yi(1);
          yi << b.labels(i);
          if (cross_entropy_mean(logits.row(i), yi) > cap) g.row(i).setZero();
        }
        loss += -cross_entropy_mean(logits, b.labels) * scale;
        out.net.backward(g);
      }
      if (!std::isfinite(loss))
        throw std::runtime_error("unlearn: diverged (non-finite loss, method neggrad)");
      opt.step(cfg.learning_rate, cfg.momentum, cfg.weight_decay);
      // the target can be crossed mid-epoch; checking only at epoch ends
      // lets the ascent wreck the rest of the class
      {
        if (accuracy(out, forget_subset) <= cfg.neggrad_target_forget_acc) {
          reached_target = true;
          break;
        }
      }
    }

    const double forget_acc = accuracy(out, forget_subset);
    double replay_acc = -1.0;
    if (replay.size() > 0) {
      replay_acc = accuracy(out, replay);
      if (replay_acc < 20.0)
        throw std::runtime_error(
            "unlearn_negative_gradient: catastrophic collapse (replay accuracy " +
            std::to_string(replay_acc) + "% < 20% at epoch " + std::to_string(epoch) + ")");
    }
    log_row(cfg, fmt_row("method=neggrad epoch=%d forget_acc=%.2f replay_acc=%.2f", epoch,
                         forget_acc, replay_acc));
    if (reached_target || forget_acc <= cfg.neggrad_target_forget_acc) break;
  }
  return out;
}

TrainedModel unlearn_random_label(const TrainedModel& model, const DataSplit& split,
                                  const LabeledDataset& forget_subset,
                                  const UnlearnConfig& cfg,
                                  const LabeledDataset* extra_replay) {
  cfg.validate();
  TrainedModel out = model;
  SgdOptimizer opt(out.net.params());
  Rng rng(mix_seed(cfg.seed, "randlabel"));
  const int k = model.num_classes;
  // Labels are drawn once per run: re-drawing each epoch makes the pushes
  // cancel across epochs and the forget samples never actually flip.
  LabeledDataset relabeled = forget_subset;
  std::uniform_int_distribution<int> cls(0, k - 2);
  for (int i = 0; i < relabeled.size(); ++i) {
    int c = cls(rng);
    if (c >= relabeled.labels(i)) ++c;  // uniform over classes != true label
    relabeled.labels(i) = c;
  }
  bool reached_target = false;
  for (int epoch = 0; epoch < cfg.epochs && !reached_target; ++epoch) {
    LabeledDataset epoch_set =
        sample_replay(split.remain, cfg.retain_replay_fraction, cfg.seed, epoch, extra_replay);
    epoch_set = relabeled.size() > 0 ? concat(epoch_set, relabeled) : epoch_set;
    double loss_sum = 0.0;
    int batches = 0;
    const auto epoch_batches = make_batches(epoch_set, cfg.batch_size, rng);
    for (const auto& b : epoch_batches) {
      loss_sum += descend_batch(out.net, opt, b, cfg, 1);
      ++batches;
      // same early stop as the ascent method: once the forget samples no
      // longer carry their true labels, further pushes only bleed into
      // their class neighborhood
      if (forget_subset.size() > 0 && (batches % 4 == 0 || batches == static_cast<int>(epoch_batches.size()))) {
        if (accuracy(out, forget_subset) <= cfg.neggrad_target_forget_acc) {
          reached_target = true;
          break;
        }
      }
    }
    log_row(cfg, fmt_row("method=randlabel epoch=%d mean_loss=%.6f forget_acc=%.2f", epoch,
                         loss_sum / std::max(batches, 1),
                         forget_subset.size() > 0 ? accuracy(out, forget_subset) : -1.0));
  }
  return out;
}

TrainedModel unlearn_bad_teacher(const TrainedModel& model, const DataSplit& split,
                                 const LabeledDataset& forget_subset,
                                 const UnlearnConfig& cfg) {
  cfg.validate();
  TrainedModel out = model;
  const TrainedModel incompetent = build_model(model.arch, model.input, model.num_classes,
                                               mix_seed(cfg.seed, "incompetent-teacher"));
  SgdOptimizer opt(out.net.params());
  Rng rng(mix_seed(cfg.seed, "badteacher"));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const LabeledDataset replay =
        sample_replay(split.remain, cfg.retain_replay_fraction, cfg.seed, epoch, nullptr);
    auto replay_batches = make_batches(replay, cfg.batch_size, rng);
    auto forget_batches = make_batches(forget_subset, cfg.batch_size, rng);
    // each forget batch joins exactly one step per epoch, spread evenly, so
    // the forget stream keeps its natural frequency relative to the replay
    const size_t steps = std::max(replay_batches.size(), forget_batches.size());
    const size_t nf = forget_batches.size();
    size_t fi = 0;
    for (size_t s = 0; s < steps; ++s) {
      opt.zero_grad();
      double loss = 0.0;
      if (!replay_batches.empty()) {
        const BatchView& b = replay_batches[s % replay_batches.size()];
        const Matrix zs = out.net.forward(b.images, true);
        const Matrix zt = model.logits(b.images);
        Matrix grad;
        loss += kl_student_teacher(zs, zt, cfg.distill_temperature, grad);
        out.net.backward(grad);
      }
      while (fi < nf && fi * steps <= s * nf) {
        const BatchView& b = forget_batches[fi];
        const Matrix zs = out.net.forward(b.images, true);
        const Matrix zt = incompetent.logits(b.images);
        Matrix grad;
        loss += kl_student_teacher(zs, zt, cfg.distill_temperature, grad);
        out.net.backward(grad);
        ++fi;
      }
      if (!std::isfinite(loss))
        throw std::runtime_error("unlearn_bad_teacher: diverged (non-finite loss)");
      opt.step(cfg.learning_rate, cfg.momentum, cfg.weight_decay);
    }
    log_row(cfg, fmt_row("method=badteacher epoch=%d forget_acc=%.2f", epoch,
                         forget_subset.size() > 0 ? accuracy(out, forget_subset) : -1.0));
  }
  return out;
}

TrainedModel unlearn_fisher(const TrainedModel& model, const DataSplit& split,
                            const UnlearnConfig& cfg) {
  cfg.validate();
  TrainedModel out = model;
  if (cfg.fisher.noise_scale == 0.0) return out;

  const int total = split.remain.size();
  const int n = cfg.fisher.max_samples > 0 ? std::min(cfg.fisher.max_samples, total) : total;
  const LabeledDataset sample =
      resize_to(split.remain, n, mix_seed(cfg.seed, "fisher-sample"), false);

  auto params = out.net.params();
  std::vector<Matrix> fisher;
  fisher.reserve(params.size());
  for (const auto& p : params) fisher.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));

  // per-sample squared gradients of the log-likelihood
  for (int i = 0; i < sample.size(); ++i) {
    const Matrix x = sample.images.row(i);
    VectorXi y(1);
    y << sample.labels(i);
    const Matrix logits = out.net.forward(x, false);
    const Matrix grad = cross_entropy_grad(logits, y);  // = -d(loglik)/dlogits
    out.net.zero_grad();
    out.net.backward(grad);
    for (size_t pi = 0; pi < params.size(); ++pi)
      fisher[pi] += params[pi].grad->cwiseProduct(*params[pi].grad);
  }
  for (auto& f : fisher) {
    f /= static_cast<Scalar>(sample.size());
    if (!f.allFinite()) throw std::runtime_error("unlearn_fisher: non-finite Fisher entries");
  }

  Rng rng(mix_seed(cfg.seed, "fisher-noise"));
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Matrix& w = *params[pi].value;
    for (Eigen::Index c = 0; c < w.cols(); ++c) {
      for (Eigen::Index r = 0; r < w.rows(); ++r) {
        const double var =
            cfg.fisher.noise_scale / (static_cast<double>(fisher[pi](r, c)) + cfg.fisher.damping);
        w(r, c) += static_cast<Scalar>(gauss(rng) * std::sqrt(var));
      }
    }
  }
  return out;
}

TmuResult unlearn_tmu(const TrainedModel& model, const DataSplit& split,
                      const TwinProblem& twin, const UnlearnConfig& cfg,
                      const TmuPipelineConfig& pipeline, const TmuPrecomputed* precomputed) {
  cfg.validate();
  pipeline.attack.validate();
  pipeline.predictor.validate();
  if (twin.gold_model_hash != model_content_hash(model))
    throw std::invalid_argument(
        "unlearn_tmu: twin problem was constructed for a different original model");

  using clock = std::chrono::steady_clock;
  TmuResult res;

  // curriculum network shared by both feature contexts
  const auto t0 = clock::now();
  if (precomputed && precomputed->curriculum_model) {
    res.curriculum_model = *precomputed->curriculum_model;
  } else {
    res.curriculum_model =
        train_curriculum_model(split, twin.twin_forget, model.arch, model.input,
                               mix_seed(cfg.seed, "tmu"), pipeline.curriculum_epochs,
                               pipeline.curriculum_fraction);
  }

  // twin-problem features, labeled by the known gold model (= the original)
  if (precomputed && precomputed->twin_features) {
    res.twin_features = *precomputed->twin_features;
  } else {
    const LabeledDataset twin_reference = concat(split.remain, split.forget);
    FeatureContext ctx{&twin.twin_model, &res.curriculum_model, &twin_reference,
                       pipeline.attack};
    res.twin_features = extract_feature_matrix(twin.twin_forget, ctx, nullptr);
    const auto labels = label_generalization(twin.gold_model, twin.twin_forget);
    for (const auto& l : labels) res.twin_features.label(l.sample_index) = l.easy ? 1 : 0;
  }
  res.diagnostics.seconds_features =
      std::chrono::duration<double>(clock::now() - t0).count();

  const auto t1 = clock::now();
  if (precomputed && precomputed->predictor) {
    res.predictor = *precomputed->predictor;
  } else {
    PredictorConfig pcfg = pipeline.predictor;
    pcfg.seed = mix_seed(cfg.seed, "tmu-predictor");
    res.predictor = train_predictor(res.twin_features, pcfg);
  }
  res.diagnostics.predictor_heldout_accuracy = res.predictor.heldout_accuracy();
  res.diagnostics.predictor_heldout_prior = res.predictor.heldout_prior_baseline();
  res.diagnostics.seconds_predictor =
      std::chrono::duration<double>(clock::now() - t1).count();

  // transfer to the original problem
  if (precomputed && precomputed->transfer_features) {
    res.transfer_features = *precomputed->transfer_features;
  } else {
    FeatureContext ctx{&model, &res.curriculum_model, &split.remain, pipeline.attack};
    res.transfer_features =
        extract_feature_matrix(split.forget, ctx, &res.twin_features.stats);
  }
  const LabelPrediction pred = predict_labels(res.predictor, res.transfer_features);
  res.partition = partition_forget_set(split, pred);
  res.diagnostics.n_easy = static_cast<int>(res.partition.easy.size());
  res.diagnostics.n_hard = static_cast<int>(res.partition.hard.size());

  const auto t2 = clock::now();
  const LabeledDataset easy_set = split.forget.take(res.partition.easy);
  if (res.partition.hard.empty()) {
    // nothing predicted hard: replay fine-tuning only, with a warning
    res.diagnostics.degenerate_all_easy = true;
    std::cerr << "[tmu] warning: predictor labeled every forget sample easy; "
                 "returning the model after replay fine-tuning\n";
    TrainedModel out = model;
    SgdOptimizer opt(out.net.params());
    Rng rng(mix_seed(cfg.seed, "tmu-degenerate"));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      const LabeledDataset replay =
          sample_replay(split.remain, cfg.retain_replay_fraction, cfg.seed, epoch, &easy_set);
      for (const auto& b : make_batches(replay, cfg.batch_size, rng))
        descend_batch(out.net, opt, b, cfg, 1);
    }
    res.model = std::move(out);
  } else {
    const LabeledDataset hard_set = split.forget.take(res.partition.hard);
    UnlearnConfig inner = cfg;
    inner.method = cfg.tmu_inner_method;
    if (cfg.tmu_inner_method == UnlearnMethod::RandLabel)
      res.model = unlearn_random_label(model, split, hard_set, inner, &easy_set);
    else
      res.model = unlearn_negative_gradient(model, split, hard_set, inner, &easy_set);
  }
  res.diagnostics.seconds_inner = std::chrono::duration<double>(clock::now() - t2).count();
  return res;
}

}  // namespace tmu
