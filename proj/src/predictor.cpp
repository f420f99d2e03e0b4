#include "tmu/predictor.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

using nlohmann::json;

namespace tmu {

void PredictorConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("PredictorConfig: epochs must be >= 1");
  if (learning_rate <= Scalar(0))
    throw std::invalid_argument("PredictorConfig: learning_rate must be > 0");
  if (threshold <= 0.0 || threshold >= 1.0)
    throw std::invalid_argument("PredictorConfig: threshold must be in (0,1)");
  if (holdout_fraction < 0.0 || holdout_fraction >= 1.0)
    throw std::invalid_argument("PredictorConfig: holdout_fraction in [0,1)");
  if (!use_nf && !use_af && !use_cf)
    throw std::invalid_argument("PredictorConfig: at least one feature must be enabled");
}

std::string PredictorConfig::summary() const {
  char buf[220];
  std::snprintf(
      buf, sizeof(buf),
      "epochs=%d lr=%g mom=%g wd=%g batch=%d thr=%g policy=%s holdout=%g seed=%llu mask=%d%d%d",
      epochs, static_cast<double>(learning_rate), static_cast<double>(momentum),
      static_cast<double>(weight_decay), batch_size, threshold,
      threshold_policy == ThresholdPolicy::MatchPrior ? "match-prior" : "fixed",
      holdout_fraction, static_cast<unsigned long long>(seed), use_nf ? 1 : 0,
      use_af ? 1 : 0, use_cf ? 1 : 0);
  return buf;
}

namespace {

Matrix masked_inputs(const MatrixXd& standardized, const PredictorConfig& cfg) {
  Matrix x(standardized.rows(), 3);
  const bool mask[3] = {cfg.use_nf, cfg.use_af, cfg.use_cf};
  for (int j = 0; j < 3; ++j) {
    if (mask[j])
      x.col(j) = standardized.col(j).cast<Scalar>();
    else
      x.col(j).setZero();
  }
  return x;
}

VectorXd forward_proba(const Network& net, const Matrix& x, double offset) {
  const Matrix z = net.infer_logits(x);
  VectorXd p(z.rows());
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    p(i) = 1.0 / (1.0 + std::exp(-(static_cast<double>(z(i, 0)) + offset)));
  return p;
}

}  // namespace

GenLabelPredictor train_predictor(const FeatureMatrix& features, const PredictorConfig& cfg) {
  cfg.validate();
  const int n = features.rows();
  if (n < 5) throw std::invalid_argument("train_predictor: too few labeled rows");
  for (int i = 0; i < n; ++i)
    if (features.label(i) != 0 && features.label(i) != 1)
      throw std::invalid_argument("train_predictor: unlabeled feature row " +
                                  std::to_string(i));

  const int n_easy = features.label.sum();
  const int n_hard = n - n_easy;
  if (n_easy == 0 || n_hard == 0)
    throw std::invalid_argument(
        "train_predictor: single-class labels; the twin gold accuracy must provide both easy "
        "and hard samples");

  // holdout split by seed
  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(cfg.seed, "predictor-holdout"));
  std::shuffle(order.begin(), order.end(), rng);
  const int n_hold = static_cast<int>(std::lround(cfg.holdout_fraction * n));
  std::vector<int> hold(order.begin(), order.begin() + n_hold);
  std::vector<int> tr(order.begin() + n_hold, order.end());

  const MatrixXd z = features.standardized();
  const Matrix x_all = masked_inputs(z, cfg);

  // inverse-frequency class weights computed on the training portion
  double tr_easy = 0;
  for (int r : tr) tr_easy += features.label(r);
  const double tr_hard = static_cast<double>(tr.size()) - tr_easy;
  if (tr_easy == 0 || tr_hard == 0)
    throw std::invalid_argument("train_predictor: training portion is single-class");
  const double w_easy = static_cast<double>(tr.size()) / (2.0 * tr_easy);
  const double w_hard = static_cast<double>(tr.size()) / (2.0 * tr_hard);
  const double calibration_offset = std::log(w_hard / w_easy);

  GenLabelPredictor out;
  out.cfg_ = cfg;
  out.stats_ = features.stats;
  out.calibration_offset_ = calibration_offset;
  out.threshold_ = cfg.threshold;
  out.policy_ = cfg.threshold_policy;
  // rate over every labeled row: the holdout is excluded from training but
  // its labels are known, and the fuller estimate is less noisy
  out.prior_rate_ = static_cast<double>(n_easy) / static_cast<double>(n);
  Rng init_rng(mix_seed(cfg.seed, "predictor-init"));
  out.net_.add(std::make_unique<Dense>(3, 64, init_rng));
  out.net_.add(std::make_unique<Relu>());
  out.net_.add(std::make_unique<Dense>(64, 32, init_rng));
  out.net_.add(std::make_unique<Relu>());
  out.net_.add(std::make_unique<Dense>(32, 1, init_rng));

  SgdOptimizer opt(out.net_.params());
  Rng shuffle_rng(mix_seed(cfg.seed, "predictor-shuffle"));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(tr.begin(), tr.end(), shuffle_rng);
    for (size_t b0 = 0; b0 < tr.size(); b0 += static_cast<size_t>(cfg.batch_size)) {
      const int nb = static_cast<int>(
          std::min(static_cast<size_t>(cfg.batch_size), tr.size() - b0) );
      Matrix xb(nb, 3);
      VectorXd t(nb), w(nb);
      for (int i = 0; i < nb; ++i) {
        const int r = tr[b0 + static_cast<size_t>(i)];
        xb.row(i) = x_all.row(r);
        t(i) = features.label(r);
        w(i) = features.label(r) == 1 ? w_easy : w_hard;
      }
      const Matrix zb = out.net_.forward(xb, true);
      Matrix grad(nb, 1);
      double loss = 0.0;
      for (int i = 0; i < nb; ++i) {
        const double zi = static_cast<double>(zb(i, 0));
        const double p = 1.0 / (1.0 + std::exp(-zi));
        loss -= w(i) * (t(i) * std::log(std::max(p, kProbFloor)) +
                        (1.0 - t(i)) * std::log(std::max(1.0 - p, kProbFloor)));
        grad(i, 0) = static_cast<Scalar>(w(i) * (p - t(i)) / nb);
      }
      if (!std::isfinite(loss))
        throw std::runtime_error("train_predictor: diverged (non-finite loss)");
      opt.zero_grad();
      out.net_.backward(grad);
      opt.step(cfg.learning_rate, cfg.momentum, cfg.weight_decay);
    }
  }

  if (cfg.threshold_policy == ThresholdPolicy::MatchPrior) {
    // pick the threshold whose easy-rate on the training portion equals the
    // training label prior
    Matrix xt(static_cast<int>(tr.size()), 3);
    for (size_t i = 0; i < tr.size(); ++i)
      xt.row(static_cast<Eigen::Index>(i)) = x_all.row(tr[i]);
    VectorXd p = forward_proba(out.net_, xt, out.calibration_offset_);
    std::vector<double> sorted(p.data(), p.data() + p.size());
    std::sort(sorted.begin(), sorted.end(), std::greater<double>());
    const int k = static_cast<int>(std::lround(tr_easy));
    double thr = k >= static_cast<int>(sorted.size())
                     ? sorted.back()
                     : (k <= 0 ? 1.0 : sorted[static_cast<size_t>(k - 1)]);
    out.threshold_ = std::clamp(thr, 1e-9, 1.0);
  }

  // held-out report
  out.heldout_size_ = n_hold;
  if (n_hold > 0) {
    Matrix xh(n_hold, 3);
    int correct = 0, easy_count = 0;
    for (int i = 0; i < n_hold; ++i) xh.row(i) = x_all.row(hold[static_cast<size_t>(i)]);
    const VectorXd p = forward_proba(out.net_, xh, out.calibration_offset_);
    for (int i = 0; i < n_hold; ++i) {
      const int truth = features.label(hold[static_cast<size_t>(i)]);
      easy_count += truth;
      const int pred = p(i) >= out.threshold_ ? 1 : 0;
      if (pred == truth) ++correct;
    }
    out.heldout_accuracy_ = 100.0 * correct / n_hold;
    out.heldout_prior_ =
        100.0 * std::max(easy_count, n_hold - easy_count) / static_cast<double>(n_hold);
  }
  return out;
}

VectorXd GenLabelPredictor::predict_proba(const FeatureMatrix& features) const {
  if (features.stats.fingerprint != stats_.fingerprint)
    throw std::invalid_argument(
        "predictor: feature stats fingerprint mismatch (features were standardized under "
        "different stats than the predictor was fitted with)");
  return forward_proba(net_, masked_inputs(features.standardized(), cfg_),
                       calibration_offset_);
}

LabelPrediction predict_labels(const GenLabelPredictor& predictor,
                               const FeatureMatrix& features) {
  LabelPrediction out;
  out.probability = predictor.predict_proba(features);
  out.label.resize(out.probability.size());
  double thr = predictor.threshold();
  if (predictor.matches_prior() && out.probability.size() > 0) {
    // rank-based threshold on the scored set: the twin problem's easy rate
    // carries over to the original problem by the ratio-matching argument,
    // and ranking is robust to the residual feature-level shift between the
    // two contexts
    std::vector<double> sorted(out.probability.data(),
                               out.probability.data() + out.probability.size());
    std::sort(sorted.begin(), sorted.end(), std::greater<double>());
    const int k = static_cast<int>(
        std::lround(predictor.prior_rate() * static_cast<double>(sorted.size())));
    thr = k <= 0 ? 1.0
                 : (k >= static_cast<int>(sorted.size()) ? sorted.back()
                                                         : sorted[static_cast<size_t>(k - 1)]);
  }
  for (Eigen::Index i = 0; i < out.probability.size(); ++i)
    out.label(i) = out.probability(i) >= thr ? 1 : 0;
  return out;
}

ForgetPartition partition_forget_set(const DataSplit& split, const LabelPrediction& pred) {
  if (pred.label.size() != split.forget.size())
    throw std::invalid_argument("partition_forget_set: prediction count " +
                                std::to_string(pred.label.size()) + " != forget size " +
                                std::to_string(split.forget.size()));
  ForgetPartition part;
  for (int i = 0; i < split.forget.size(); ++i)
    (pred.label(i) == 1 ? part.easy : part.hard).push_back(i);
  return part;
}

// ---------------------------------------------------------------------------
// Persistence

void GenLabelPredictor::save(const std::string& path) const {
  json j;
  j["threshold"] = threshold_;
  j["threshold_policy"] =
      policy_ == ThresholdPolicy::MatchPrior ? "match-prior" : "fixed";
  j["prior_rate"] = prior_rate_;
  j["calibration_offset"] = calibration_offset_;
  j["seed"] = cfg_.seed;
  j["mask"] = {cfg_.use_nf, cfg_.use_af, cfg_.use_cf};
  j["heldout_accuracy"] = heldout_accuracy_;
  j["heldout_prior"] = heldout_prior_;
  j["heldout_size"] = heldout_size_;
  j["stats"] = {{"mean", std::vector<double>(stats_.mean.data(), stats_.mean.data() + 3)},
                {"stddev", std::vector<double>(stats_.stddev.data(), stats_.stddev.data() + 3)},
                {"fingerprint", stats_.fingerprint}};
  json layers = json::array();
  auto params = const_cast<Network&>(net_).params();
  for (const auto& p : params) {
    json t;
    t["rows"] = p.value->rows();
    t["cols"] = p.value->cols();
    std::vector<double> data;
    data.reserve(static_cast<size_t>(p.value->size()));
    for (Eigen::Index c = 0; c < p.value->cols(); ++c)
      for (Eigen::Index r = 0; r < p.value->rows(); ++r)
        data.push_back(static_cast<double>((*p.value)(r, c)));
    t["data"] = data;
    layers.push_back(t);
  }
  j["params"] = layers;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write predictor: " + path);
  out << j.dump() << "\n";
}

GenLabelPredictor GenLabelPredictor::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read predictor: " + path);
  json j = json::parse(in);

  GenLabelPredictor out;
  out.threshold_ = j.at("threshold").get<double>();
  out.cfg_.threshold = out.threshold_;
  out.policy_ = j.value("threshold_policy", std::string("fixed")) == "match-prior"
                    ? ThresholdPolicy::MatchPrior
                    : ThresholdPolicy::Fixed;
  out.cfg_.threshold_policy = out.policy_;
  out.prior_rate_ = j.value("prior_rate", 0.5);
  out.calibration_offset_ = j.value("calibration_offset", 0.0);
  out.cfg_.seed = j.at("seed").get<uint64_t>();
  out.cfg_.use_nf = j.at("mask")[0].get<bool>();
  out.cfg_.use_af = j.at("mask")[1].get<bool>();
  out.cfg_.use_cf = j.at("mask")[2].get<bool>();
  out.heldout_accuracy_ = j.at("heldout_accuracy").get<double>();
  out.heldout_prior_ = j.at("heldout_prior").get<double>();
  out.heldout_size_ = j.at("heldout_size").get<int>();
  const auto mean = j.at("stats").at("mean").get<std::vector<double>>();
  const auto sd = j.at("stats").at("stddev").get<std::vector<double>>();
  out.stats_.mean = Eigen::Map<const VectorXd>(mean.data(), 3);
  out.stats_.stddev = Eigen::Map<const VectorXd>(sd.data(), 3);
  out.stats_.fingerprint = j.at("stats").at("fingerprint").get<std::string>();

  Rng rng(1);
  out.net_.add(std::make_unique<Dense>(3, 64, rng));
  out.net_.add(std::make_unique<Relu>());
  out.net_.add(std::make_unique<Dense>(64, 32, rng));
  out.net_.add(std::make_unique<Relu>());
  out.net_.add(std::make_unique<Dense>(32, 1, rng));
  auto params = out.net_.params();
  const auto layers = j.at("params");
  if (layers.size() != params.size())
    throw std::runtime_error("predictor file: parameter count mismatch");
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& t = layers[i];
    if (t.at("rows").get<Eigen::Index>() != params[i].value->rows() ||
        t.at("cols").get<Eigen::Index>() != params[i].value->cols())
      throw std::runtime_error("predictor file: tensor shape mismatch");
    const auto data = t.at("data").get<std::vector<double>>();
    size_t idx = 0;
    for (Eigen::Index c = 0; c < params[i].value->cols(); ++c)
      for (Eigen::Index r = 0; r < params[i].value->rows(); ++r)
        (*params[i].value)(r, c) = static_cast<Scalar>(data[idx++]);
  }
  return out;
}

}  // namespace tmu
