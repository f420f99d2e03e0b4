#include "tmu/features.hpp"

#include "fixtures.hpp"

#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>

using namespace tmu;
using testfix::gauss_world;

namespace {

// A model whose penultimate embedding is the input itself: a single Dense
// classifier with hand-set weights. Used where distances or the decision
// boundary must be known analytically.
TrainedModel linear_model(int dim, const Matrix& weight, const Matrix& bias) {
  TrainedModel m;
  m.arch = "linear-probe";
  m.num_classes = static_cast<int>(weight.cols());
  m.input = {1, 1, dim};
  m.seed = 0;
  Rng rng(1);
  auto dense = std::make_unique<Dense>(dim, m.num_classes, rng);
  dense->weight = weight;
  dense->bias = bias;
  m.net.add(std::move(dense));
  return m;
}

LabeledDataset points_dataset(const MatrixXd& pts, int num_classes, int label = 0) {
  LabeledDataset d;
  d.name = "points";
  d.num_classes = num_classes;
  d.height = 1;
  d.width = 1;
  d.channels = static_cast<int>(pts.cols());
  d.images = pts.cast<Scalar>();
  d.labels = VectorXi::Constant(static_cast<int>(pts.rows()), label);
  d.index.resize(static_cast<int>(pts.rows()));
  for (int i = 0; i < d.index.size(); ++i) d.index(i) = i;
  return d;
}

}  // namespace

TEST_CASE("nearest-distance feature equals the brute-force top-5 oracle") {
  const auto& w = gauss_world();
  // 10-sample fixture from the remain pool, all of the forget class
  std::vector<int> rows;
  for (int i = 0; i < w.split.remain.size() && static_cast<int>(rows.size()) < 10; ++i)
    if (w.split.remain.labels(i) == w.split.forget_class) rows.push_back(i);
  REQUIRE(rows.size() == 10);
  const LabeledDataset ref = w.split.remain.take(rows);
  const Matrix x = w.split.forget.images.row(3);

  const double got = nearest_distance_feature(x, ref, w.original);

  // brute force over all pairwise distances
  const Matrix ref_emb = w.original.embeddings(ref.images);
  const Matrix x_emb = w.original.embeddings(x);
  std::vector<double> dist;
  for (int i = 0; i < ref.size(); ++i)
    dist.push_back(
        std::sqrt(static_cast<double>((ref_emb.row(i) - x_emb.row(0)).squaredNorm())));
  std::sort(dist.begin(), dist.end());
  const double expect = (dist[0] + dist[1] + dist[2] + dist[3] + dist[4]) / 5.0;

  CHECK(got == doctest::Approx(expect).epsilon(1e-9));
  CHECK(got >= 0.0);

  SUBCASE("a sample present in its own reference contributes a zero distance") {
    LabeledDataset ref_with_x = ref;
    ref_with_x.images.row(0) = x;
    const double with_self = nearest_distance_feature(x, ref_with_x, w.original);
    const Matrix emb2 = w.original.embeddings(ref_with_x.images);
    std::vector<double> d2;
    for (int i = 0; i < ref_with_x.size(); ++i)
      d2.push_back(static_cast<double>((emb2.row(i) - x_emb.row(0)).norm()));
    std::sort(d2.begin(), d2.end());
    // batched and single-row float GEMM round differently; the self
    // distance is zero up to that noise
    CHECK(d2[0] <= 1e-5);
    CHECK(with_self ==
          doctest::Approx((d2[0] + d2[1] + d2[2] + d2[3] + d2[4]) / 5.0).epsilon(1e-6));
  }
}

TEST_CASE("nearest-distance feature on identical references and small references") {
  // identity embedding via single-layer model in 1-D
  Matrix wgt(1, 2);
  wgt << 1.0f, -1.0f;
  TrainedModel m = linear_model(1, wgt, Matrix::Zero(1, 2));

  MatrixXd ref_pts(5, 1);
  ref_pts << 0.8, 0.8, 0.8, 0.8, 0.8;
  const LabeledDataset ref5 = points_dataset(ref_pts, 2);
  Matrix x(1, 1);
  x << 0.3f;
  // five identical embeddings at distance 0.5
  CHECK(nearest_distance_feature(x, ref5, m) == doctest::Approx(0.5).epsilon(1e-6));

  // fewer than 5 reference samples: falls back to the mean over all
  MatrixXd small(2, 1);
  small << 0.5, 0.9;
  const LabeledDataset ref2 = points_dataset(small, 2);
  CHECK(nearest_distance_feature(x, ref2, m) ==
        doctest::Approx((0.2 + 0.6) / 2.0).epsilon(1e-6));
}

TEST_CASE("top-5 mean never increases when a closer point joins the reference") {
  Matrix wgt(1, 2);
  wgt << 1.0f, -1.0f;
  TrainedModel m = linear_model(1, wgt, Matrix::Zero(1, 2));
  Matrix x(1, 1);
  x << 0.0f;

  Rng rng(77);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    MatrixXd pts(8, 1);
    for (int i = 0; i < 8; ++i) pts(i, 0) = u(rng);
    const LabeledDataset ref = points_dataset(pts, 2);
    const double base = nearest_distance_feature(x, ref, m);

    std::vector<double> d(8);
    for (int i = 0; i < 8; ++i) d[static_cast<size_t>(i)] = pts(i, 0);
    std::sort(d.begin(), d.end());
    const double top5_max = d[4];

    std::uniform_real_distribution<double> closer(0.0, top5_max);
    MatrixXd pts2(9, 1);
    pts2.topRows(8) = pts;
    pts2(8, 0) = closer(rng);
    const LabeledDataset ref2 = points_dataset(pts2, 2);
    CHECK(nearest_distance_feature(x, ref2, m) <= base + 1e-12);
  }
}

TEST_CASE("adversarial feature with zero budget is exactly the clean entropy") {
  const auto& w = gauss_world();
  AttackConfig cfg;
  cfg.epsilon = 0.0;
  const Matrix x = w.split.forget.images.row(0);
  const double af = adversarial_feature(x, w.split.forget.labels(0), w.original, cfg);
  const Matrix probs = softmax_rows(w.original.logits(x));
  CHECK(af == doctest::Approx(entropy_nats(probs.row(0))).epsilon(1e-6));
}

TEST_CASE("adversarial perturbations respect the budget and pixel range") {
  const auto& w = gauss_world();
  AttackConfig cfg;
  cfg.epsilon = 8.0 / 255.0;
  const Matrix x = w.split.forget.images.topRows(20);
  const VectorXi y = w.split.forget.labels.head(20);
  const Matrix adv = pgd_attack(w.original, x, y, cfg);
  CHECK((adv - x).cwiseAbs().maxCoeff() <= cfg.epsilon + 1e-9);
  CHECK(adv.minCoeff() >= 0.0f);
  CHECK(adv.maxCoeff() <= 1.0f);

  // Gibbs inequality: H(s(adv), s(clean)) >= H(s(adv))
  const Matrix pa = softmax_rows(w.original.logits(adv));
  for (int i = 0; i < 5; ++i) {
    const double af = adversarial_feature(x.row(i), y(i), w.original, cfg);
    CHECK(af >= entropy_nats(pa.row(i)) - 1e-9);
  }
}

TEST_CASE("samples near a known linear boundary score higher than far samples") {
  // logits = (a(x0-0.5), -a(x0-0.5)): boundary at x0 = 0.5, distance |x0-0.5|
  const double a = 24.0;
  Matrix wgt(2, 2);
  wgt << static_cast<Scalar>(a), static_cast<Scalar>(-a), 0.0f, 0.0f;
  Matrix bias(1, 2);
  bias << static_cast<Scalar>(-a * 0.5), static_cast<Scalar>(a * 0.5);
  TrainedModel m = linear_model(2, wgt, bias);

  AttackConfig cfg;
  cfg.epsilon = 0.1;
  Matrix near(1, 2), far(1, 2);
  near << 0.55f, 0.3f;  // within epsilon of the boundary
  far << 0.95f, 0.3f;   // far beyond the budget
  const double af_near = adversarial_feature(near, 0, m, cfg);
  const double af_far = adversarial_feature(far, 0, m, cfg);
  CHECK(af_near > af_far);
}

TEST_CASE("swapped cross-entropy orientation flips the argument roles") {
  const auto& w = gauss_world();
  AttackConfig cfg;
  cfg.epsilon = 8.0 / 255.0;
  const Matrix x = w.split.forget.images.row(1);
  const int y = w.split.forget.labels(1);
  const Matrix adv = pgd_attack(w.original, x, VectorXi::Constant(1, y), cfg);
  const Matrix pc = softmax_rows(w.original.logits(x));
  const Matrix pa = softmax_rows(w.original.logits(adv));

  const double direct = adversarial_feature(x, y, w.original, cfg);
  AttackConfig swapped = cfg;
  swapped.swap_ce_orientation = true;
  const double flipped = adversarial_feature(x, y, w.original, swapped);
  CHECK(direct == doctest::Approx(cross_entropy_between(pa.row(0), pc.row(0))).epsilon(1e-9));
  CHECK(flipped == doctest::Approx(cross_entropy_between(pc.row(0), pa.row(0))).epsilon(1e-9));
}

TEST_CASE("curriculum loss of a uniform-logit network is ln K") {
  TrainedModel m = build_model("mlp", {1, 1, 8}, 10, 3);
  auto params = m.net.params();
  params[params.size() - 2].value->setZero();
  params[params.size() - 1].value->setZero();
  Matrix x = Matrix::Constant(1, 8, 0.4f);
  CHECK(curriculum_loss_feature(x, 7, m) == doctest::Approx(std::log(10.0)).epsilon(1e-6));

  // probability ~1 on the true class drives the loss to ~0
  (*params[params.size() - 1].value)(0, 7) = Scalar(60);
  CHECK(curriculum_loss_feature(x, 7, m) < 1e-5);
  CHECK(curriculum_loss_feature(x, 7, m) >= 0.0);
}

TEST_CASE("curriculum model trains on the documented pool composition") {
  const auto& w = gauss_world();
  TwinProblem twin = construct_twin(w.original, w.data.test,
                                    w.split, [] {
                                      TrainConfig c;
                                      c.epochs = 3;
                                      c.lr_milestones = {};
                                      c.batch_size = 16;
                                      return c;
                                    }(), 5);
  const uint64_t seed = 91;
  TrainedModel m_r = train_curriculum_model(w.split, twin.twin_forget, "mlp", {1, 1, 8},
                                            seed, 1, 0.3);

  // expected training set: 30% sample of remain+forget, plus the twin forget set
  const LabeledDataset pool = concat(w.split.remain, w.split.forget);
  const int n_pool = static_cast<int>(std::lround(0.3 * pool.size()));
  LabeledDataset expect =
      resize_to(pool, n_pool, mix_seed(seed, "curriculum-sample"), false);
  expect = concat(expect, twin.twin_forget);
  CHECK(expect.size() == n_pool + twin.twin_forget.size());
  CHECK(m_r.provenance.dataset_fingerprint == dataset_fingerprint(expect));
  CHECK(m_r.provenance.epochs_trained == 1);

  // one epoch on the pool reduces loss versus a fresh initialization
  TrainedModel fresh = build_model("mlp", {1, 1, 8}, 4, mix_seed(seed, "curriculum"));
  CHECK(cross_entropy_mean(m_r.logits(expect.images), expect.labels) <
        cross_entropy_mean(fresh.logits(expect.images), expect.labels));

  // deterministic
  TrainedModel m_r2 = train_curriculum_model(w.split, twin.twin_forget, "mlp", {1, 1, 8},
                                             seed, 1, 0.3);
  CHECK(model_content_hash(m_r) == model_content_hash(m_r2));
}

TEST_CASE("easy samples carry lower curriculum loss than hard ones") {
  const auto& w = gauss_world();
  // gold-model oracle labels on held-out samples
  TrainedModel gold_init = build_model("mlp", {1, 1, 8}, 4, 99);
  TrainConfig cfg;
  cfg.epochs = 15;
  cfg.lr_milestones = {};
  cfg.learning_rate = Scalar(0.05);
  const TrainedModel gold = train(gold_init, w.split.remain, cfg);
  const LabeledDataset probe = resize_to(w.data.test, 120, 3, false);
  const auto labels = label_generalization(gold, probe);

  TrainedModel m_r = train_curriculum_model(w.split, probe, "mlp", {1, 1, 8}, 17, 1, 0.3);
  double easy_sum = 0, hard_sum = 0;
  int easy_n = 0, hard_n = 0;
  for (const auto& l : labels) {
    const double loss =
        curriculum_loss_feature(probe.images.row(l.sample_index),
                                probe.labels(l.sample_index), m_r);
    if (l.easy) {
      easy_sum += loss;
      ++easy_n;
    } else {
      hard_sum += loss;
      ++hard_n;
    }
  }
  REQUIRE(easy_n > 0);
  REQUIRE(hard_n > 0);
  CHECK(easy_sum / easy_n < hard_sum / hard_n);

  // Spearman rank correlation between the loss and gold correctness is
  // negative: harder samples rank higher in loss.
  std::vector<double> losses;
  std::vector<double> correct;
  for (const auto& l : labels) {
    losses.push_back(curriculum_loss_feature(probe.images.row(l.sample_index),
                                             probe.labels(l.sample_index), m_r));
    correct.push_back(l.easy ? 1.0 : 0.0);
  }
  auto ranks = [](const std::vector<double>& v) {
    std::vector<int> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (size_t i = 0; i < order.size(); ++i) r[order[i]] = static_cast<double>(i);
    return r;
  };
  const auto rl = ranks(losses);
  const auto rc = ranks(correct);
  double ml = 0, mc = 0;
  for (size_t i = 0; i < rl.size(); ++i) {
    ml += rl[i];
    mc += rc[i];
  }
  ml /= rl.size();
  mc /= rc.size();
  double cov = 0, vl = 0, vc = 0;
  for (size_t i = 0; i < rl.size(); ++i) {
    cov += (rl[i] - ml) * (rc[i] - mc);
    vl += (rl[i] - ml) * (rl[i] - ml);
    vc += (rc[i] - mc) * (rc[i] - mc);
  }
  CHECK(cov / std::sqrt(vl * vc) < 0.0);
}

TEST_CASE("feature extraction is reproducible, nonnegative, and stats behave") {
  const auto& w = gauss_world();
  TrainedModel m_r = train_curriculum_model(w.split, w.split.forget, "mlp", {1, 1, 8}, 3, 1);
  AttackConfig atk;
  atk.epsilon = 8.0 / 255.0;
  FeatureContext ctx{&w.original, &m_r, &w.split.remain, atk};

  const FeatureMatrix fm = extract_feature_matrix(w.split.forget, ctx);
  CHECK(fm.rows() == w.split.forget.size());
  CHECK(fm.raw.allFinite());
  CHECK(fm.raw.minCoeff() >= 0.0);

  // standardized fitting population has mean 0, std 1
  const MatrixXd z = fm.stats.apply(fm.raw);
  for (int j = 0; j < 3; ++j) {
    CHECK(std::abs(z.col(j).mean()) < 1e-6);
    CHECK(std::abs(std::sqrt((z.col(j).array() - z.col(j).mean()).square().mean()) - 1.0) <
          1e-6);
  }

  // refitting on identical inputs reproduces identical matrices
  const FeatureMatrix fm2 = extract_feature_matrix(w.split.forget, ctx);
  CHECK(fm.raw == fm2.raw);
  CHECK(fm.stats.fingerprint == fm2.stats.fingerprint);
  CHECK(fm.context_fingerprint == fm2.context_fingerprint);

  // transfer-time standardization reuses the stored stats verbatim
  const FeatureMatrix ft = extract_feature_matrix(w.split.forget, ctx, &fm.stats);
  CHECK(ft.stats.fingerprint == fm.stats.fingerprint);
  CHECK(ft.stats.mean == fm.stats.mean);
}

TEST_CASE("feature matrices persist bit-exactly") {
  const auto& w = gauss_world();
  TrainedModel m_r = train_curriculum_model(w.split, w.split.forget, "mlp", {1, 1, 8}, 3, 1);
  AttackConfig atk;
  FeatureContext ctx{&w.original, &m_r, &w.split.remain, atk};
  FeatureMatrix fm = extract_feature_matrix(w.split.forget, ctx);
  fm.label.setConstant(1);
  fm.label(2) = 0;

  const auto dir = testfix::fresh_dir("features");
  const std::string path = (dir / "features.txt").string();
  save_feature_matrix(fm, path);
  const FeatureMatrix re = load_feature_matrix(path);

  CHECK(re.raw == fm.raw);  // bit-exact doubles
  CHECK(re.index == fm.index);
  CHECK(re.label == fm.label);
  CHECK(re.stats.mean == fm.stats.mean);
  CHECK(re.stats.stddev == fm.stats.stddev);
  CHECK(re.stats.fingerprint == fm.stats.fingerprint);
  CHECK(re.context_fingerprint == fm.context_fingerprint);

  // deterministic re-save is byte-identical
  save_feature_matrix(re, (dir / "features2.txt").string());
  std::ifstream a(path), b((dir / "features2.txt").string());
  std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);
}
