#include "tmu/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;
using nlohmann::json;

namespace tmu {

LabeledDataset LabeledDataset::take(const std::vector<int>& rows) const {
  LabeledDataset out;
  out.name = name;
  out.num_classes = num_classes;
  out.height = height;
  out.width = width;
  out.channels = channels;
  out.images.resize(static_cast<Eigen::Index>(rows.size()), images.cols());
  out.labels.resize(static_cast<Eigen::Index>(rows.size()));
  out.index.resize(static_cast<Eigen::Index>(rows.size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    out.images.row(static_cast<Eigen::Index>(i)) = images.row(rows[i]);
    out.labels(static_cast<Eigen::Index>(i)) = labels(rows[i]);
    out.index(static_cast<Eigen::Index>(i)) = index(rows[i]);
  }
  return out;
}

void LabeledDataset::validate() const {
  if (images.rows() != labels.size() || images.rows() != index.size())
    throw std::runtime_error("dataset: row/label/index count mismatch");
  if (images.cols() != dim()) throw std::runtime_error("dataset: dim mismatch with shape");
  for (Eigen::Index i = 0; i < labels.size(); ++i)
    if (labels(i) < 0 || labels(i) >= num_classes)
      throw std::runtime_error("dataset: label out of range");
}

namespace {

std::map<std::string, std::string> parse_params(const std::string& spec) {
  std::map<std::string, std::string> out;
  std::stringstream ss(spec);
  std::string kv;
  while (std::getline(ss, kv, ',')) {
    auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
      throw std::invalid_argument("bad dataset parameter: " + kv);
    out[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  return out;
}

int param_int(const std::map<std::string, std::string>& p, const std::string& k, int dflt) {
  auto it = p.find(k);
  return it == p.end() ? dflt : std::stoi(it->second);
}

double param_double(const std::map<std::string, std::string>& p, const std::string& k,
                    double dflt) {
  auto it = p.find(k);
  return it == p.end() ? dflt : std::stod(it->second);
}

std::vector<char> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("missing dataset file: " + path.string());
  in.seekg(0, std::ios::end);
  std::vector<char> buf(static_cast<size_t>(in.tellg()));
  in.seekg(0);
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  return buf;
}

// CIFAR binary record: [label bytes...][3072 bytes, R/G/B planes row-major].
void append_cifar_records(const std::vector<char>& buf, int label_bytes, int label_offset,
                          int num_classes, const fs::path& origin, LabeledDataset& ds,
                          std::vector<Scalar>& pixels, std::vector<int>& labels) {
  const size_t rec = static_cast<size_t>(label_bytes) + 3072;
  if (buf.size() % rec != 0)
    throw std::runtime_error("corrupt dataset file (size mismatch): " + origin.string());
  const size_t n = buf.size() / rec;
  for (size_t i = 0; i < n; ++i) {
    const auto* r = reinterpret_cast<const unsigned char*>(buf.data() + i * rec);
    const int label = r[label_offset];
    if (label >= num_classes)
      throw std::runtime_error("corrupt dataset file (label out of range): " + origin.string());
    labels.push_back(label);
    for (int j = 0; j < 3072; ++j)
      pixels.push_back(static_cast<Scalar>(r[label_bytes + j]) / Scalar(255));
  }
  (void)ds;
}

LabeledDataset finish_cifar(std::vector<Scalar>& pixels, std::vector<int>& labels,
                            const std::string& name, int num_classes, int index_base = 0) {
  LabeledDataset ds;
  ds.name = name;
  ds.num_classes = num_classes;
  ds.channels = 3;
  ds.height = 32;
  ds.width = 32;
  const int n = static_cast<int>(labels.size());
  ds.images.resize(n, 3072);
  ds.labels.resize(n);
  ds.index.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 3072; ++j) ds.images(i, j) = pixels[static_cast<size_t>(i) * 3072 + j];
    ds.labels(i) = labels[static_cast<size_t>(i)];
    ds.index(i) = index_base + i;
  }
  return ds;
}

fs::path locate(const fs::path& root, const std::string& subdir, const std::string& file) {
  if (fs::exists(root / subdir / file)) return root / subdir / file;
  if (fs::exists(root / file)) return root / file;
  throw std::runtime_error("missing dataset file: " + (root / subdir / file).string());
}

DatasetPair load_cifar10(const std::string& root) {
  std::vector<Scalar> px;
  std::vector<int> lb;
  LabeledDataset scratch;
  for (int b = 1; b <= 5; ++b) {
    const auto path =
        locate(root, "cifar-10-batches-bin", "data_batch_" + std::to_string(b) + ".bin");
    auto buf = read_file(path);
    append_cifar_records(buf, 1, 0, 10, path, scratch, px, lb);
  }
  DatasetPair pair;
  pair.train = finish_cifar(px, lb, "cifar10-train", 10);
  px.clear();
  lb.clear();
  const auto tpath = locate(root, "cifar-10-batches-bin", "test_batch.bin");
  auto tbuf = read_file(tpath);
  append_cifar_records(tbuf, 1, 0, 10, tpath, scratch, px, lb);
  pair.test = finish_cifar(px, lb, "cifar10-test", 10, pair.train.size());
  return pair;
}

DatasetPair load_cifar100(const std::string& root) {
  std::vector<Scalar> px;
  std::vector<int> lb;
  LabeledDataset scratch;
  const auto path = locate(root, "cifar-100-binary", "train.bin");
  auto buf = read_file(path);
  append_cifar_records(buf, 2, 1, 100, path, scratch, px, lb);
  DatasetPair pair;
  pair.train = finish_cifar(px, lb, "cifar100-train", 100);
  px.clear();
  lb.clear();
  const auto tpath = locate(root, "cifar-100-binary", "test.bin");
  auto tbuf = read_file(tpath);
  append_cifar_records(tbuf, 2, 1, 100, tpath, scratch, px, lb);
  pair.test = finish_cifar(px, lb, "cifar100-test", 100, pair.train.size());
  return pair;
}

// Class means on a sphere of radius 0.3 around the cube center, drawn once
// and shared by the train and test portions.
Matrix gauss_means(int classes, int dim, Rng& rng) {
  Matrix means(classes, dim);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int k = 0; k < classes; ++k) {
    if (dim == 2) {
      const double th = 2.0 * std::numbers::pi * k / classes;
      means(k, 0) = Scalar(0.5 + 0.3 * std::cos(th));
      means(k, 1) = Scalar(0.5 + 0.3 * std::sin(th));
    } else {
      VectorXd u(dim);
      for (int j = 0; j < dim; ++j) u(j) = gauss(rng);
      u.normalize();
      for (int j = 0; j < dim; ++j) means(k, j) = Scalar(0.5 + 0.3 * u(j));
    }
  }
  return means;
}

LabeledDataset make_gauss(const std::string& name, const Matrix& means, int n, double sigma,
                          Rng& rng) {
  const int classes = static_cast<int>(means.rows());
  const int dim = static_cast<int>(means.cols());
  LabeledDataset ds;
  ds.name = name;
  ds.num_classes = classes;
  ds.channels = dim;
  ds.height = 1;
  ds.width = 1;
  ds.images.resize(n, dim);
  ds.labels.resize(n);
  ds.index.resize(n);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    const int k = i % classes;
    for (int j = 0; j < dim; ++j) {
      const double v = means(k, j) + sigma * gauss(rng);
      ds.images(i, j) = static_cast<Scalar>(std::clamp(v, 0.0, 1.0));
    }
    ds.labels(i) = k;
    ds.index(i) = i;
  }
  return ds;
}

// Procedural image classes: one smooth template per class (bilinear upsample
// of a coarse random field), samples drawn as template + per-pixel noise.
// A configurable fraction of samples is generated part-way toward another
// class's template, which makes them genuinely ambiguous: a model that never
// saw them tends to misclassify them, while a model that trained on them can
// memorize them through the pixel noise.
struct ImageGenCfg {
  int classes = 10;
  int hw = 16;
  double noise = 0.16;
  double ambig = 0.30;
  double mix_lo = 0.25;
  double mix_hi = 0.55;
  double amp = 0.35;
};

Matrix make_templates(const ImageGenCfg& g, Rng& rng) {
  const int coarse = 4;
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix tmpl(g.classes, 3 * g.hw * g.hw);
  for (int k = 0; k < g.classes; ++k) {
    for (int c = 0; c < 3; ++c) {
      double grid[coarse][coarse];
      for (int a = 0; a < coarse; ++a)
        for (int b = 0; b < coarse; ++b) grid[a][b] = gauss(rng);
      for (int y = 0; y < g.hw; ++y) {
        for (int x = 0; x < g.hw; ++x) {
          const double fy = static_cast<double>(y) / g.hw * (coarse - 1);
          const double fx = static_cast<double>(x) / g.hw * (coarse - 1);
          const int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
          const int y1 = std::min(y0 + 1, coarse - 1), x1 = std::min(x0 + 1, coarse - 1);
          const double wy = fy - y0, wx = fx - x0;
          const double v = grid[y0][x0] * (1 - wy) * (1 - wx) + grid[y1][x0] * wy * (1 - wx) +
                           grid[y0][x1] * (1 - wy) * wx + grid[y1][x1] * wy * wx;
          tmpl(k, (c * g.hw + y) * g.hw + x) = static_cast<Scalar>(v * g.amp);
        }
      }
    }
  }
  return tmpl;
}

LabeledDataset make_image_set(const std::string& name, const ImageGenCfg& g, const Matrix& tmpl,
                              int n, int index_base, Rng& rng) {
  LabeledDataset ds;
  ds.name = name;
  ds.num_classes = g.classes;
  ds.channels = 3;
  ds.height = g.hw;
  ds.width = g.hw;
  const int d = 3 * g.hw * g.hw;
  ds.images.resize(n, d);
  ds.labels.resize(n);
  ds.index.resize(n);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    const int k = i % g.classes;
    double m = 0.0;
    int other = k;
    if (unif(rng) < g.ambig) {
      m = g.mix_lo + (g.mix_hi - g.mix_lo) * unif(rng);
      other = static_cast<int>(unif(rng) * (g.classes - 1));
      if (other >= k) ++other;
    } else {
      m = 0.10 * unif(rng);
      other = static_cast<int>(unif(rng) * (g.classes - 1));
      if (other >= k) ++other;
    }
    for (int j = 0; j < d; ++j) {
      const double base = (1.0 - m) * tmpl(k, j) + m * tmpl(other, j);
      const double v = 0.5 + base + g.noise * gauss(rng);
      ds.images(i, j) = static_cast<Scalar>(std::clamp(v, 0.0, 1.0));
    }
    ds.labels(i) = k;
    ds.index(i) = index_base + i;
  }
  return ds;
}

LabeledDataset subsample_train(const LabeledDataset& train, int subset, uint64_t seed) {
  if (subset <= 0 || subset >= train.size()) return train;
  std::vector<int> idx(static_cast<size_t>(train.size()));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(mix_seed(seed, "subset"));
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<size_t>(subset));
  std::sort(idx.begin(), idx.end());
  return train.take(idx);
}

}  // namespace

DatasetPair load_dataset(const std::string& name, const std::string& root) {
  std::string base = name;
  std::map<std::string, std::string> params;
  if (auto colon = name.find(':'); colon != std::string::npos) {
    base = name.substr(0, colon);
    params = parse_params(name.substr(colon + 1));
  }

  if (base == "cifar10" || base == "cifar100") {
    DatasetPair pair = base == "cifar10" ? load_cifar10(root) : load_cifar100(root);
    const int subset = param_int(params, "subset", 0);
    pair.train = subsample_train(pair.train, subset, param_int(params, "seed", 1));
    return pair;
  }

  if (base == "synthetic-gauss") {
    const int classes = param_int(params, "classes", 2);
    const int dim = param_int(params, "dim", 2);
    const int n_train = param_int(params, "train", 1200);
    const int n_test = param_int(params, "test", 400);
    const double sigma = param_double(params, "sigma", 0.25);
    const uint64_t seed = static_cast<uint64_t>(param_int(params, "seed", 1234));
    Rng rng(mix_seed(seed, "synthetic-gauss"));
    const Matrix means = gauss_means(classes, dim, rng);
    DatasetPair pair;
    pair.train = make_gauss(name + "-train", means, n_train, sigma, rng);
    pair.test = make_gauss(name + "-test", means, n_test, sigma, rng);
    for (int i = 0; i < pair.test.size(); ++i) pair.test.index(i) += n_train;
    return pair;
  }

  if (base == "synthetic-image") {
    ImageGenCfg g;
    g.classes = param_int(params, "classes", 10);
    g.hw = param_int(params, "hw", 16);
    g.noise = param_double(params, "noise", 0.16);
    g.ambig = param_double(params, "ambig", 0.30);
    g.mix_lo = param_double(params, "mixlo", 0.25);
    g.mix_hi = param_double(params, "mixhi", 0.55);
    g.amp = param_double(params, "amp", 0.35);
    const int n_train = param_int(params, "train", 6000);
    const int n_test = param_int(params, "test", 1600);
    const uint64_t seed = static_cast<uint64_t>(param_int(params, "seed", 7));
    Rng rng(mix_seed(seed, "synthetic-image"));
    const Matrix tmpl = make_templates(g, rng);
    DatasetPair pair;
    pair.train = make_image_set(name + "-train", g, tmpl, n_train, 0, rng);
    pair.test = make_image_set(name + "-test", g, tmpl, n_test, n_train, rng);
    return pair;
  }

  throw std::invalid_argument(
      "unknown dataset: " + name +
      " (registered: cifar10, cifar100, synthetic-gauss, synthetic-image)");
}

DataSplit make_removal_split(const LabeledDataset& train, int forget_class, int n_forget,
                             uint64_t seed, const LabeledDataset* test) {
  if (forget_class < 0 || forget_class >= train.num_classes)
    throw std::invalid_argument("make_removal_split: invalid class index " +
                                std::to_string(forget_class));
  std::vector<int> class_rows;
  for (int i = 0; i < train.size(); ++i)
    if (train.labels(i) == forget_class) class_rows.push_back(i);
  if (n_forget >= static_cast<int>(class_rows.size()))
    throw std::invalid_argument(
        "make_removal_split: n_forget >= class population (forgetting an entire class is out "
        "of scope)");
  if (n_forget < 0) throw std::invalid_argument("make_removal_split: negative n_forget");

  Rng rng(mix_seed(seed, "removal-split"));
  std::shuffle(class_rows.begin(), class_rows.end(), rng);
  std::vector<int> forget_rows(class_rows.begin(), class_rows.begin() + n_forget);
  std::sort(forget_rows.begin(), forget_rows.end());

  std::vector<char> is_forget(static_cast<size_t>(train.size()), 0);
  for (int r : forget_rows) is_forget[static_cast<size_t>(r)] = 1;
  std::vector<int> remain_rows;
  remain_rows.reserve(static_cast<size_t>(train.size() - n_forget));
  for (int i = 0; i < train.size(); ++i)
    if (!is_forget[static_cast<size_t>(i)]) remain_rows.push_back(i);

  DataSplit split;
  split.remain = train.take(remain_rows);
  split.forget = train.take(forget_rows);
  if (test) split.test = *test;
  split.forget_class = forget_class;
  split.seed = seed;
  return split;
}

namespace {
long round_half_even(double v) {
  const double f = std::floor(v);
  const double frac = v - f;
  if (frac > 0.5) return static_cast<long>(f) + 1;
  if (frac < 0.5) return static_cast<long>(f);
  const long fl = static_cast<long>(f);
  return (fl % 2 == 0) ? fl : fl + 1;
}
}  // namespace

long size_twin_forget_set(long n_remain, long n_forget) {
  if (n_remain <= 0) throw std::invalid_argument("size_twin_forget_set: n_remain must be > 0");
  if (n_forget == 0) return 0;
  const double v = static_cast<double>(n_forget) *
                   static_cast<double>(n_remain + n_forget) / static_cast<double>(n_remain);
  return round_half_even(v);
}

TwinSizing twin_sizing(long n_remain, long n_forget) {
  TwinSizing s;
  s.n_remain = n_remain;
  s.n_forget = n_forget;
  s.n_twin_forget = size_twin_forget_set(n_remain, n_forget);
  s.ratio_original = static_cast<double>(n_forget) / static_cast<double>(n_remain);
  s.ratio_twin =
      static_cast<double>(s.n_twin_forget) / static_cast<double>(n_remain + n_forget);
  return s;
}

namespace {

// Random horizontal flip plus zero-pad-4 random crop, labels preserved.
void augment_row(const LabeledDataset& src, int row, Rng& rng, Matrix& dst, int dst_row) {
  const int H = src.height, W = src.width, C = src.channels;
  if (H < 2 || W < 2) {  // degenerate spatial dims: plain copy
    dst.row(dst_row) = src.images.row(row);
    return;
  }
  const int pad = 4;
  std::uniform_int_distribution<int> dx(-pad, pad), dy(-pad, pad);
  std::uniform_int_distribution<int> coin(0, 1);
  const bool flip = coin(rng) == 1;
  const int ox = dx(rng), oy = dy(rng);
  for (int c = 0; c < C; ++c) {
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const int sx0 = flip ? (W - 1 - x) : x;
        const int sy = y + oy, sx = sx0 + ox;
        Scalar v = Scalar(0);
        if (sy >= 0 && sy < H && sx >= 0 && sx < W) v = src.images(row, (c * H + sy) * W + sx);
        dst(dst_row, (c * H + y) * W + x) = v;
      }
    }
  }
}

}  // namespace

LabeledDataset resize_to(const LabeledDataset& dataset, int n, uint64_t seed, bool augment) {
  if (n < 0) throw std::invalid_argument("resize_to: negative size");
  if (n <= dataset.size()) {
    std::vector<int> idx(static_cast<size_t>(dataset.size()));
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(mix_seed(seed, "resize-sub"));
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(static_cast<size_t>(n));
    std::sort(idx.begin(), idx.end());
    return dataset.take(idx);
  }
  if (!augment)
    throw std::invalid_argument("resize_to: n exceeds dataset size and augmentation is off");

  LabeledDataset out;
  out.name = dataset.name + "-augmented";
  out.num_classes = dataset.num_classes;
  out.height = dataset.height;
  out.width = dataset.width;
  out.channels = dataset.channels;
  out.images.resize(n, dataset.dim());
  out.labels.resize(n);
  out.index.resize(n);
  out.images.topRows(dataset.size()) = dataset.images;
  out.labels.head(dataset.size()) = dataset.labels;
  out.index.head(dataset.size()) = dataset.index;

  Rng rng(mix_seed(seed, "resize-aug"));
  std::vector<int> order(static_cast<size_t>(dataset.size()));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  for (int i = dataset.size(); i < n; ++i) {
    const int src = order[static_cast<size_t>(i - dataset.size()) % order.size()];
    augment_row(dataset, src, rng, out.images, i);
    out.labels(i) = dataset.labels(src);
    out.index(i) = dataset.index(src);
  }
  return out;
}

LabeledDataset concat(const LabeledDataset& a, const LabeledDataset& b) {
  if (a.size() == 0) return b;
  if (b.size() == 0) return a;
  if (a.dim() != b.dim() || a.num_classes != b.num_classes)
    throw std::invalid_argument("concat: incompatible datasets");
  LabeledDataset out = a;
  out.images.conservativeResize(a.size() + b.size(), Eigen::NoChange);
  out.labels.conservativeResize(a.size() + b.size());
  out.index.conservativeResize(a.size() + b.size());
  out.images.bottomRows(b.size()) = b.images;
  out.labels.tail(b.size()) = b.labels;
  out.index.tail(b.size()) = b.index;
  return out;
}

std::string dataset_fingerprint(const LabeledDataset& d) {
  ContentHash h;
  h.update(d.name);
  h.update_pod(d.num_classes);
  h.update_pod(d.height);
  h.update_pod(d.width);
  h.update_pod(d.channels);
  h.update_matrix(d.labels);
  h.update_matrix(d.index);
  h.update_matrix(d.images);
  return h.hex();
}

void save_split_manifest(const DataSplit& split, const std::string& path) {
  json j;
  j["seed"] = split.seed;
  j["forget_class"] = split.forget_class;
  std::vector<int> fi(split.forget.index.data(),
                      split.forget.index.data() + split.forget.index.size());
  j["forget_indices"] = fi;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write split manifest: " + path);
  out << j.dump(2) << "\n";
}

DataSplit load_split_manifest(const LabeledDataset& train, const std::string& path,
                              const LabeledDataset* test) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read split manifest: " + path);
  json j = json::parse(in);
  const auto forget_ids = j.at("forget_indices").get<std::vector<int>>();
  std::map<int, int> id_to_row;
  for (int i = 0; i < train.size(); ++i) id_to_row[train.index(i)] = i;
  std::vector<int> forget_rows;
  forget_rows.reserve(forget_ids.size());
  for (int id : forget_ids) {
    auto it = id_to_row.find(id);
    if (it == id_to_row.end())
      throw std::runtime_error("split manifest references unknown sample id " +
                               std::to_string(id));
    forget_rows.push_back(it->second);
  }
  std::sort(forget_rows.begin(), forget_rows.end());
  std::vector<char> is_forget(static_cast<size_t>(train.size()), 0);
  for (int r : forget_rows) is_forget[static_cast<size_t>(r)] = 1;
  std::vector<int> remain_rows;
  for (int i = 0; i < train.size(); ++i)
    if (!is_forget[static_cast<size_t>(i)]) remain_rows.push_back(i);

  DataSplit split;
  split.remain = train.take(remain_rows);
  split.forget = train.take(forget_rows);
  if (test) split.test = *test;
  split.forget_class = j.at("forget_class").get<int>();
  split.seed = j.at("seed").get<uint64_t>();
  return split;
}

}  // namespace tmu
