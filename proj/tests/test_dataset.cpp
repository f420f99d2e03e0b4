#include "tmu/dataset.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

using namespace tmu;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  auto p = fs::temp_directory_path() / ("tmu_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Write a CIFAR-10-format batch: n records of [label][3072 pixel bytes].
void write_cifar10_batch(const fs::path& path, int n, int label_offset) {
  std::ofstream out(path, std::ios::binary);
  for (int i = 0; i < n; ++i) {
    const unsigned char label = static_cast<unsigned char>((i + label_offset) % 10);
    out.put(static_cast<char>(label));
    for (int j = 0; j < 3072; ++j)
      out.put(static_cast<char>((i * 31 + j * 7 + label_offset) % 256));
  }
}

}  // namespace

TEST_CASE("synthetic gaussian fixture has documented shape and is deterministic") {
  auto pair = load_dataset("synthetic-gauss", "");
  CHECK(pair.train.size() == 1200);
  CHECK(pair.test.size() == 400);
  CHECK(pair.train.num_classes == 2);
  CHECK(pair.train.dim() == 2);
  pair.train.validate();
  CHECK(pair.train.images.minCoeff() >= 0.0f);
  CHECK(pair.train.images.maxCoeff() <= 1.0f);

  auto again = load_dataset("synthetic-gauss", "");
  CHECK(dataset_fingerprint(pair.train) == dataset_fingerprint(again.train));
  CHECK(dataset_fingerprint(pair.test) == dataset_fingerprint(again.test));

  auto other_seed = load_dataset("synthetic-gauss:seed=99", "");
  CHECK(dataset_fingerprint(pair.train) != dataset_fingerprint(other_seed.train));
}

TEST_CASE("synthetic image fixture shape and parameter parsing") {
  auto pair = load_dataset("synthetic-image:classes=4,hw=8,train=80,test=40,seed=3", "");
  CHECK(pair.train.size() == 80);
  CHECK(pair.test.size() == 40);
  CHECK(pair.train.num_classes == 4);
  CHECK(pair.train.channels == 3);
  CHECK(pair.train.height == 8);
  CHECK(pair.train.dim() == 192);
  pair.train.validate();
  pair.test.validate();
  CHECK(pair.train.images.minCoeff() >= 0.0f);
  CHECK(pair.train.images.maxCoeff() <= 1.0f);
  // train/test index ranges are disjoint
  CHECK(pair.test.index.minCoeff() >= 80);
}

TEST_CASE("unknown dataset name is rejected") {
  CHECK_THROWS_AS(load_dataset("mnist", ""), std::invalid_argument);
  CHECK_THROWS_AS(load_dataset("synthetic-gauss:classes", ""), std::invalid_argument);
}

TEST_CASE("cifar10 binary format loads, validates and subsets") {
  const auto root = temp_dir("cifar10");
  fs::create_directories(root / "cifar-10-batches-bin");
  for (int b = 1; b <= 5; ++b)
    write_cifar10_batch(root / "cifar-10-batches-bin" / ("data_batch_" + std::to_string(b) + ".bin"),
                        12, b);
  write_cifar10_batch(root / "cifar-10-batches-bin" / "test_batch.bin", 6, 0);

  auto pair = load_dataset("cifar10", root.string());
  CHECK(pair.train.size() == 60);
  CHECK(pair.test.size() == 6);
  CHECK(pair.train.num_classes == 10);
  CHECK(pair.train.height == 32);
  CHECK(pair.train.dim() == 3072);
  pair.train.validate();
  // first pixel of first record of batch 1: (0*31 + 0*7 + 1) % 256 = 1
  CHECK(pair.train.images(0, 0) == doctest::Approx(1.0 / 255.0));

  auto sub = load_dataset("cifar10:subset=20", root.string());
  CHECK(sub.train.size() == 20);
  CHECK(sub.test.size() == 6);

  SUBCASE("truncated file is reported as corrupt") {
    fs::resize_file(root / "cifar-10-batches-bin" / "data_batch_3.bin", 3073 * 12 - 1);
    CHECK_THROWS_WITH_AS(load_dataset("cifar10", root.string()),
                         doctest::Contains("corrupt"), std::runtime_error);
  }
  SUBCASE("missing file is reported") {
    fs::remove(root / "cifar-10-batches-bin" / "test_batch.bin");
    CHECK_THROWS_WITH_AS(load_dataset("cifar10", root.string()),
                         doctest::Contains("missing"), std::runtime_error);
  }
  SUBCASE("out-of-range label byte is reported as corrupt") {
    std::fstream f(root / "cifar-10-batches-bin" / "data_batch_1.bin",
                   std::ios::in | std::ios::out | std::ios::binary);
    f.put(static_cast<char>(200));
    f.close();
    CHECK_THROWS_WITH_AS(load_dataset("cifar10", root.string()),
                         doctest::Contains("corrupt"), std::runtime_error);
  }
}

TEST_CASE("cifar100 binary format uses the fine label byte") {
  const auto root = temp_dir("cifar100");
  fs::create_directories(root / "cifar-100-binary");
  auto write100 = [](const fs::path& path, int n) {
    std::ofstream out(path, std::ios::binary);
    for (int i = 0; i < n; ++i) {
      out.put(static_cast<char>(i % 20));   // coarse
      out.put(static_cast<char>(i % 100));  // fine
      for (int j = 0; j < 3072; ++j) out.put(static_cast<char>(j % 256));
    }
  };
  write100(root / "cifar-100-binary" / "train.bin", 7);
  write100(root / "cifar-100-binary" / "test.bin", 3);
  auto pair = load_dataset("cifar100", root.string());
  CHECK(pair.train.size() == 7);
  CHECK(pair.train.num_classes == 100);
  CHECK(pair.train.labels(5) == 5);
}

TEST_CASE("removal split invariants") {
  auto pair = load_dataset("synthetic-gauss:classes=5,dim=3,train=500,test=100,seed=21", "");
  const int k = 2;
  DataSplit split = make_removal_split(pair.train, k, 30, 77, &pair.test);

  CHECK(split.forget.size() == 30);
  CHECK(split.remain.size() == 470);
  CHECK(split.forget_class == k);
  for (int i = 0; i < split.forget.size(); ++i) CHECK(split.forget.labels(i) == k);

  std::set<int> remain_ids(split.remain.index.data(),
                           split.remain.index.data() + split.remain.index.size());
  std::set<int> forget_ids(split.forget.index.data(),
                           split.forget.index.data() + split.forget.index.size());
  std::set<int> both;
  std::set_intersection(remain_ids.begin(), remain_ids.end(), forget_ids.begin(),
                        forget_ids.end(), std::inserter(both, both.begin()));
  CHECK(both.empty());
  std::set<int> all_ids(pair.train.index.data(),
                        pair.train.index.data() + pair.train.index.size());
  std::set<int> unioned = remain_ids;
  unioned.insert(forget_ids.begin(), forget_ids.end());
  CHECK(unioned == all_ids);

  SUBCASE("same seed reproduces the identical index set") {
    DataSplit split2 = make_removal_split(pair.train, k, 30, 77);
    CHECK(split.forget.index == split2.forget.index);
    DataSplit split3 = make_removal_split(pair.train, k, 30, 78);
    CHECK(split.forget.index != split3.forget.index);
  }
  SUBCASE("forgetting the whole class population is rejected") {
    CHECK_THROWS_AS(make_removal_split(pair.train, k, 100, 1), std::invalid_argument);
    CHECK_THROWS_AS(make_removal_split(pair.train, -1, 5, 1), std::invalid_argument);
    CHECK_THROWS_AS(make_removal_split(pair.train, 5, 5, 1), std::invalid_argument);
  }
}

TEST_CASE("twin forget-set sizing matches the arithmetic oracle") {
  // round(100 * 50000 / 49900) = round(100.2004) = 100
  CHECK(size_twin_forget_set(49900, 100) == 100);
  // round(500 * 50000 / 49500) = round(505.05) = 505
  CHECK(size_twin_forget_set(49500, 500) == 505);
  CHECK(size_twin_forget_set(1234, 0) == 0);
  CHECK_THROWS_AS(size_twin_forget_set(0, 10), std::invalid_argument);

  SUBCASE("round-half-to-even at exact .5") {
    // 3 * (8+3) / 8 = 4.125 -> 4 ; construct an exact .5: 1*(4+1)/4 = 1.25 -> 1
    // n_f*(n_r+n_f)/n_r = 2.5 when n_f=2, n_r=8: 2*10/8 = 2.5 -> 2 (even)
    CHECK(size_twin_forget_set(8, 2) == 2);
    // 7.5 when n_f=6, n_r=24: 6*30/24 = 7.5 -> 8 (even)
    CHECK(size_twin_forget_set(24, 6) == 8);
  }
}

TEST_CASE("ratio slack invariant holds over 1000 random sizings") {
  Rng rng(123);
  std::uniform_int_distribution<long> forget_d(1, 5000);
  for (int trial = 0; trial < 1000; ++trial) {
    const long n_f = forget_d(rng);
    std::uniform_int_distribution<long> remain_d(n_f, 100 * n_f);
    const long n_r = remain_d(rng);
    const TwinSizing s = twin_sizing(n_r, n_f);
    const double slack = 1.0 / static_cast<double>(n_r + n_f);
    CHECK(std::abs(s.ratio_twin - s.ratio_original) <= slack + 1e-15);
  }
}

TEST_CASE("resize_to subsamples or augments to the requested size") {
  auto pair = load_dataset("synthetic-image:classes=3,hw=8,train=50,test=30,seed=5", "");

  SUBCASE("subsample branch") {
    LabeledDataset sub = resize_to(pair.test, 10, 9, false);
    CHECK(sub.size() == 10);
    std::set<int> ids(sub.index.data(), sub.index.data() + sub.index.size());
    CHECK(ids.size() == 10);
    LabeledDataset sub2 = resize_to(pair.test, 10, 9, true);
    CHECK(sub.index == sub2.index);
  }
  SUBCASE("augmentation branch produces originals plus augmented copies") {
    LabeledDataset big = resize_to(pair.train, 120, 9, true);
    CHECK(big.size() == 120);
    // first 50 rows are the untouched originals
    CHECK(big.images.topRows(50) == pair.train.images);
    // augmented rows preserve the label of their source sample
    for (int i = 50; i < 120; ++i) {
      const int src_id = big.index(i);
      CHECK(big.labels(i) == pair.train.labels(src_id));
    }
    CHECK(big.images.minCoeff() >= 0.0f);
    CHECK(big.images.maxCoeff() <= 1.0f);
  }
  SUBCASE("oversizing without augmentation is an error") {
    CHECK_THROWS_AS(resize_to(pair.train, 51, 9, false), std::invalid_argument);
  }
  SUBCASE("deterministic under fixed seed") {
    LabeledDataset a = resize_to(pair.train, 120, 9, true);
    LabeledDataset b = resize_to(pair.train, 120, 9, true);
    CHECK(dataset_fingerprint(a) == dataset_fingerprint(b));
  }
}

TEST_CASE("split manifest round-trips and re-creates the split") {
  auto pair = load_dataset("synthetic-gauss:classes=4,train=400,test=80,seed=31", "");
  DataSplit split = make_removal_split(pair.train, 1, 25, 5, &pair.test);
  const auto dir = temp_dir("manifest");
  const auto path = (dir / "split.json").string();
  save_split_manifest(split, path);

  DataSplit re = load_split_manifest(pair.train, path, &pair.test);
  CHECK(re.forget_class == 1);
  CHECK(re.seed == 5);
  CHECK(re.forget.index == split.forget.index);
  CHECK(re.remain.index == split.remain.index);
  CHECK(dataset_fingerprint(re.forget) == dataset_fingerprint(split.forget));

  // byte-identical re-save
  save_split_manifest(re, (dir / "split2.json").string());
  std::ifstream a(path), b((dir / "split2.json").string());
  std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);
}

TEST_CASE("concat keeps identity and order") {
  auto pair = load_dataset("synthetic-gauss:classes=2,train=40,test=10,seed=3", "");
  DataSplit split = make_removal_split(pair.train, 0, 5, 1);
  LabeledDataset joined = concat(split.remain, split.forget);
  CHECK(joined.size() == 40);
  std::set<int> ids(joined.index.data(), joined.index.data() + joined.index.size());
  CHECK(ids.size() == 40);
}
