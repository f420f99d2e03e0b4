#pragma once

#include "tmu/train.hpp"

#include <filesystem>

namespace tmu::testfix {

// Small trained world reused across test binaries: a 4-class gaussian
// problem, an original model trained on all of it, and a removal split.
struct World {
  DatasetPair data;
  DataSplit split;
  TrainedModel original;
};

inline const World& gauss_world() {
  static const World w = [] {
    World out;
    out.data = load_dataset(
        "synthetic-gauss:classes=4,dim=8,train=600,test=200,sigma=0.15,seed=41", "");
    out.split = make_removal_split(out.data.train, 1, 40, 7, &out.data.test);
    TrainedModel init = build_model("mlp", {1, 1, 8}, 4, 11);
    TrainConfig cfg;
    cfg.epochs = 25;
    cfg.lr_milestones = {};
    cfg.learning_rate = Scalar(0.05);
    cfg.seed = 5;
    out.original = train(init, out.data.train, cfg);
    return out;
  }();
  return w;
}

inline std::filesystem::path fresh_dir(const std::string& tag) {
  auto p = std::filesystem::temp_directory_path() / ("tmu_test_" + tag);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace tmu::testfix
