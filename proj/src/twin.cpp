#include "tmu/twin.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

using nlohmann::json;
namespace fs = std::filesystem;

namespace tmu {

TwinProblem construct_twin(const TrainedModel& original, const LabeledDataset& test_set,
                           const DataSplit& split, const TrainConfig& ft_cfg, uint64_t seed,
                           double replay_mix) {
  if (replay_mix < 0.0 || replay_mix > 1.0)
    throw std::invalid_argument("construct_twin: replay_mix in [0,1]");
  // the twin forget set must come from data the original never trained on
  std::set<int> train_ids(split.remain.index.data(),
                          split.remain.index.data() + split.remain.index.size());
  train_ids.insert(split.forget.index.data(),
                   split.forget.index.data() + split.forget.index.size());
  for (int i = 0; i < test_set.size(); ++i)
    if (train_ids.count(test_set.index(i)))
      throw std::invalid_argument("construct_twin: test set overlaps training data (id " +
                                  std::to_string(test_set.index(i)) + ")");

  TwinProblem twin;
  twin.seed = seed;
  twin.sizing = twin_sizing(split.remain.size(), split.forget.size());
  twin.twin_forget = resize_to(test_set, static_cast<int>(twin.sizing.n_twin_forget),
                               mix_seed(seed, "twin-forget"), true);
  TrainConfig ft = ft_cfg;
  ft.seed = mix_seed(seed, "twin-finetune");
  LabeledDataset ft_set = twin.twin_forget;
  if (replay_mix > 0.0) {
    const LabeledDataset pool = concat(split.remain, split.forget);
    const int n_mix = static_cast<int>(std::lround(replay_mix * twin.twin_forget.size()));
    ft_set = concat(ft_set, resize_to(pool, n_mix, mix_seed(seed, "twin-replay"), false));
  }
  twin.twin_model = finetune(original, ft_set, ft);
  twin.gold_model = original;
  twin.gold_model_hash = model_content_hash(original);
  return twin;
}

std::vector<GeneralizationLabel> label_generalization(const TrainedModel& gold,
                                                      const LabeledDataset& samples) {
  std::vector<GeneralizationLabel> out;
  out.reserve(static_cast<size_t>(samples.size()));
  const int chunk = 512;
  for (int i0 = 0; i0 < samples.size(); i0 += chunk) {
    const int n = std::min(chunk, samples.size() - i0);
    const Matrix logits = gold.logits(samples.images.middleRows(i0, n));
    for (int i = 0; i < n; ++i)
      out.push_back({i0 + i, argmax_row(logits.row(i)) == samples.labels(i0 + i)});
  }
  return out;
}

void save_twin(const TwinProblem& twin, const std::string& dir) {
  fs::create_directories(dir);
  save_checkpoint(twin.twin_model, (fs::path(dir) / "twin_model.ckpt").string());
  json j;
  j["seed"] = twin.seed;
  j["gold_model_hash"] = twin.gold_model_hash;
  j["sizing"] = {{"n_forget", twin.sizing.n_forget},
                 {"n_remain", twin.sizing.n_remain},
                 {"n_twin_forget", twin.sizing.n_twin_forget}};
  std::vector<int> ids(twin.twin_forget.index.data(),
                       twin.twin_forget.index.data() + twin.twin_forget.index.size());
  j["twin_forget_indices"] = ids;
  std::ofstream out(fs::path(dir) / "twin_manifest.json");
  if (!out) throw std::runtime_error("cannot write twin manifest in " + dir);
  out << j.dump(2) << "\n";
}

TwinProblem load_twin(const std::string& dir, const LabeledDataset& test_set,
                      const TrainedModel& gold) {
  std::ifstream in(fs::path(dir) / "twin_manifest.json");
  if (!in) throw std::runtime_error("cannot read twin manifest in " + dir);
  json j = json::parse(in);

  TwinProblem twin;
  twin.seed = j.at("seed").get<uint64_t>();
  twin.sizing = twin_sizing(j.at("sizing").at("n_remain").get<long>(),
                            j.at("sizing").at("n_forget").get<long>());
  if (twin.sizing.n_twin_forget != j.at("sizing").at("n_twin_forget").get<long>())
    throw std::runtime_error("twin manifest sizing is inconsistent");
  twin.twin_forget = resize_to(test_set, static_cast<int>(twin.sizing.n_twin_forget),
                               mix_seed(twin.seed, "twin-forget"), true);
  twin.twin_model = load_checkpoint((fs::path(dir) / "twin_model.ckpt").string());
  twin.gold_model = gold;
  twin.gold_model_hash = j.at("gold_model_hash").get<std::string>();
  if (twin.gold_model_hash != model_content_hash(gold))
    throw std::runtime_error("load_twin: supplied gold model does not match stored hash");
  return twin;
}

}  // namespace tmu
