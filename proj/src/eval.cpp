#include "tmu/eval.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

using nlohmann::json;

namespace tmu {

double alignment_delta(double acc_forget, double gold_acc_forget) {
  if (acc_forget < 0.0 || acc_forget > 100.0 || gold_acc_forget < 0.0 ||
      gold_acc_forget > 100.0)
    throw std::invalid_argument("alignment_delta: accuracies must lie in [0,100]");
  return std::abs(acc_forget - gold_acc_forget);
}

double activation_distance(const TrainedModel& model_a, const TrainedModel& model_b,
                           const LabeledDataset& samples) {
  if (model_a.embedding_dim() != model_b.embedding_dim())
    throw std::invalid_argument("activation_distance: embedding dimension mismatch (" +
                                std::to_string(model_a.embedding_dim()) + " vs " +
                                std::to_string(model_b.embedding_dim()) + ")");
  if (samples.size() == 0)
    throw std::invalid_argument("activation_distance: empty sample set");
  double total = 0.0;
  const int chunk = 512;
  for (int i0 = 0; i0 < samples.size(); i0 += chunk) {
    const int n = std::min(chunk, samples.size() - i0);
    const Matrix ea = model_a.embeddings(samples.images.middleRows(i0, n));
    const Matrix eb = model_b.embeddings(samples.images.middleRows(i0, n));
    for (int i = 0; i < n; ++i)
      total += static_cast<double>((ea.row(i) - eb.row(i)).norm());
  }
  return total / samples.size();
}

UnlearnReport evaluate_run(const TrainedModel& unlearned, const TrainedModel* gold,
                           const DataSplit& split, const EvalInputs& extras) {
  UnlearnReport r;
  r.method = extras.method;
  r.forget_class = split.forget_class;
  r.acc_test = accuracy(unlearned, split.test);
  r.acc_forget = accuracy(unlearned, split.forget);
  r.acc_remain = accuracy(unlearned, split.remain);
  if (gold) {
    r.gold_acc_test = accuracy(*gold, split.test);
    r.gold_acc_forget = accuracy(*gold, split.forget);
    r.delta = alignment_delta(r.acc_forget, *r.gold_acc_forget);
    r.activation_distance = activation_distance(unlearned, *gold, split.forget);
  }
  r.n_easy = extras.n_easy;
  r.n_hard = extras.n_hard;
  r.wall_clock_seconds = extras.wall_clock_seconds;
  r.config_fingerprint = extras.config_fingerprint;
  return r;
}

namespace {
json opt_to_json(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}
json opt_to_json(const std::optional<int>& v) { return v ? json(*v) : json(nullptr); }

template <typename T>
std::optional<T> opt_from_json(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}
}  // namespace

void save_report(const UnlearnReport& r, const std::string& path) {
  json j;
  j["method"] = r.method;
  j["forget_class"] = r.forget_class;
  j["acc_test"] = r.acc_test;
  j["acc_forget"] = r.acc_forget;
  j["acc_remain"] = r.acc_remain;
  j["gold_acc_test"] = opt_to_json(r.gold_acc_test);
  j["gold_acc_forget"] = opt_to_json(r.gold_acc_forget);
  j["delta"] = opt_to_json(r.delta);
  j["activation_distance"] = opt_to_json(r.activation_distance);
  j["n_easy"] = opt_to_json(r.n_easy);
  j["n_hard"] = opt_to_json(r.n_hard);
  j["wall_clock_seconds"] = r.wall_clock_seconds;
  j["config_fingerprint"] = r.config_fingerprint;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report: " + path);
  out << j.dump(2) << "\n";
}

UnlearnReport load_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read report: " + path);
  json j = json::parse(in);
  UnlearnReport r;
  r.method = j.at("method").get<std::string>();
  r.forget_class = j.at("forget_class").get<int>();
  r.acc_test = j.at("acc_test").get<double>();
  r.acc_forget = j.at("acc_forget").get<double>();
  r.acc_remain = j.at("acc_remain").get<double>();
  r.gold_acc_test = opt_from_json<double>(j, "gold_acc_test");
  r.gold_acc_forget = opt_from_json<double>(j, "gold_acc_forget");
  r.delta = opt_from_json<double>(j, "delta");
  r.activation_distance = opt_from_json<double>(j, "activation_distance");
  r.n_easy = opt_from_json<int>(j, "n_easy");
  r.n_hard = opt_from_json<int>(j, "n_hard");
  r.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
  r.config_fingerprint = j.at("config_fingerprint").get<std::string>();
  return r;
}

std::string report_csv_header() {
  return "method,forget_class,acc_test,acc_forget,acc_remain,gold_acc_test,gold_acc_forget,"
         "delta,activation_distance,n_easy,n_hard,wall_clock_seconds,config_fingerprint";
}

namespace {
std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
template <typename T>
std::string opt_str(const std::optional<T>& v) {
  if (!v) return "";
  if constexpr (std::is_same_v<T, double>) return num(*v);
  else return std::to_string(*v);
}
}  // namespace

std::string report_csv_row(const UnlearnReport& r) {
  std::ostringstream ss;
  ss << r.method << ',' << r.forget_class << ',' << num(r.acc_test) << ','
     << num(r.acc_forget) << ',' << num(r.acc_remain) << ',' << opt_str(r.gold_acc_test)
     << ',' << opt_str(r.gold_acc_forget) << ',' << opt_str(r.delta) << ','
     << opt_str(r.activation_distance) << ',' << opt_str(r.n_easy) << ','
     << opt_str(r.n_hard) << ',' << num(r.wall_clock_seconds) << ',' << r.config_fingerprint;
  return ss.str();
}

}  // namespace tmu
