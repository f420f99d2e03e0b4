#include "tmu/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace tmu {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

std::vector<int> int_list(const std::string& s) {
  std::vector<int> out;
  for (const auto& t : split_list(s)) out.push_back(std::stoi(t));
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw std::invalid_argument("config: bad boolean '" + v + "'");
}

void apply_train_key(TrainConfig& t, const std::string& key, const std::string& v,
                     const std::string& where) {
  if (key == "epochs") t.epochs = std::stoi(v);
  else if (key == "learning_rate") t.learning_rate = std::stof(v);
  else if (key == "momentum") t.momentum = std::stof(v);
  else if (key == "weight_decay") t.weight_decay = std::stof(v);
  else if (key == "lr_milestones") {
    t.lr_milestones.clear();
    for (int m : int_list(v)) t.lr_milestones.push_back(m);
  } else if (key == "lr_decay_factor") t.lr_decay_factor = std::stof(v);
  else if (key == "batch_size") t.batch_size = std::stoi(v);
  else if (key == "seed") t.seed = std::stoull(v);
  else throw std::invalid_argument("config: unknown key '" + key + "' in [" + where + "]");
}

void apply_unlearn_key(UnlearnConfig& u, const std::string& key, const std::string& v,
                       const std::string& where) {
  if (key == "epochs") u.epochs = std::stoi(v);
  else if (key == "learning_rate") u.learning_rate = std::stof(v);
  else if (key == "momentum") u.momentum = std::stof(v);
  else if (key == "weight_decay") u.weight_decay = std::stof(v);
  else if (key == "batch_size") u.batch_size = std::stoi(v);
  else if (key == "retain_replay_fraction") u.retain_replay_fraction = std::stod(v);
  else if (key == "tmu_inner_method") u.tmu_inner_method = parse_method(v);
  else if (key == "neggrad_target_forget_acc") u.neggrad_target_forget_acc = std::stod(v);
  else if (key == "fisher_noise_scale") u.fisher.noise_scale = std::stod(v);
  else if (key == "fisher_damping") u.fisher.damping = std::stod(v);
  else if (key == "fisher_max_samples") u.fisher.max_samples = std::stoi(v);
  else if (key == "distill_temperature") u.distill_temperature = std::stod(v);
  else if (key == "seed") u.seed = std::stoull(v);
  else throw std::invalid_argument("config: unknown key '" + key + "' in [" + where + "]");
}

}  // namespace

void ExperimentConfig::validate() const {
  if (forget_classes.empty()) throw std::invalid_argument("config: no forget classes");
  if (seeds.empty()) throw std::invalid_argument("config: no seeds");
  if (methods.empty()) throw std::invalid_argument("config: no methods");
  if (n_forget < 1) throw std::invalid_argument("config: n_forget must be >= 1");
  if (workers < 1) throw std::invalid_argument("config: workers must be >= 1");
  for (const auto& m : methods) (void)parse_method(m);
  train.validate();
  twin_ft.validate();
  attack.validate();
  predictor.validate();
  unlearn_base.validate();
  for (const auto& m : methods) unlearn_for(m).validate();
  if (curriculum_epochs < 1) throw std::invalid_argument("config: curriculum epochs >= 1");
  if (curriculum_fraction < 0.0 || curriculum_fraction > 1.0)
    throw std::invalid_argument("config: curriculum fraction in [0,1]");
  if (twin_replay_mix < 0.0 || twin_replay_mix > 1.0)
    throw std::invalid_argument("config: twin replay_mix in [0,1]");
  if (!std::is_sorted(sweep_sizes.begin(), sweep_sizes.end()))
    throw std::invalid_argument("config: sweep sizes must be ascending");
}

UnlearnConfig ExperimentConfig::unlearn_for(const std::string& method) const {
  UnlearnConfig u = unlearn_base;
  u.method = parse_method(method);
  auto it = method_overrides.find(method);
  if (it != method_overrides.end())
    for (const auto& [k, v] : it->second) apply_unlearn_key(u, k, v, "unlearn." + method);
  return u;
}

std::string ExperimentConfig::fingerprint() const {
  return hash_string(render_config(*this));
}

ExperimentConfig profile_config(const std::string& profile) {
  ExperimentConfig cfg;
  if (profile == "desk" || profile.empty()) {
    cfg.name = "desk";
    cfg.dataset = "cifar10:subset=20000";
    cfg.arch = "resnet18-small";
    cfg.forget_classes = {0, 1, 2};
    cfg.seeds = {1, 2, 3};
    cfg.train.epochs = 40;
    cfg.train.lr_milestones = {20, 30};
    cfg.out_dir = "runs/desk";
  } else if (profile == "paper") {
    cfg.name = "paper";
    cfg.dataset = "cifar10";
    cfg.arch = "resnet18";
    cfg.forget_classes = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    cfg.seeds = {1};
    cfg.train.epochs = 200;
    cfg.train.lr_milestones = {100, 150};
    cfg.out_dir = "runs/paper";
  } else {
    throw std::invalid_argument("unknown profile: " + profile + " (known: desk, paper)");
  }
  cfg.twin_ft.epochs = 5;
  cfg.twin_ft.lr_milestones = {};
  cfg.twin_ft.batch_size = 32;
  cfg.unlearn_base.epochs = 3;
  return cfg;
}

ExperimentConfig parse_config_text(const std::string& text, const ExperimentConfig& base) {
  ExperimentConfig cfg = base;
  std::istringstream in(text);
  std::string line, section = "experiment";
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find_first_of(";#"); hash != std::string::npos)
      line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::invalid_argument("config line " + std::to_string(lineno) +
                                    ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));

    if (section == "experiment") {
      if (key == "name") cfg.name = value;
      else if (key == "dataset") cfg.dataset = value;
      else if (key == "dataset_root") cfg.dataset_root = value;
      else if (key == "arch") cfg.arch = value;
      else if (key == "forget_classes") cfg.forget_classes = int_list(value);
      else if (key == "n_forget") cfg.n_forget = std::stoi(value);
      else if (key == "seeds") {
        cfg.seeds.clear();
        for (const auto& t : split_list(value)) cfg.seeds.push_back(std::stoull(t));
      } else if (key == "methods") cfg.methods = split_list(value);
      else if (key == "gold_model") {
        if (value == "train") cfg.gold_policy = GoldPolicy::Train;
        else if (value == "load") cfg.gold_policy = GoldPolicy::Load;
        else if (value == "skip") cfg.gold_policy = GoldPolicy::Skip;
        else throw std::invalid_argument("config: gold_model must be train|load|skip");
      } else if (key == "out") cfg.out_dir = value;
      else if (key == "workers") cfg.workers = std::stoi(value);
      else throw std::invalid_argument("config: unknown key '" + key + "' in [experiment]");
    } else if (section == "train") {
      apply_train_key(cfg.train, key, value, "train");
    } else if (section == "twin") {
      if (key == "replay_mix") cfg.twin_replay_mix = std::stod(value);
      else apply_train_key(cfg.twin_ft, key, value, "twin");
    } else if (section == "attack") {
      if (key == "epsilon") cfg.attack.epsilon = std::stod(value);
      else if (key == "steps") cfg.attack.steps = std::stoi(value);
      else if (key == "step_size") cfg.attack.step_size = std::stod(value);
      else if (key == "swap_ce") cfg.attack.swap_ce_orientation = parse_bool(value);
      else throw std::invalid_argument("config: unknown key '" + key + "' in [attack]");
    } else if (section == "curriculum") {
      if (key == "epochs") cfg.curriculum_epochs = std::stoi(value);
      else if (key == "fraction") cfg.curriculum_fraction = std::stod(value);
      else throw std::invalid_argument("config: unknown key '" + key + "' in [curriculum]");
    } else if (section == "predictor") {
      if (key == "epochs") cfg.predictor.epochs = std::stoi(value);
      else if (key == "learning_rate") cfg.predictor.learning_rate = std::stof(value);
      else if (key == "momentum") cfg.predictor.momentum = std::stof(value);
      else if (key == "weight_decay") cfg.predictor.weight_decay = std::stof(value);
      else if (key == "batch_size") cfg.predictor.batch_size = std::stoi(value);
      else if (key == "threshold") cfg.predictor.threshold = std::stod(value);
      else if (key == "threshold_policy") {
        if (value == "fixed") cfg.predictor.threshold_policy = ThresholdPolicy::Fixed;
        else if (value == "match-prior")
          cfg.predictor.threshold_policy = ThresholdPolicy::MatchPrior;
        else throw std::invalid_argument("config: threshold_policy must be fixed|match-prior");
      }
      else if (key == "holdout_fraction") cfg.predictor.holdout_fraction = std::stod(value);
      else if (key == "use_nf") cfg.predictor.use_nf = parse_bool(value);
      else if (key == "use_af") cfg.predictor.use_af = parse_bool(value);
      else if (key == "use_cf") cfg.predictor.use_cf = parse_bool(value);
      else throw std::invalid_argument("config: unknown key '" + key + "' in [predictor]");
    } else if (section == "unlearn") {
      apply_unlearn_key(cfg.unlearn_base, key, value, "unlearn");
    } else if (section.rfind("unlearn.", 0) == 0) {
      const std::string method = section.substr(8);
      (void)parse_method(method);
      cfg.method_overrides[method][key] = value;
    } else if (section == "sweep") {
      if (key == "sizes") cfg.sweep_sizes = int_list(value);
      else throw std::invalid_argument("config: unknown key '" + key + "' in [sweep]");
    } else {
      throw std::invalid_argument("config: unknown section [" + section + "]");
    }
  }
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path, const std::string& profile) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config_text(text, profile_config(profile));
}

std::string render_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  out << "[experiment]\n";
  out << "name = " << cfg.name << "\n";
  out << "dataset = " << cfg.dataset << "\n";
  out << "dataset_root = " << cfg.dataset_root << "\n";
  out << "arch = " << cfg.arch << "\n";
  out << "forget_classes = ";
  for (size_t i = 0; i < cfg.forget_classes.size(); ++i)
    out << (i ? "," : "") << cfg.forget_classes[i];
  out << "\nn_forget = " << cfg.n_forget << "\nseeds = ";
  for (size_t i = 0; i < cfg.seeds.size(); ++i) out << (i ? "," : "") << cfg.seeds[i];
  out << "\nmethods = ";
  for (size_t i = 0; i < cfg.methods.size(); ++i) out << (i ? "," : "") << cfg.methods[i];
  out << "\ngold_model = "
      << (cfg.gold_policy == GoldPolicy::Train
              ? "train"
              : cfg.gold_policy == GoldPolicy::Load ? "load" : "skip");
  out << "\nout = " << cfg.out_dir << "\nworkers = " << cfg.workers << "\n";
  out << "\n[train]\n# " << cfg.train.summary() << "\n";
  auto train_block = [&out](const TrainConfig& t) {
    out << "epochs = " << t.epochs << "\nlearning_rate = " << t.learning_rate
        << "\nmomentum = " << t.momentum << "\nweight_decay = " << t.weight_decay
        << "\nlr_milestones = ";
    for (size_t i = 0; i < t.lr_milestones.size(); ++i)
      out << (i ? "," : "") << t.lr_milestones[i];
    out << "\nlr_decay_factor = " << t.lr_decay_factor << "\nbatch_size = " << t.batch_size
        << "\nseed = " << t.seed << "\n";
  };
  train_block(cfg.train);
  out << "\n[twin]\n";
  train_block(cfg.twin_ft);
  out << "replay_mix = " << cfg.twin_replay_mix << "\n";
  out << "\n[attack]\n# " << cfg.attack.summary() << "\nepsilon = " << cfg.attack.epsilon
      << "\nsteps = " << cfg.attack.steps << "\nstep_size = " << cfg.attack.step_size
      << "\nswap_ce = " << (cfg.attack.swap_ce_orientation ? "true" : "false") << "\n";
  out << "\n[curriculum]\nepochs = " << cfg.curriculum_epochs
      << "\nfraction = " << cfg.curriculum_fraction << "\n";
  out << "\n[predictor]\n# " << cfg.predictor.summary() << "\nepochs = "
      << cfg.predictor.epochs << "\nlearning_rate = " << cfg.predictor.learning_rate
      << "\nmomentum = " << cfg.predictor.momentum
      << "\nweight_decay = " << cfg.predictor.weight_decay
      << "\nbatch_size = " << cfg.predictor.batch_size
      << "\nthreshold = " << cfg.predictor.threshold << "\nthreshold_policy = "
      << (cfg.predictor.threshold_policy == ThresholdPolicy::MatchPrior ? "match-prior"
                                                                        : "fixed")
      << "\nholdout_fraction = " << cfg.predictor.holdout_fraction << "\nuse_nf = "
      << (cfg.predictor.use_nf ? "true" : "false") << "\nuse_af = "
      << (cfg.predictor.use_af ? "true" : "false") << "\nuse_cf = "
      << (cfg.predictor.use_cf ? "true" : "false") << "\n";
  out << "\n[unlearn]\n# " << cfg.unlearn_base.summary() << "\nepochs = "
      << cfg.unlearn_base.epochs << "\nlearning_rate = " << cfg.unlearn_base.learning_rate
      << "\nmomentum = " << cfg.unlearn_base.momentum
      << "\nweight_decay = " << cfg.unlearn_base.weight_decay
      << "\nbatch_size = " << cfg.unlearn_base.batch_size
      << "\nretain_replay_fraction = " << cfg.unlearn_base.retain_replay_fraction
      << "\ntmu_inner_method = " << method_name(cfg.unlearn_base.tmu_inner_method)
      << "\nneggrad_target_forget_acc = " << cfg.unlearn_base.neggrad_target_forget_acc
      << "\nfisher_noise_scale = " << cfg.unlearn_base.fisher.noise_scale
      << "\nfisher_damping = " << cfg.unlearn_base.fisher.damping
      << "\nfisher_max_samples = " << cfg.unlearn_base.fisher.max_samples
      << "\ndistill_temperature = " << cfg.unlearn_base.distill_temperature
      << "\nseed = " << cfg.unlearn_base.seed << "\n";
  for (const auto& [method, kv] : cfg.method_overrides) {
    out << "\n[unlearn." << method << "]\n";
    for (const auto& [k, v] : kv) out << k << " = " << v << "\n";
  }
  if (!cfg.sweep_sizes.empty()) {
    out << "\n[sweep]\nsizes = ";
    for (size_t i = 0; i < cfg.sweep_sizes.size(); ++i)
      out << (i ? "," : "") << cfg.sweep_sizes[i];
    out << "\n";
  }
  return out.str();
}

}  // namespace tmu
