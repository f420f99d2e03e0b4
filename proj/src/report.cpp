#include "tmu/harness.hpp"
#include "tmu/paper_reference.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace tmu {

namespace {

std::string fmt2(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::vector<UnlearnReport> collect_reports(const std::string& out_dir) {
  std::vector<UnlearnReport> reports;
  if (!fs::exists(out_dir)) return reports;
  for (const auto& entry : fs::recursive_directory_iterator(out_dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.rfind("report_", 0) == 0 && entry.path().extension() == ".json")
      reports.push_back(load_report(entry.path().string()));
  }
  return reports;
}

struct Agg {
  int n = 0;
  double acc_test = 0, acc_forget = 0, acc_remain = 0;
  double delta = 0;
  int n_delta = 0;
  double act_dist = 0;
  int n_act = 0;
  double gold_test = 0, gold_forget = 0;
  int n_gold = 0;

  void add(const UnlearnReport& r) {
    ++n;
    acc_test += r.acc_test;
    acc_forget += r.acc_forget;
    acc_remain += r.acc_remain;
    if (r.delta) {
      delta += *r.delta;
      ++n_delta;
    }
    if (r.activation_distance) {
      act_dist += *r.activation_distance;
      ++n_act;
    }
    if (r.gold_acc_test) {
      gold_test += *r.gold_acc_test;
      gold_forget += r.gold_acc_forget.value_or(0.0);
      ++n_gold;
    }
  }
  double mean_acc_test() const { return acc_test / n; }
  double mean_acc_forget() const { return acc_forget / n; }
  double mean_delta() const { return n_delta ? delta / n_delta : -1; }
  double mean_act() const { return n_act ? act_dist / n_act : -1; }
};

// SVG helpers: minimal line and bar charts.
void write_svg_header(std::ostream& o, int w, int h, const std::string& title) {
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
    << "\" viewBox=\"0 0 " << w << " " << h << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"12\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" << title
    << "</text>\n";
}

const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};

void plot_delta_vs_size(const std::string& path,
                        const std::map<std::string, std::map<int, double>>& series) {
  std::ofstream o(path);
  if (!o) throw std::runtime_error("cannot write plot: " + path);
  const int W = 560, H = 360, L = 60, B = 310, T = 40, R = 520;
  double max_delta = 1.0;
  int min_size = 1 << 30, max_size = 0;
  for (const auto& [m, pts] : series) {
    for (const auto& [s, d] : pts) {
      max_delta = std::max(max_delta, d);
      min_size = std::min(min_size, s);
      max_size = std::max(max_size, s);
    }
  }
  if (max_size == min_size) max_size = min_size + 1;
  auto X = [&](int size) {
    return L + (R - L) * (static_cast<double>(size - min_size) / (max_size - min_size));
  };
  auto Y = [&](double d) { return B - (B - T) * (d / (max_delta * 1.1)); };

  write_svg_header(o, W, H, "alignment delta vs forget-set size");
  o << "<line x1=\"" << L << "\" y1=\"" << B << "\" x2=\"" << R << "\" y2=\"" << B
    << "\" stroke=\"black\"/>\n<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L
    << "\" y2=\"" << B << "\" stroke=\"black\"/>\n";
  int ci = 0;
  int legend_y = 50;
  for (const auto& [method, pts] : series) {
    const char* color = kColors[ci % 6];
    std::ostringstream pl;
    for (const auto& [s, d] : pts) pl << X(s) << "," << Y(d) << " ";
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\""
      << pl.str() << "\"/>\n";
    for (const auto& [s, d] : pts)
      o << "<circle cx=\"" << X(s) << "\" cy=\"" << Y(d) << "\" r=\"3\" fill=\"" << color
        << "\"/>\n";
    o << "<text x=\"" << R - 90 << "\" y=\"" << legend_y << "\" font-family=\"sans-serif\" "
      << "font-size=\"12\" fill=\"" << color << "\">" << method << "</text>\n";
    legend_y += 16;
    ++ci;
  }
  for (const auto& [m, pts] : series) {
    for (const auto& [s, d] : pts)
      o << "<text x=\"" << X(s) - 10 << "\" y=\"" << B + 18
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << s << "</text>\n";
    break;
  }
  o << "</svg>\n";
}

void plot_activation_bars(const std::string& path, const std::map<std::string, double>& bars) {
  std::ofstream o(path);
  if (!o) throw std::runtime_error("cannot write plot: " + path);
  const int W = 560, H = 360, L = 60, B = 300, T = 40;
  double maxv = 1e-9;
  for (const auto& [m, v] : bars) maxv = std::max(maxv, v);
  write_svg_header(o, W, H, "mean activation distance to the gold model");
  const int n = static_cast<int>(bars.size());
  const double bw = (480.0 / std::max(n, 1)) * 0.7;
  int i = 0;
  for (const auto& [method, v] : bars) {
    const double x = L + 480.0 * i / n + 10;
    const double h = (B - T) * (v / (maxv * 1.1));
    o << "<rect x=\"" << x << "\" y=\"" << B - h << "\" width=\"" << bw << "\" height=\""
      << h << "\" fill=\"" << kColors[i % 6] << "\"/>\n";
    o << "<text x=\"" << x << "\" y=\"" << B + 16
      << "\" font-family=\"sans-serif\" font-size=\"11\">" << method << "</text>\n";
    o << "<text x=\"" << x << "\" y=\"" << B - h - 4
      << "\" font-family=\"sans-serif\" font-size=\"11\">" << fmt2(v) << "</text>\n";
    ++i;
  }
  o << "<line x1=\"" << L << "\" y1=\"" << B << "\" x2=\"540\" y2=\"" << B
    << "\" stroke=\"black\"/>\n</svg>\n";
}

}  // namespace

void emit_report(const std::string& out_dir) {
  const std::vector<UnlearnReport> reports = collect_reports(out_dir);
  if (reports.empty())
    throw std::runtime_error("emit_report: no reports found under " + out_dir);

  // long-format CSV: one row per report plus one Avg row per method
  std::map<std::string, Agg> by_method;
  std::map<std::pair<std::string, int>, Agg> by_method_class;
  std::set<int> classes;
  for (const auto& r : reports) {
    by_method[r.method].add(r);
    by_method_class[{r.method, r.forget_class}].add(r);
    classes.insert(r.forget_class);
  }

  {
    std::ofstream csv(fs::path(out_dir) / "report.csv");
    if (!csv) throw std::runtime_error("cannot write report.csv under " + out_dir);
    csv << report_csv_header() << "\n";
    for (const auto& r : reports) csv << report_csv_row(r) << "\n";
    for (const auto& [method, agg] : by_method) {
      UnlearnReport avg;
      avg.method = method;
      avg.forget_class = -1;  // marks the averages row
      avg.acc_test = agg.mean_acc_test();
      avg.acc_forget = agg.mean_acc_forget();
      avg.acc_remain = agg.acc_remain / agg.n;
      if (agg.n_delta) avg.delta = agg.mean_delta();
      if (agg.n_act) avg.activation_distance = agg.mean_act();
      if (agg.n_gold) {
        avg.gold_acc_test = agg.gold_test / agg.n_gold;
        avg.gold_acc_forget = agg.gold_forget / agg.n_gold;
      }
      avg.config_fingerprint = "avg";
      csv << report_csv_row(avg) << "\n";
    }
  }

  {
    std::ofstream md(fs::path(out_dir) / "report.md");
    if (!md) throw std::runtime_error("cannot write report.md under " + out_dir);
    md << "# Unlearning report\n\n";
    md << "Runs: " << reports.size() << " (classes";
    for (int c : classes) md << " " << c;
    md << ")\n\n";
    for (const auto& [method, agg] : by_method) {
      md << "## " << method << "\n\n";
      md << "| class | ACC_Dtest | ACC_Df | delta |\n";
      md << "|---|---|---|---|\n";
      for (int c : classes) {
        auto it = by_method_class.find({method, c});
        if (it == by_method_class.end()) continue;
        const Agg& a = it->second;
        md << "| " << c << " | " << fmt2(a.mean_acc_test()) << " | "
           << fmt2(a.mean_acc_forget()) << " | "
           << (a.n_delta ? fmt2(a.mean_delta()) : std::string("-")) << " |\n";
      }
      md << "| Avg | " << fmt2(agg.mean_acc_test()) << " | " << fmt2(agg.mean_acc_forget())
         << " | " << (agg.n_delta ? fmt2(agg.mean_delta()) : std::string("-")) << " |\n\n";
    }
  }

  // delta-vs-size: sweep layout when present, single point otherwise
  std::map<std::string, std::map<int, double>> series;
  if (fs::exists(fs::path(out_dir) / "sweep.csv")) {
    std::ifstream in(fs::path(out_dir) / "sweep.csv");
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      std::stringstream ss(line);
      std::string size_s, method, runs_s, at, af, d;
      std::getline(ss, size_s, ',');
      std::getline(ss, method, ',');
      std::getline(ss, runs_s, ',');
      std::getline(ss, at, ',');
      std::getline(ss, af, ',');
      std::getline(ss, d, ',');
      if (!d.empty()) series[method][std::stoi(size_s)] = std::stod(d);
    }
  } else {
    int n_forget = 0;
    std::ifstream cfg(fs::path(out_dir) / "config.ini");
    std::string line;
    while (cfg && std::getline(cfg, line)) {
      if (line.rfind("n_forget", 0) == 0) {
        n_forget = std::stoi(line.substr(line.find('=') + 1));
        break;
      }
    }
    for (const auto& [method, agg] : by_method)
      if (agg.n_delta) series[method][n_forget] = agg.mean_delta();
  }
  if (!series.empty())
    plot_delta_vs_size((fs::path(out_dir) / "delta_vs_size.svg").string(), series);

  std::map<std::string, double> bars;
  for (const auto& [method, agg] : by_method)
    if (agg.n_act) bars[method] = agg.mean_act();
  if (!bars.empty())
    plot_activation_bars((fs::path(out_dir) / "activation_distance.svg").string(), bars);
}

namespace {

void diff_benchmark(std::ostringstream& out, const reference::BenchmarkTable& ref,
                    const std::vector<UnlearnReport>& reports) {
  out << "reference: " << ref.title << "\n";
  out << "original model mean accuracy: " << ref.original_avg_acc << "\n\n";
  std::map<std::string, Agg> by_method;
  for (const auto& r : reports) by_method[r.method].add(r);

  out << "method      | ref ACC_Dtest | run ACC_Dtest | ref ACC_Df | run ACC_Df | ref delta | run delta\n";
  auto line = [&](const std::string& name, const reference::MethodCells& cells) {
    out << name;
    for (size_t i = name.size(); i < 12; ++i) out << ' ';
    auto cell = [&](double ref_v, double run_v, bool have_run) {
      out << "| " << (ref_v < 0 ? std::string("-") : fmt2(ref_v)) << " ";
      out << "| " << (have_run ? fmt2(run_v) : std::string("-")) << " ";
    };
    const auto it = by_method.find(name);
    const bool have = it != by_method.end();
    const Agg agg = have ? it->second : Agg{};
    cell(cells.acc_test, have ? agg.mean_acc_test() : 0, have);
    cell(cells.acc_forget, have ? agg.mean_acc_forget() : 0, have);
    cell(cells.delta, have && agg.n_delta ? agg.mean_delta() : 0, have && agg.n_delta);
    out << "\n";
  };
  line("finetune", ref.avg.finetune);
  line("neggrad", ref.avg.neggrad);
  line("randlabel", ref.avg.randlabel);
  line("badteacher", ref.avg.badteacher);
  line("tmu", ref.avg.tmu);
  out << "\nper-class reference rows: " << ref.rows.size() << " (gold avg ACC_Dtest "
      << fmt2(ref.avg.gold_acc_test) << ", ACC_Df " << fmt2(ref.avg.gold_acc_forget)
      << ")\n";
}

}  // namespace

std::string diff_against_reference(const std::string& table_id, const std::string& out_dir) {
  const std::vector<UnlearnReport> reports = collect_reports(out_dir);
  std::ostringstream out;
  if (table_id == "table1") {
    diff_benchmark(out, reference::resnet18_cifar10_100(), reports);
  } else if (table_id == "allcnn") {
    diff_benchmark(out, reference::allcnn_cifar10_100(), reports);
  } else if (table_id == "vit") {
    diff_benchmark(out, reference::vit_cifar10_100(), reports);
  } else if (table_id == "cifar100") {
    diff_benchmark(out, reference::resnet18_cifar100_100(), reports);
  } else if (table_id == "forget500") {
    diff_benchmark(out, reference::resnet18_cifar10_500(), reports);
  } else if (table_id == "table3") {
    out << "reference: activation distance to the gold model (CIFAR-10)\n";
    std::map<std::string, Agg> by_method;
    for (const auto& r : reports) by_method[r.method].add(r);
    out << "class | finetune | neggrad | randlabel | badteacher | tmu\n";
    for (const auto& row : reference::activation_distance_cifar10())
      out << row.removal_class << " | " << fmt2(row.finetune) << " | " << fmt2(row.neggrad)
          << " | " << fmt2(row.randlabel) << " | " << fmt2(row.badteacher) << " | "
          << fmt2(row.tmu) << "\n";
    out << "run means:";
    for (const auto& [m, agg] : by_method)
      if (agg.n_act) out << " " << m << "=" << fmt2(agg.mean_act());
    out << "\n";
  } else if (table_id == "table4") {
    out << "reference: predictor ablation (generalization-label accuracy)\n";
    out << "class | joint | nf | af | cf (on twin test data)\n";
    for (const auto& row : reference::predictor_ablation_cifar10())
      out << row.removal_class << " | " << fmt2(row.joint_test) << " | " << fmt2(row.nf_test)
          << " | " << fmt2(row.af_test) << " | " << fmt2(row.cf_test) << "\n";
  } else if (table_id == "fisher") {
    out << "reference: parameter-noise catastrophic-forgetting comparison\n";
    out << "model | gold ACC_Dtest | fisher ACC_Dtest | tmu ACC_Dtest\n";
    for (const auto& row : reference::fisher_comparison())
      out << row.model << " | " << fmt2(row.gold_acc_test) << " | "
          << fmt2(row.fisher_acc_test) << " | " << fmt2(row.tmu_acc_test) << "\n";
    std::map<std::string, Agg> by_method;
    for (const auto& r : reports) by_method[r.method].add(r);
    if (by_method.count("fisher"))
      out << "run fisher ACC_Dtest mean: " << fmt2(by_method["fisher"].mean_acc_test())
          << "\n";
  } else {
    std::string known;
    for (const auto& id : reference::table_ids()) known += (known.empty() ? "" : ", ") + id;
    throw std::invalid_argument("unknown reference table '" + table_id +
                                "' (known: " + known + ")");
  }
  return out.str();
}

}  // namespace tmu
