// semiipc: generate embedding files, run incremental-learning experiments,
// inject OOD unlabeled data, analyze feature spaces, sweep hyperparameters and
// aggregate reports.

#include "semiipc/errors.hpp"
#include "semiipc/experiment.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace semiipc;

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::kIo, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string preset_list() {
  std::string out;
  for (const auto& n : preset_names()) out += (out.empty() ? "" : ", ") + n;
  return out;
}

// Command-line values that override config-file keys when given.
struct RunFlags {
  std::optional<std::string> config_path;
  std::optional<std::string> data;
  std::optional<std::string> preset;
  std::optional<std::string> test;
  std::optional<std::uint64_t> data_seed;
  std::optional<std::size_t> base, tasks, labels;
  std::vector<ClassId> class_order;
  std::vector<std::uint64_t> seeds;
  std::optional<std::string> out;
  std::optional<double> lr, momentum, tau, gamma, lambda;
  std::optional<std::size_t> epochs, batch, resample;
  std::vector<std::string> ablations;
  std::optional<std::string> baseline;
  std::vector<std::string> analyses;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--config", f.config_path, "JSON config file (or an emitted report)");
  cmd->add_option("--data", f.data, "PCE1 training file");
  cmd->add_option("--preset", f.preset, "synthetic preset: " + preset_list());
  cmd->add_option("--test", f.test, "PCE1 evaluation file");
  cmd->add_option("--data-seed", f.data_seed, "fixed generator seed for presets");
  cmd->add_option("--base", f.base, "classes in the base task (0 = uniform split)");
  cmd->add_option("--tasks", f.tasks, "number of tasks, including the base task");
  cmd->add_option("--labels-per-class", f.labels, "labeled samples per class");
  cmd->add_option("--class-order", f.class_order, "explicit class order")->delimiter(',');
  cmd->add_option("--seeds", f.seeds, "comma-separated run seeds")->delimiter(',');
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--lr", f.lr, "initial learning rate");
  cmd->add_option("--momentum", f.momentum, "SGD momentum");
  cmd->add_option("--epochs", f.epochs, "epochs per task");
  cmd->add_option("--batch-size", f.batch, "minibatch size");
  cmd->add_option("--tau", f.tau, "confidence threshold");
  cmd->add_option("--gamma", f.gamma, "distance softmax temperature");
  cmd->add_option("--lambda", f.lambda, "prototype-learning loss weight");
  cmd->add_option("--resample-per-class", f.resample, "pseudo-instances per old class");
  cmd->add_option("--ablation", f.ablations,
                  "none | no-pur | no-iu | no-pl | no-resample (comma list)")
      ->delimiter(',');
  cmd->add_option("--baseline", f.baseline, "nme: class-mean prototypes, no optimization");
  cmd->add_option("--analyze", f.analyses, "pc-id | geometry | raw-spectrum (comma list)")
      ->delimiter(',');
}

ExperimentConfig resolve(const RunFlags& f) {
  ExperimentConfig c;
  if (f.config_path) c = config_from_json(read_text(*f.config_path));
  if (f.data) {
    c.data_path = f.data;
    c.preset.reset();
  }
  if (f.preset) {
    c.preset = f.preset;
    c.data_path.reset();
  }
  if (f.test) c.test_path = f.test;
  if (f.data_seed) c.data_seed = f.data_seed;
  if (f.base) c.base_classes = *f.base;
  if (f.tasks) c.num_tasks = *f.tasks;
  if (f.labels) c.labels_per_class = *f.labels;
  if (!f.class_order.empty()) c.class_order = f.class_order;
  if (!f.seeds.empty()) c.seeds = f.seeds;
  if (f.out) c.out_dir = *f.out;
  if (f.lr) c.train.lr0 = *f.lr;
  if (f.momentum) c.train.momentum = *f.momentum;
  if (f.epochs) c.train.epochs = *f.epochs;
  if (f.batch) c.train.batch_size = *f.batch;
  if (f.tau) c.train.tau = *f.tau;
  if (f.gamma) c.train.gamma = *f.gamma;
  if (f.lambda) c.train.lambda_pl = *f.lambda;
  if (f.resample) c.train.resample_per_class = *f.resample;
  for (const auto& a : f.ablations) {
    if (a == "none") {
      continue;
    } else if (a == "no-pur") {
      c.train.use_pur = false;
    } else if (a == "no-iu") {
      c.train.use_iu = false;
    } else if (a == "no-pl") {
      c.train.use_pl = false;
    } else if (a == "no-resample") {
      c.train.use_resample = false;
    } else {
      raise(ErrorKind::kUsage, "unknown ablation '" + a + "'");
    }
  }
  if (f.baseline) {
    if (*f.baseline != "nme") raise(ErrorKind::kUsage, "unknown baseline '" + *f.baseline + "'");
    c.train.baseline_nme = true;
  }
  for (const auto& a : f.analyses) {
    if (a == "pc-id") {
      c.analyze_pc_id = true;
    } else if (a == "geometry") {
      c.analyze_geometry = true;
    } else if (a == "raw-spectrum") {
      c.analyze_pc_id = true;
      c.analyze_raw_spectrum = true;
    } else {
      raise(ErrorKind::kUsage, "unknown analysis '" + a + "'");
    }
  }
  c.validate();
  return c;
}

void print_summary(const ExperimentSummary& s) {
  std::cout << "last_acc median " << round2(s.last.median) << " (min " << round2(s.last.min)
            << ", max " << round2(s.last.max) << ")\n"
            << "avg_acc  median " << round2(s.avg.median) << "\n"
            << "pd       median " << round2(s.pd.median) << "\n";
  if (s.ood_rate) std::cout << "ood selection rate median " << round2(s.ood_rate->median) << "%\n";
}

struct GenFlags {
  std::optional<std::string> preset;
  std::size_t classes = 10, per_class = 205, dim = 32;
  double sep = 2.0, sigma = 0.5, sigma_weak = 0.1, sigma_strong = 0.2;
  std::uint64_t seed = 0;
  std::string out;
  std::optional<std::string> test_out, ood_out;
  std::size_t test_per_class = 100;
  OodConfig ood;
};

int cmd_gen(const GenFlags& f) {
  SyntheticConfig cfg{f.classes, f.per_class, f.dim, f.sep, f.sigma, f.sigma_weak,
                      f.sigma_strong, f.seed};
  if (f.preset) {
    auto p = find_preset(*f.preset);
    if (!p) raise(ErrorKind::kUsage, "unknown preset '" + *f.preset + "'; available: " + preset_list());
    cfg = *p;
    cfg.seed = f.seed;
  }
  const Dataset data = generate_synthetic(cfg);
  write_embedding_file(data, f.out);
  const double oracle = center_oracle_accuracy(data, synthetic_centers(cfg));
  std::cout << "wrote " << f.out << ": " << cfg.num_classes << " classes x "
            << cfg.samples_per_class << " samples, dim " << cfg.dim << ", views base+weak+strong\n"
            << "class-center oracle accuracy " << round2(oracle) << "%\n";
  if (f.test_out) {
    const Dataset test = generate_synthetic_test(cfg, f.test_per_class);
    write_embedding_file(test, *f.test_out);
    std::cout << "wrote " << *f.test_out << ": " << test.size() << " held-out samples\n";
  }
  if (f.ood_out) {
    const Dataset ood = generate_ood_companion(cfg, f.ood);
    write_embedding_file(ood, *f.ood_out);
    std::cout << "wrote " << *f.ood_out << ": " << f.ood.num_classes << " OOD clusters x "
              << f.ood.samples_per_class << " samples\n";
  }
  return 0;
}

int cmd_analyze(const std::string& path, const std::string& out_dir, bool raw, double threshold) {
  const Dataset data = read_embedding_file(path);
  const AnalysisTables t = analyze_dataset(data, !raw, threshold);
  std::filesystem::create_directories(out_dir);
  write_file_atomic(std::filesystem::path(out_dir) / "spectrum.csv", t.spectrum_csv);
  write_file_atomic(std::filesystem::path(out_dir) / "summary.csv", t.summary_csv);
  if (t.geometry_skipped) {
    std::cerr << "warning: geometry needs two or more labeled classes with at least two samples each; skipped\n";
  }
  std::cout << t.summary_csv;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised incremental prototype classifier experiments"};
  app.require_subcommand(1);

  GenFlags gen;
  auto* gen_cmd = app.add_subcommand("gen", "write a synthetic PCE1 dataset");
  gen_cmd->add_option("--preset", gen.preset, "preset: " + preset_list());
  gen_cmd->add_option("--classes", gen.classes, "number of classes");
  gen_cmd->add_option("--per-class", gen.per_class, "samples per class");
  gen_cmd->add_option("--dim", gen.dim, "embedding dimension");
  gen_cmd->add_option("--separation", gen.sep, "minimum center distance");
  gen_cmd->add_option("--sigma", gen.sigma, "within-class noise");
  gen_cmd->add_option("--sigma-weak", gen.sigma_weak, "weak-view noise");
  gen_cmd->add_option("--sigma-strong", gen.sigma_strong, "strong-view noise");
  gen_cmd->add_option("--seed", gen.seed, "generator seed");
  gen_cmd->add_option("--out", gen.out, "output PCE1 path")->required();
  gen_cmd->add_option("--test-out", gen.test_out, "also write a held-out test file");
  gen_cmd->add_option("--test-per-class", gen.test_per_class, "held-out samples per class");
  gen_cmd->add_option("--ood-out", gen.ood_out, "also write an OOD companion file");
  gen_cmd->add_option("--ood-classes", gen.ood.num_classes, "OOD clusters");
  gen_cmd->add_option("--ood-per-class", gen.ood.samples_per_class, "samples per OOD cluster");
  gen_cmd->add_option("--ood-sigma", gen.ood.sigma, "OOD within-cluster noise");

  RunFlags run;
  auto* run_cmd = app.add_subcommand("run", "train and evaluate over the task stream");
  add_run_flags(run_cmd, run);

  RunFlags ood_run;
  double fraction = 0.2;
  std::optional<std::string> ood_source;
  auto* ood_cmd = app.add_subcommand("inject-ood", "run with OOD records in every unlabeled pool");
  add_run_flags(ood_cmd, ood_run);
  ood_cmd->add_option("--fraction", fraction, "OOD records added per unlabeled record");
  ood_cmd->add_option("--ood", ood_source, "PCE1 OOD source, or 'companion' for presets");

  std::string analyze_path, analyze_out = "analysis";
  bool analyze_raw = false;
  double threshold = 0.9;
  auto* analyze_cmd = app.add_subcommand("analyze", "PC-ID spectrum and class geometry");
  analyze_cmd->add_option("path", analyze_path, "PCE1 file")->required();
  analyze_cmd->add_option("--out", analyze_out, "output directory");
  analyze_cmd->add_flag("--raw", analyze_raw, "skip per-row normalization of centered features");
  analyze_cmd->add_option("--threshold", threshold, "cumulative variance threshold");

  RunFlags sweep;
  SweepGrid grid;
  auto* sweep_cmd = app.add_subcommand("sweep", "grid over lambda / tau / gamma / n_l");
  add_run_flags(sweep_cmd, sweep);
  sweep_cmd->add_option("--lambda-grid", grid.lambda_pl)->delimiter(',');
  sweep_cmd->add_option("--tau-grid", grid.tau)->delimiter(',');
  sweep_cmd->add_option("--gamma-grid", grid.gamma)->delimiter(',');
  sweep_cmd->add_option("--nl-grid", grid.labels_per_class)->delimiter(',');

  std::vector<std::string> report_files;
  std::optional<std::string> report_out;
  auto* report_cmd = app.add_subcommand("report", "aggregate emitted per-seed reports");
  report_cmd->add_option("reports", report_files, "report_seed*.json files")->required();
  report_cmd->add_option("--out", report_out, "directory for summary.json / summary.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen_cmd) return cmd_gen(gen);
    if (*run_cmd) {
      const ExperimentConfig c = resolve(run);
      print_summary(run_experiment(c, true, &std::cerr));
      return 0;
    }
    if (*ood_cmd) {
      ExperimentConfig c = resolve(ood_run);
      c.ood_fraction = fraction;
      if (ood_source && *ood_source != "companion") c.ood_path = ood_source;
      c.validate();
      print_summary(run_experiment(c, true, &std::cerr));
      return 0;
    }
    if (*analyze_cmd) return cmd_analyze(analyze_path, analyze_out, analyze_raw, threshold);
    if (*sweep_cmd) {
      const ExperimentConfig c = resolve(sweep);
      const auto rows = run_sweep(c, grid, &std::cerr);
      std::filesystem::create_directories(c.out_dir);
      const std::string csv = sweep_csv(rows);
      write_file_atomic(std::filesystem::path(c.out_dir) / "sweep.csv", csv);
      std::cout << csv;
      return 0;
    }
    if (*report_cmd) {
      std::vector<std::string> texts;
      for (const auto& p : report_files) texts.push_back(read_text(p));
      const ReportDigest d = digest_reports(texts);
      if (report_out) {
        std::filesystem::create_directories(*report_out);
        write_file_atomic(std::filesystem::path(*report_out) / "summary.json", d.json);
        write_file_atomic(std::filesystem::path(*report_out) / "summary.csv", d.csv);
      }
      std::cout << d.csv;
      return 0;
    }
  } catch (const semiipc::Error& e) {
    std::cerr << "semiipc: " << to_string(e.kind()) << ": " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "semiipc: i/o error: " << e.what() << '\n';
    return 3;
  }
  return 2;
}
