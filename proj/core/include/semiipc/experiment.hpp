#pragma once

#include "semiipc/embedding_store.hpp"
#include "semiipc/evaluation.hpp"
#include "semiipc/feature_analysis.hpp"
#include "semiipc/prototype_classifier.hpp"
#include "semiipc/synthetic.hpp"
#include "semiipc/trainer.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace semiipc {

struct ExperimentConfig {
  // Exactly one of data_path / preset.
  std::optional<std::string> data_path;
  std::optional<std::string> preset;
  std::optional<std::string> test_path;
  std::size_t test_per_class = 100;       // held-out samples per class for presets
  std::optional<std::uint64_t> data_seed; // preset generator seed; unset: the run seed

  std::size_t base_classes = 0;
  std::size_t num_tasks = 5;
  std::size_t labels_per_class = 5;
  std::vector<ClassId> class_order;

  TrainConfig train;  // train.seed is replaced by the run seed

  bool analyze_pc_id = false;
  bool analyze_geometry = false;
  bool analyze_raw_spectrum = false;

  double ood_fraction = 0.0;
  std::optional<std::string> ood_path;  // unset with a preset: synthetic companion
  OodConfig ood;

  std::string out_dir = "runs";
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};

  void validate() const;
};

// Canonical JSON of everything that affects results (not seeds or out_dir).
std::string config_to_json(const ExperimentConfig& config, int indent = 2);
// Accepts a bare config document or an emitted report (its "config" object;
// seeds becomes the report's seed). Unknown keys are a usage error.
ExperimentConfig config_from_json(const std::string& text);
// FNV-1a 64 of the compact canonical JSON, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

struct SelectionTally {
  std::size_t ood_visits = 0;
  std::size_t ood_selected = 0;
  std::size_t id_selected = 0;
  std::size_t id_correct = 0;

  std::optional<double> ood_rate() const;
  std::optional<double> precision() const;
};

struct RunResult {
  std::uint64_t seed = 0;
  MetricsReport metrics;
  std::vector<PrototypeSet> task_protos;  // state after each task
  double radial_scale = 0.0;
  SelectionTally selection;
  std::optional<SpectrumReport> spectrum;
  std::optional<ClassGeometryReport> geometry;
};

struct Aggregate {
  double median = 0.0;
  double min = 0.0;
  double max = 0.0;
};
Aggregate aggregate(std::vector<double> values);

struct ExperimentSummary {
  std::vector<RunResult> runs;
  Aggregate last, avg, pd;
  std::optional<Aggregate> ood_rate;
};

RunResult run_once(const ExperimentConfig& config, std::uint64_t seed);

// Runs every seed; when write_reports, writes report_seed<S>.{json,csv} and
// aggregate.{json,csv} into out_dir. The resolved config goes to log.
ExperimentSummary run_experiment(const ExperimentConfig& config, bool write_reports = true,
                                 std::ostream* log = nullptr);

std::string report_json(const ExperimentConfig& config, const RunResult& run);
std::string aggregate_json(const ExperimentConfig& config, const ExperimentSummary& summary);
std::string aggregate_csv(const ExperimentConfig& config, const ExperimentSummary& summary);

// Aggregates previously emitted per-seed report JSON documents.
struct ReportDigest {
  std::string json;
  std::string csv;
};
ReportDigest digest_reports(const std::vector<std::string>& report_jsons);

struct SweepGrid {
  std::vector<double> lambda_pl;
  std::vector<double> tau;
  std::vector<double> gamma;
  std::vector<std::size_t> labels_per_class;

  bool empty() const {
    return lambda_pl.empty() && tau.empty() && gamma.empty() && labels_per_class.empty();
  }
};

inline constexpr std::size_t kMaxSweepRuns = 512;

struct SweepRow {
  double lambda_pl = 0.0;
  double tau = 0.0;
  double gamma = 0.0;
  std::size_t labels_per_class = 0;
  ExperimentSummary summary;
};

// Axes left empty keep the base config's value. Throws Error(kUsage) for an
// empty grid or more than kMaxSweepRuns runs.
std::vector<SweepRow> run_sweep(const ExperimentConfig& config, const SweepGrid& grid,
                                std::ostream* log = nullptr);
std::string sweep_csv(const std::vector<SweepRow>& rows);

struct AnalysisTables {
  std::string spectrum_csv;  // k,eigenvalue,cumulative
  std::string summary_csv;   // metric,value
  bool geometry_skipped = false;  // fewer than two labeled classes, or a singleton class
};
AnalysisTables analyze_dataset(const Dataset& dataset, bool normalize_rows = true,
                               double threshold = 0.9);

// Fraction (percent) of samples whose nearest true class center is their own.
double center_oracle_accuracy(const Dataset& dataset, const Eigen::MatrixXd& centers);

void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace semiipc
