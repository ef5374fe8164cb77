#pragma once

#include "semiipc/embedding_store.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace semiipc {

// Top-1 accuracy in percent.
double task_accuracy(std::span<const ClassId> predictions, std::span<const ClassId> truth);

// Accuracy after each task restricted to base (task-1) classes and to the
// classes of later tasks. novel[0] is always empty.
struct BaseNovelAccuracy {
  std::vector<double> base;
  std::vector<std::optional<double>> novel;
};

struct MetricsReport {
  std::vector<double> per_task_acc;  // percent, a_1 .. a_T
  double avg_acc = 0.0;
  double last_acc = 0.0;
  double pd = 0.0;  // a_1 - a_T

  std::optional<double> base_avg, base_last, novel_avg, novel_last;
  std::optional<BaseNovelAccuracy> split;

  // Diagnostics joined from stripped labels after training.
  std::optional<double> pseudo_label_precision;  // percent of in-distribution picks correct
  std::optional<double> ood_selection_rate;      // percent of OOD visits selected

  bool operator==(const MetricsReport&) const = default;
};

MetricsReport summarize(std::vector<double> per_task_acc,
                        std::optional<BaseNovelAccuracy> split = std::nullopt);

// Half-away-from-zero rounding to two decimals, applied to emitted values only.
double round2(double value);

// CSV, one row per task: task,acc,avg,pd,base_acc,novel_acc,config_hash,seed.
// avg and pd are running values up to that task.
std::string report_csv(const MetricsReport& report, const std::string& config_hash,
                       std::uint64_t seed);

}  // namespace semiipc
