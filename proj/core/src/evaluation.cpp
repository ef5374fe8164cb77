#include "semiipc/evaluation.hpp"

#include "semiipc/errors.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace semiipc {

double task_accuracy(std::span<const ClassId> predictions, std::span<const ClassId> truth) {
  if (predictions.size() != truth.size()) {
    raise(ErrorKind::kInput, "predictions and labels differ in length");
  }
  if (truth.empty()) raise(ErrorKind::kInput, "accuracy of an empty evaluation set");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += predictions[i] == truth[i];
  return 100.0 * static_cast<double>(correct) / static_cast<double>(truth.size());
}

namespace {

double mean(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", round2(v));
  return buf;
}

}  // namespace

MetricsReport summarize(std::vector<double> per_task_acc, std::optional<BaseNovelAccuracy> split) {
  if (per_task_acc.empty()) raise(ErrorKind::kInput, "no per-task accuracies to summarize");
  MetricsReport r;
  r.per_task_acc = std::move(per_task_acc);
  r.avg_acc = mean(r.per_task_acc);
  r.last_acc = r.per_task_acc.back();
  r.pd = r.per_task_acc.front() - r.per_task_acc.back();
  if (split) {
    if (split->base.size() != r.per_task_acc.size() ||
        split->novel.size() != r.per_task_acc.size()) {
      raise(ErrorKind::kInput, "base/novel accuracy lists must have one entry per task");
    }
    r.base_avg = mean(split->base);
    r.base_last = split->base.back();
    std::vector<double> novel;
    for (const auto& v : split->novel) {
      if (v) novel.push_back(*v);
    }
    if (!novel.empty()) {
      r.novel_avg = mean(novel);
      r.novel_last = novel.back();
    }
    r.split = std::move(split);
  }
  return r;
}

double round2(double value) {
  return std::round(value * 100.0) / 100.0;
}

std::string report_csv(const MetricsReport& report, const std::string& config_hash,
                       std::uint64_t seed) {
  std::ostringstream out;
  out << "task,acc,avg,pd,base_acc,novel_acc,config_hash,seed\n";
  double running = 0.0;
  for (std::size_t t = 0; t < report.per_task_acc.size(); ++t) {
    const double acc = report.per_task_acc[t];
    running += acc;
    out << (t + 1) << ',' << fixed2(acc) << ',' << fixed2(running / static_cast<double>(t + 1))
        << ',' << fixed2(report.per_task_acc.front() - acc) << ',';
    if (report.split) out << fixed2(report.split->base[t]);
    out << ',';
    if (report.split && report.split->novel[t]) out << fixed2(*report.split->novel[t]);
    out << ',' << config_hash << ',' << seed << '\n';
  }
  return out.str();
}

}  // namespace semiipc
