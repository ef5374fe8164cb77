#include "semiipc/experiment.hpp"

#include "semiipc/errors.hpp"
#include "semiipc/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <map>
#include <set>
#include <sstream>
#include <system_error>

namespace semiipc {

using nlohmann::json;

namespace {

template <typename T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const char* where) {
  if (!obj.is_object()) raise(ErrorKind::kUsage, std::string(where) + " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) raise(ErrorKind::kUsage, "unknown config key '" + key + "' in " + where);
  }
}

template <typename T>
void read_into(const json& obj, const char* key, T& out) {
  if (obj.contains(key) && !obj.at(key).is_null()) out = obj.at(key).get<T>();
}

template <typename T>
void read_into(const json& obj, const char* key, std::optional<T>& out) {
  if (!obj.contains(key)) return;
  if (obj.at(key).is_null()) {
    out.reset();
  } else {
    out = obj.at(key).get<T>();
  }
}

json train_to_json(const TrainConfig& t) {
  return json{{"lr0", t.lr0},
              {"momentum", t.momentum},
              {"epochs", t.epochs},
              {"batch_size", t.batch_size},
              {"tau", t.tau},
              {"gamma", t.gamma},
              {"lambda_pl", t.lambda_pl},
              {"resample_per_class", opt(t.resample_per_class)},
              {"use_pur", t.use_pur},
              {"use_iu", t.use_iu},
              {"use_pl", t.use_pl},
              {"use_resample", t.use_resample},
              {"baseline_nme", t.baseline_nme}};
}

json config_document(const ExperimentConfig& c) {
  return json{
      {"dataset",
       {{"path", opt(c.data_path)},
        {"preset", opt(c.preset)},
        {"test_path", opt(c.test_path)},
        {"test_per_class", c.test_per_class},
        {"data_seed", opt(c.data_seed)}}},
      {"split",
       {{"base_classes", c.base_classes},
        {"num_tasks", c.num_tasks},
        {"labels_per_class", c.labels_per_class},
        {"class_order", c.class_order}}},
      {"train", train_to_json(c.train)},
      {"analysis",
       {{"pc_id", c.analyze_pc_id},
        {"geometry", c.analyze_geometry},
        {"raw_spectrum", c.analyze_raw_spectrum}}},
      {"ood",
       {{"fraction", c.ood_fraction},
        {"path", opt(c.ood_path)},
        {"num_classes", c.ood.num_classes},
        {"samples_per_class", c.ood.samples_per_class},
        {"sigma", c.ood.sigma},
        {"first_label", c.ood.first_label}}},
  };
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string prototype_digest(const PrototypeSet& protos) {
  std::string bytes;
  const Eigen::MatrixXd& m = protos.matrix();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      bytes.append(reinterpret_cast<const char*>(&v), sizeof v);
    }
  }
  for (ClassId c : protos.class_ids()) bytes.append(reinterpret_cast<const char*>(&c), sizeof c);
  return fnv1a_hex(bytes);
}

std::string num(double v, int precision = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, precision == 2 ? round2(v) : v);
  return buf;
}

json metrics_to_json(const MetricsReport& m) {
  json j{{"per_task_acc", m.per_task_acc},
         {"avg_acc", m.avg_acc},
         {"last_acc", m.last_acc},
         {"pd", m.pd},
         {"base_avg", opt(m.base_avg)},
         {"base_last", opt(m.base_last)},
         {"novel_avg", opt(m.novel_avg)},
         {"novel_last", opt(m.novel_last)},
         {"pseudo_label_precision", opt(m.pseudo_label_precision)},
         {"ood_selection_rate", opt(m.ood_selection_rate)}};
  if (m.split) {
    json novel = json::array();
    for (const auto& v : m.split->novel) novel.push_back(opt(v));
    j["base_per_task"] = m.split->base;
    j["novel_per_task"] = novel;
  }
  return j;
}

json aggregate_to_json(const Aggregate& a) {
  return json{{"median", a.median}, {"min", a.min}, {"max", a.max}};
}

// Everything a run needs besides the trainer: the task stream with OOD mixed
// in, and the evaluation set.
struct PreparedData {
  Dataset train;
  Dataset test;
  std::vector<TaskSplit> tasks;
};

Dataset load_ood_source(const ExperimentConfig& config,
                        const std::optional<SyntheticConfig>& generator) {
  if (config.ood_path) return read_embedding_file(*config.ood_path);
  if (!generator) {
    raise(ErrorKind::kUsage, "OOD injection on a file dataset needs an OOD source file");
  }
  return generate_ood_companion(*generator, config.ood);
}

void inject_ood(std::vector<TaskSplit>& tasks, const Dataset& train, const Dataset& ood,
                double fraction, std::uint64_t seed) {
  if (ood.dim() != train.dim()) {
    raise(ErrorKind::kConfig, "OOD source dimension differs from the dataset");
  }
  if (ood.empty()) raise(ErrorKind::kConfig, "OOD source is empty");
  const auto& classes = train.class_set();
  for (ClassId c : ood.class_set()) {
    if (std::binary_search(classes.begin(), classes.end(), c)) {
      raise(ErrorKind::kConfig, "OOD source shares class id " + std::to_string(c) +
                                    " with the dataset");
    }
  }
  std::vector<std::size_t> order(ood.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(mix_seed(seed, 0x00D1));
  rng.shuffle(std::span<std::size_t>(order));
  std::size_t cursor = 0;
  for (auto& task : tasks) {
    const auto count = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(task.data.unlabeled.size())));
    for (std::size_t k = 0; k < count; ++k) {
      const auto& rec = ood.records()[order[cursor++ % order.size()]];
      task.data.unlabeled.push_back({rec.id, view_vector(rec, kViewBase),
                                     view_vector(rec, kViewWeak), view_vector(rec, kViewStrong)});
      task.unlabeled_truth.emplace_back(std::nullopt);
    }
  }
}

PreparedData prepare(const ExperimentConfig& config, std::uint64_t seed) {
  PreparedData out;
  std::optional<SyntheticConfig> generator;
  if (config.preset) {
    generator = find_preset(*config.preset);
    generator->seed = config.data_seed.value_or(seed);
    out.train = generate_synthetic(*generator);
  } else {
    out.train = read_embedding_file(*config.data_path);
  }
  if (config.test_path) {
    out.test = read_embedding_file(*config.test_path);
    if (out.test.dim() != out.train.dim()) {
      raise(ErrorKind::kConfig, "test set dimension differs from the training set");
    }
  } else if (generator) {
    out.test = generate_synthetic_test(*generator, config.test_per_class);
  } else {
    out.test = out.train;
  }

  SplitPlan plan;
  plan.base_classes = config.base_classes;
  plan.num_tasks = config.num_tasks;
  plan.class_order = config.class_order;
  plan.labels_per_class = config.labels_per_class;
  plan.seed = seed;
  out.tasks = split_dataset(out.train, plan);

  if (config.ood_fraction > 0.0) {
    inject_ood(out.tasks, out.train, load_ood_source(config, generator), config.ood_fraction,
               seed);
  }
  return out;
}


}  // namespace

void ExperimentConfig::validate() const {
  if (data_path.has_value() == preset.has_value()) {
    raise(ErrorKind::kUsage, "exactly one dataset source (file path or preset) is required");
  }
  if (preset && !find_preset(*preset)) {
    std::string names;
    for (const auto& n : preset_names()) names += (names.empty() ? "" : ", ") + n;
    raise(ErrorKind::kUsage, "unknown preset '" + *preset + "'; available: " + names);
  }
  if (!(ood_fraction >= 0.0 && ood_fraction < 1.0)) {
    raise(ErrorKind::kUsage, "OOD fraction must be in [0,1)");
  }
  if (num_tasks == 0) raise(ErrorKind::kUsage, "number of tasks must be >= 1");
  if (labels_per_class == 0) raise(ErrorKind::kUsage, "labels per class must be >= 1");
  if (seeds.empty()) raise(ErrorKind::kUsage, "at least one seed is required");
  if (test_per_class == 0) raise(ErrorKind::kUsage, "test samples per class must be >= 1");
  train.validate();
}

std::string config_to_json(const ExperimentConfig& config, int indent) {
  return config_document(config).dump(indent);
}

ExperimentConfig config_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    raise(ErrorKind::kUsage, std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  try {
    std::optional<std::uint64_t> report_seed;
    if (doc.contains("config") && doc.contains("seed")) {
      report_seed = doc.at("seed").get<std::uint64_t>();
      doc = doc.at("config");
    }
    check_keys(doc, {"dataset", "split", "train", "analysis", "ood", "out_dir", "seeds"},
               "config");
    if (doc.contains("dataset")) {
      const auto& d = doc.at("dataset");
      check_keys(d, {"path", "preset", "test_path", "test_per_class", "data_seed"}, "dataset");
      read_into(d, "path", c.data_path);
      read_into(d, "preset", c.preset);
      read_into(d, "test_path", c.test_path);
      read_into(d, "test_per_class", c.test_per_class);
      read_into(d, "data_seed", c.data_seed);
    }
    if (doc.contains("split")) {
      const auto& s = doc.at("split");
      check_keys(s, {"base_classes", "num_tasks", "labels_per_class", "class_order"}, "split");
      read_into(s, "base_classes", c.base_classes);
      read_into(s, "num_tasks", c.num_tasks);
      read_into(s, "labels_per_class", c.labels_per_class);
      read_into(s, "class_order", c.class_order);
    }
    if (doc.contains("train")) {
      const auto& t = doc.at("train");
      check_keys(t, {"lr0", "momentum", "epochs", "batch_size", "tau", "gamma", "lambda_pl",
                     "resample_per_class", "use_pur", "use_iu", "use_pl", "use_resample",
                     "baseline_nme"},
                 "train");
      read_into(t, "lr0", c.train.lr0);
      read_into(t, "momentum", c.train.momentum);
      read_into(t, "epochs", c.train.epochs);
      read_into(t, "batch_size", c.train.batch_size);
      read_into(t, "tau", c.train.tau);
      read_into(t, "gamma", c.train.gamma);
      read_into(t, "lambda_pl", c.train.lambda_pl);
      read_into(t, "resample_per_class", c.train.resample_per_class);
      read_into(t, "use_pur", c.train.use_pur);
      read_into(t, "use_iu", c.train.use_iu);
      read_into(t, "use_pl", c.train.use_pl);
      read_into(t, "use_resample", c.train.use_resample);
      read_into(t, "baseline_nme", c.train.baseline_nme);
    }
    if (doc.contains("analysis")) {
      const auto& a = doc.at("analysis");
      check_keys(a, {"pc_id", "geometry", "raw_spectrum"}, "analysis");
      read_into(a, "pc_id", c.analyze_pc_id);
      read_into(a, "geometry", c.analyze_geometry);
      read_into(a, "raw_spectrum", c.analyze_raw_spectrum);
    }
    if (doc.contains("ood")) {
      const auto& o = doc.at("ood");
      check_keys(o, {"fraction", "path", "num_classes", "samples_per_class", "sigma",
                     "first_label"},
                 "ood");
      read_into(o, "fraction", c.ood_fraction);
      read_into(o, "path", c.ood_path);
      read_into(o, "num_classes", c.ood.num_classes);
      read_into(o, "samples_per_class", c.ood.samples_per_class);
      read_into(o, "sigma", c.ood.sigma);
      read_into(o, "first_label", c.ood.first_label);
    }
    read_into(doc, "out_dir", c.out_dir);
    read_into(doc, "seeds", c.seeds);
    if (report_seed) c.seeds = {*report_seed};
  } catch (const json::exception& e) {
    raise(ErrorKind::kUsage, std::string("config has a value of the wrong type: ") + e.what());
  }
  return c;
}

std::string config_hash(const ExperimentConfig& config) {
  return fnv1a_hex(config_document(config).dump());
}

std::optional<double> SelectionTally::ood_rate() const {
  if (ood_visits == 0) return std::nullopt;
  return 100.0 * static_cast<double>(ood_selected) / static_cast<double>(ood_visits);
}

std::optional<double> SelectionTally::precision() const {
  if (id_selected == 0) return std::nullopt;
  return 100.0 * static_cast<double>(id_correct) / static_cast<double>(id_selected);
}

Aggregate aggregate(std::vector<double> values) {
  if (values.empty()) raise(ErrorKind::kInput, "aggregate of no values");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  const double median =
      n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  return {median, values.front(), values.back()};
}

RunResult run_once(const ExperimentConfig& config, std::uint64_t seed) {
  config.validate();
  PreparedData data = prepare(config, seed);

  TrainConfig train = config.train;
  train.seed = seed;
  TrainerState state = initial_state(data.train.dim(), seed);

  // Evaluation set: base views of labeled test records.
  std::vector<Eigen::VectorXd> test_x;
  std::vector<ClassId> test_y;
  for (const auto& rec : data.test.records()) {
    if (!rec.label) continue;
    test_x.push_back(view_vector(rec, kViewBase));
    test_y.push_back(*rec.label);
  }

  RunResult result;
  result.seed = seed;
  SelectionTally& tally = result.selection;
  const std::vector<std::optional<ClassId>>* truth = nullptr;
  const SelectionObserver observer = [&](std::span<const std::size_t> batch,
                                         std::span<const std::size_t> picked,
                                         std::span<const LabeledFeature> pairs) {
    for (std::size_t i : batch) tally.ood_visits += !(*truth)[i].has_value();
    for (std::size_t k = 0; k < picked.size(); ++k) {
      const auto& t = (*truth)[picked[k]];
      if (!t) {
        ++tally.ood_selected;
      } else {
        ++tally.id_selected;
        tally.id_correct += *t == pairs[k].y;
      }
    }
  };

  const std::set<ClassId> base(data.tasks.front().data.class_ids.begin(),
                               data.tasks.front().data.class_ids.end());
  std::set<ClassId> seen;
  std::vector<double> per_task;
  BaseNovelAccuracy split;
  for (const auto& task : data.tasks) {
    truth = &task.unlabeled_truth;
    try {
      state = train_task(std::move(state), task.data, train, observer);
    } catch (const Error& e) {
      throw Error(e.kind(), "task " + std::to_string(task.data.task_index) + ": " + e.what());
    }
    seen.insert(task.data.class_ids.begin(), task.data.class_ids.end());
    result.task_protos.push_back(state.protos);

    std::vector<ClassId> pred_all, true_all, pred_base, true_base, pred_novel, true_novel;
    for (std::size_t i = 0; i < test_x.size(); ++i) {
      if (!seen.count(test_y[i])) continue;
      const ClassId p = predict(test_x[i], state.protos);
      pred_all.push_back(p);
      true_all.push_back(test_y[i]);
      auto& pv = base.count(test_y[i]) ? pred_base : pred_novel;
      auto& tv = base.count(test_y[i]) ? true_base : true_novel;
      pv.push_back(p);
      tv.push_back(test_y[i]);
    }
    if (true_all.empty()) {
      raise(ErrorKind::kInput, "task " + std::to_string(task.data.task_index) +
                                   ": evaluation set has no samples of the seen classes");
    }
    per_task.push_back(task_accuracy(pred_all, true_all));
    split.base.push_back(true_base.empty() ? 0.0 : task_accuracy(pred_base, true_base));
    split.novel.push_back(true_novel.empty()
                              ? std::nullopt
                              : std::optional<double>(task_accuracy(pred_novel, true_novel)));
  }
  result.radial_scale = state.radial_scale.value_or(0.0);
  result.metrics = summarize(std::move(per_task), std::move(split));
  result.metrics.pseudo_label_precision = tally.precision();
  result.metrics.ood_selection_rate = tally.ood_rate();

  if (config.analyze_pc_id || config.analyze_geometry) {
    Eigen::MatrixXd feats(static_cast<Eigen::Index>(data.train.size()),
                          static_cast<Eigen::Index>(data.train.dim()));
    std::vector<ClassId> labels;
    std::vector<Eigen::Index> labeled_rows;
    for (std::size_t i = 0; i < data.train.size(); ++i) {
      const auto& rec = data.train.records()[i];
      feats.row(static_cast<Eigen::Index>(i)) = view_vector(rec, kViewBase).transpose();
      if (rec.label) {
        labels.push_back(*rec.label);
        labeled_rows.push_back(static_cast<Eigen::Index>(i));
      }
    }
    if (config.analyze_pc_id) {
      result.spectrum = pc_id(feats, 0.9, !config.analyze_raw_spectrum);
    }
    if (config.analyze_geometry && !labels.empty()) {
      Eigen::MatrixXd lf(static_cast<Eigen::Index>(labeled_rows.size()), feats.cols());
      for (std::size_t i = 0; i < labeled_rows.size(); ++i) {
        lf.row(static_cast<Eigen::Index>(i)) = feats.row(labeled_rows[i]);
      }
      result.geometry = class_geometry(lf, labels);
    }
  }
  return result;
}

std::string report_json(const ExperimentConfig& config, const RunResult& run) {
  json j{{"config", config_document(config)},
         {"config_hash", config_hash(config)},
         {"seed", run.seed},
         {"metrics", metrics_to_json(run.metrics)},
         {"radial_scale", run.radial_scale},
         {"prototype_digest", run.task_protos.empty() ? std::string()
                                                      : prototype_digest(run.task_protos.back())},
         {"selection",
          {{"ood_visits", run.selection.ood_visits},
           {"ood_selected", run.selection.ood_selected},
           {"id_selected", run.selection.id_selected},
           {"id_correct", run.selection.id_correct}}}};
  if (run.spectrum) {
    j["analysis"]["pc_id"] = run.spectrum->pc_id;
    j["analysis"]["eigenvalues"] = run.spectrum->eigenvalues;
    j["analysis"]["cumulative"] = run.spectrum->cumulative;
  }
  if (run.geometry) {
    j["analysis"]["pi_inter"] = run.geometry->pi_inter;
    j["analysis"]["pi_intra"] = run.geometry->pi_intra;
    j["analysis"]["fsu_ratio"] = opt(run.geometry->fsu_ratio);
  }
  return j.dump(2) + "\n";
}

std::string aggregate_json(const ExperimentConfig& config, const ExperimentSummary& summary) {
  json runs = json::array();
  for (const auto& r : summary.runs) {
    runs.push_back({{"seed", r.seed},
                    {"last_acc", r.metrics.last_acc},
                    {"avg_acc", r.metrics.avg_acc},
                    {"pd", r.metrics.pd},
                    {"ood_selection_rate", opt(r.metrics.ood_selection_rate)}});
  }
  json j{{"config", config_document(config)},
         {"config_hash", config_hash(config)},
         {"seeds", config.seeds},
         {"last_acc", aggregate_to_json(summary.last)},
         {"avg_acc", aggregate_to_json(summary.avg)},
         {"pd", aggregate_to_json(summary.pd)},
         {"runs", runs}};
  if (summary.ood_rate) j["ood_selection_rate"] = aggregate_to_json(*summary.ood_rate);
  return j.dump(2) + "\n";
}

std::string aggregate_csv(const ExperimentConfig& config, const ExperimentSummary& summary) {
  std::ostringstream out;
  out << "metric,median,min,max,config_hash,seeds\n";
  const std::string hash = config_hash(config);
  auto row = [&](const char* name, const Aggregate& a) {
    out << name << ',' << num(a.median) << ',' << num(a.min) << ',' << num(a.max) << ','
        << hash << ',' << summary.runs.size() << '\n';
  };
  row("last_acc", summary.last);
  row("avg_acc", summary.avg);
  row("pd", summary.pd);
  if (summary.ood_rate) row("ood_selection_rate", *summary.ood_rate);
  return out.str();
}

ExperimentSummary run_experiment(const ExperimentConfig& config, bool write_reports,
                                 std::ostream* log) {
  config.validate();
  if (log) {
    *log << "resolved config (hash " << config_hash(config) << "):\n"
         << config_to_json(config) << "\nseeds:";
    for (auto s : config.seeds) *log << ' ' << s;
    *log << '\n';
  }
  ExperimentSummary summary;
  std::vector<double> last, avg, pd, ood;
  const std::filesystem::path dir(config.out_dir);
  if (write_reports) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) raise(ErrorKind::kIo, "cannot create " + dir.string() + ": " + ec.message());
  }
  for (std::uint64_t seed : config.seeds) {
    RunResult run = run_once(config, seed);
    if (log) {
      *log << "seed " << seed << ": last " << num(run.metrics.last_acc) << " avg "
           << num(run.metrics.avg_acc) << " pd " << num(run.metrics.pd);
      if (run.metrics.ood_selection_rate) {
        *log << " ood-selected " << num(*run.metrics.ood_selection_rate) << "%";
      }
      *log << '\n';
    }
    if (write_reports) {
      const std::string stem = "report_seed" + std::to_string(seed);
      write_file_atomic(dir / (stem + ".json"), report_json(config, run));
      write_file_atomic(dir / (stem + ".csv"),
                        report_csv(run.metrics, config_hash(config), seed));
    }
    last.push_back(run.metrics.last_acc);
    avg.push_back(run.metrics.avg_acc);
    pd.push_back(run.metrics.pd);
    if (run.metrics.ood_selection_rate) ood.push_back(*run.metrics.ood_selection_rate);
    summary.runs.push_back(std::move(run));
  }
  summary.last = aggregate(last);
  summary.avg = aggregate(avg);
  summary.pd = aggregate(pd);
  if (!ood.empty()) summary.ood_rate = aggregate(ood);
  if (write_reports) {
    write_file_atomic(dir / "aggregate.json", aggregate_json(config, summary));
    write_file_atomic(dir / "aggregate.csv", aggregate_csv(config, summary));
  }
  return summary;
}

ReportDigest digest_reports(const std::vector<std::string>& report_jsons) {
  if (report_jsons.empty()) raise(ErrorKind::kUsage, "no reports given");
  std::vector<double> last, avg, pd;
  std::set<std::string> hashes;
  json runs = json::array();
  try {
    for (const auto& text : report_jsons) {
      const json r = json::parse(text);
      const auto& m = r.at("metrics");
      last.push_back(m.at("last_acc").get<double>());
      avg.push_back(m.at("avg_acc").get<double>());
      pd.push_back(m.at("pd").get<double>());
      hashes.insert(r.at("config_hash").get<std::string>());
      runs.push_back({{"seed", r.at("seed")},
                      {"config_hash", r.at("config_hash")},
                      {"per_task_acc", m.at("per_task_acc")},
                      {"last_acc", m.at("last_acc")}});
    }
  } catch (const json::exception& e) {
    raise(ErrorKind::kFormat, std::string("not a run report: ") + e.what());
  }
  const Aggregate a_last = aggregate(last), a_avg = aggregate(avg), a_pd = aggregate(pd);
  json j{{"reports", report_jsons.size()},
         {"config_hashes", std::vector<std::string>(hashes.begin(), hashes.end())},
         {"last_acc", aggregate_to_json(a_last)},
         {"avg_acc", aggregate_to_json(a_avg)},
         {"pd", aggregate_to_json(a_pd)},
         {"runs", runs}};
  std::ostringstream csv;
  csv << "metric,median,min,max,reports\n";
  auto row = [&](const char* name, const Aggregate& a) {
    csv << name << ',' << num(a.median) << ',' << num(a.min) << ',' << num(a.max) << ','
        << report_jsons.size() << '\n';
  };
  row("last_acc", a_last);
  row("avg_acc", a_avg);
  row("pd", a_pd);
  return {j.dump(2) + "\n", csv.str()};
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& config, const SweepGrid& grid,
                                std::ostream* log) {
  if (grid.empty()) raise(ErrorKind::kUsage, "sweep grid is empty");
  auto axis = [](const auto& values, auto fallback) {
    using T = decltype(fallback);
    return values.empty() ? std::vector<T>{fallback} : std::vector<T>(values.begin(), values.end());
  };
  const auto lambdas = axis(grid.lambda_pl, config.train.lambda_pl);
  const auto taus = axis(grid.tau, config.train.tau);
  const auto gammas = axis(grid.gamma, config.train.gamma);
  const auto labels = axis(grid.labels_per_class, config.labels_per_class);
  const std::size_t runs =
      lambdas.size() * taus.size() * gammas.size() * labels.size() * config.seeds.size();
  if (runs > kMaxSweepRuns) {
    raise(ErrorKind::kUsage, "sweep needs " + std::to_string(runs) + " runs; the cap is " +
                                 std::to_string(kMaxSweepRuns));
  }
  std::vector<SweepRow> rows;
  for (double l : lambdas) {
    for (double t : taus) {
      for (double g : gammas) {
        for (std::size_t n : labels) {
          ExperimentConfig c = config;
          c.train.lambda_pl = l;
          c.train.tau = t;
          c.train.gamma = g;
          c.labels_per_class = n;
          if (log) {
            *log << "sweep point lambda=" << l << " tau=" << t << " gamma=" << g
                 << " n_l=" << n << '\n';
          }
          rows.push_back({l, t, g, n, run_experiment(c, false, log)});
        }
      }
    }
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::size_t tasks = 0;
  for (const auto& r : rows) {
    for (const auto& run : r.summary.runs) {
      tasks = std::max(tasks, run.metrics.per_task_acc.size());
    }
  }
  std::ostringstream out;
  out << "lambda,tau,gamma,n_l,last_median,last_min,last_max,avg_median,pd_median,seeds";
  for (std::size_t t = 1; t <= tasks; ++t) out << ",acc_t" << t << "_median";
  out << '\n';
  for (const auto& r : rows) {
    out << r.lambda_pl << ',' << r.tau << ',' << r.gamma << ',' << r.labels_per_class << ','
        << num(r.summary.last.median) << ',' << num(r.summary.last.min) << ','
        << num(r.summary.last.max) << ',' << num(r.summary.avg.median) << ','
        << num(r.summary.pd.median) << ',' << r.summary.runs.size();
    for (std::size_t t = 0; t < tasks; ++t) {
      std::vector<double> at;
      for (const auto& run : r.summary.runs) {
        if (t < run.metrics.per_task_acc.size()) at.push_back(run.metrics.per_task_acc[t]);
      }
      out << ',' << (at.empty() ? std::string() : num(aggregate(at).median));
    }
    out << '\n';
  }
  return out.str();
}

AnalysisTables analyze_dataset(const Dataset& dataset, bool normalize_rows, double threshold) {
  if (dataset.empty()) raise(ErrorKind::kInput, "dataset is empty");
  Eigen::MatrixXd feats(static_cast<Eigen::Index>(dataset.size()),
                        static_cast<Eigen::Index>(dataset.dim()));
  std::vector<Eigen::Index> labeled_rows;
  std::vector<ClassId> labels;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& rec = dataset.records()[i];
    feats.row(static_cast<Eigen::Index>(i)) = view_vector(rec, kViewBase).transpose();
    if (rec.label) {
      labeled_rows.push_back(static_cast<Eigen::Index>(i));
      labels.push_back(*rec.label);
    }
  }
  const SpectrumReport spec = pc_id(feats, threshold, normalize_rows);

  AnalysisTables out;
  std::ostringstream s;
  s << "k,eigenvalue,cumulative\n";
  for (std::size_t k = 0; k < spec.eigenvalues.size(); ++k) {
    s << (k + 1) << ',' << num(spec.eigenvalues[k], 12) << ',' << num(spec.cumulative[k], 12)
      << '\n';
  }
  out.spectrum_csv = s.str();

  std::ostringstream m;
  m << "metric,value\n"
    << "samples," << dataset.size() << '\n'
    << "dim," << dataset.dim() << '\n'
    << "normalized_rows," << (normalize_rows ? 1 : 0) << '\n'
    << "threshold," << threshold << '\n'
    << "pc_id," << spec.pc_id << '\n';
  std::map<ClassId, std::size_t> counts;
  for (ClassId c : labels) ++counts[c];
  bool singleton = false;
  for (const auto& [c, n] : counts) singleton = singleton || n < 2;
  if (counts.size() < 2 || singleton) {
    out.geometry_skipped = true;
  } else {
    Eigen::MatrixXd lf(static_cast<Eigen::Index>(labeled_rows.size()), feats.cols());
    for (std::size_t i = 0; i < labeled_rows.size(); ++i) {
      lf.row(static_cast<Eigen::Index>(i)) = feats.row(labeled_rows[i]);
    }
    const ClassGeometryReport g = class_geometry(lf, labels);
    m << "pi_inter," << num(g.pi_inter, 12) << '\n'
      << "pi_intra," << num(g.pi_intra, 12) << '\n'
      << "fsu_ratio," << (g.fsu_ratio ? num(*g.fsu_ratio, 12) : std::string("undefined"))
      << '\n';
  }
  out.summary_csv = m.str();
  return out;
}

double center_oracle_accuracy(const Dataset& dataset, const Eigen::MatrixXd& centers) {
  std::vector<ClassId> ids(static_cast<std::size_t>(centers.rows()));
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<ClassId>(i);
  const PrototypeSet protos(centers, ids);
  std::vector<ClassId> pred, truth;
  for (const auto& rec : dataset.records()) {
    if (!rec.label) continue;
    pred.push_back(predict(view_vector(rec, kViewBase), protos));
    truth.push_back(*rec.label);
  }
  return task_accuracy(pred, truth);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) raise(ErrorKind::kIo, "cannot open for writing: " + tmp.string());
    out << content;
    out.flush();
    if (!out) raise(ErrorKind::kIo, "write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) raise(ErrorKind::kIo, "cannot rename into " + path.string() + ": " + ec.message());
}

}  // namespace semiipc
