#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "semiipc/errors.hpp"
#include "semiipc/experiment.hpp"

#include <json.hpp>

#include <fstream>
#include <functional>
#include <sstream>

using namespace semiipc;

namespace {

ExperimentConfig quick(std::uint64_t seed = 0) {
  ExperimentConfig c;
  c.preset = "sep2.0-noise0.5";
  c.train.epochs = 3;
  c.seeds = {seed};
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error raised");
  return ErrorKind::kUsage;
}

}  // namespace

TEST_CASE("exit codes") {
  CHECK(exit_code(ErrorKind::kUsage) == 2);
  CHECK(exit_code(ErrorKind::kConfig) == 2);
  for (auto k : {ErrorKind::kFormat, ErrorKind::kCorruption, ErrorKind::kIo, ErrorKind::kInput,
                 ErrorKind::kDegenerate})
    CHECK(exit_code(k) == 3);
  for (auto k : {ErrorKind::kLabel, ErrorKind::kState, ErrorKind::kProtocol}) CHECK(exit_code(k) == 4);
}

TEST_CASE("config validation") {
  ExperimentConfig c = quick();
  CHECK_NOTHROW(c.validate());
  ExperimentConfig none = c;
  none.preset.reset();
  CHECK(kind_of([&] { none.validate(); }) == ErrorKind::kUsage);
  ExperimentConfig both = c;
  both.data_path = "x.pce1";
  CHECK(kind_of([&] { both.validate(); }) == ErrorKind::kUsage);
  ExperimentConfig frac = c;
  frac.ood_fraction = 1.0;
  CHECK_THROWS_AS(frac.validate(), Error);
  ExperimentConfig seeds = c;
  seeds.seeds.clear();
  CHECK_THROWS_AS(seeds.validate(), Error);
}

TEST_CASE("config json round trip and strict keys") {
  ExperimentConfig c = quick();
  c.base_classes = 4;
  c.num_tasks = 4;
  c.class_order = {9, 8, 7, 6, 5, 4, 3, 2, 1, 0};
  c.train.tau = 0.7;
  c.train.resample_per_class = 3;
  c.train.use_pur = false;
  c.analyze_geometry = true;
  const std::string j = config_to_json(c);
  const ExperimentConfig back = config_from_json(j);
  CHECK(config_to_json(back) == j);
  CHECK(config_hash(back) == config_hash(c));
  CHECK(config_hash(c).size() == 16);

  ExperimentConfig other = c;
  other.train.tau = 0.71;
  CHECK(config_hash(other) != config_hash(c));

  CHECK(kind_of([] { config_from_json(R"({"train": {"taux": 0.5}})"); }) == ErrorKind::kUsage);
  CHECK(kind_of([] { config_from_json(R"({"bogus": 1})"); }) == ErrorKind::kUsage);
  CHECK(kind_of([] { config_from_json("{not json"); }) == ErrorKind::kUsage);
}

TEST_CASE("runs are bit-for-bit deterministic, reports included") {
  const auto d1 = oracle::scratch_dir("det1"), d2 = oracle::scratch_dir("det2");
  ExperimentConfig c = quick(3);
  c.seeds = {3, 4};
  c.analyze_pc_id = true;
  c.out_dir = d1.string();
  const auto a = run_experiment(c);
  c.out_dir = d2.string();
  const auto b = run_experiment(c);
  for (std::size_t i = 0; i < a.runs.size(); ++i) {
    CHECK(a.runs[i].task_protos.back() == b.runs[i].task_protos.back());
  }
  for (const char* f : {"report_seed3.json", "report_seed3.csv", "report_seed4.json",
                        "report_seed4.csv", "aggregate.json", "aggregate.csv"}) {
    REQUIRE(std::filesystem::exists(d1 / f));
    CHECK(slurp(d1 / f) == slurp(d2 / f));
  }
}

TEST_CASE("different seeds give different runs") {
  const auto a = run_once(quick(0), 0);
  const auto b = run_once(quick(0), 1);
  CHECK_FALSE(a.task_protos.back() == b.task_protos.back());
}

TEST_CASE("an emitted report reproduces its run") {
  const auto dir = oracle::scratch_dir("replay");
  ExperimentConfig c = quick(5);
  c.out_dir = dir.string();
  run_experiment(c);
  const ExperimentConfig back = config_from_json(slurp(dir / "report_seed5.json"));
  CHECK(back.seeds == std::vector<std::uint64_t>{5});
  const auto again = run_once(back, 5);
  CHECK(again.task_protos.back() == run_once(c, 5).task_protos.back());
}

TEST_CASE("report digest recomputes the aggregate") {
  const auto dir = oracle::scratch_dir("digest");
  ExperimentConfig c = quick();
  c.seeds = {0, 1, 2};
  c.out_dir = dir.string();
  const auto summary = run_experiment(c);
  std::vector<std::string> docs;
  for (int s = 0; s < 3; ++s) docs.push_back(slurp(dir / ("report_seed" + std::to_string(s) + ".json")));
  const auto digest = digest_reports(docs);
  const auto j = nlohmann::json::parse(digest.json);
  CHECK(j.at("last_acc").at("median").get<double>() == summary.last.median);
  CHECK(j.at("avg_acc").at("min").get<double>() == summary.avg.min);
  CHECK(j.at("pd").at("max").get<double>() == summary.pd.max);
  CHECK(j.at("config_hashes").size() == 1);
  CHECK(digest.csv.rfind("metric,median,min,max,reports\nlast_acc,", 0) == 0);
  CHECK(kind_of([] { digest_reports({}); }) == ErrorKind::kUsage);
  CHECK(kind_of([] { digest_reports({"{}"}); }) == ErrorKind::kFormat);
}

TEST_CASE("aggregate") {
  const auto a = aggregate({3.0, 1.0, 2.0});
  CHECK(a.median == 2.0);
  CHECK(a.min == 1.0);
  CHECK(a.max == 3.0);
  CHECK(aggregate({1.0, 2.0, 3.0, 10.0}).median == 2.5);
}

TEST_CASE("metrics bookkeeping across tasks") {
  const auto r = run_once(quick(), 0);
  CHECK(r.metrics.per_task_acc.size() == 5);
  CHECK(r.task_protos.size() == 5);
  CHECK(r.task_protos.back().rows() == 10);
  CHECK(r.metrics.split->base.size() == 5);
  CHECK_FALSE(r.metrics.split->novel[0].has_value());
  CHECK(r.metrics.pseudo_label_precision.has_value());
  CHECK_FALSE(r.metrics.ood_selection_rate.has_value());
  CHECK(r.radial_scale > 0.0);
}

TEST_CASE("ood injection adds the requested fraction") {
  ExperimentConfig c = quick();
  c.ood_fraction = 0.2;
  const auto r = run_once(c, 0);
  REQUIRE(r.metrics.ood_selection_rate.has_value());
  // 400 in-distribution unlabeled per task plus 80 OOD, 3 epochs of 4 steps x 128.
  const double share = static_cast<double>(r.selection.ood_visits) / (5 * 3 * 4 * 128);
  CHECK(share == doctest::Approx(80.0 / 480.0).epsilon(0.05));
}

TEST_CASE("ood source must not share classes with the data") {
  const auto dir = oracle::scratch_dir("ood_overlap");
  SyntheticConfig cfg = *find_preset("sep2.0-noise0.5");
  write_embedding_file(generate_synthetic(cfg), dir / "same.pce1");
  ExperimentConfig c = quick();
  c.ood_fraction = 0.1;
  c.ood_path = (dir / "same.pce1").string();
  CHECK(kind_of([&] { run_once(c, 0); }) == ErrorKind::kConfig);
}

TEST_CASE("file data source with and without a test file") {
  const auto dir = oracle::scratch_dir("filesource");
  SyntheticConfig cfg = *find_preset("sep2.0-noise0.5");
  write_embedding_file(generate_synthetic(cfg), dir / "train.pce1");
  write_embedding_file(generate_synthetic_test(cfg, 50), dir / "test.pce1");
  ExperimentConfig c = quick();
  c.preset.reset();
  c.data_path = (dir / "train.pce1").string();
  CHECK(run_once(c, 0).metrics.last_acc > 90.0);
  c.test_path = (dir / "test.pce1").string();
  CHECK(run_once(c, 0).metrics.last_acc > 90.0);
  c.data_path = (dir / "missing.pce1").string();
  CHECK(kind_of([&] { run_once(c, 0); }) == ErrorKind::kIo);
}

TEST_CASE("unknown preset is a usage error") {
  ExperimentConfig c = quick();
  c.preset = "nope";
  CHECK(kind_of([&] { run_once(c, 0); }) == ErrorKind::kUsage);
}

TEST_CASE("sweep grid limits") {
  ExperimentConfig c = quick();
  CHECK(kind_of([&] { run_sweep(c, SweepGrid{}); }) == ErrorKind::kUsage);
  SweepGrid huge;
  huge.lambda_pl.assign(30, 0.01);
  huge.tau.assign(30, 0.8);
  CHECK(kind_of([&] { run_sweep(c, huge); }) == ErrorKind::kUsage);
  SweepGrid small;
  small.tau = {0.7, 0.9};
  c.train.epochs = 1;
  const auto rows = run_sweep(c, small);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].tau == 0.7);
  CHECK(rows[1].tau == 0.9);
  CHECK(rows[0].lambda_pl == c.train.lambda_pl);
  const std::string csv = sweep_csv(rows);
  CHECK(csv.rfind("lambda,tau,gamma,n_l,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}

TEST_CASE("analysis tables") {
  SyntheticConfig cfg = *find_preset("sep2.0-noise0.5");
  const auto t = analyze_dataset(generate_synthetic(cfg));
  CHECK(t.spectrum_csv.rfind("k,eigenvalue,cumulative\n", 0) == 0);
  CHECK(std::count(t.spectrum_csv.begin(), t.spectrum_csv.end(), '\n') == 33);
  CHECK(t.summary_csv.find("pc_id,") != std::string::npos);
  CHECK(t.summary_csv.find("fsu_ratio,") != std::string::npos);
  CHECK_FALSE(t.geometry_skipped);

  std::vector<EmbeddingRecord> recs(3);
  for (std::size_t i = 0; i < 3; ++i) recs[i].base = {static_cast<float>(i), 1.0f};
  const auto u = analyze_dataset(Dataset(2, kViewBase, recs));
  CHECK(u.geometry_skipped);
}

TEST_CASE("center oracle on noiseless data") {
  SyntheticConfig cfg = *find_preset("sep2.0-noise0.0");
  CHECK(center_oracle_accuracy(generate_synthetic(cfg), synthetic_centers(cfg)) == 100.0);
}

TEST_CASE("preset end-to-end reaches 95 percent") {
  ExperimentConfig c;
  c.preset = "sep2.0-noise0.5";
  c.seeds = {0, 1, 2};
  const auto full = run_experiment(c, false);
  CHECK(full.last.median >= 95.0);
}
