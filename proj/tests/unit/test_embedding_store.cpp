#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "semiipc/embedding_store.hpp"
#include "semiipc/errors.hpp"
#include "semiipc/random.hpp"
#include "semiipc/synthetic.hpp"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>

using namespace semiipc;

namespace {

Dataset random_dataset(std::uint32_t dim, std::uint8_t views, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<EmbeddingRecord> recs;
  for (std::size_t i = 0; i < n; ++i) {
    EmbeddingRecord r;
    r.id = rng.next_u64();
    if (rng.uniform() < 0.8) r.label = static_cast<ClassId>(rng.below(7));
    auto fill = [&](std::vector<float>& v) {
      v.resize(dim);
      for (auto& x : v) x = static_cast<float>(rng.normal() * 3.0);
    };
    if (views & kViewBase) fill(r.base);
    if (views & kViewWeak) fill(r.weak);
    if (views & kViewStrong) fill(r.strong);
    recs.push_back(std::move(r));
  }
  return Dataset(dim, views, std::move(recs));
}

ErrorKind decode_kind(const std::string& bytes) {
  try {
    decode_embeddings(bytes);
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("decode accepted invalid bytes");
  return ErrorKind::kUsage;
}

Dataset labeled_grid(std::size_t classes, std::size_t per_class, std::uint32_t dim = 3) {
  std::vector<EmbeddingRecord> recs;
  for (std::size_t k = 0; k < classes; ++k) {
    for (std::size_t j = 0; j < per_class; ++j) {
      EmbeddingRecord r;
      r.id = k * 1000 + j;
      r.label = static_cast<ClassId>(k * 10);  // non-contiguous ids
      r.base.assign(dim, static_cast<float>(k));
      r.base[0] = static_cast<float>(j);
      recs.push_back(r);
    }
  }
  return Dataset(dim, kViewBase, std::move(recs));
}

}  // namespace

TEST_CASE("round trip preserves every record bit for bit") {
  for (std::uint8_t views : {1, 3, 5, 7}) {
    for (std::uint32_t dim : {1u, 5u, 64u}) {
      const Dataset ds = random_dataset(dim, views, 57, dim * 31 + views);
      const std::string bytes = encode_embeddings(ds);
      std::size_t per_view = __builtin_popcount(views);
      CHECK(bytes.size() == 17 + ds.size() * (16 + 4 * dim * per_view));
      CHECK(decode_embeddings(bytes) == ds);
      CHECK(encode_embeddings(decode_embeddings(bytes)) == bytes);
    }
  }
}

TEST_CASE("file round trip and atomic write") {
  const auto dir = oracle::scratch_dir("store_rt");
  const Dataset ds = random_dataset(16, kAllViews, 40, 9);
  write_embedding_file(ds, dir / "a.pce1");
  CHECK(read_embedding_file(dir / "a.pce1") == ds);
  CHECK_FALSE(std::filesystem::exists(dir / "a.pce1.tmp"));
}

TEST_CASE("header layout is little-endian and unpadded") {
  std::vector<EmbeddingRecord> recs(1);
  recs[0].id = 0x0102030405060708ULL;
  recs[0].label = 3;
  recs[0].base = {1.0f, -2.0f};
  const std::string b = encode_embeddings(Dataset(2, kViewBase, recs));
  REQUIRE(b.size() == 4 + 4 + 8 + 1 + 8 + 8 + 8);
  CHECK(b.substr(0, 4) == "PCE1");
  CHECK(static_cast<unsigned char>(b[4]) == 2);
  CHECK(static_cast<unsigned char>(b[8]) == 1);
  CHECK(static_cast<unsigned char>(b[16]) == 1);
  CHECK(static_cast<unsigned char>(b[17]) == 0x08);
  CHECK(static_cast<unsigned char>(b[24]) == 0x01);
  CHECK(static_cast<unsigned char>(b[25]) == 3);
  float f;
  std::memcpy(&f, b.data() + 37, 4);
  CHECK(f == -2.0f);
}

TEST_CASE("unlabeled records store label -1") {
  std::vector<EmbeddingRecord> recs(1);
  recs[0].base = {0.5f};
  const std::string b = encode_embeddings(Dataset(1, kViewBase, recs));
  std::int64_t label;
  std::memcpy(&label, b.data() + 25, 8);
  CHECK(label == -1);
  CHECK_FALSE(decode_embeddings(b).records()[0].label.has_value());
}

TEST_CASE("decoder rejects malformed input with the right error kind") {
  const std::string good = encode_embeddings(random_dataset(4, kAllViews, 3, 1));

  SUBCASE("bad magic") {
    std::string b = good;
    b[0] = 'X';
    CHECK(decode_kind(b) == ErrorKind::kFormat);
    CHECK(decode_kind("") == ErrorKind::kFormat);
  }
  SUBCASE("reserved view bits") {
    std::string b = good;
    b[16] = 0x08;
    CHECK(decode_kind(b) == ErrorKind::kFormat);
    b[16] = 0x00;
    CHECK(decode_kind(b) == ErrorKind::kFormat);
  }
  SUBCASE("truncated at every length") {
    for (std::size_t n = 4; n < good.size(); n += 7) {
      CHECK(decode_kind(good.substr(0, n)) != ErrorKind::kUsage);
    }
    CHECK(decode_kind(good.substr(0, good.size() - 1)) == ErrorKind::kCorruption);
  }
  SUBCASE("trailing bytes") { CHECK(decode_kind(good + "x") == ErrorKind::kCorruption); }
  SUBCASE("zero dimension") {
    std::string b = good;
    std::memset(b.data() + 4, 0, 4);
    CHECK(decode_kind(b) == ErrorKind::kCorruption);
  }
  SUBCASE("count larger than payload") {
    std::string b = good;
    b[8] = 9;
    CHECK(decode_kind(b) == ErrorKind::kCorruption);
  }
  SUBCASE("label below -1") {
    std::string b = good;
    const std::int64_t bad = -2;
    std::memcpy(b.data() + 17 + 8, &bad, 8);
    CHECK(decode_kind(b) == ErrorKind::kCorruption);
  }
  SUBCASE("non-finite component") {
    std::string b = good;
    const float nan = std::numeric_limits<float>::quiet_NaN();
    std::memcpy(b.data() + 17 + 16, &nan, 4);
    CHECK(decode_kind(b) == ErrorKind::kCorruption);
  }
}

TEST_CASE("missing file is an io error") {
  try {
    read_embedding_file("/nonexistent/dir/x.pce1");
    FAIL("no throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kIo);
  }
}

TEST_CASE("dataset construction validates records") {
  std::vector<EmbeddingRecord> recs(1);
  recs[0].base = {1.0f, 2.0f};
  CHECK_THROWS_AS(Dataset(3, kViewBase, recs), Error);
  CHECK_THROWS_AS(Dataset(2, kAllViews, recs), Error);
  recs[0].base[1] = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(Dataset(2, kViewBase, recs), Error);
}

TEST_CASE("view fallback to base") {
  EmbeddingRecord r;
  r.base = {1.0f, 2.0f};
  CHECK(view_vector(r, kViewStrong) == Eigen::Vector2d(1.0, 2.0));
  r.weak = {3.0f, 4.0f};
  CHECK(view_vector(r, kViewWeak) == Eigen::Vector2d(3.0, 4.0));
}

TEST_CASE("uniform split: disjoint classes, exact label budget, no leakage") {
  const Dataset ds = labeled_grid(10, 12);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SplitPlan plan{0, 5, {}, 3, seed};
    const auto tasks = split_dataset(ds, plan);
    REQUIRE(tasks.size() == 5);
    std::set<ClassId> seen;
    std::set<std::uint64_t> ids;
    for (std::size_t t = 0; t < tasks.size(); ++t) {
      const auto& task = tasks[t].data;
      CHECK(task.task_index == t + 1);
      CHECK(task.class_ids.size() == 2);
      for (ClassId c : task.class_ids) CHECK(seen.insert(c).second);
      std::map<ClassId, int> per_class;
      for (const auto& s : task.labeled) {
        ++per_class[s.label];
        CHECK(ids.insert(s.id).second);
        CHECK(std::count(task.class_ids.begin(), task.class_ids.end(), s.label) == 1);
      }
      for (const auto& [c, n] : per_class) CHECK(n == 3);
      CHECK(per_class.size() == 2);
      REQUIRE(tasks[t].unlabeled_truth.size() == task.unlabeled.size());
      CHECK(task.unlabeled.size() == 2 * 9);
      for (std::size_t i = 0; i < task.unlabeled.size(); ++i) {
        CHECK(ids.insert(task.unlabeled[i].id).second);
        const auto truth = tasks[t].unlabeled_truth[i];
        REQUIRE(truth.has_value());
        CHECK(std::count(task.class_ids.begin(), task.class_ids.end(), *truth) == 1);
      }
    }
    CHECK(seen.size() == 10);
    CHECK(ids.size() == ds.size());
  }
}

TEST_CASE("base split counts the base task among T") {
  const Dataset ds = labeled_grid(10, 6);
  const auto tasks = split_dataset(ds, SplitPlan{4, 4, {}, 2, 1});
  REQUIRE(tasks.size() == 4);
  CHECK(tasks[0].data.class_ids.size() == 4);
  for (std::size_t t = 1; t < 4; ++t) CHECK(tasks[t].data.class_ids.size() == 2);
  CHECK_THROWS_AS(split_dataset(ds, SplitPlan{4, 5, {}, 2, 1}), Error);
  CHECK_THROWS_AS(split_dataset(ds, SplitPlan{0, 3, {}, 2, 1}), Error);
}

TEST_CASE("split errors") {
  const Dataset ds = labeled_grid(4, 3);
  auto kind = [&](const SplitPlan& p) {
    try {
      split_dataset(ds, p);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::kUsage;
  };
  CHECK(kind(SplitPlan{0, 2, {}, 4, 0}) == ErrorKind::kConfig);   // not enough samples
  CHECK(kind(SplitPlan{0, 2, {0, 10, 20}, 1, 0}) == ErrorKind::kConfig);
  CHECK(kind(SplitPlan{0, 2, {0, 10, 20, 20}, 1, 0}) == ErrorKind::kConfig);
  CHECK(kind(SplitPlan{0, 2, {0, 10, 20, 99}, 1, 0}) == ErrorKind::kConfig);
}

TEST_CASE("explicit class order is honored") {
  const Dataset ds = labeled_grid(4, 3);
  const std::vector<ClassId> order{30, 0, 20, 10};
  CHECK(resolve_class_order(ds, SplitPlan{0, 2, order, 1, 0}) == order);
  const auto tasks = split_dataset(ds, SplitPlan{0, 2, order, 1, 0});
  CHECK(tasks[0].data.class_ids == std::vector<ClassId>{30, 0});
  CHECK(tasks[1].data.class_ids == std::vector<ClassId>{20, 10});
}

TEST_CASE("split is deterministic per seed and varies across seeds") {
  const Dataset ds = labeled_grid(10, 12);
  auto fingerprint = [&](std::uint64_t seed) {
    std::vector<std::uint64_t> f;
    for (const auto& t : split_dataset(ds, SplitPlan{0, 5, {}, 3, seed})) {
      for (ClassId c : t.data.class_ids) f.push_back(static_cast<std::uint64_t>(c));
      for (const auto& s : t.data.labeled) f.push_back(s.id);
    }
    return f;
  };
  CHECK(fingerprint(3) == fingerprint(3));
  CHECK(fingerprint(3) != fingerprint(4));
}

TEST_CASE("unlabeled dataset records never enter a split") {
  Dataset base = labeled_grid(2, 4);
  auto recs = base.records();
  EmbeddingRecord stray;
  stray.id = 777777;
  stray.base.assign(3, 0.0f);
  recs.push_back(stray);
  const Dataset ds(3, kViewBase, recs);
  for (const auto& t : split_dataset(ds, SplitPlan{0, 1, {}, 1, 0})) {
    for (const auto& u : t.data.unlabeled) CHECK(u.id != 777777);
  }
}

TEST_CASE("noiseless generator reproduces centers exactly") {
  SyntheticConfig cfg = *find_preset("sep2.0-noise0.0");
  const Dataset ds = generate_synthetic(cfg);
  const Eigen::MatrixXd centers = synthetic_centers(cfg);
  for (const auto& r : ds.records()) {
    const Eigen::VectorXd c = centers.row(*r.label).cast<float>().cast<double>();
    CHECK(view_vector(r, kViewBase) == c);
    CHECK(view_vector(r, kViewWeak) == c);
    CHECK(view_vector(r, kViewStrong) == c);
  }
  for (Eigen::Index a = 0; a < centers.rows(); ++a)
    for (Eigen::Index b = a + 1; b < centers.rows(); ++b)
      CHECK((centers.row(a) - centers.row(b)).norm() >= cfg.separation);
}

TEST_CASE("generator is deterministic per seed") {
  SyntheticConfig cfg = *find_preset("sep2.0-noise0.5");
  cfg.seed = 11;
  CHECK(encode_embeddings(generate_synthetic(cfg)) == encode_embeddings(generate_synthetic(cfg)));
  SyntheticConfig other = cfg;
  other.seed = 12;
  CHECK(encode_embeddings(generate_synthetic(cfg)) != encode_embeddings(generate_synthetic(other)));
}

TEST_CASE("preset class-mean oracle is at least 99 percent") {
  // Brute force: nearest true center over every generated sample.
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SyntheticConfig cfg = *find_preset("sep2.0-noise0.5");
    cfg.seed = seed;
    const Dataset ds = generate_synthetic(cfg);
    const Eigen::MatrixXd c = synthetic_centers(cfg);
    oracle::Mat centers(c.rows(), oracle::Vec(c.cols()));
    for (Eigen::Index i = 0; i < c.rows(); ++i)
      for (Eigen::Index j = 0; j < c.cols(); ++j) centers[i][j] = c(i, j);
    std::size_t hit = 0;
    for (const auto& r : ds.records()) {
      oracle::Vec z(r.base.begin(), r.base.end());
      hit += static_cast<ClassId>(oracle::nearest(z, centers)) == *r.label;
    }
    CHECK(100.0 * hit / ds.size() >= 99.0);
  }
}

TEST_CASE("files written by an independent writer are read exactly") {
  const char* dir = std::getenv("SEMIIPC_FIXTURE_DIR");
  if (!dir) {
    MESSAGE("SEMIIPC_FIXTURE_DIR unset; skipping");
    return;
  }
  const std::filesystem::path root(dir);

  SUBCASE("checked-in small fixture") {
    const Dataset ds = read_embedding_file(root / "small.pce1");
    REQUIRE(ds.size() == 4);
    CHECK(ds.dim() == 3);
    CHECK(ds.views() == (kViewBase | kViewStrong));
    CHECK(ds.records()[0].id == 10);
    CHECK(*ds.records()[0].label == 0);
    CHECK(ds.records()[0].base == std::vector<float>{1.0f, 0.0f, 0.0f});
    CHECK(ds.records()[0].strong == std::vector<float>{1.5f, 0.0f, 0.0f});
    CHECK_FALSE(ds.records()[3].label.has_value());
    CHECK(ds.records()[3].base == std::vector<float>{0.25f, -0.5f, 8.0f});
  }

  SUBCASE("generated 100 x 2048 file") {
    const char* gen = std::getenv("SEMIIPC_GENERATED_FILE");
    if (!gen) {
      MESSAGE("SEMIIPC_GENERATED_FILE unset; skipping");
      return;
    }
    const Dataset ds = read_embedding_file(gen);
    REQUIRE(ds.size() == 100);
    CHECK(ds.dim() == 2048);
    CHECK(ds.views() == kAllViews);
    // The writer fills component j of record i with (i * 2048 + j) mod 997 / 8,
    // weak = base + 1, strong = base - 1; labels i mod 10, every 7th unlabeled.
    bool ok = true;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto& r = ds.records()[i];
      ok = ok && r.id == 5000 + i;
      ok = ok && (i % 7 == 0 ? !r.label.has_value() : r.label == static_cast<ClassId>(i % 10));
      for (std::size_t j = 0; j < 2048; ++j) {
        const float v = static_cast<float>((i * 2048 + j) % 997) / 8.0f;
        ok = ok && r.base[j] == v && r.weak[j] == v + 1.0f && r.strong[j] == v - 1.0f;
      }
    }
    CHECK(ok);
    CHECK(encode_embeddings(ds) == [&] {
      std::ifstream in(gen, std::ios::binary);
      return std::string(std::istreambuf_iterator<char>(in), {});
    }());
  }
}
