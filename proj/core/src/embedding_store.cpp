#include "semiipc/embedding_store.hpp"

#include "semiipc/errors.hpp"
#include "semiipc/random.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <system_error>

namespace semiipc {
namespace {

constexpr std::array<char, 4> kMagic = {'P', 'C', 'E', '1'};
constexpr std::size_t kHeaderBytes = 4 + 4 + 8 + 1;

static_assert(std::numeric_limits<float>::is_iec559, "PCE1 stores IEEE-754 binary32");

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto bits = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>(bits & 0xFF));
    bits = static_cast<U>(bits >> 8);
  }
}

void put_f32(std::string& out, float value) {
  put_le(out, std::bit_cast<std::uint32_t>(value));
}

class ByteReader {
 public:
  explicit ByteReader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get_le(const char* what) {
    need(sizeof(T), what);
    std::make_unsigned_t<T> bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      const auto byte = static_cast<unsigned char>(bytes_[pos_ + i]);
      bits |= static_cast<std::make_unsigned_t<T>>(byte) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(bits);
  }

  float get_f32(const char* what) {
    return std::bit_cast<float>(get_le<std::uint32_t>(what));
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (remaining() < n) {
      std::ostringstream msg;
      msg << "truncated PCE1 data while reading " << what << " at byte " << pos_;
      raise(ErrorKind::kCorruption, msg.str());
    }
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

void check_view(const std::vector<float>& view, bool present, std::uint32_t dim,
                std::size_t index, const char* name) {
  const std::size_t want = present ? dim : 0;
  if (view.size() != want) {
    std::ostringstream msg;
    msg << "record " << index << ": " << name << " view has " << view.size()
        << " components, expected " << want;
    raise(ErrorKind::kInput, msg.str());
  }
  for (float v : view) {
    if (!std::isfinite(v)) {
      std::ostringstream msg;
      msg << "record " << index << ": non-finite component in " << name << " view";
      raise(ErrorKind::kInput, msg.str());
    }
  }
}

std::vector<float>& view_ref(EmbeddingRecord& record, int bit) {
  switch (bit) {
    case 0: return record.base;
    case 1: return record.weak;
    default: return record.strong;
  }
}

}  // namespace

Dataset::Dataset(std::uint32_t dim, std::uint8_t views, std::vector<EmbeddingRecord> records)
    : dim_(dim), views_(views), records_(std::move(records)) {
  if (dim_ == 0) raise(ErrorKind::kInput, "dataset dimension must be positive");
  if ((views_ & kViewBase) == 0 || (views_ & ~kAllViews) != 0) {
    raise(ErrorKind::kInput, "views mask must include the base view and only bits 0-2");
  }
  std::set<ClassId> classes;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    check_view(r.base, true, dim_, i, "base");
    check_view(r.weak, (views_ & kViewWeak) != 0, dim_, i, "weak");
    check_view(r.strong, (views_ & kViewStrong) != 0, dim_, i, "strong");
    if (r.label) {
      if (*r.label < 0) {
        raise(ErrorKind::kInput, "record " + std::to_string(i) + ": negative class id");
      }
      classes.insert(*r.label);
    }
  }
  class_set_.assign(classes.begin(), classes.end());
}

std::string encode_embeddings(const Dataset& dataset) {
  if (dataset.empty()) raise(ErrorKind::kInput, "cannot write an empty dataset");
  int present = 0;
  for (int bit = 0; bit < 3; ++bit) present += (dataset.views() >> bit) & 1;

  std::string out;
  out.reserve(kHeaderBytes +
              dataset.size() * (16 + std::size_t{4} * dataset.dim() * present));
  out.append(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, dataset.dim());
  put_le<std::uint64_t>(out, dataset.size());
  put_le<std::uint8_t>(out, dataset.views());
  for (const auto& r : dataset.records()) {
    put_le<std::uint64_t>(out, r.id);
    put_le<std::int64_t>(out, r.label ? *r.label : -1);
    for (float v : r.base) put_f32(out, v);
    for (float v : r.weak) put_f32(out, v);
    for (float v : r.strong) put_f32(out, v);
  }
  return out;
}

Dataset decode_embeddings(const std::string& bytes) {
  if (bytes.size() < kMagic.size() ||
      !std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    raise(ErrorKind::kFormat, "missing PCE1 magic bytes");
  }
  ByteReader in(bytes);
  in.get_le<std::uint32_t>("magic");
  const auto dim = in.get_le<std::uint32_t>("dim");
  const auto count = in.get_le<std::uint64_t>("record count");
  const auto views = in.get_le<std::uint8_t>("views mask");
  if ((views & kViewBase) == 0 || (views & ~kAllViews) != 0) {
    raise(ErrorKind::kFormat, "unsupported views mask " + std::to_string(views));
  }
  if (dim == 0) raise(ErrorKind::kCorruption, "header dimension is zero");

  int present = 0;
  for (int bit = 0; bit < 3; ++bit) present += (views >> bit) & 1;
  const std::uint64_t record_bytes = 16 + std::uint64_t{4} * dim * present;
  if (count > in.remaining() / record_bytes || in.remaining() != count * record_bytes) {
    std::ostringstream msg;
    msg << "payload of " << in.remaining() << " bytes does not hold " << count
        << " records of dim " << dim;
    raise(ErrorKind::kCorruption, msg.str());
  }

  std::vector<EmbeddingRecord> records(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    auto& r = records[i];
    r.id = in.get_le<std::uint64_t>("record id");
    const auto label = in.get_le<std::int64_t>("record label");
    if (label < -1) {
      raise(ErrorKind::kCorruption, "record " + std::to_string(i) + ": invalid label");
    }
    if (label >= 0) r.label = label;
    for (int bit = 0; bit < 3; ++bit) {
      if (((views >> bit) & 1) == 0) continue;
      auto& view = view_ref(r, bit);
      view.resize(dim);
      for (auto& v : view) {
        v = in.get_f32("view component");
        if (!std::isfinite(v)) {
          raise(ErrorKind::kCorruption,
                "record " + std::to_string(i) + ": non-finite component");
        }
      }
    }
  }
  return Dataset(dim, views, std::move(records));
}

Dataset read_embedding_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorKind::kIo, "cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) raise(ErrorKind::kIo, "read failed: " + path.string());
  try {
    return decode_embeddings(bytes);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

void write_embedding_file(const Dataset& dataset, const std::filesystem::path& path) {
  const std::string bytes = encode_embeddings(dataset);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) raise(ErrorKind::kIo, "cannot open for writing: " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) raise(ErrorKind::kIo, "write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) raise(ErrorKind::kIo, "cannot rename " + tmp.string() + " to " + path.string() +
                                    ": " + ec.message());
}

Eigen::VectorXd view_vector(const EmbeddingRecord& record, ViewBits view) {
  const std::vector<float>* src = &record.base;
  if (view == kViewWeak && !record.weak.empty()) src = &record.weak;
  if (view == kViewStrong && !record.strong.empty()) src = &record.strong;
  Eigen::VectorXd out(static_cast<Eigen::Index>(src->size()));
  for (std::size_t i = 0; i < src->size(); ++i) {
    out[static_cast<Eigen::Index>(i)] = static_cast<double>((*src)[i]);
  }
  return out;
}

std::vector<ClassId> resolve_class_order(const Dataset& dataset, const SplitPlan& plan) {
  const auto& classes = dataset.class_set();
  if (plan.class_order.empty()) {
    std::vector<ClassId> order = classes;
    Rng rng(mix_seed(plan.seed, 0x0D3E));
    rng.shuffle(std::span<ClassId>(order));
    return order;
  }
  std::vector<ClassId> sorted = plan.class_order;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    raise(ErrorKind::kConfig, "class order contains duplicates");
  }
  if (sorted != classes) {
    raise(ErrorKind::kConfig, "class order is not a permutation of the dataset's classes");
  }
  return plan.class_order;
}

std::vector<TaskSplit> split_dataset(const Dataset& dataset, const SplitPlan& plan) {
  if (plan.num_tasks == 0) raise(ErrorKind::kConfig, "number of tasks must be at least 1");
  if (plan.labels_per_class == 0) raise(ErrorKind::kConfig, "labels per class must be at least 1");

  const std::vector<ClassId> order = resolve_class_order(dataset, plan);
  const std::size_t total = order.size();
  if (total == 0) raise(ErrorKind::kConfig, "dataset has no labeled records");

  std::vector<std::size_t> task_sizes;
  if (plan.base_classes == 0) {
    if (total % plan.num_tasks != 0) {
      raise(ErrorKind::kConfig, std::to_string(total) + " classes cannot be divided into " +
                                    std::to_string(plan.num_tasks) + " equal tasks");
    }
    task_sizes.assign(plan.num_tasks, total / plan.num_tasks);
  } else {
    if (plan.base_classes > total) {
      raise(ErrorKind::kConfig, "base task larger than the class set");
    }
    const std::size_t rest = total - plan.base_classes;
    const std::size_t increments = plan.num_tasks - 1;
    if ((increments == 0 && rest != 0) || (increments > 0 && (rest == 0 || rest % increments != 0))) {
      raise(ErrorKind::kConfig, std::to_string(rest) + " classes after the base task cannot be "
                                    "divided into " + std::to_string(increments) +
                                    " equal incremental tasks");
    }
    task_sizes.push_back(plan.base_classes);
    for (std::size_t t = 0; t < increments; ++t) task_sizes.push_back(rest / increments);
  }

  // Record indices per class, in file order.
  std::map<ClassId, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& label = dataset.records()[i].label;
    if (label) members[*label].push_back(i);
  }

  // Draw order: classes in class_order, each a partial Fisher-Yates over its
  // members selecting labels_per_class positions.
  Rng rng(mix_seed(plan.seed, 0x5B17));
  std::vector<TaskSplit> tasks;
  tasks.reserve(task_sizes.size());
  std::size_t cursor = 0;
  for (std::size_t t = 0; t < task_sizes.size(); ++t) {
    TaskSplit split;
    split.data.task_index = t + 1;
    for (std::size_t c = 0; c < task_sizes[t]; ++c) {
      const ClassId cls = order[cursor++];
      split.data.class_ids.push_back(cls);
      auto idx = members.at(cls);
      if (idx.size() < plan.labels_per_class) {
        raise(ErrorKind::kConfig, "class " + std::to_string(cls) + " has " +
                                      std::to_string(idx.size()) + " samples, fewer than " +
                                      std::to_string(plan.labels_per_class));
      }
      for (std::size_t k = 0; k < plan.labels_per_class; ++k) {
        std::swap(idx[k], idx[k + rng.below(idx.size() - k)]);
      }
      for (std::size_t k = 0; k < idx.size(); ++k) {
        const auto& rec = dataset.records()[idx[k]];
        if (k < plan.labels_per_class) {
          split.data.labeled.push_back({rec.id, cls, view_vector(rec, kViewBase),
                                        view_vector(rec, kViewWeak),
                                        view_vector(rec, kViewStrong)});
        } else {
          split.data.unlabeled.push_back({rec.id, view_vector(rec, kViewBase),
                                          view_vector(rec, kViewWeak),
                                          view_vector(rec, kViewStrong)});
          split.unlabeled_truth.emplace_back(cls);
        }
      }
    }
    tasks.push_back(std::move(split));
  }
  return tasks;
}

}  // namespace semiipc
