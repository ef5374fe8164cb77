#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace semiipc {

using ClassId = std::int64_t;

// Bits of the PCE1 views-present mask.
enum ViewBits : std::uint8_t {
  kViewBase = 0x1,
  kViewWeak = 0x2,
  kViewStrong = 0x4,
  kAllViews = 0x7,
};

// One sample's feature views. Views absent from the owning dataset's mask are
// left empty.
struct EmbeddingRecord {
  std::uint64_t id = 0;
  std::optional<ClassId> label;
  std::vector<float> base;
  std::vector<float> weak;
  std::vector<float> strong;

  bool operator==(const EmbeddingRecord&) const = default;
};

// Immutable collection of records sharing one dimension and one view mask.
class Dataset {
 public:
  Dataset() = default;
  // Validates dimensions and finiteness; throws Error(kInput) on violation.
  Dataset(std::uint32_t dim, std::uint8_t views, std::vector<EmbeddingRecord> records);

  std::uint32_t dim() const noexcept { return dim_; }
  std::uint8_t views() const noexcept { return views_; }
  const std::vector<EmbeddingRecord>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }

  // Sorted distinct labels over labeled records.
  const std::vector<ClassId>& class_set() const noexcept { return class_set_; }

  bool operator==(const Dataset& other) const {
    return dim_ == other.dim_ && views_ == other.views_ && records_ == other.records_;
  }

 private:
  std::uint32_t dim_ = 0;
  std::uint8_t views_ = 0;
  std::vector<EmbeddingRecord> records_;
  std::vector<ClassId> class_set_;
};

// PCE1 reader/writer. Layout (little-endian, no padding):
//   "PCE1" | u32 dim | u64 count | u8 views
//   per record: u64 id | i64 label (-1 unlabeled) | present views, dim f32 each,
//   in base, weak, strong order.
Dataset read_embedding_file(const std::filesystem::path& path);
Dataset decode_embeddings(const std::string& bytes);
std::string encode_embeddings(const Dataset& dataset);
// Writes to a temporary sibling and renames it into place.
void write_embedding_file(const Dataset& dataset, const std::filesystem::path& path);

struct SplitPlan {
  std::size_t base_classes = 0;   // B; 0 means uniform division
  std::size_t num_tasks = 1;      // T, counting the base task when B > 0
  std::vector<ClassId> class_order;  // empty: seeded shuffle of the class set
  std::size_t labels_per_class = 5;
  std::uint64_t seed = 0;
};

struct LabeledSample {
  std::uint64_t id = 0;
  ClassId label = 0;
  Eigen::VectorXd base;
  Eigen::VectorXd weak;
  Eigen::VectorXd strong;
};

// Carries views only; trainer code never sees the true class.
struct UnlabeledSample {
  std::uint64_t id = 0;
  Eigen::VectorXd base;
  Eigen::VectorXd weak;
  Eigen::VectorXd strong;
};

// What a trainer is allowed to see for one incremental task.
struct TaskData {
  std::size_t task_index = 1;  // 1-based
  std::vector<ClassId> class_ids;
  std::vector<LabeledSample> labeled;
  std::vector<UnlabeledSample> unlabeled;
};

// TaskData plus the stripped labels of its unlabeled pool, kept aside for
// diagnostics. unlabeled_truth[i] belongs to data.unlabeled[i]; nullopt marks
// an out-of-distribution sample.
struct TaskSplit {
  TaskData data;
  std::vector<std::optional<ClassId>> unlabeled_truth;
};

// Resolved class order for a plan: plan.class_order if given (must be a
// permutation of the class set), otherwise a seeded shuffle.
std::vector<ClassId> resolve_class_order(const Dataset& dataset, const SplitPlan& plan);

std::vector<TaskSplit> split_dataset(const Dataset& dataset, const SplitPlan& plan);

// Converts one stored view to double precision. Missing weak/strong views fall
// back to the base view.
Eigen::VectorXd view_vector(const EmbeddingRecord& record, ViewBits view);

}  // namespace semiipc
