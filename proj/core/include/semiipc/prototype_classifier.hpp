#pragma once

#include "semiipc/embedding_store.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <unordered_map>
#include <vector>

namespace semiipc {

// One learnable vector per seen class. Rows [0, frozen_count) belong to old
// classes and receive no gradient.
class PrototypeSet {
 public:
  PrototypeSet() = default;
  explicit PrototypeSet(std::size_t dim);
  PrototypeSet(Eigen::MatrixXd protos, std::vector<ClassId> class_ids,
               std::size_t frozen_count = 0);

  std::size_t rows() const noexcept { return class_ids_.size(); }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(protos_.cols()); }
  bool empty() const noexcept { return class_ids_.empty(); }

  const Eigen::MatrixXd& matrix() const noexcept { return protos_; }
  // Mutable access for optimizers; the caller keeps every entry finite.
  Eigen::MatrixXd& matrix() noexcept { return protos_; }

  const std::vector<ClassId>& class_ids() const noexcept { return class_ids_; }
  std::size_t frozen_count() const noexcept { return frozen_count_; }
  void set_frozen_count(std::size_t n);

  bool contains(ClassId id) const { return index_.count(id) != 0; }
  // Throws Error(kLabel) for unknown classes.
  std::size_t row_of(ClassId id) const;

  void append(const Eigen::VectorXd& proto, ClassId id);

  bool operator==(const PrototypeSet& other) const {
    return class_ids_ == other.class_ids_ && frozen_count_ == other.frozen_count_ &&
           protos_.rows() == other.protos_.rows() && protos_.cols() == other.protos_.cols() &&
           protos_ == other.protos_;
  }

 private:
  Eigen::MatrixXd protos_;
  std::vector<ClassId> class_ids_;
  std::unordered_map<ClassId, std::size_t> index_;
  std::size_t frozen_count_ = 0;
};

struct ClassifierConfig {
  double gamma = 1.0;       // softmax temperature on squared distances
  double lambda_pl = 0.01;  // weight of the prototype-learning (pull) term

  void validate() const;
};

struct LabeledFeature {
  Eigen::VectorXd z;
  ClassId y = 0;
};

using FeatureRef = Eigen::Ref<const Eigen::VectorXd>;

double squared_distance(const FeatureRef& z, const PrototypeSet& set, std::size_t row);
Eigen::VectorXd squared_distances(const FeatureRef& z, const PrototypeSet& set);

// Softmax over -gamma * squared distance, max-subtracted.
Eigen::VectorXd class_probabilities(const FeatureRef& z, const PrototypeSet& set, double gamma);

// -log p_y via log-sum-exp.
double ce_loss(const FeatureRef& z, ClassId y, const PrototypeSet& set, double gamma);
double pl_loss(const FeatureRef& z, ClassId y, const PrototypeSet& set);

// Batch mean of ce + lambda * pl.
double ipc_loss(std::span<const LabeledFeature> batch, const PrototypeSet& set,
                const ClassifierConfig& config);

// Gradient of ipc_loss with respect to the prototype matrix. Frozen rows are
// exactly zero.
Eigen::MatrixXd ipc_gradient(std::span<const LabeledFeature> batch, const PrototypeSet& set,
                             const ClassifierConfig& config);

// Class of the nearest prototype; ties go to the lowest row.
ClassId predict(const FeatureRef& z, const PrototypeSet& set);
std::size_t predict_row(const FeatureRef& z, const PrototypeSet& set);

}  // namespace semiipc
