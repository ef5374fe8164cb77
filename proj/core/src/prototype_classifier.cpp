#include "semiipc/prototype_classifier.hpp"

#include "semiipc/errors.hpp"

#include <cmath>
#include <string>

namespace semiipc {
namespace {

void require_nonempty(const PrototypeSet& set) {
  if (set.empty()) raise(ErrorKind::kState, "prototype set is empty");
}

void require_dim(const FeatureRef& z, const PrototypeSet& set) {
  if (static_cast<std::size_t>(z.size()) != set.dim()) {
    raise(ErrorKind::kInput, "feature has dim " + std::to_string(z.size()) +
                                 ", prototypes have dim " + std::to_string(set.dim()));
  }
}

// log-softmax of -gamma * d.
Eigen::VectorXd log_probabilities(const FeatureRef& z, const PrototypeSet& set, double gamma) {
  require_nonempty(set);
  const Eigen::VectorXd logits = -gamma * squared_distances(z, set);
  const double top = logits.maxCoeff();
  const double lse = top + std::log((logits.array() - top).exp().sum());
  return logits.array() - lse;
}

}  // namespace

PrototypeSet::PrototypeSet(std::size_t dim) : protos_(0, static_cast<Eigen::Index>(dim)) {}

PrototypeSet::PrototypeSet(Eigen::MatrixXd protos, std::vector<ClassId> class_ids,
                           std::size_t frozen_count)
    : protos_(std::move(protos)), class_ids_(std::move(class_ids)) {
  if (static_cast<std::size_t>(protos_.rows()) != class_ids_.size()) {
    raise(ErrorKind::kInput, "prototype rows and class ids differ in count");
  }
  if (!protos_.allFinite()) raise(ErrorKind::kInput, "prototype entries must be finite");
  for (std::size_t i = 0; i < class_ids_.size(); ++i) {
    if (!index_.emplace(class_ids_[i], i).second) {
      raise(ErrorKind::kInput, "duplicate prototype class id " + std::to_string(class_ids_[i]));
    }
  }
  set_frozen_count(frozen_count);
}

void PrototypeSet::set_frozen_count(std::size_t n) {
  if (n > rows()) raise(ErrorKind::kState, "frozen count exceeds prototype rows");
  frozen_count_ = n;
}

std::size_t PrototypeSet::row_of(ClassId id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) raise(ErrorKind::kLabel, "unknown class id " + std::to_string(id));
  return it->second;
}

void PrototypeSet::append(const Eigen::VectorXd& proto, ClassId id) {
  if (static_cast<std::size_t>(proto.size()) != dim()) {
    raise(ErrorKind::kInput, "appended prototype has the wrong dimension");
  }
  if (!proto.allFinite()) raise(ErrorKind::kInput, "prototype entries must be finite");
  if (!index_.emplace(id, rows()).second) {
    raise(ErrorKind::kProtocol, "class " + std::to_string(id) + " already has a prototype");
  }
  protos_.conservativeResize(protos_.rows() + 1, Eigen::NoChange);
  protos_.row(protos_.rows() - 1) = proto.transpose();
  class_ids_.push_back(id);
}

void ClassifierConfig::validate() const {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) raise(ErrorKind::kConfig, "gamma must be > 0");
  if (!(lambda_pl >= 0.0) || !std::isfinite(lambda_pl)) {
    raise(ErrorKind::kConfig, "lambda must be >= 0");
  }
}

double squared_distance(const FeatureRef& z, const PrototypeSet& set, std::size_t row) {
  require_dim(z, set);
  if (row >= set.rows()) raise(ErrorKind::kState, "prototype row out of range");
  return (z.transpose() - set.matrix().row(static_cast<Eigen::Index>(row))).squaredNorm();
}

Eigen::VectorXd squared_distances(const FeatureRef& z, const PrototypeSet& set) {
  require_dim(z, set);
  return (set.matrix().rowwise() - z.transpose()).rowwise().squaredNorm();
}

Eigen::VectorXd class_probabilities(const FeatureRef& z, const PrototypeSet& set, double gamma) {
  return log_probabilities(z, set, gamma).array().exp();
}

double ce_loss(const FeatureRef& z, ClassId y, const PrototypeSet& set, double gamma) {
  const std::size_t row = set.row_of(y);
  return -log_probabilities(z, set, gamma)[static_cast<Eigen::Index>(row)];
}

double pl_loss(const FeatureRef& z, ClassId y, const PrototypeSet& set) {
  return squared_distance(z, set, set.row_of(y));
}

double ipc_loss(std::span<const LabeledFeature> batch, const PrototypeSet& set,
                const ClassifierConfig& config) {
  if (batch.empty()) raise(ErrorKind::kInput, "loss needs a nonempty batch");
  double total = 0.0;
  for (const auto& s : batch) {
    total += ce_loss(s.z, s.y, set, config.gamma);
    if (config.lambda_pl != 0.0) total += config.lambda_pl * pl_loss(s.z, s.y, set);
  }
  return total / static_cast<double>(batch.size());
}

Eigen::MatrixXd ipc_gradient(std::span<const LabeledFeature> batch, const PrototypeSet& set,
                             const ClassifierConfig& config) {
  if (batch.empty()) raise(ErrorKind::kInput, "gradient needs a nonempty batch");
  require_nonempty(set);
  const Eigen::MatrixXd& protos = set.matrix();
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(protos.rows(), protos.cols());
  for (const auto& s : batch) {
    const auto y = static_cast<Eigen::Index>(set.row_of(s.y));
    const Eigen::VectorXd p = class_probabilities(s.z, set, config.gamma);
    // d/d phi_i of CE: (p_i - [i == y]) * 2 gamma * (z - phi_i)
    Eigen::VectorXd coef = 2.0 * config.gamma * p;
    coef[y] -= 2.0 * config.gamma;
    grad.noalias() -= coef.asDiagonal() * (protos.rowwise() - s.z.transpose());
    if (config.lambda_pl != 0.0) {
      grad.row(y) += 2.0 * config.lambda_pl * (protos.row(y) - s.z.transpose());
    }
  }
  grad /= static_cast<double>(batch.size());
  grad.topRows(static_cast<Eigen::Index>(set.frozen_count())).setZero();
  return grad;
}

std::size_t predict_row(const FeatureRef& z, const PrototypeSet& set) {
  require_nonempty(set);
  const Eigen::VectorXd d = squared_distances(z, set);
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < d.size(); ++i) {
    if (d[i] < d[best]) best = i;
  }
  return static_cast<std::size_t>(best);
}

ClassId predict(const FeatureRef& z, const PrototypeSet& set) {
  return set.class_ids()[predict_row(z, set)];
}

}  // namespace semiipc
