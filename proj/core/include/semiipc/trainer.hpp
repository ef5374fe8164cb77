#pragma once

#include "semiipc/embedding_store.hpp"
#include "semiipc/prototype_classifier.hpp"
#include "semiipc/random.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace semiipc {

struct TrainConfig {
  double lr0 = 0.1;
  double momentum = 0.9;
  std::size_t epochs = 80;
  std::size_t batch_size = 128;
  double tau = 0.8;
  double gamma = 1.0;
  double lambda_pl = 0.01;
  // Pseudo-instances per old class per epoch; unset means the task's labeled
  // count per class.
  std::optional<std::size_t> resample_per_class;
  std::uint64_t seed = 0;

  bool use_pur = true;       // confident pseudo-label regularization
  bool use_iu = true;        // stop-grad on old prototypes
  bool use_pl = true;        // prototype-learning pull term (lambda)
  bool use_resample = true;  // Gaussian replay around old prototypes
  // Class-mean prototypes with no optimization at all.
  bool baseline_nme = false;

  void validate() const;
  ClassifierConfig classifier() const { return {gamma, use_pl ? lambda_pl : 0.0}; }
};

struct TrainerState {
  PrototypeSet protos;
  std::optional<double> radial_scale;  // set once, while training task 1
  std::size_t task_index = 0;          // tasks completed so far
  Rng rng;
};

TrainerState initial_state(std::size_t dim, std::uint64_t seed);

// Appends the class mean of each new class's labeled base views. Frozen count
// becomes the previous row count when use_iu, else 0.
PrototypeSet init_prototypes(const TaskData& task, PrototypeSet protos, bool use_iu);

// sqrt(mean_k tr(Sigma_k) / d) with unbiased per-class covariances. If any
// class has fewer than two samples the pooled covariance of all samples is
// used instead.
double estimate_radial_scale(std::span<const LabeledSample> labeled);

// For each of the first old_rows prototypes, count draws of phi_k + r * e.
// Draw order: class by class, sample by sample, dimension by dimension.
std::vector<LabeledFeature> resample_old(const PrototypeSet& protos, std::size_t old_rows,
                                         double radial_scale, std::size_t count_per_class,
                                         Rng& rng);

struct Selection {
  std::vector<LabeledFeature> pairs;  // (strong view, pseudo-label)
  std::vector<std::size_t> picked;    // pool index of each pair
};

// Keeps pool[i] for i in batch iff the max class probability of its weak view
// exceeds tau; the pseudo-label is the nearest prototype of the weak view.
Selection select_confident(std::span<const UnlabeledSample> pool,
                           std::span<const std::size_t> batch, const PrototypeSet& protos,
                           double tau, double gamma);

// Mean CE of the pseudo-labeled pairs; 0 for an empty batch.
double unsupervised_loss(std::span<const LabeledFeature> pseudo, const PrototypeSet& protos,
                         double gamma);

// v <- momentum * v - lr * g; phi <- phi + v. Rows below frozen_count keep
// zero velocity and do not move.
void sgd_step(Eigen::MatrixXd& protos, Eigen::MatrixXd& velocity, const Eigen::MatrixXd& grad,
              double lr, double momentum, std::size_t frozen_count = 0);

// lr0 * 0.5 * (1 + cos(pi * epoch / epochs))
double cosine_lr(double lr0, std::size_t epoch, std::size_t epochs);

// Called after every confident-selection pass with the minibatch pool indices,
// the selected pool indices and their pseudo-labels.
using SelectionObserver = std::function<void(std::span<const std::size_t> batch,
                                             std::span<const std::size_t> picked,
                                             std::span<const LabeledFeature> pairs)>;

// One incremental task. Per epoch the rng draws, in order: resampled old
// instances, the supervised permutation, the unlabeled permutation. Steps per
// epoch = max(ceil(supervised / batch), ceil(unlabeled / batch)); each step
// takes the next batch_size entries of each permutation cyclically.
TrainerState train_task(TrainerState state, const TaskData& task, const TrainConfig& config,
                        const SelectionObserver& observer = {});

}  // namespace semiipc
