#include "semiipc/trainer.hpp"

#include "semiipc/errors.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <string>

namespace semiipc {

void TrainConfig::validate() const {
  if (!(lr0 >= 0.0) || !std::isfinite(lr0)) raise(ErrorKind::kConfig, "lr0 must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) raise(ErrorKind::kConfig, "momentum must be in [0,1)");
  if (epochs == 0) raise(ErrorKind::kConfig, "epochs must be >= 1");
  if (batch_size == 0) raise(ErrorKind::kConfig, "batch size must be >= 1");
  if (!(tau > 0.0 && tau < 1.0)) raise(ErrorKind::kConfig, "tau must be in (0,1)");
  if (resample_per_class && *resample_per_class == 0) {
    raise(ErrorKind::kConfig, "resample count per class must be >= 1");
  }
  classifier().validate();
}

TrainerState initial_state(std::size_t dim, std::uint64_t seed) {
  return TrainerState{PrototypeSet(dim), std::nullopt, 0, Rng(mix_seed(seed, 0x7A1))};
}

PrototypeSet init_prototypes(const TaskData& task, PrototypeSet protos, bool use_iu) {
  const std::size_t previous = protos.rows();
  std::map<ClassId, std::pair<Eigen::VectorXd, std::size_t>> sums;
  for (ClassId c : task.class_ids) {
    if (protos.contains(c)) {
      raise(ErrorKind::kProtocol, "task " + std::to_string(task.task_index) + ": class " +
                                      std::to_string(c) + " was learned in an earlier task");
    }
    sums[c] = {Eigen::VectorXd::Zero(static_cast<Eigen::Index>(protos.dim())), 0};
  }
  for (const auto& s : task.labeled) {
    const auto it = sums.find(s.label);
    if (it == sums.end()) {
      raise(ErrorKind::kProtocol, "task " + std::to_string(task.task_index) +
                                      ": labeled sample of foreign class " +
                                      std::to_string(s.label));
    }
    it->second.first += s.base;
    ++it->second.second;
  }
  for (ClassId c : task.class_ids) {
    const auto& [sum, n] = sums.at(c);
    if (n == 0) {
      raise(ErrorKind::kConfig, "task " + std::to_string(task.task_index) + ": class " +
                                    std::to_string(c) + " has no labeled samples");
    }
    protos.append(sum / static_cast<double>(n), c);
  }
  protos.set_frozen_count(use_iu ? previous : 0);
  return protos;
}

double estimate_radial_scale(std::span<const LabeledSample> labeled) {
  if (labeled.empty()) return 0.0;
  const auto d = labeled.front().base.size();
  std::map<ClassId, std::vector<const Eigen::VectorXd*>> groups;
  for (const auto& s : labeled) groups[s.label].push_back(&s.base);

  auto trace_of_covariance = [d](const std::vector<const Eigen::VectorXd*>& xs) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    for (const auto* x : xs) mean += *x;
    mean /= static_cast<double>(xs.size());
    double ss = 0.0;
    for (const auto* x : xs) ss += (*x - mean).squaredNorm();
    return ss / static_cast<double>(xs.size() - 1);
  };

  bool per_class = true;
  for (const auto& [cls, xs] : groups) per_class = per_class && xs.size() >= 2;

  double mean_trace = 0.0;
  if (per_class) {
    for (const auto& [cls, xs] : groups) mean_trace += trace_of_covariance(xs);
    mean_trace /= static_cast<double>(groups.size());
  } else {
    if (labeled.size() < 2) return 0.0;
    std::vector<const Eigen::VectorXd*> all;
    for (const auto& s : labeled) all.push_back(&s.base);
    mean_trace = trace_of_covariance(all);
  }
  return std::sqrt(mean_trace / static_cast<double>(d));
}

std::vector<LabeledFeature> resample_old(const PrototypeSet& protos, std::size_t old_rows,
                                         double radial_scale, std::size_t count_per_class,
                                         Rng& rng) {
  if (old_rows > protos.rows()) raise(ErrorKind::kState, "more old rows than prototypes");
  if (!(radial_scale >= 0.0)) raise(ErrorKind::kInput, "radial scale must be >= 0");
  std::vector<LabeledFeature> out;
  out.reserve(old_rows * count_per_class);
  const auto d = static_cast<Eigen::Index>(protos.dim());
  for (std::size_t k = 0; k < old_rows; ++k) {
    const auto row = protos.matrix().row(static_cast<Eigen::Index>(k));
    for (std::size_t j = 0; j < count_per_class; ++j) {
      LabeledFeature f{Eigen::VectorXd(d), protos.class_ids()[k]};
      for (Eigen::Index c = 0; c < d; ++c) f.z[c] = row[c] + radial_scale * rng.normal();
      out.push_back(std::move(f));
    }
  }
  return out;
}

Selection select_confident(std::span<const UnlabeledSample> pool,
                           std::span<const std::size_t> batch, const PrototypeSet& protos,
                           double tau, double gamma) {
  Selection sel;
  for (std::size_t i : batch) {
    const auto& u = pool[i];
    const Eigen::VectorXd p = class_probabilities(u.weak, protos, gamma);
    if (p.maxCoeff() > tau) {
      sel.pairs.push_back({u.strong, predict(u.weak, protos)});
      sel.picked.push_back(i);
    }
  }
  return sel;
}

double unsupervised_loss(std::span<const LabeledFeature> pseudo, const PrototypeSet& protos,
                         double gamma) {
  if (pseudo.empty()) return 0.0;
  return ipc_loss(pseudo, protos, ClassifierConfig{gamma, 0.0});
}

void sgd_step(Eigen::MatrixXd& protos, Eigen::MatrixXd& velocity, const Eigen::MatrixXd& grad,
              double lr, double momentum, std::size_t frozen_count) {
  if (protos.rows() != velocity.rows() || protos.cols() != velocity.cols() ||
      protos.rows() != grad.rows() || protos.cols() != grad.cols()) {
    raise(ErrorKind::kState, "sgd_step shape mismatch");
  }
  if (frozen_count > static_cast<std::size_t>(protos.rows())) {
    raise(ErrorKind::kState, "frozen count exceeds prototype rows");
  }
  velocity = momentum * velocity - lr * grad;
  velocity.topRows(static_cast<Eigen::Index>(frozen_count)).setZero();
  const auto tail = protos.rows() - static_cast<Eigen::Index>(frozen_count);
  protos.bottomRows(tail) += velocity.bottomRows(tail);
}

double cosine_lr(double lr0, std::size_t epoch, std::size_t epochs) {
  return lr0 * 0.5 *
         (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) /
                         static_cast<double>(epochs)));
}

namespace {

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

// batch_size (or fewer, if the pool is smaller) entries of perm starting at
// step * batch_size, wrapping around.
std::vector<std::size_t> cyclic_batch(const std::vector<std::size_t>& perm, std::size_t step,
                                      std::size_t batch_size) {
  std::vector<std::size_t> out;
  if (perm.empty()) return out;
  const std::size_t n = std::min(batch_size, perm.size());
  out.reserve(n);
  const std::size_t start = (step * batch_size) % perm.size();
  for (std::size_t j = 0; j < n; ++j) out.push_back(perm[(start + j) % perm.size()]);
  return out;
}

}  // namespace

TrainerState train_task(TrainerState state, const TaskData& task, const TrainConfig& config,
                        const SelectionObserver& observer) {
  config.validate();
  if (task.class_ids.empty()) raise(ErrorKind::kProtocol, "task has no classes");
  if (state.radial_scale.has_value() != (state.task_index > 0)) {
    raise(ErrorKind::kState, "radial scale must be set exactly when a task has been learned");
  }

  const std::size_t old_rows = state.protos.rows();
  state.protos = init_prototypes(task, std::move(state.protos), config.use_iu);

  if (!state.radial_scale) state.radial_scale = estimate_radial_scale(task.labeled);
  const double r = *state.radial_scale;
  const bool replay = state.task_index > 0 && config.use_resample && old_rows > 0;
  const std::size_t per_class = config.resample_per_class.value_or(
      std::max<std::size_t>(1, task.labeled.size() / task.class_ids.size()));

  if (!config.baseline_nme) {
    const ClassifierConfig sup_cfg = config.classifier();
    const ClassifierConfig unsup_cfg{config.gamma, 0.0};
    PrototypeSet& protos = state.protos;
    Eigen::MatrixXd velocity = Eigen::MatrixXd::Zero(protos.matrix().rows(),
                                                     protos.matrix().cols());

    std::vector<LabeledFeature> supervised;
    supervised.reserve(task.labeled.size() + (replay ? old_rows * per_class : 0));
    std::vector<std::size_t> sup_perm;
    std::vector<std::size_t> unl_perm(task.unlabeled.size());

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
      const double lr = cosine_lr(config.lr0, epoch, config.epochs);

      supervised.clear();
      for (const auto& s : task.labeled) supervised.push_back({s.base, s.label});
      if (replay) {
        auto pseudo_old = resample_old(protos, old_rows, r, per_class, state.rng);
        for (auto& f : pseudo_old) supervised.push_back(std::move(f));
      }
      sup_perm.resize(supervised.size());
      std::iota(sup_perm.begin(), sup_perm.end(), std::size_t{0});
      state.rng.shuffle(std::span<std::size_t>(sup_perm));
      std::iota(unl_perm.begin(), unl_perm.end(), std::size_t{0});
      state.rng.shuffle(std::span<std::size_t>(unl_perm));

      const std::size_t steps = std::max(ceil_div(sup_perm.size(), config.batch_size),
                                         ceil_div(unl_perm.size(), config.batch_size));
      std::vector<LabeledFeature> sup_batch;
      for (std::size_t step = 0; step < steps; ++step) {
        sup_batch.clear();
        for (std::size_t i : cyclic_batch(sup_perm, step, config.batch_size)) {
          sup_batch.push_back(supervised[i]);
        }
        Eigen::MatrixXd grad = ipc_gradient(sup_batch, protos, sup_cfg);

        if (config.use_pur && !unl_perm.empty()) {
          const auto unl_batch = cyclic_batch(unl_perm, step, config.batch_size);
          const Selection sel =
              select_confident(task.unlabeled, unl_batch, protos, config.tau, config.gamma);
          if (observer) observer(unl_batch, sel.picked, sel.pairs);
          if (!sel.pairs.empty()) grad += ipc_gradient(sel.pairs, protos, unsup_cfg);
        }

        grad.topRows(static_cast<Eigen::Index>(protos.frozen_count())).setZero();
        sgd_step(protos.matrix(), velocity, grad, lr, config.momentum, protos.frozen_count());
      }
    }
    if (!protos.matrix().allFinite()) {
      raise(ErrorKind::kInput, "training diverged to non-finite prototypes");
    }
  }

  state.protos.set_frozen_count(state.protos.rows());
  ++state.task_index;
  return state;
}

}  // namespace semiipc
