#include "semiipc/synthetic.hpp"

#include "semiipc/errors.hpp"
#include "semiipc/random.hpp"

#include <cmath>
#include <map>

namespace semiipc {
namespace {

constexpr std::uint64_t kStreamCenters = 0xC0;
constexpr std::uint64_t kStreamTrain = 0x71;
constexpr std::uint64_t kStreamTest = 0x7E;
constexpr std::uint64_t kStreamOod = 0x0D;
constexpr std::size_t kMaxCenterAttempts = 100000;

std::vector<float> noisy(const Eigen::VectorXd& mean, double sigma, Rng& rng) {
  std::vector<float> out(static_cast<std::size_t>(mean.size()));
  for (Eigen::Index j = 0; j < mean.size(); ++j) {
    out[static_cast<std::size_t>(j)] = static_cast<float>(mean[j] + sigma * rng.normal());
  }
  return out;
}

Eigen::VectorXd as_vector(const std::vector<float>& v) {
  return Eigen::Map<const Eigen::VectorXf>(v.data(), static_cast<Eigen::Index>(v.size()))
      .cast<double>();
}

// Per class, per sample: base, weak, strong.
std::vector<EmbeddingRecord> sample_around(const Eigen::MatrixXd& centers,
                                           const std::vector<ClassId>& labels,
                                           std::size_t per_class, double sigma,
                                           double sigma_weak, double sigma_strong,
                                           std::uint64_t first_id, Rng& rng) {
  std::vector<EmbeddingRecord> records;
  records.reserve(static_cast<std::size_t>(centers.rows()) * per_class);
  for (Eigen::Index k = 0; k < centers.rows(); ++k) {
    const Eigen::VectorXd center = centers.row(k).transpose();
    for (std::size_t j = 0; j < per_class; ++j) {
      EmbeddingRecord r;
      r.id = first_id + static_cast<std::uint64_t>(k) * per_class + j;
      r.label = labels[static_cast<std::size_t>(k)];
      r.base = noisy(center, sigma, rng);
      const Eigen::VectorXd base = as_vector(r.base);
      r.weak = noisy(base, sigma_weak, rng);
      r.strong = noisy(base, sigma_strong, rng);
      records.push_back(std::move(r));
    }
  }
  return records;
}

std::vector<ClassId> iota_labels(std::size_t n, ClassId first) {
  std::vector<ClassId> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = first + static_cast<ClassId>(i);
  return out;
}

}  // namespace

void SyntheticConfig::validate() const {
  if (num_classes == 0 || samples_per_class == 0 || dim == 0) {
    raise(ErrorKind::kConfig, "synthetic generator needs positive class, sample and dim counts");
  }
  if (!(separation >= 0.0) || !(sigma >= 0.0) || !(sigma_weak >= 0.0) ||
      !(sigma_strong >= 0.0)) {
    raise(ErrorKind::kConfig, "synthetic separation and noise levels must be nonnegative");
  }
  if (dim > UINT32_MAX) raise(ErrorKind::kConfig, "dimension exceeds PCE1 limit");
}

Eigen::MatrixXd synthetic_centers(const SyntheticConfig& config) {
  config.validate();
  const auto d = static_cast<Eigen::Index>(config.dim);
  const double radius = kCenterRadiusFactor * config.separation;
  Rng rng(mix_seed(config.seed, kStreamCenters));
  Eigen::MatrixXd centers(static_cast<Eigen::Index>(config.num_classes), d);
  for (Eigen::Index k = 0; k < centers.rows(); ++k) {
    bool placed = false;
    for (std::size_t attempt = 0; attempt < kMaxCenterAttempts && !placed; ++attempt) {
      Eigen::VectorXd g(d);
      for (Eigen::Index j = 0; j < d; ++j) g[j] = rng.normal();
      const double norm = g.norm();
      if (norm == 0.0) continue;
      const Eigen::RowVectorXd c = (radius / norm) * g.transpose();
      placed = true;
      for (Eigen::Index other = 0; other < k && placed; ++other) {
        placed = (centers.row(other) - c).norm() >= config.separation;
      }
      if (placed) centers.row(k) = c;
    }
    if (!placed) {
      raise(ErrorKind::kConfig, "cannot place " + std::to_string(config.num_classes) +
                                    " centers with separation " +
                                    std::to_string(config.separation) + " in dim " +
                                    std::to_string(config.dim));
    }
  }
  return centers;
}

Dataset generate_synthetic(const SyntheticConfig& config) {
  const Eigen::MatrixXd centers = synthetic_centers(config);
  Rng rng(mix_seed(config.seed, kStreamTrain));
  auto records = sample_around(centers, iota_labels(config.num_classes, 0),
                               config.samples_per_class, config.sigma, config.sigma_weak,
                               config.sigma_strong, 0, rng);
  return Dataset(static_cast<std::uint32_t>(config.dim), kAllViews, std::move(records));
}

Dataset generate_synthetic_test(const SyntheticConfig& config, std::size_t per_class) {
  if (per_class == 0) raise(ErrorKind::kConfig, "test set needs at least one sample per class");
  const Eigen::MatrixXd centers = synthetic_centers(config);
  Rng rng(mix_seed(config.seed, kStreamTest));
  const std::uint64_t first_id = config.num_classes * config.samples_per_class;
  auto records = sample_around(centers, iota_labels(config.num_classes, 0), per_class,
                               config.sigma, config.sigma_weak, config.sigma_strong,
                               first_id, rng);
  return Dataset(static_cast<std::uint32_t>(config.dim), kAllViews, std::move(records));
}

Dataset generate_ood_companion(const SyntheticConfig& config, const OodConfig& ood) {
  if (ood.num_classes == 0 || ood.samples_per_class == 0) {
    raise(ErrorKind::kConfig, "OOD companion needs positive class and sample counts");
  }
  if (!(ood.sigma >= 0.0)) raise(ErrorKind::kConfig, "OOD sigma must be nonnegative");
  if (ood.first_label < static_cast<ClassId>(config.num_classes)) {
    raise(ErrorKind::kConfig, "OOD labels overlap the in-distribution class ids");
  }
  const auto d = static_cast<Eigen::Index>(config.dim);
  const auto k_id = static_cast<Eigen::Index>(config.num_classes);
  const auto k_ood = static_cast<Eigen::Index>(ood.num_classes);
  if (k_id + k_ood > d) {
    raise(ErrorKind::kConfig, "dimension too small for OOD centers orthogonal to the classes");
  }
  const Eigen::MatrixXd centers = synthetic_centers(config);

  // Columns k_id.. of the full Q span the orthogonal complement of the centers.
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(centers.transpose());
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd complement = q.rightCols(d - k_id);

  Rng rng(mix_seed(config.seed, kStreamOod));
  Eigen::MatrixXd coords(d - k_id, k_ood);
  for (Eigen::Index c = 0; c < k_ood; ++c) {
    for (Eigen::Index j = 0; j < d - k_id; ++j) coords(j, c) = rng.normal();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr_dirs(coords);
  const Eigen::MatrixXd dirs =
      complement * (qr_dirs.householderQ() * Eigen::MatrixXd::Identity(d - k_id, k_ood));

  const double radius = kCenterRadiusFactor * config.separation;
  const double norm = std::sqrt(radius * radius +
                                config.sigma * config.sigma * static_cast<double>(config.dim));
  const Eigen::MatrixXd ood_centers = norm * dirs.transpose();

  const std::uint64_t first_id =
      std::uint64_t{1} << 40;  // far above any generated in-distribution id
  auto records = sample_around(ood_centers, iota_labels(ood.num_classes, ood.first_label),
                               ood.samples_per_class, ood.sigma, config.sigma_weak,
                               config.sigma_strong, first_id, rng);
  return Dataset(static_cast<std::uint32_t>(config.dim), kAllViews, std::move(records));
}

namespace {

const std::map<std::string, SyntheticConfig>& presets() {
  static const std::map<std::string, SyntheticConfig> table = [] {
    std::map<std::string, SyntheticConfig> t;
    t["sep2.0-noise0.5"] = SyntheticConfig{10, 205, 32, 2.0, 0.5, 0.1, 0.2, 0};
    t["sep2.0-noise0.0"] = SyntheticConfig{10, 205, 32, 2.0, 0.0, 0.0, 0.0, 0};
    t["sep3.0-noise0.5-c100"] = SyntheticConfig{100, 60, 64, 3.0, 0.5, 0.1, 0.2, 0};
    return t;
  }();
  return table;
}

}  // namespace

std::optional<SyntheticConfig> find_preset(const std::string& name) {
  const auto it = presets().find(name);
  if (it == presets().end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  for (const auto& [name, cfg] : presets()) names.push_back(name);
  return names;
}

}  // namespace semiipc
