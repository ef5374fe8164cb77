#pragma once

#include "semiipc/embedding_store.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace semiipc {

struct SyntheticConfig {
  std::size_t num_classes = 10;
  std::size_t samples_per_class = 205;
  std::size_t dim = 32;
  double separation = 2.0;   // minimum pairwise distance between class centers
  double sigma = 0.5;        // within-class noise of the base view
  double sigma_weak = 0.1;   // weak view = base + N(0, sigma_weak^2 I)
  double sigma_strong = 0.2; // strong view = base + N(0, sigma_strong^2 I)
  std::uint64_t seed = 0;

  void validate() const;
};

// Class centers are uniform on a sphere of radius kCenterRadiusFactor *
// separation, rejection-sampled until every pair is at least `separation`
// apart.
inline constexpr double kCenterRadiusFactor = 1.25;

// Rows are class centers, class id == row index.
Eigen::MatrixXd synthetic_centers(const SyntheticConfig& config);

// Class k has ids k*samples_per_class .. and label k. Draw order per sample:
// base noise, weak noise, strong noise, each dim components in order.
Dataset generate_synthetic(const SyntheticConfig& config);

// Held-out samples around the same centers from an independent noise stream.
// Ids start after the training ids.
Dataset generate_synthetic_test(const SyntheticConfig& config, std::size_t per_class);

// Out-of-distribution clusters: centers orthogonal to the span of the
// in-distribution centers, with norm matched to a typical in-distribution
// sample. Every OOD record is labeled with its own cluster id (>= first_label)
// so the source can be checked for overlap; labels are stripped on injection.
struct OodConfig {
  std::size_t num_classes = 5;
  std::size_t samples_per_class = 200;
  double sigma = 0.05;
  ClassId first_label = 1000;
};

Dataset generate_ood_companion(const SyntheticConfig& config, const OodConfig& ood);

std::optional<SyntheticConfig> find_preset(const std::string& name);
std::vector<std::string> preset_names();

}  // namespace semiipc
