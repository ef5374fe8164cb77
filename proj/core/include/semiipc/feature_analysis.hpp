#pragma once

#include "semiipc/embedding_store.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace semiipc {

struct SpectrumReport {
  std::vector<double> eigenvalues;  // descending, clamped at 0
  std::vector<double> cumulative;   // cumulative[k-1] = P(k)
  std::size_t pc_id = 0;
};

// Slack when comparing P(k) against the threshold, so that exact ratios such
// as 9/10 are not lost to rounding.
inline constexpr double kPcIdSlack = 1e-9;

// Principal-component intrinsic dimension of the rows of `features` (n x d):
// center, optionally scale each centered row to unit norm, eigendecompose the
// sample covariance, and return the smallest k with P(k) >= threshold.
SpectrumReport pc_id(const Eigen::MatrixXd& features, double threshold = 0.9,
                     bool normalize_rows = true);

// Same, from already-computed eigenvalues in any order.
SpectrumReport spectrum_from_eigenvalues(std::vector<double> eigenvalues, double threshold = 0.9);

struct ClassGeometryReport {
  double pi_inter = 0.0;  // mean cosine distance between class means
  double pi_intra = 0.0;  // mean cosine distance over same-class sample pairs
  std::optional<double> fsu_ratio;  // pi_intra / pi_inter; empty when pi_inter == 0
};

double cosine_distance(const Eigen::Ref<const Eigen::VectorXd>& a,
                       const Eigen::Ref<const Eigen::VectorXd>& b);

ClassGeometryReport class_geometry(const Eigen::MatrixXd& features,
                                   std::span<const ClassId> labels);

}  // namespace semiipc
