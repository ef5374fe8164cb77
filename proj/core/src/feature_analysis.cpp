#include "semiipc/feature_analysis.hpp"

#include "semiipc/errors.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <string>

namespace semiipc {

SpectrumReport spectrum_from_eigenvalues(std::vector<double> eigenvalues, double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    raise(ErrorKind::kConfig, "PC-ID threshold must be in (0,1]");
  }
  for (double& v : eigenvalues) v = std::max(v, 0.0);
  std::sort(eigenvalues.begin(), eigenvalues.end(), std::greater<>());
  double total = 0.0;
  for (double v : eigenvalues) total += v;
  if (!(total > 0.0)) raise(ErrorKind::kDegenerate, "spectrum has zero total variance");

  SpectrumReport report;
  report.cumulative.reserve(eigenvalues.size());
  double running = 0.0;
  for (std::size_t k = 0; k < eigenvalues.size(); ++k) {
    running += eigenvalues[k];
    report.cumulative.push_back(k + 1 == eigenvalues.size() ? 1.0 : running / total);
    if (report.pc_id == 0 && report.cumulative.back() >= threshold - kPcIdSlack) {
      report.pc_id = k + 1;
    }
  }
  report.eigenvalues = std::move(eigenvalues);
  return report;
}

SpectrumReport pc_id(const Eigen::MatrixXd& features, double threshold, bool normalize_rows) {
  if (features.rows() < 2) raise(ErrorKind::kInput, "PC-ID needs at least two samples");
  if (!features.allFinite()) raise(ErrorKind::kInput, "features must be finite");
  Eigen::MatrixXd centered = features.rowwise() - features.colwise().mean();
  if (normalize_rows) {
    for (Eigen::Index i = 0; i < centered.rows(); ++i) {
      const double norm = centered.row(i).norm();
      if (norm > 0.0) centered.row(i) /= norm;
    }
  }
  if (centered.squaredNorm() == 0.0) {
    raise(ErrorKind::kDegenerate, "all feature rows are identical");
  }
  const Eigen::MatrixXd cov =
      (centered.transpose() * centered) / static_cast<double>(features.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) raise(ErrorKind::kDegenerate, "eigensolver failed");
  const Eigen::VectorXd& ev = solver.eigenvalues();
  return spectrum_from_eigenvalues(std::vector<double>(ev.data(), ev.data() + ev.size()),
                                   threshold);
}

double cosine_distance(const Eigen::Ref<const Eigen::VectorXd>& a,
                       const Eigen::Ref<const Eigen::VectorXd>& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) raise(ErrorKind::kInput, "cosine distance of a zero vector");
  return 1.0 - a.dot(b) / (na * nb);
}

ClassGeometryReport class_geometry(const Eigen::MatrixXd& features,
                                   std::span<const ClassId> labels) {
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    raise(ErrorKind::kInput, "features and labels differ in count");
  }
  std::map<ClassId, std::vector<Eigen::Index>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    groups[labels[i]].push_back(static_cast<Eigen::Index>(i));
  }
  if (groups.size() < 2) raise(ErrorKind::kDegenerate, "inter-class distance needs two classes");

  std::vector<Eigen::VectorXd> means;
  double intra_sum = 0.0;
  std::size_t intra_pairs = 0;
  for (const auto& [cls, rows] : groups) {
    if (rows.size() < 2) {
      raise(ErrorKind::kDegenerate, "class " + std::to_string(cls) + " has a single sample");
    }
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(features.cols());
    for (auto r : rows) mean += features.row(r).transpose();
    means.push_back(mean / static_cast<double>(rows.size()));
    for (std::size_t a = 0; a < rows.size(); ++a) {
      for (std::size_t b = a + 1; b < rows.size(); ++b) {
        intra_sum += cosine_distance(features.row(rows[a]).transpose(),
                                     features.row(rows[b]).transpose());
        ++intra_pairs;
      }
    }
  }

  double inter_sum = 0.0;
  std::size_t inter_pairs = 0;
  for (std::size_t a = 0; a < means.size(); ++a) {
    for (std::size_t b = a + 1; b < means.size(); ++b) {
      inter_sum += cosine_distance(means[a], means[b]);
      ++inter_pairs;
    }
  }

  ClassGeometryReport report;
  report.pi_inter = std::max(0.0, inter_sum / static_cast<double>(inter_pairs));
  report.pi_intra = std::max(0.0, intra_sum / static_cast<double>(intra_pairs));
  // Below this the class means coincide up to rounding and the ratio is meaningless.
  constexpr double kMinInter = 1e-12;
  if (report.pi_inter > kMinInter) report.fsu_ratio = report.pi_intra / report.pi_inter;
  return report;
}

}  // namespace semiipc
