#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "rci/rci_engine.hpp"

namespace rci {

/// Per-position share of best-patch score mass. shares[k] belongs to
/// patch_id k + 1.
struct PatchContribution {
  int n = 0;
  Eigen::VectorXd shares;
  double total_mass = 0.0;
  std::size_t items_counted = 0;
  bool zero_mass = false;

  bool operator==(const PatchContribution& o) const {
    return n == o.n && shares == o.shares && total_mass == o.total_mass && items_counted == o.items_counted &&
           zero_mass == o.zero_mass;
  }
};

/// Each item's best score s* is split equally over its argmax set; rows
/// whose best score is zero add no mass.
template <typename Derived>
PatchContribution patch_contributions(const Eigen::MatrixBase<Derived>& patch_scores, int n) {
  const Eigen::Index positions = patch_scores.cols();
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(positions);
  double total = 0.0;
  for (Eigen::Index i = 0; i < patch_scores.rows(); ++i) {
    const double best = patch_scores.row(i).maxCoeff();
    if (best <= 0.0) continue;
    const auto ties = (patch_scores.row(i).array() == best).count();
    const double portion = best / static_cast<double>(ties);
    for (Eigen::Index k = 0; k < positions; ++k)
      if (patch_scores(i, k) == best) mass[k] += portion;
    total += best;
  }
  PatchContribution out;
  out.n = n;
  out.total_mass = total;
  out.items_counted = static_cast<std::size_t>(patch_scores.rows());
  out.zero_mass = !(total > 0.0);
  out.shares = out.zero_mass ? Eigen::VectorXd::Zero(positions) : Eigen::VectorXd(mass / mass.sum());
  return out;
}

PatchContribution patch_contributions(const EvalMatrix& matrix, int n);

std::optional<double> center_bias_share(const PatchContribution& contribution);

/// Equal-weight average of share vectors from several datasets at the same n.
/// Zero-mass inputs are excluded; the result is zero-mass if all inputs are.
PatchContribution average_contributions(const std::vector<PatchContribution>& per_dataset);

}  // namespace rci
