#include "rci/spatial_bias.hpp"

#include <fmt/format.h>

namespace rci {

PatchContribution patch_contributions(const EvalMatrix& matrix, int n) {
  return patch_contributions(matrix.patches(n), n);
}

std::optional<double> center_bias_share(const PatchContribution& contribution) {
  const auto center = center_patch_id(GridSpec(contribution.n));
  if (!center) return std::nullopt;
  return contribution.shares[*center - 1];
}

PatchContribution average_contributions(const std::vector<PatchContribution>& per_dataset) {
  if (per_dataset.empty()) throw Error("average_contributions: no inputs");
  const int n = per_dataset.front().n;
  PatchContribution out;
  out.n = n;
  out.shares = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n) * n);
  std::size_t used = 0;
  for (const auto& c : per_dataset) {
    if (c.n != n) throw Error(fmt::format("average_contributions: mixed granularities {} and {}", n, c.n));
    out.items_counted += c.items_counted;
    out.total_mass += c.total_mass;
    if (c.zero_mass) continue;
    out.shares += c.shares;
    ++used;
  }
  out.zero_mass = used == 0;
  if (used) out.shares /= static_cast<double>(used);
  return out;
}

}  // namespace rci
