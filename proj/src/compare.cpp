#include <fmt/format.h>

#include <fstream>
#include <set>
#include <sstream>

#include "rci/report.hpp"

namespace rci {

using nlohmann::json;

CorrelationMatrix compare_models(const std::vector<ModelSeries>& series, int n) {
  if (series.size() < 2) throw Error("compare_models needs at least two models");
  CorrelationMatrix m;
  m.n = n;
  for (const auto& [dataset, value] : series.front().rci_by_dataset) m.datasets.push_back(dataset);
  for (const auto& s : series) {
    std::vector<std::string> ds;
    for (const auto& [dataset, value] : s.rci_by_dataset) ds.push_back(dataset);
    if (ds != m.datasets)
      throw CoverageMismatchError(fmt::format("model '{}' covers {} datasets, '{}' covers {}; dataset lists differ",
                                              s.model_id, ds.size(), series.front().model_id, m.datasets.size()));
    m.models.push_back(s.model_id);
  }
  const auto k = static_cast<Eigen::Index>(series.size());
  const auto d = static_cast<Eigen::Index>(m.datasets.size());
  Eigen::MatrixXd values(d, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    Eigen::Index i = 0;
    for (const auto& [dataset, value] : series[static_cast<std::size_t>(j)].rci_by_dataset) values(i++, j) = value;
  }
  m.r = Eigen::MatrixXd::Identity(k, k);
  m.dataset_counts = Eigen::MatrixXi::Constant(k, k, static_cast<int>(d));
  for (Eigen::Index a = 0; a < k; ++a)
    for (Eigen::Index b = a + 1; b < k; ++b) m.r(a, b) = m.r(b, a) = pearson_r(values.col(a), values.col(b));
  return m;
}

CorrelationMatrix compare_models(const std::vector<AuditReport>& reports, int n) {
  std::vector<ModelSeries> series;
  for (const auto& report : reports) {
    const RciResult* r = report.result(n);
    if (!r) throw CoverageMismatchError(fmt::format("report {} / {} has no n={} result", report.manifest_name,
                                                    report.model_id, n));
    if (!r->valid || !r->rci)
      throw Error(fmt::format("report {} / {} is outside the validity domain at n={}", report.manifest_name,
                              report.model_id, n));
    auto it = std::find_if(series.begin(), series.end(),
                           [&](const ModelSeries& s) { return s.model_id == report.model_id; });
    if (it == series.end()) {
      series.push_back({report.model_id, {}});
      it = std::prev(series.end());
    }
    if (!it->rci_by_dataset.emplace(report.manifest_name, *r->rci).second)
      throw Error(fmt::format("duplicate report for {} / {}", report.manifest_name, report.model_id));
  }
  return compare_models(series, n);
}

std::string render_correlation(const CorrelationMatrix& m) {
  std::size_t w = 6;
  for (const auto& name : m.models) w = std::max(w, name.size());
  std::string out = fmt::format("Pearson r of RCI at n={} over {} datasets\n", m.n, m.datasets.size());
  out += fmt::format("{:<{}}", "", w);
  for (const auto& name : m.models) out += fmt::format("  {:>{}}", name, w);
  out += "\n";
  for (std::size_t a = 0; a < m.models.size(); ++a) {
    out += fmt::format("{:<{}}", m.models[a], w);
    for (std::size_t b = 0; b < m.models.size(); ++b)
      out += fmt::format("  {:>{}}", fmt::format("{:.3f}", m.r(Eigen::Index(a), Eigen::Index(b))), w);
    out += "\n";
  }
  return out;
}

json correlation_to_json(const CorrelationMatrix& m) {
  json rows = json::array();
  json counts = json::array();
  for (Eigen::Index a = 0; a < m.r.rows(); ++a) {
    json row = json::array();
    json crow = json::array();
    for (Eigen::Index b = 0; b < m.r.cols(); ++b) {
      row.push_back(m.r(a, b));
      crow.push_back(m.dataset_counts(a, b));
    }
    rows.push_back(std::move(row));
    counts.push_back(std::move(crow));
  }
  return {{"n", m.n}, {"models", m.models}, {"datasets", m.datasets}, {"r", rows}, {"dataset_counts", counts}};
}

std::vector<ReferenceCell> load_reference_table(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw Error(fmt::format("cannot open reference table {}", csv_path.string()));
  std::vector<ReferenceCell> cells;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    if (!header_seen) {
      if (line != "dataset,model,n,rci,band")
        throw Error(fmt::format("{}:{}: unexpected header", csv_path.string(), line_no));
      header_seen = true;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (f.size() != 5) throw Error(fmt::format("{}:{}: expected 5 fields", csv_path.string(), line_no));
    try {
      cells.push_back({f[0], f[1], std::stoi(f[2]), std::stod(f[3]), parse_band(f[4])});
    } catch (const std::logic_error&) {
      throw Error(fmt::format("{}:{}: malformed number", csv_path.string(), line_no));
    }
  }
  return cells;
}

std::vector<ModelSeries> reference_series(const std::vector<ReferenceCell>& cells, int n) {
  std::vector<ModelSeries> series;
  for (const auto& c : cells) {
    if (c.n != n) continue;
    auto it = std::find_if(series.begin(), series.end(), [&](const ModelSeries& s) { return s.model_id == c.model; });
    if (it == series.end()) {
      series.push_back({c.model, {}});
      it = std::prev(series.end());
    }
    it->rci_by_dataset[c.dataset] = c.rci;
  }
  return series;
}

}  // namespace rci
