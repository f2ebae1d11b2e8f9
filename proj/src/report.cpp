#include "rci/report.hpp"

#include <fmt/format.h>

#include <fstream>
#include <sstream>
#include <unistd.h>

namespace rci {

using nlohmann::json;

const RciResult* AuditReport::result(int n) const {
  for (const auto& r : results)
    if (r.n == n) return &r;
  return nullptr;
}

const PatchContribution* AuditReport::contribution(int n) const {
  for (const auto& c : contributions)
    if (c.n == n) return &c;
  return nullptr;
}

bool AuditReport::all_valid() const {
  return std::all_of(results.begin(), results.end(), [](const RciResult& r) { return r.valid; });
}

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> number_or_null(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<double>();
}

json chance_to_json(const ChanceFloor& c) { return {{"value", c.value}, {"method", to_string(c.method)}}; }

ChanceFloor chance_from_json(const json& j) {
  return {j.at("value").get<double>(), parse_chance_method(j.at("method").get<std::string>())};
}

}  // namespace

json to_json(const AuditReport& report) {
  json results = json::array();
  for (const auto& r : report.results) {
    results.push_back({{"n", r.n},
                       {"fip", r.fip},
                       {"mpp", r.mpp},
                       {"rci", optional_number(r.rci)},
                       {"chance", chance_to_json(r.chance)},
                       {"delta_min", r.delta_min},
                       {"valid", r.valid},
                       {"se_fip", optional_number(r.se_fip)},
                       {"rci_ci", r.rci_ci ? json::array({r.rci_ci->first, r.rci_ci->second}) : json(nullptr)},
                       {"band", r.band ? json(to_string(*r.band)) : json(nullptr)}});
  }
  json contributions = json::array();
  for (const auto& c : report.contributions) {
    contributions.push_back({{"n", c.n},
                             {"shares", std::vector<double>(c.shares.data(), c.shares.data() + c.shares.size())},
                             {"total_mass", c.total_mass},
                             {"items_counted", c.items_counted},
                             {"zero_mass", c.zero_mass},
                             {"center_share", optional_number(center_bias_share(c))}});
  }
  return {{"schema", report.schema},
          {"manifest", report.manifest_name},
          {"model_id", report.model_id},
          {"scorer", to_string(report.scorer)},
          {"chance", chance_to_json(report.chance)},
          {"repetitions", report.repetitions},
          {"prompt_template_version", report.prompt_template_version},
          {"item_count", report.item_count},
          {"results", std::move(results)},
          {"contributions", std::move(contributions)},
          {"conventions",
           {{"patch_numbering", "row-major, 1-based, top-left = 1"},
            {"repetitions", "averaged per cell before the per-item max"},
            {"mpp_tie_break", "lowest patch_id is reported as the winning patch"},
            {"contribution_ties", "best-patch mass split equally over tied patches"},
            {"zero_rows", "items with all-zero patch scores contribute no mass"}}},
          {"timestamps", {{"started_at", report.started_at}, {"finished_at", report.finished_at}}}};
}

AuditReport report_from_json(const json& doc) {
  try {
    AuditReport r;
    r.schema = doc.at("schema").get<std::string>();
    if (r.schema != kReportSchema) throw Error(fmt::format("unsupported report schema '{}'", r.schema));
    r.manifest_name = doc.at("manifest").get<std::string>();
    r.model_id = doc.at("model_id").get<std::string>();
    r.scorer = parse_scorer_id(doc.at("scorer").get<std::string>());
    r.chance = chance_from_json(doc.at("chance"));
    r.repetitions = doc.at("repetitions").get<int>();
    r.prompt_template_version = doc.value("prompt_template_version", "");
    r.item_count = doc.value("item_count", std::size_t{0});
    for (const auto& j : doc.at("results")) {
      RciResult x;
      x.n = j.at("n").get<int>();
      x.fip = j.at("fip").get<double>();
      x.mpp = j.at("mpp").get<double>();
      x.rci = number_or_null(j, "rci");
      x.chance = j.contains("chance") ? chance_from_json(j.at("chance")) : r.chance;
      x.delta_min = j.at("delta_min").get<double>();
      x.valid = j.at("valid").get<bool>();
      x.se_fip = number_or_null(j, "se_fip");
      if (auto it = j.find("rci_ci"); it != j.end() && !it->is_null())
        x.rci_ci = std::make_pair(it->at(0).get<double>(), it->at(1).get<double>());
      if (auto it = j.find("band"); it != j.end() && !it->is_null()) x.band = parse_band(it->get<std::string>());
      r.results.push_back(x);
    }
    for (const auto& j : doc.at("contributions")) {
      PatchContribution c;
      c.n = j.at("n").get<int>();
      const auto shares = j.at("shares").get<std::vector<double>>();
      c.shares = Eigen::Map<const Eigen::VectorXd>(shares.data(), static_cast<Eigen::Index>(shares.size()));
      c.total_mass = j.at("total_mass").get<double>();
      c.items_counted = j.at("items_counted").get<std::size_t>();
      c.zero_mass = j.at("zero_mass").get<bool>();
      r.contributions.push_back(std::move(c));
    }
    if (auto it = doc.find("timestamps"); it != doc.end()) {
      r.started_at = it->value("started_at", "");
      r.finished_at = it->value("finished_at", "");
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(fmt::format("malformed report: {}", e.what()));
  }
}

AuditReport load_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot open report {}", path.string()));
  try {
    return report_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw Error(fmt::format("{}: {}", path.string(), e.what()));
  } catch (const Error& e) {
    throw Error(fmt::format("{}: {}", path.string(), e.what()));
  }
}

ReportFormat parse_report_format(std::string_view text) {
  if (text == "json") return ReportFormat::Json;
  if (text == "csv") return ReportFormat::Csv;
  if (text == "terminal") return ReportFormat::Terminal;
  throw Error(fmt::format("unknown report format '{}' (json, csv, terminal)", text));
}

std::string format_fixed3(double value) {
  std::string s = fmt::format("{:.3f}", value);
  if (s == "-0.000") s = "0.000";
  return s;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void append_csv_rows(std::string& out, const AuditReport& report) {
  for (const auto& r : report.results) {
    const bool show = r.valid && r.rci.has_value();
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", csv_field(report.manifest_name),
                       csv_field(report.model_id), r.n, format_fixed3(r.fip), format_fixed3(r.mpp),
                       show ? format_fixed3(*r.rci) : "", show ? std::string(to_string(*r.band)) : "INVALID",
                       r.valid ? "true" : "false", format_fixed3(r.chance.value), format_fixed3(r.delta_min),
                       r.se_fip ? format_fixed3(*r.se_fip) : "");
  }
}

std::size_t display_width(const std::string& s) {
  std::size_t w = 0;
  for (unsigned char c : s)
    if ((c & 0xC0) != 0x80) ++w;
  return w;
}

std::string pad(const std::string& s, std::size_t width, bool right_align) {
  const std::size_t w = display_width(s);
  const std::string fill(width > w ? width - w : 0, ' ');
  return right_align ? fill + s : s + fill;
}

std::string render_terminal(const AuditReport& report) {
  std::string out;
  out += fmt::format("RCI audit: {} | model {} | scorer {} | items {} | repetitions {}\n", report.manifest_name,
                     report.model_id, to_string(report.scorer), report.item_count, report.repetitions);
  out += fmt::format("chance floor {} ({})\n\n", format_fixed3(report.chance.value), to_string(report.chance.method));

  const std::vector<std::string> header{"n", "FIP", "MPP", "RCI", "95% CI", "delta_min", "band / status"};
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : report.results) {
    const bool show = r.valid && r.rci.has_value();
    rows.push_back({std::to_string(r.n), format_fixed3(r.fip), format_fixed3(r.mpp),
                    show ? format_fixed3(*r.rci) : "-",
                    show && r.rci_ci ? fmt::format("[{}, {}]", format_fixed3(r.rci_ci->first),
                                                   format_fixed3(r.rci_ci->second))
                                     : "-",
                    format_fixed3(r.delta_min), show ? std::string(to_string(*r.band)) : kInvalidFlag});
  }
  std::vector<std::size_t> widths(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    widths[c] = display_width(header[c]);
    for (const auto& row : rows) widths[c] = std::max(widths[c], display_width(row[c]));
  }
  auto emit = [&](const std::vector<std::string>& row) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) line += "  ";
      line += pad(row[c], widths[c], c + 1 < row.size());
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
  };
  emit(header);
  std::vector<std::string> rule;
  for (auto w : widths) rule.emplace_back(w, '-');
  emit(rule);
  for (const auto& row : rows) emit(row);

  if (!report.contributions.empty()) {
    out += "\npatch contribution shares (row-major, patch 1 = top-left; ties split equally)\n";
    for (const auto& c : report.contributions) {
      out += fmt::format("n={}", c.n);
      if (c.zero_mass) {
        out += ": zero mass (no item has a correct patch)\n";
        continue;
      }
      if (auto center = center_bias_share(c)) out += fmt::format(" center share {}", format_fixed3(*center));
      out += "\n";
      for (int row = 0; row < c.n; ++row) {
        out += "  ";
        for (int col = 0; col < c.n; ++col)
          out += fmt::format("{:>7}", fmt::format("{:.1f}%", 100.0 * c.shares[row * c.n + col]));
        out += "\n";
      }
    }
  }
  return out;
}

}  // namespace

std::string render_csv(const std::vector<AuditReport>& reports) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& r : reports) append_csv_rows(out, r);
  return out;
}

std::string render_report(const AuditReport& report, ReportFormat format) {
  switch (format) {
    case ReportFormat::Json: return to_json(report).dump(2) + "\n";
    case ReportFormat::Csv: return render_csv({report});
    case ReportFormat::Terminal: return render_terminal(report);
  }
  return {};
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + fmt::format(".tmp{}", ::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write {}", tmp));
    out << content;
    out.flush();
    if (!out) throw Error(fmt::format("write to {} failed", tmp));
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace rci
