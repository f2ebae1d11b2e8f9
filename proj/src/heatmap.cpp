#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "rci/report.hpp"

namespace rci {

namespace {

constexpr int kCell = 80;
constexpr int kMargin = 20;
constexpr int kTitleHeight = 28;
constexpr int kLegendHeight = 44;

struct Rgb {
  int r, g, b;
};

// Light-to-dark blue ramp; t = 0 is lightest.
Rgb ramp(double t) {
  constexpr Rgb lo{247, 251, 255};
  constexpr Rgb hi{8, 48, 107};
  auto mix = [&](int a, int b) { return static_cast<int>(std::lround(a + (b - a) * t)); };
  return {mix(lo.r, hi.r), mix(lo.g, hi.g), mix(lo.b, hi.b)};
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string percent(double share) { return fmt::format("{:.1f}%", 100.0 * share); }

}  // namespace

std::string render_heatmap_svg(const PatchContribution& c, const std::string& title) {
  const int n = c.n;
  if (n < 1 || c.shares.size() != static_cast<Eigen::Index>(n) * n)
    throw Error("render_heatmap: share vector does not match the grid");
  const double lo = c.shares.minCoeff();
  const double hi = c.shares.maxCoeff();
  const int grid = n * kCell;
  const int width = std::max(grid + 2 * kMargin, 260);
  const int height = kTitleHeight + grid + kLegendHeight + 2 * kMargin;
  const int x0 = (width - grid) / 2;
  const int y0 = kMargin + kTitleHeight;

  std::string out;
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\">\n",
      width, height);
  out += fmt::format("<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"#ffffff\"/>\n", width, height);
  const std::string heading = title.empty() ? fmt::format("Patch contribution, n={}", n) : title;
  out += fmt::format(
      "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
      width / 2, kMargin + 14, escape_xml(heading));

  for (int row = 0; row < n; ++row) {
    for (int col = 0; col < n; ++col) {
      const int id = row * n + col + 1;
      const double share = c.shares[id - 1];
      // Fill lightness is linear in share between the observed min and max.
      const double t = hi > lo ? (share - lo) / (hi - lo) : (hi > 0.0 ? 1.0 : 0.0);
      const Rgb fill = ramp(t);
      const char* ink = t > 0.5 ? "#ffffff" : "#000000";
      const int x = x0 + col * kCell;
      const int y = y0 + row * kCell;
      out += fmt::format(
          "<rect id=\"patch-{}\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"rgb({},{},{})\" "
          "stroke=\"#333333\" stroke-width=\"1\"/>\n",
          id, x, y, kCell, kCell, fill.r, fill.g, fill.b);
      out += fmt::format(
          "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\" "
          "fill=\"{}\">P{}</text>\n",
          x + kCell / 2, y + kCell / 2 - 6, ink, id);
      out += fmt::format(
          "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" "
          "fill=\"{}\">{}</text>\n",
          x + kCell / 2, y + kCell / 2 + 12, ink, percent(share));
    }
  }

  const int ly = y0 + grid + 16;
  const Rgb lo_fill = ramp(0.0);
  const Rgb hi_fill = ramp(1.0);
  out += fmt::format(
      "<rect x=\"{}\" y=\"{}\" width=\"16\" height=\"16\" fill=\"rgb({},{},{})\" stroke=\"#333333\"/>\n", x0, ly,
      lo_fill.r, lo_fill.g, lo_fill.b);
  out += fmt::format("<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">min {}</text>\n", x0 + 22,
                     ly + 12, percent(lo));
  out += fmt::format(
      "<rect x=\"{}\" y=\"{}\" width=\"16\" height=\"16\" fill=\"rgb({},{},{})\" stroke=\"#333333\"/>\n",
      x0 + grid / 2 + 10, ly, hi_fill.r, hi_fill.g, hi_fill.b);
  out += fmt::format("<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">max {}</text>\n",
                     x0 + grid / 2 + 32, ly + 12, percent(hi));
  if (c.zero_mass)
    out += fmt::format(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#b00020\">zero mass: no item "
        "has a correct patch</text>\n",
        x0, ly + 34);
  out += "</svg>\n";
  return out;
}

void render_heatmap(const PatchContribution& contribution, const std::filesystem::path& out,
                    const std::string& title) {
  write_file_atomic(out, render_heatmap_svg(contribution, title));
}

}  // namespace rci
