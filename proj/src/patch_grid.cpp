#include "rci/patch_grid.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cstring>

namespace rci {

GridSpec::GridSpec(int granularity) : n(granularity) {
  if (n < 1 || n > kMaxGranularity)
    throw GridError(fmt::format("granularity {} outside [1, {}]", n, kMaxGranularity));
}

std::vector<PatchRegion> grid_regions(int image_width, int image_height, GridSpec spec) {
  const int n = spec.n;
  if (image_width < n || image_height < n)
    throw GridError(fmt::format("degenerate image {}x{} for a {}x{} grid", image_width, image_height, n, n));
  const int cell_w = image_width / n;
  const int cell_h = image_height / n;
  std::vector<PatchRegion> out;
  out.reserve(static_cast<std::size_t>(n) * n);
  for (int row = 0; row < n; ++row) {
    const int y = row * cell_h;
    const int h = row + 1 == n ? image_height - y : cell_h;
    for (int col = 0; col < n; ++col) {
      const int x = col * cell_w;
      const int w = col + 1 == n ? image_width - x : cell_w;
      out.push_back({row * n + col + 1, x, y, w, h});
    }
  }
  return out;
}

Raster extract_patch(const Raster& image, const PatchRegion& region) {
  if (region.x < 0 || region.y < 0 || region.width < 1 || region.height < 1 ||
      region.x + region.width > image.width || region.y + region.height > image.height)
    throw GridError(fmt::format("region ({},{},{},{}) outside {}x{} image", region.x, region.y, region.width,
                                region.height, image.width, image.height));
  Raster out(region.width, region.height, image.channels);
  const std::size_t row_bytes = std::size_t(region.width) * image.channels;
  for (int r = 0; r < region.height; ++r)
    std::memcpy(out.at(0, r), image.at(region.x, region.y + r), row_bytes);
  return out;
}

std::optional<int> center_patch_id(GridSpec spec) {
  if (spec.n % 2 == 0) return std::nullopt;
  return (spec.n * spec.n + 1) / 2;
}

}  // namespace rci
