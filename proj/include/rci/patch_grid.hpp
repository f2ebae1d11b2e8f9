#pragma once

#include <optional>
#include <vector>

#include "rci/image.hpp"
#include "rci/types.hpp"

namespace rci {

inline constexpr int kMaxGranularity = 8;

/// Grid granularity n; the image is cut into n x n patches.
struct GridSpec {
  int n = 1;

  explicit GridSpec(int granularity);
  int patch_count() const { return n * n; }
  bool operator==(const GridSpec&) const = default;
};

/// A patch rectangle in full-image pixel coordinates. patch_id is 1-based and
/// row-major, so the top-left patch is 1.
struct PatchRegion {
  int patch_id = 1;
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;

  long long area() const { return static_cast<long long>(width) * height; }
  bool operator==(const PatchRegion&) const = default;
};

class GridError : public Error {
 public:
  using Error::Error;
};

/// Column widths are floor(width / n) with the remainder appended to the last
/// column; rows likewise.
std::vector<PatchRegion> grid_regions(int image_width, int image_height, GridSpec spec);

Raster extract_patch(const Raster& image, const PatchRegion& region);

/// (n*n + 1) / 2 for odd n, nothing for even n.
std::optional<int> center_patch_id(GridSpec spec);

}  // namespace rci
