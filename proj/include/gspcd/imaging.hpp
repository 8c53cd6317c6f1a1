#pragma once

#include <cstdint>
#include <vector>

#include "gspcd/types.hpp"

namespace gspcd::imaging {

/// Interleaved multi-channel raster with intensities in [0, 1].
struct ImageRaster {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  ImageRaster() = default;
  ImageRaster(int h, int w, int c) : height(h), width(w), channels(c), data(std::size_t(h) * w * c, 0.0) {}

  std::size_t pixel_count() const { return std::size_t(height) * width; }
  double& at(int row, int col, int ch) { return data[(std::size_t(row) * width + col) * channels + ch]; }
  double at(int row, int col, int ch) const { return data[(std::size_t(row) * width + col) * channels + ch]; }

  /// Throws InputError when the size or value-range invariants are broken.
  void validate() const;
};

enum class SegmentationMethod { grid, slic };

/// Partition of the pixel grid into N nonempty regions (graph vertices).
struct SuperpixelMap {
  int height = 0;
  int width = 0;
  int n_regions = 0;
  std::vector<int> labels;                      // row-major, one per pixel
  std::vector<std::vector<int>> region_pixels;  // pixel indices of each region, ascending

  /// Builds region_pixels from labels. Labels must cover [0, n_regions) without gaps.
  static SuperpixelMap from_labels(int height, int width, std::vector<int> labels);
};

SuperpixelMap segment_superpixels(const ImageRaster& img, int n_target, SegmentationMethod method,
                                  std::uint64_t seed = 0);

/// Per-column z-score parameters; scale is 0 for constant columns.
struct ColumnScaling {
  Vector mean;
  Vector scale;
};

/// Row i = (mean, median, variance) of each channel over region i; M = 3 * channels.
/// Variance is the population variance.
FeatureMatrix extract_features(const ImageRaster& img, const SuperpixelMap& map);

/// Extracts features and optionally z-scores every column in place.
FeatureMatrix extract_features(const ImageRaster& img, const SuperpixelMap& map, bool standardize,
                               ColumnScaling* scaling = nullptr);

/// Zero mean / unit population variance per column. Constant columns become 0.
ColumnScaling standardize_columns(FeatureMatrix& features);

/// Paints values[i] over every pixel of region i.
PixelGrid reproject(const Vector& values, const SuperpixelMap& map);

}  // namespace gspcd::imaging
