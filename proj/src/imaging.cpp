#include "gspcd/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace gspcd::imaging {

void ImageRaster::validate() const {
  if (height <= 0 || width <= 0 || channels <= 0) throw InputError("image has an empty dimension");
  if (data.size() != std::size_t(height) * width * channels)
    throw InputError("image data length does not match height*width*channels");
  for (double v : data) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) throw InputError("image intensity outside [0,1]");
  }
}

SuperpixelMap SuperpixelMap::from_labels(int height, int width, std::vector<int> labels) {
  if (labels.size() != std::size_t(height) * width) throw InputError("label count does not match grid size");
  SuperpixelMap map;
  map.height = height;
  map.width = width;
  int n = 0;
  for (int l : labels) {
    if (l < 0) throw InputError("negative superpixel label");
    n = std::max(n, l + 1);
  }
  map.region_pixels.assign(n, {});
  for (std::size_t p = 0; p < labels.size(); ++p) map.region_pixels[labels[p]].push_back(int(p));
  for (const auto& r : map.region_pixels) {
    if (r.empty()) throw InputError("superpixel labels leave an empty region");
  }
  map.n_regions = n;
  map.labels = std::move(labels);
  return map;
}

namespace {

SuperpixelMap grid_partition(int height, int width, int n_target) {
  // Pick a block layout with roughly square blocks and rows*cols close to n_target.
  double aspect = double(height) / double(width);
  int rows = int(std::lround(std::sqrt(n_target * aspect)));
  rows = std::clamp(rows, 1, std::min(height, n_target));
  int cols = int(std::lround(double(n_target) / rows));
  cols = std::clamp(cols, 1, width);

  std::vector<int> labels(std::size_t(height) * width);
  for (int r = 0; r < height; ++r) {
    int br = int((long long)r * rows / height);
    for (int c = 0; c < width; ++c) {
      int bc = int((long long)c * cols / width);
      labels[std::size_t(r) * width + c] = br * cols + bc;
    }
  }
  return SuperpixelMap::from_labels(height, width, std::move(labels));
}

// k-means in (color, position) space with a local 2S x 2S search window.
SuperpixelMap slic_partition(const ImageRaster& img, int n_target, std::uint64_t seed) {
  constexpr int kIterations = 10;
  constexpr double kCompactness = 0.1;  // color distance that equals one grid step

  const int h = img.height, w = img.width, ch = img.channels;
  const double step = std::sqrt(double(h) * w / n_target);
  const int ny = std::clamp(int(std::lround(h / step)), 1, h);
  const int nx = std::clamp(int(std::lround(w / step)), 1, w);
  const int k = ny * nx;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-0.25, 0.25);

  struct Center {
    double y, x;
    std::vector<double> color;
  };
  std::vector<Center> centers(k);
  const double cell_h = double(h) / ny, cell_w = double(w) / nx;
  for (int i = 0; i < ny; ++i) {
    for (int j = 0; j < nx; ++j) {
      Center& c = centers[i * nx + j];
      c.y = std::clamp((i + 0.5 + jitter(rng)) * cell_h, 0.0, h - 1.0);
      c.x = std::clamp((j + 0.5 + jitter(rng)) * cell_w, 0.0, w - 1.0);
      int py = int(c.y), px = int(c.x);
      c.color.resize(ch);
      for (int q = 0; q < ch; ++q) c.color[q] = img.at(py, px, q);
    }
  }

  std::vector<int> labels(std::size_t(h) * w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      int i = std::min(ny - 1, int(r / cell_h));
      int j = std::min(nx - 1, int(c / cell_w));
      labels[std::size_t(r) * w + c] = i * nx + j;
    }
  }

  std::vector<double> best(labels.size());
  const double inv_s2 = 1.0 / (step * step);
  const double inv_m2 = 1.0 / (kCompactness * kCompactness);
  const int radius = int(std::ceil(step));

  for (int it = 0; it < kIterations; ++it) {
    std::fill(best.begin(), best.end(), std::numeric_limits<double>::infinity());
    for (int ci = 0; ci < k; ++ci) {
      const Center& c = centers[ci];
      int r0 = std::max(0, int(c.y) - radius), r1 = std::min(h - 1, int(c.y) + radius);
      int c0 = std::max(0, int(c.x) - radius), c1 = std::min(w - 1, int(c.x) + radius);
      for (int r = r0; r <= r1; ++r) {
        for (int col = c0; col <= c1; ++col) {
          double dc = 0.0;
          for (int q = 0; q < ch; ++q) {
            double d = img.at(r, col, q) - c.color[q];
            dc += d * d;
          }
          double dy = r - c.y, dx = col - c.x;
          double dist = dc * inv_m2 + (dy * dy + dx * dx) * inv_s2;
          std::size_t p = std::size_t(r) * w + col;
          if (dist < best[p]) {
            best[p] = dist;
            labels[p] = ci;
          }
        }
      }
    }
    // Pixels outside every window keep their previous label.
    std::vector<double> sy(k, 0.0), sx(k, 0.0), sc(std::size_t(k) * ch, 0.0);
    std::vector<std::size_t> cnt(k, 0);
    for (int r = 0; r < h; ++r) {
      for (int col = 0; col < w; ++col) {
        int l = labels[std::size_t(r) * w + col];
        sy[l] += r;
        sx[l] += col;
        for (int q = 0; q < ch; ++q) sc[std::size_t(l) * ch + q] += img.at(r, col, q);
        ++cnt[l];
      }
    }
    for (int ci = 0; ci < k; ++ci) {
      if (cnt[ci] == 0) continue;
      double inv = 1.0 / double(cnt[ci]);
      centers[ci].y = sy[ci] * inv;
      centers[ci].x = sx[ci] * inv;
      for (int q = 0; q < ch; ++q) centers[ci].color[q] = sc[std::size_t(ci) * ch + q] * inv;
    }
  }

  // Drop empty clusters and compact the label range.
  std::vector<int> remap(k, -1);
  int next = 0;
  for (int& l : labels) {
    if (remap[l] < 0) remap[l] = -2;
  }
  for (int ci = 0; ci < k; ++ci) {
    if (remap[ci] == -2) remap[ci] = next++;
  }
  for (int& l : labels) l = remap[l];
  return SuperpixelMap::from_labels(h, w, std::move(labels));
}

double median_of(std::vector<double>& v) {
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return (n % 2 == 1) ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

SuperpixelMap segment_superpixels(const ImageRaster& img, int n_target, SegmentationMethod method,
                                  std::uint64_t seed) {
  if (img.height <= 0 || img.width <= 0 || img.channels <= 0 || img.data.empty())
    throw InputError("cannot segment an empty image");
  if (n_target < 1) throw InputError("n_target must be at least 1");
  if (std::size_t(n_target) > img.pixel_count()) throw InputError("n_target exceeds the pixel count");

  switch (method) {
    case SegmentationMethod::grid:
      return grid_partition(img.height, img.width, n_target);
    case SegmentationMethod::slic:
      return slic_partition(img, n_target, seed);
  }
  throw InputError("unknown segmentation method");
}

FeatureMatrix extract_features(const ImageRaster& img, const SuperpixelMap& map) {
  if (img.height != map.height || img.width != map.width)
    throw InputError("image and superpixel map dimensions differ");
  const int ch = img.channels;
  FeatureMatrix out(map.n_regions, 3 * ch);
  std::vector<double> vals;
  for (int i = 0; i < map.n_regions; ++i) {
    const auto& pix = map.region_pixels[i];
    const double inv = 1.0 / double(pix.size());
    for (int q = 0; q < ch; ++q) {
      vals.clear();
      double sum = 0.0;
      for (int p : pix) {
        double v = img.data[std::size_t(p) * ch + q];
        vals.push_back(v);
        sum += v;
      }
      const double mean = sum * inv;
      double ss = 0.0;
      for (double v : vals) ss += (v - mean) * (v - mean);
      out(i, 3 * q) = mean;
      out(i, 3 * q + 1) = median_of(vals);
      out(i, 3 * q + 2) = ss * inv;
    }
  }
  return out;
}

ColumnScaling standardize_columns(FeatureMatrix& features) {
  const Index n = features.rows();
  ColumnScaling s{Vector::Zero(features.cols()), Vector::Zero(features.cols())};
  if (n == 0) return s;
  for (Index j = 0; j < features.cols(); ++j) {
    const double mean = features.col(j).mean();
    const double var = (features.col(j).array() - mean).square().sum() / double(n);
    const double sd = std::sqrt(var);
    s.mean(j) = mean;
    if (sd <= 1e-12 * std::max(1.0, std::abs(mean))) {
      features.col(j).setZero();
      s.scale(j) = 0.0;
    } else {
      features.col(j) = (features.col(j).array() - mean) / sd;
      s.scale(j) = sd;
    }
  }
  return s;
}

FeatureMatrix extract_features(const ImageRaster& img, const SuperpixelMap& map, bool standardize,
                               ColumnScaling* scaling) {
  FeatureMatrix f = extract_features(img, map);
  if (standardize) {
    ColumnScaling s = standardize_columns(f);
    if (scaling) *scaling = std::move(s);
  } else if (scaling) {
    *scaling = ColumnScaling{Vector::Zero(f.cols()), Vector::Ones(f.cols())};
  }
  return f;
}

PixelGrid reproject(const Vector& values, const SuperpixelMap& map) {
  if (values.size() != map.n_regions) throw InputError("value count does not match region count");
  PixelGrid out(map.height, map.width);
  double* dst = out.data();
  for (std::size_t p = 0; p < map.labels.size(); ++p) dst[p] = values(map.labels[p]);
  return out;
}

}  // namespace gspcd::imaging
