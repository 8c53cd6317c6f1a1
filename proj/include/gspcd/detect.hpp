#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gspcd/graph.hpp"
#include "gspcd/imaging.hpp"

namespace gspcd::detect {

struct DifferenceImage {
  Vector per_vertex;
  PixelGrid per_pixel;
};

/// DI_i = ||Delta_i||_2, painted over each superpixel.
DifferenceImage difference_image(const Matrix& delta, const imaging::SuperpixelMap& map);
DifferenceImage difference_image_from_scores(const Vector& per_vertex, const imaging::SuperpixelMap& map);

enum class ShiftKind { laplacian, average };

/// Row norms of (S1 - S2) Y with S = L (laplacian) or S = W^sym (average).
Vector vdf_difference(const Matrix& y, const graph::GraphOperators& g1, const graph::GraphOperators& g2,
                      ShiftKind shift);

enum class ThresholdMethod { otsu, kmeans2 };

struct ChangeMap {
  LabelGrid labels;
  bool degenerate = false;  // constant DI, everything reported unchanged
  double threshold = 0.0;   // in DI units
};

using Histogram = std::array<std::uint64_t, 256>;

/// Otsu cut t in [1, 255]: bins < t are class 0, bins >= t class 1. Ties go to the lowest t.
int otsu_threshold(const Histogram& hist);

/// 256-bin histogram of min-max normalized values; bin = min(255, floor(256 * v)).
Histogram normalized_histogram(const PixelGrid& values, double& lo, double& hi);

ChangeMap segment_threshold(const DifferenceImage& di, const imaging::SuperpixelMap& map, ThresholdMethod method,
                            std::uint64_t seed = 0);

struct EvalReport {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
  double oa = 0.0;
  double kappa = 0.0;
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::optional<double> aur;
  std::optional<double> aup;
};

struct CurvePoint {
  double threshold, fpr, tpr, precision, recall;
};

/// Sweep of all distinct score thresholds, descending. Empty when truth has no positives or negatives.
std::vector<CurvePoint> roc_pr_sweep(const PixelGrid& scores, const LabelGrid& truth);

EvalReport evaluate(const ChangeMap& cm, const LabelGrid& truth, const DifferenceImage& scores);

/// JSON object with keys tp, fp, tn, fn, oa, kappa, f1, aur, aup (aur/aup omitted when undefined).
std::string to_json(const EvalReport& report);
EvalReport report_from_json(const std::string& text);

/// "threshold,fpr,tpr,precision,recall".
void write_curve_csv(std::ostream& os, const std::vector<CurvePoint>& curve);

}  // namespace gspcd::detect
