#include "gspcd/detect.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include <json.hpp>

namespace gspcd::detect {

DifferenceImage difference_image_from_scores(const Vector& per_vertex, const imaging::SuperpixelMap& map) {
  if (per_vertex.size() != map.n_regions) throw InputError("score count does not match region count");
  return {per_vertex, imaging::reproject(per_vertex, map)};
}

DifferenceImage difference_image(const Matrix& delta, const imaging::SuperpixelMap& map) {
  if (delta.rows() != map.n_regions) throw InputError("delta rows do not match region count");
  return difference_image_from_scores(delta.rowwise().norm(), map);
}

Vector vdf_difference(const Matrix& y, const graph::GraphOperators& g1, const graph::GraphOperators& g2,
                      ShiftKind shift) {
  if (g1.size() != g2.size() || y.rows() != g1.size()) throw InputError("VDF operands have mismatched vertex counts");
  const SparseMatrix diff = shift == ShiftKind::laplacian ? SparseMatrix(g1.laplacian - g2.laplacian)
                                                          : SparseMatrix(g1.affinity.weights - g2.affinity.weights);
  return (diff * y).rowwise().norm();
}

int otsu_threshold(const Histogram& hist) {
  long double n = 0.0L, total = 0.0L;
  for (int b = 0; b < 256; ++b) {
    n += hist[b];
    total += (long double)b * hist[b];
  }
  int best_t = 1;
  long double best = -1.0L;
  long double n0 = 0.0L, s0 = 0.0L;
  for (int t = 1; t < 256; ++t) {
    n0 += hist[t - 1];
    s0 += (long double)(t - 1) * hist[t - 1];
    const long double n1 = n - n0;
    long double score = 0.0L;
    if (n0 > 0 && n1 > 0) {
      // n^2 * w0 * w1 * (mu0 - mu1)^2 = (s0 n1 - s1 n0)^2 / (n0 n1)
      const long double d = s0 * n1 - (total - s0) * n0;
      score = d * d / (n0 * n1);
    }
    if (score > best) {
      best = score;
      best_t = t;
    }
  }
  return best_t;
}

Histogram normalized_histogram(const PixelGrid& values, double& lo, double& hi) {
  Histogram h{};
  lo = values.minCoeff();
  hi = values.maxCoeff();
  const double span = hi - lo;
  const double* v = values.data();
  for (Index i = 0; i < values.size(); ++i) {
    int b = span > 0.0 ? int(std::floor((v[i] - lo) / span * 256.0)) : 0;
    ++h[std::clamp(b, 0, 255)];
  }
  return h;
}

ChangeMap segment_threshold(const DifferenceImage& di, const imaging::SuperpixelMap& map, ThresholdMethod method,
                            std::uint64_t /*seed*/) {
  const PixelGrid& px = di.per_pixel;
  if (px.rows() != map.height || px.cols() != map.width) throw InputError("DI and superpixel map sizes differ");
  ChangeMap cm;
  cm.labels = LabelGrid::Zero(px.rows(), px.cols());
  if (px.size() == 0) return cm;

  if (method == ThresholdMethod::otsu) {
    double lo, hi;
    const Histogram h = normalized_histogram(px, lo, hi);
    if (!(hi > lo)) {
      cm.degenerate = true;
      cm.threshold = hi;
      return cm;
    }
    const int t = otsu_threshold(h);
    cm.threshold = lo + (hi - lo) * t / 256.0;
    const double span = hi - lo;
    for (Index i = 0; i < px.size(); ++i) {
      const int b = std::clamp(int(std::floor((px.data()[i] - lo) / span * 256.0)), 0, 255);
      cm.labels.data()[i] = b >= t ? 1 : 0;
    }
    return cm;
  }

  // 1-D 2-means on per-vertex values, initialized at the extremes.
  const Vector& v = di.per_vertex;
  if (v.size() != map.n_regions) throw InputError("DI vertex count does not match the map");
  double c0 = v.minCoeff(), c1 = v.maxCoeff();
  if (!(c1 > c0)) {
    cm.degenerate = true;
    cm.threshold = c1;
    return cm;
  }
  std::vector<std::uint8_t> assign(v.size(), 0);
  for (int sweep = 0; sweep < 100; ++sweep) {
    bool changed = false;
    double s0 = 0.0, s1 = 0.0;
    Index n0 = 0, n1 = 0;
    for (Index i = 0; i < v.size(); ++i) {
      const std::uint8_t a = std::abs(v(i) - c1) < std::abs(v(i) - c0) ? 1 : 0;
      changed = changed || a != assign[i];
      assign[i] = a;
      (a ? s1 : s0) += v(i);
      ++(a ? n1 : n0);
    }
    if (n0 > 0) c0 = s0 / n0;
    if (n1 > 0) c1 = s1 / n1;
    if (!changed && sweep > 0) break;
  }
  const bool high_is_one = c1 >= c0;
  cm.threshold = 0.5 * (c0 + c1);
  for (std::size_t p = 0; p < map.labels.size(); ++p) {
    const std::uint8_t a = assign[map.labels[p]];
    cm.labels.data()[p] = (a == 1) == high_is_one ? 1 : 0;
  }
  return cm;
}

std::vector<CurvePoint> roc_pr_sweep(const PixelGrid& scores, const LabelGrid& truth) {
  if (scores.rows() != truth.rows() || scores.cols() != truth.cols()) throw InputError("score and truth sizes differ");
  const Index n = scores.size();
  std::uint64_t pos = 0;
  for (Index i = 0; i < n; ++i) pos += truth.data()[i] ? 1 : 0;
  const std::uint64_t neg = std::uint64_t(n) - pos;
  std::vector<CurvePoint> curve;
  if (pos == 0 || neg == 0) return curve;

  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index(0));
  const double* s = scores.data();
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return s[a] > s[b]; });

  std::uint64_t tp = 0, fp = 0;
  for (Index i = 0; i < n;) {
    const double thr = s[order[i]];
    while (i < n && s[order[i]] == thr) {
      (truth.data()[order[i]] ? tp : fp) += 1;
      ++i;
    }
    CurvePoint p;
    p.threshold = thr;
    p.tpr = double(tp) / double(pos);
    p.fpr = double(fp) / double(neg);
    p.recall = p.tpr;
    p.precision = double(tp) / double(tp + fp);
    curve.push_back(p);
  }
  return curve;
}

EvalReport evaluate(const ChangeMap& cm, const LabelGrid& truth, const DifferenceImage& scores) {
  if (cm.labels.rows() != truth.rows() || cm.labels.cols() != truth.cols())
    throw InputError("change map and truth sizes differ");
  EvalReport r;
  for (Index i = 0; i < truth.size(); ++i) {
    const bool p = cm.labels.data()[i] != 0, t = truth.data()[i] != 0;
    if (p && t) ++r.tp;
    else if (p) ++r.fp;
    else if (t) ++r.fn;
    else ++r.tn;
  }
  const double n = double(truth.size());
  r.oa = n > 0 ? double(r.tp + r.tn) / n : 0.0;
  r.precision = (r.tp + r.fp) ? double(r.tp) / double(r.tp + r.fp) : 0.0;
  r.recall = (r.tp + r.fn) ? double(r.tp) / double(r.tp + r.fn) : 0.0;
  r.f1 = (r.precision + r.recall) > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  const double pe =
      n > 0 ? (double(r.tp + r.fp) * double(r.tp + r.fn) + double(r.fn + r.tn) * double(r.fp + r.tn)) / (n * n) : 1.0;
  r.kappa = pe == 1.0 ? 1.0 : (r.oa - pe) / (1.0 - pe);

  const std::vector<CurvePoint> curve = roc_pr_sweep(scores.per_pixel, truth);
  if (!curve.empty()) {
    double aur = 0.0, aup = 0.0;
    double fpr0 = 0.0, tpr0 = 0.0, rec0 = 0.0, prec0 = curve.front().precision;
    for (const CurvePoint& p : curve) {
      aur += 0.5 * (p.fpr - fpr0) * (p.tpr + tpr0);
      aup += 0.5 * (p.recall - rec0) * (p.precision + prec0);
      fpr0 = p.fpr;
      tpr0 = p.tpr;
      rec0 = p.recall;
      prec0 = p.precision;
    }
    r.aur = aur;
    r.aup = aup;
  }
  return r;
}

std::string to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["tp"] = report.tp;
  j["fp"] = report.fp;
  j["tn"] = report.tn;
  j["fn"] = report.fn;
  j["oa"] = report.oa;
  j["kappa"] = report.kappa;
  j["f1"] = report.f1;
  if (report.aur) j["aur"] = *report.aur;
  if (report.aup) j["aup"] = *report.aup;
  return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  EvalReport r;
  r.tp = j.at("tp").get<std::uint64_t>();
  r.fp = j.at("fp").get<std::uint64_t>();
  r.tn = j.at("tn").get<std::uint64_t>();
  r.fn = j.at("fn").get<std::uint64_t>();
  r.oa = j.at("oa").get<double>();
  r.kappa = j.at("kappa").get<double>();
  r.f1 = j.at("f1").get<double>();
  if (j.contains("aur")) r.aur = j["aur"].get<double>();
  if (j.contains("aup")) r.aup = j["aup"].get<double>();
  r.precision = (r.tp + r.fp) ? double(r.tp) / double(r.tp + r.fp) : 0.0;
  r.recall = (r.tp + r.fn) ? double(r.tp) / double(r.tp + r.fn) : 0.0;
  return r;
}

void write_curve_csv(std::ostream& os, const std::vector<CurvePoint>& curve) {
  os << "threshold,fpr,tpr,precision,recall\n";
  os.precision(17);
  for (const CurvePoint& p : curve) {
    os << p.threshold << ',' << p.fpr << ',' << p.tpr << ',' << p.precision << ',' << p.recall << '\n';
  }
}

}  // namespace gspcd::detect
