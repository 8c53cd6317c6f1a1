#include "gspcd/graph.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>

namespace gspcd::graph {

namespace {

using Triplet = Eigen::Triplet<double>;

// Indices of row i (self excluded) ordered by (distance, index).
std::vector<Index> sorted_neighbours(const Matrix& dist, Index i) {
  const Index n = dist.rows();
  std::vector<Index> idx;
  idx.reserve(n - 1);
  for (Index j = 0; j < n; ++j) {
    if (j != i) idx.push_back(j);
  }
  std::stable_sort(idx.begin(), idx.end(), [&](Index a, Index b) { return dist(i, a) < dist(i, b); });
  return idx;
}

void check_k(const Matrix& dist, int k) {
  if (dist.rows() != dist.cols()) throw InputError("distance matrix must be square");
  if (dist.rows() < 2) throw InputError("graph needs at least two vertices");
  if (k < 1 || k > dist.rows() - 1) throw InputError("neighbour count k must lie in [1, N-1]");
}

double max_abs(const SparseMatrix& m) {
  return m.nonZeros() == 0 ? 0.0 : m.coeffs().cwiseAbs().maxCoeff();
}

double row_entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

// exp(-(d - d_min)/beta), normalized.
void softmin_weights(const std::vector<double>& d, double beta, std::vector<double>& out) {
  out.resize(d.size());
  double sum = 0.0;
  for (std::size_t j = 0; j < d.size(); ++j) {
    out[j] = std::exp(-(d[j] - d.front()) / beta);
    sum += out[j];
  }
  for (double& v : out) v /= sum;
}

struct RowWeights {
  std::vector<double> w;  // aligned with the first k sorted neighbours
  double beta;
};

RowWeights l2_row(const std::vector<double>& d_sorted, int k) {
  // d_sorted holds the k nearest distances plus the (k+1)-th when it exists.
  double d_next;
  if (std::size_t(k) < d_sorted.size()) {
    d_next = d_sorted[k];
  } else {
    // k = N-1: no (k+1)-th candidate, extrapolate one mean gap past the k-th.
    d_next = d_sorted[k - 1] + (d_sorted[k - 1] - d_sorted[0]) / k;
  }
  double head = 0.0;
  for (int h = 0; h < k; ++h) head += d_sorted[h];
  const double denom = k * d_next - head;

  RowWeights r{std::vector<double>(k, 0.0), 0.5 * denom};
  if (!(denom > 0.0)) {
    std::fill(r.w.begin(), r.w.end(), 1.0 / k);
    r.beta = 0.0;
    return r;
  }
  for (int j = 0; j < k; ++j) r.w[j] = std::max(0.0, (d_next - d_sorted[j]) / denom);
  return r;
}

RowWeights entropy_row(const std::vector<double>& d_sorted, int k) {
  constexpr double kEntropyTol = 1e-6;
  std::vector<double> d(d_sorted.begin(), d_sorted.begin() + k);
  const double target = 0.5 * std::log(double(k));
  const double spread = d.back() - d.front();
  RowWeights r{std::vector<double>(k, 1.0 / k), std::numeric_limits<double>::infinity()};
  if (!(spread > 0.0)) return r;

  // The beta -> 0 limit is uniform over the tied minima; use it when that already meets the target.
  int ties = 0;
  while (ties < k && d[ties] == d.front()) ++ties;
  if (std::log(double(ties)) >= target) {
    std::fill(r.w.begin(), r.w.end(), 0.0);
    std::fill(r.w.begin(), r.w.begin() + ties, 1.0 / ties);
    r.beta = 0.0;
    return r;
  }

  double lo = std::log(spread * 1e-8), hi = std::log(spread * 1e8);
  std::vector<double> p;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    softmin_weights(d, std::exp(mid), p);
    const double h = row_entropy(p);
    if (std::abs(h - target) <= kEntropyTol) {
      lo = hi = mid;
      break;
    }
    (h < target ? lo : hi) = mid;
  }
  r.beta = std::exp(0.5 * (lo + hi));
  softmin_weights(d, r.beta, r.w);
  return r;
}

}  // namespace

Matrix pairwise_sq_distances(const FeatureMatrix& features) {
  const Index n = features.rows();
  if (n < 2) throw InputError("need at least two feature rows");
  if (!features.allFinite()) throw InputError("features contain non-finite values");
  const Matrix ft = features.transpose();  // column access is contiguous
  Matrix d = Matrix::Zero(n, n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = j + 1; i < n; ++i) {
      const double v = (ft.col(i) - ft.col(j)).squaredNorm();
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

SparseAffinity build_adaptive_affinity(const Matrix& dist, int k, AffinityMode mode) {
  check_k(dist, k);
  const Index n = dist.rows();
  std::vector<Triplet> trip;
  trip.reserve(std::size_t(n) * k);
  SparseAffinity out;
  out.beta.resize(n);

  std::vector<double> d_sorted;
  for (Index i = 0; i < n; ++i) {
    const std::vector<Index> nb = sorted_neighbours(dist, i);
    const std::size_t take = std::min<std::size_t>(nb.size(), std::size_t(k) + 1);
    d_sorted.resize(take);
    for (std::size_t j = 0; j < take; ++j) d_sorted[j] = dist(i, nb[j]);

    RowWeights rw = mode == AffinityMode::l2 ? l2_row(d_sorted, k) : entropy_row(d_sorted, k);
    out.beta[i] = rw.beta;
    for (int j = 0; j < k; ++j) {
      if (rw.w[j] > 0.0) trip.emplace_back(i, nb[j], rw.w[j]);
    }
  }
  out.weights.resize(n, n);
  out.weights.setFromTriplets(trip.begin(), trip.end());
  out.row_stochastic = true;
  return out;
}

SparseAffinity build_kfn_affinity(const Matrix& dist, int k) {
  check_k(dist, k);
  const Index n = dist.rows();
  Matrix w = Matrix::Zero(n, n);
  std::vector<Index> idx;
  for (Index i = 0; i < n; ++i) {
    idx.clear();
    for (Index j = 0; j < n; ++j) {
      if (j != i) idx.push_back(j);
    }
    std::stable_sort(idx.begin(), idx.end(), [&](Index a, Index b) { return dist(i, a) > dist(i, b); });
    for (int j = 0; j < k; ++j) w(i, idx[j]) = 1.0 / k;
  }
  Matrix sym = w.cwiseMax(w.transpose());
  SparseAffinity out;
  out.weights = sym.sparseView();
  out.symmetric = true;
  return out;
}

SinkhornResult sinkhorn_balance(const SparseAffinity& w, const SinkhornOptions& options) {
  const Index n = w.size();
  if (n == 0 || w.weights.cols() != n) throw InputError("affinity must be square and nonempty");
  SparseMatrix s = SparseMatrix(w.weights.transpose());
  s = 0.5 * (w.weights + s);
  s.prune(0.0);
  if (s.coeffs().size() && s.coeffs().minCoeff() < 0.0) throw InputError("affinity has negative weights");

  Vector x = Vector::Ones(n);
  Vector sx = s * x;
  if ((sx.array() <= 0.0).any()) throw InputError("affinity has an all-zero row");

  SinkhornResult res;
  Vector rows = x.cwiseProduct(sx);
  double dev = (rows.array() - 1.0).abs().maxCoeff();
  int it = 0;
  while (dev > options.tolerance && it < options.max_iter) {
    // Symmetric fixed point x <- sqrt(x ./ (S x)); row and column sweeps coincide for symmetric S.
    x.array() /= rows.array().sqrt();
    sx = s * x;
    rows = x.cwiseProduct(sx);
    dev = (rows.array() - 1.0).abs().maxCoeff();
    ++it;
  }
  if (!(dev <= options.acceptance)) {
    throw ConvergenceError("Sinkhorn balancing did not converge (deviation " + std::to_string(dev) +
                           "); the affinity likely lacks total support, try a larger k");
  }

  // D S D with every entry computed as s_ij * (x_i * x_j) keeps the result exactly symmetric.
  for (Index c = 0; c < s.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator e(s, c); e; ++e) {
      const Index r = e.row();
      const double xr = x(std::min(r, c)), xc = x(std::max(r, c));
      e.valueRef() = e.value() * (xr * xc);
    }
  }

  res.affinity.weights = std::move(s);
  res.affinity.symmetric = true;
  res.affinity.row_stochastic = true;
  res.affinity.doubly_stochastic = true;
  res.iterations = it;
  res.max_deviation = dev;
  return res;
}

SparseAffinity sinkhorn_symmetrize(const SparseAffinity& w, const SinkhornOptions& options) {
  return sinkhorn_balance(w, options).affinity;
}

GraphOperators laplacian_from_affinity(const SparseAffinity& wsym) {
  const Index n = wsym.size();
  if (n == 0 || wsym.weights.cols() != n) throw InputError("affinity must be square and nonempty");
  const SparseMatrix wt = wsym.weights.transpose();
  if (max_abs(wsym.weights - wt) > 1e-12)
    throw InputError("Laplacian needs a symmetric affinity");
  Vector deg = wsym.weights * Vector::Ones(n);
  if ((deg.array() - 1.0).abs().maxCoeff() > 1e-6) throw InputError("Laplacian needs a doubly stochastic affinity");

  SparseMatrix eye(n, n);
  eye.setIdentity();
  GraphOperators g;
  g.affinity = wsym;
  g.laplacian = eye - wsym.weights;
  g.laplacian.prune(0.0);
  g.degree = std::move(deg);
  return g;
}

GraphOperators build_graph(const FeatureMatrix& features, int k, AffinityMode mode) {
  const Matrix dist = pairwise_sq_distances(features);
  return laplacian_from_affinity(sinkhorn_symmetrize(build_adaptive_affinity(dist, k, mode)));
}

void write_affinity_coo(std::ostream& os, const SparseAffinity& w) {
  const Eigen::SparseMatrix<double, Eigen::RowMajor> rm = w.weights;
  os << rm.rows() << ' ' << rm.nonZeros() << '\n';
  os << std::setprecision(17);
  for (Index r = 0; r < rm.outerSize(); ++r) {
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator e(rm, r); e; ++e) {
      os << e.row() << ' ' << e.col() << ' ' << e.value() << '\n';
    }
  }
}

SparseAffinity read_affinity_coo(std::istream& is) {
  long long n = 0, nnz = 0;
  if (!(is >> n >> nnz) || n < 0 || nnz < 0) throw InputError("bad affinity header");
  std::vector<Triplet> trip;
  trip.reserve(std::size_t(nnz));
  for (long long e = 0; e < nnz; ++e) {
    long long i, j;
    double v;
    if (!(is >> i >> j >> v)) throw InputError("truncated affinity entry list");
    if (i < 0 || j < 0 || i >= n || j >= n) throw InputError("affinity index out of range");
    trip.emplace_back(Index(i), Index(j), v);
  }
  SparseAffinity w;
  w.weights.resize(n, n);
  w.weights.setFromTriplets(trip.begin(), trip.end());
  const SparseMatrix wt = w.weights.transpose();
  w.symmetric = max_abs(w.weights - wt) == 0.0;
  if (n > 0) {
    const Vector rows = w.weights * Vector::Ones(n);
    const Vector cols = wt * Vector::Ones(n);
    w.row_stochastic = (rows.array() - 1.0).abs().maxCoeff() <= 1e-9;
    w.doubly_stochastic = (rows.array() - 1.0).abs().maxCoeff() <= 1e-6 && (cols.array() - 1.0).abs().maxCoeff() <= 1e-6;
  }
  return w;
}

}  // namespace gspcd::graph
