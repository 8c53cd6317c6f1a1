#include "gspcd/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

namespace gspcd::spectral {

namespace {

void require_rows(Index expected, const Matrix& m) {
  if (m.rows() != expected) throw InputError("signal row count does not match the graph size");
}

void fix_signs(Matrix& u) {
  for (Index k = 0; k < u.cols(); ++k) {
    Index arg = 0;
    double best = -1.0;
    for (Index i = 0; i < u.rows(); ++i) {
      const double a = std::abs(u(i, k));
      if (a > best) {
        best = a;
        arg = i;
      }
    }
    if (u(arg, k) < 0.0) u.col(k) = -u.col(k);
  }
}

// Polynomial coefficients in ascending powers.
using Poly = std::vector<double>;

Poly poly_add(const Poly& a, const Poly& b, double sb) {
  Poly out(std::max(a.size(), b.size()), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) out[i] += a[i];
  for (std::size_t i = 0; i < b.size(); ++i) out[i] += sb * b[i];
  return out;
}

// (s1 * lambda + s0) * p
Poly poly_mul_linear(const Poly& p, double s1, double s0) {
  Poly out(p.size() + 1, 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    out[i] += s0 * p[i];
    out[i + 1] += s1 * p[i];
  }
  return out;
}

FilterSpec chebyshev_fit(double lambda_max, const std::function<double(double)>& target, int degree) {
  const double span = lambda_max > 0.0 ? lambda_max : 1.0;
  const int nodes = std::max(64, 4 * (degree + 1));

  std::vector<double> c(degree + 1, 0.0);
  for (int q = 0; q < nodes; ++q) {
    const double theta = std::numbers::pi * (q + 0.5) / nodes;
    const double psi = target(0.5 * span * (std::cos(theta) + 1.0));
    for (int j = 0; j <= degree; ++j) c[j] += psi * std::cos(j * theta);
  }
  for (int j = 0; j <= degree; ++j) c[j] *= 2.0 / nodes;
  c[0] *= 0.5;

  // t = (2/span) lambda - 1; T_{j+1} = 2 t T_j - T_{j-1}, all expressed in powers of lambda.
  const double a = 2.0 / span, b = -1.0;
  Poly t_prev{1.0}, t_cur{b, a};
  Poly total = poly_add(Poly{}, t_prev, c[0]);
  if (degree >= 1) total = poly_add(total, t_cur, c[1]);
  for (int j = 2; j <= degree; ++j) {
    Poly t_next = poly_add(poly_mul_linear(t_cur, 2.0 * a, 2.0 * b), t_prev, -1.0);
    total = poly_add(total, t_next, c[j]);
    t_prev = std::move(t_cur);
    t_cur = std::move(t_next);
  }
  total.resize(degree + 1, 0.0);

  FilterSpec spec;
  spec.constant_term = total[0];
  spec.coeffs.assign(total.begin() + 1, total.end());
  return spec;
}

FilterSpec least_squares_fit(const Vector& lambdas, const std::function<double(double)>& target, int degree,
                             bool include_constant) {
  const Index n = lambdas.size();
  const int first = include_constant ? 0 : 1;
  const Index unknowns = degree - first + 1;
  Matrix theta(n, unknowns);
  Vector psi(n);
  for (Index k = 0; k < n; ++k) {
    psi(k) = target(lambdas(k));
    for (Index m = 0; m < unknowns; ++m) theta(k, m) = std::pow(lambdas(k), double(first + m));
  }
  Matrix normal = theta.transpose() * theta;
  const Vector rhs = theta.transpose() * psi;

  // Repeated eigenvalues collapse Vandermonde rows; ridge the system when too few distinct ones remain.
  std::vector<double> sorted(lambdas.data(), lambdas.data() + n);
  std::sort(sorted.begin(), sorted.end());
  Index distinct = sorted.empty() ? 0 : 1;
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i] - sorted[i - 1] > 1e-12 * std::max(1.0, std::abs(sorted[i]))) ++distinct;
  }
  if (distinct < unknowns) normal.diagonal().array() += 1e-10;

  const Vector h = normal.ldlt().solve(rhs);
  FilterSpec spec;
  if (include_constant) spec.constant_term = h(0);
  spec.coeffs.assign(h.data() + (include_constant ? 1 : 0), h.data() + h.size());
  return spec;
}

}  // namespace

SpectralBasis eigendecompose(const Matrix& a, Index dense_limit) {
  const Index n = a.rows();
  if (a.cols() != n) throw InputError("eigendecomposition needs a square matrix");
  if (n > dense_limit)
    throw InputError("graph has " + std::to_string(n) + " vertices, above the dense eigensolver limit of " +
                     std::to_string(dense_limit) + "; reduce the number of superpixels");
  if (n > 0 && (a - a.transpose()).cwiseAbs().maxCoeff() > 1e-10)
    throw InputError("eigendecomposition needs a symmetric matrix");

  Eigen::SelfAdjointEigenSolver<Matrix> solver(a);
  if (solver.info() != Eigen::Success) throw ConvergenceError("symmetric eigensolver failed");

  SpectralBasis basis;
  basis.eigenvalues = solver.eigenvalues().reverse();
  basis.eigenvectors = solver.eigenvectors().rowwise().reverse();
  fix_signs(basis.eigenvectors);
  return basis;
}

SpectralBasis eigendecompose(const SparseMatrix& a, Index dense_limit) {
  if (a.rows() > dense_limit)
    throw InputError("graph has " + std::to_string(a.rows()) + " vertices, above the dense eigensolver limit of " +
                     std::to_string(dense_limit) + "; reduce the number of superpixels");
  return eigendecompose(Matrix(a), dense_limit);
}

Matrix gft(const SpectralBasis& basis, const FeatureMatrix& f) {
  require_rows(basis.size(), f);
  return basis.eigenvectors.transpose() * f;
}

FeatureMatrix igft(const SpectralBasis& basis, const Matrix& coeffs) {
  require_rows(basis.size(), coeffs);
  return basis.eigenvectors * coeffs;
}

double quadratic_tv_matrix(const graph::GraphOperators& g, const FeatureMatrix& f) {
  require_rows(g.size(), f);
  return (f.transpose() * (g.laplacian * f)).trace();
}

double quadratic_tv_edgewise(const graph::GraphOperators& g, const FeatureMatrix& f) {
  require_rows(g.size(), f);
  const SparseMatrix& w = g.affinity.weights;
  double tv = 0.0;
  for (Index c = 0; c < w.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator e(w, c); e; ++e) {
      tv += e.value() * (f.row(e.row()) - f.row(c)).squaredNorm();
    }
  }
  return 0.5 * tv;
}

double total_variation(const graph::GraphOperators& g, const FeatureMatrix& f, TvForm form) {
  if (form == TvForm::quadratic) return quadratic_tv_matrix(g, f);
  require_rows(g.size(), f);
  return (f - g.affinity.weights * f).cwiseAbs().sum();
}

double EnergyProfile::fraction(Index first, Index last) const {
  const double total = norms.squaredNorm();
  if (total <= 0.0) return 0.0;
  return norms.segment(first, last - first).squaredNorm() / total;
}

EnergyProfile energy_profile(const SpectralBasis& basis, const FeatureMatrix& f) {
  const Matrix coeffs = gft(basis, f);
  EnergyProfile p;
  p.norms = coeffs.rowwise().norm();
  p.weighted_energy = basis.eigenvalues.dot(p.norms.cwiseAbs2());
  return p;
}

void write_energy_csv(std::ostream& os, const SpectralBasis& basis, const EnergyProfile& profile) {
  os << "lambda,norm\n";
  os.precision(17);
  for (Index k = 0; k < basis.size(); ++k) os << basis.eigenvalues(k) << ',' << profile.norms(k) << '\n';
}

BandSplit ideal_split(const SpectralBasis& basis, const FeatureMatrix& f, Index cutoff) {
  const Index n = basis.size();
  if (cutoff < 1 || cutoff > n) throw InputError("cutoff index must lie in [1, N]");
  const Matrix coeffs = gft(basis, f);
  Matrix low = coeffs, high = coeffs;
  low.topRows(cutoff - 1).setZero();
  high.bottomRows(n - cutoff + 1).setZero();
  BandSplit s{igft(basis, low), igft(basis, high)};
  // Keep low + high == f exactly up to one rounding of the difference.
  s.high = f - s.low;
  return s;
}

double FilterSpec::transfer(double lambda) const {
  double acc = 0.0;
  for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = (acc + *it) * lambda;
  return acc + constant_term;
}

FeatureMatrix apply_poly_filter(const graph::GraphOperators& g, const FilterSpec& spec, const FeatureMatrix& f) {
  if (spec.kind != FilterKind::polynomial) throw InputError("apply_poly_filter needs a polynomial filter");
  require_rows(g.size(), f);
  FeatureMatrix out = spec.constant_term * f;
  FeatureMatrix power = f;
  for (double h : spec.coeffs) {
    power = g.laplacian * power;
    out += h * power;
  }
  return out;
}

FeatureMatrix apply_spectral_filter(const SpectralBasis& basis, const FilterSpec& spec, const FeatureMatrix& f) {
  const Index n = basis.size();
  Vector response(n);
  for (Index k = 0; k < n; ++k) {
    switch (spec.kind) {
      case FilterKind::polynomial:
        response(k) = spec.transfer(basis.eigenvalues(k));
        break;
      case FilterKind::ideal_low:
        response(k) = (k + 1 >= spec.cutoff) ? 1.0 : 0.0;
        break;
      case FilterKind::ideal_high:
        response(k) = (k + 1 < spec.cutoff) ? 1.0 : 0.0;
        break;
    }
  }
  if (spec.kind != FilterKind::polynomial && (spec.cutoff < 1 || spec.cutoff > n))
    throw InputError("cutoff index must lie in [1, N]");
  return igft(basis, response.asDiagonal() * gft(basis, f));
}

FilterDesign design_filter(const Vector& eigenvalues, const std::function<double(double)>& target, int degree,
                           FitMethod method, bool include_constant) {
  if (degree < 1) throw InputError("filter degree must be at least 1");
  if (eigenvalues.size() == 0) throw InputError("filter design needs eigenvalues");

  FilterDesign d;
  if (method == FitMethod::least_squares) {
    d.filter = least_squares_fit(eigenvalues, target, degree, include_constant);
  } else {
    d.filter = chebyshev_fit(eigenvalues.maxCoeff(), target, degree);
  }
  for (Index k = 0; k < eigenvalues.size(); ++k) {
    d.max_fit_error = std::max(d.max_fit_error, std::abs(d.filter.transfer(eigenvalues(k)) - target(eigenvalues(k))));
  }
  return d;
}

ProjectionRegression spectral_projection_regression(const SpectralBasis& basis, const FeatureMatrix& y, Index cutoff) {
  BandSplit s = ideal_split(basis, y, cutoff);
  return {std::move(s.low), std::move(s.high)};
}

}  // namespace gspcd::spectral
