#pragma once

#include <functional>
#include <iosfwd>
#include <vector>

#include "gspcd/graph.hpp"

namespace gspcd::spectral {

/// Eigenpairs of a symmetric shift operator, eigenvalues in descending order.
/// Index 0 is the highest frequency and index N-1 the lowest (lambda = 0 for a Laplacian).
/// Each eigenvector is signed so its first entry of largest magnitude is positive.
struct SpectralBasis {
  Vector eigenvalues;
  Matrix eigenvectors;

  Index size() const { return eigenvalues.size(); }
};

inline constexpr Index kDefaultDenseLimit = 6000;

SpectralBasis eigendecompose(const Matrix& operator_matrix, Index dense_limit = kDefaultDenseLimit);
SpectralBasis eigendecompose(const SparseMatrix& operator_matrix, Index dense_limit = kDefaultDenseLimit);

/// U^T f: row k holds the coefficients at eigenvalue k.
Matrix gft(const SpectralBasis& basis, const FeatureMatrix& f);
/// U c.
FeatureMatrix igft(const SpectralBasis& basis, const Matrix& coeffs);

enum class TvForm { quadratic, l1 };

double total_variation(const graph::GraphOperators& g, const FeatureMatrix& f, TvForm form);
/// Tr(f^T L f).
double quadratic_tv_matrix(const graph::GraphOperators& g, const FeatureMatrix& f);
/// 1/2 sum_ij w_ij ||f_i - f_j||^2.
double quadratic_tv_edgewise(const graph::GraphOperators& g, const FeatureMatrix& f);

struct EnergyProfile {
  Vector norms;                  // ||X~_k||_2 per eigenvalue, descending-eigenvalue order
  double weighted_energy = 0.0;  // sum_k lambda_k ||X~_k||^2

  /// Fraction of sum ||X~_k||^2 carried by indices [first, last).
  double fraction(Index first, Index last) const;
};

EnergyProfile energy_profile(const SpectralBasis& basis, const FeatureMatrix& f);

/// "lambda, norm" CSV.
void write_energy_csv(std::ostream& os, const SpectralBasis& basis, const EnergyProfile& profile);

struct BandSplit {
  FeatureMatrix low;
  FeatureMatrix high;
};

/// Ideal split at a 1-based cutoff: spectral rows k >= cutoff are low, k < cutoff high.
BandSplit ideal_split(const SpectralBasis& basis, const FeatureMatrix& f, Index cutoff);

enum class FilterKind { polynomial, ideal_low, ideal_high };

struct FilterSpec {
  FilterKind kind = FilterKind::polynomial;
  double constant_term = 0.0;   // h_0
  std::vector<double> coeffs;   // h_1 .. h_M
  Index cutoff = 0;             // 1-based, ideal kinds only

  /// h_0 + sum_m h_m lambda^m.
  double transfer(double lambda) const;
};

/// Sum_m h_m L^m f by repeated sparse products.
FeatureMatrix apply_poly_filter(const graph::GraphOperators& g, const FilterSpec& spec, const FeatureMatrix& f);

/// U H(Lambda) U^T f, for any filter kind.
FeatureMatrix apply_spectral_filter(const SpectralBasis& basis, const FilterSpec& spec, const FeatureMatrix& f);

enum class FitMethod { least_squares, chebyshev };

struct FilterDesign {
  FilterSpec filter;
  double max_fit_error = 0.0;  // max |H(lambda_k) - psi(lambda_k)| over the eigenvalues
};

/// Fits a degree-M polynomial to psi on the given eigenvalues.
/// Least squares uses the monomials lambda..lambda^M (plus 1 when include_constant);
/// Chebyshev truncates the series of psi on [0, lambda_max] and always carries a constant term.
FilterDesign design_filter(const Vector& eigenvalues, const std::function<double(double)>& target, int degree,
                           FitMethod method, bool include_constant = false);

struct ProjectionRegression {
  FeatureMatrix regressed;  // low-pass part
  FeatureMatrix changed;    // high-pass part
};

ProjectionRegression spectral_projection_regression(const SpectralBasis& basis, const FeatureMatrix& y, Index cutoff);

}  // namespace gspcd::spectral
