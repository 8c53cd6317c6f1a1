#pragma once

#include <iosfwd>
#include <vector>

#include "gspcd/types.hpp"

namespace gspcd::graph {

/// Nonnegative sparse weight matrix plus the structural properties it is known to satisfy.
struct SparseAffinity {
  SparseMatrix weights;
  bool symmetric = false;
  bool row_stochastic = false;
  bool doubly_stochastic = false;
  /// Per-row regularization weight selected by the adaptive construction (empty otherwise).
  std::vector<double> beta;

  Index size() const { return weights.rows(); }
};

/// L = I - W for a symmetric doubly stochastic W.
struct GraphOperators {
  SparseAffinity affinity;
  SparseMatrix laplacian;
  Vector degree;

  Index size() const { return laplacian.rows(); }
};

enum class AffinityMode { l2, entropy };

/// Squared Euclidean distances between feature rows; exactly symmetric with zero diagonal.
Matrix pairwise_sq_distances(const FeatureMatrix& features);

/// Row-stochastic adaptive KNN affinity. Each row is the minimizer of
///   sum_j d_ij w_ij + R(w_i)   s.t.  w_i on the probability simplex, w_ii = 0,
/// restricted to the k nearest neighbours. In l2 mode R = beta_i * ||w_i||^2 with beta_i
/// picked so exactly k weights are nonzero; in entropy mode R = beta_i * sum w log w with
/// beta_i picked so that the row entropy equals log(k)/2.
SparseAffinity build_adaptive_affinity(const Matrix& dist, int k, AffinityMode mode);

/// k-farthest-neighbour graph: weight 1/k on each row's k largest distances, then max(W, W^T).
SparseAffinity build_kfn_affinity(const Matrix& dist, int k);

struct SinkhornOptions {
  /// Iteration stops once the max row-sum deviation drops below this.
  double tolerance = 1e-12;
  /// Deviation that must be reached by max_iter, otherwise ConvergenceError.
  double acceptance = 1e-6;
  int max_iter = 500;
};

struct SinkhornResult {
  SparseAffinity affinity;
  int iterations = 0;
  double max_deviation = 0.0;
};

/// Symmetric Sinkhorn-Knopp balancing of (W + W^T)/2 into D W D with rows and columns summing to 1.
SinkhornResult sinkhorn_balance(const SparseAffinity& w, const SinkhornOptions& options = {});
SparseAffinity sinkhorn_symmetrize(const SparseAffinity& w, const SinkhornOptions& options = {});

/// Throws InputError unless the affinity is symmetric and doubly stochastic within 1e-6.
GraphOperators laplacian_from_affinity(const SparseAffinity& wsym);

/// Distances -> adaptive affinity -> Sinkhorn -> Laplacian.
GraphOperators build_graph(const FeatureMatrix& features, int k, AffinityMode mode);

/// Coordinate list: header "N nnz", then one "i j w" line per stored entry (0-based).
void write_affinity_coo(std::ostream& os, const SparseAffinity& w);
SparseAffinity read_affinity_coo(std::istream& is);

}  // namespace gspcd::graph
