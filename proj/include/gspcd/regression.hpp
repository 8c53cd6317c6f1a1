#pragma once

#include <iosfwd>
#include <memory>
#include <span>
#include <variant>
#include <vector>

#include "gspcd/graph.hpp"

namespace gspcd::regression {

enum class ProxMode { l20, l21, topk };
enum class LinearSolverKind { direct, iterative };

/// Hard-threshold level for the l2,0 prox: sqrt(2 alpha / mu) from the proximal derivation,
/// or the literal 2 alpha / mu.
enum class HardThresholdRule { derived, literal };

struct SolverConfig {
  double alpha = 0.05;
  double mu = 0.1;
  double xi0 = 1e-4;
  int max_iter = 100;
  ProxMode prox = ProxMode::l21;
  Index tau = 0;  // topk only
  std::vector<double> filter_coeffs{1.0, 1.0, 1.0};
  LinearSolverKind linear_solver = LinearSolverKind::direct;
  HardThresholdRule l20_rule = HardThresholdRule::derived;

  /// Throws InputError on an out-of-range field. n is the vertex count (0 skips the tau bound).
  void validate(Index n = 0) const;
};

/// H(L) = sum_m h_m L^m, kept sparse when cheap and dense otherwise.
class PenaltyMatrix {
 public:
  explicit PenaltyMatrix(SparseMatrix m) : storage_(std::move(m)) {}
  explicit PenaltyMatrix(Matrix m) : storage_(std::move(m)) {}

  Index size() const;
  bool is_dense() const { return std::holds_alternative<Matrix>(storage_); }
  const Matrix& dense() const { return std::get<Matrix>(storage_); }
  const SparseMatrix& sparse() const { return std::get<SparseMatrix>(storage_); }
  Matrix to_dense() const;
  Matrix operator*(const Matrix& x) const;

 private:
  std::variant<SparseMatrix, Matrix> storage_;
};

/// Fraction of nonzeros above which build_penalty switches to dense storage.
inline constexpr double kDenseFillThreshold = 0.05;

PenaltyMatrix build_penalty(const graph::GraphOperators& g, std::span<const double> coeffs);

/// Solves (2H + mu I) Z = rhs. The direct kind factors once at construction;
/// the iterative kind runs Jacobi-preconditioned CG to a relative residual of 1e-9.
class ZSolver {
 public:
  ZSolver(const PenaltyMatrix& h, double mu, LinearSolverKind kind);
  ~ZSolver();
  ZSolver(ZSolver&&) noexcept;
  ZSolver& operator=(ZSolver&&) noexcept;

  Matrix solve(const Matrix& rhs) const;
  Matrix solve(const Matrix& rhs, const Matrix& guess) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Z = (2H + mu I)^{-1} (mu Y - mu Delta + R).
Matrix update_z(const PenaltyMatrix& h, const Matrix& y, const Matrix& delta, const Matrix& r, double mu,
                LinearSolverKind kind = LinearSolverKind::direct);

/// Row-separable proximal step on Q with step alpha / mu.
Matrix prox_rows(const Matrix& q, ProxMode mode, double alpha, double mu, Index tau = 0,
                 HardThresholdRule rule = HardThresholdRule::derived);

struct RegressionState {
  Matrix z;
  Matrix delta;
  Matrix r;
  int iter = 0;
  std::vector<double> xi_history;
  std::vector<double> feas_history;
  std::vector<double> objective_history;
  bool converged = false;
};

/// Tr(Z^T H Z) + alpha f(Delta) for the configured penalty (topk contributes 0).
double objective(const PenaltyMatrix& h, const Matrix& z, const Matrix& delta, const SolverConfig& cfg);

/// ADMM for  min Tr(Z^T H Z) + alpha f(Delta)  s.t.  Y = Z + Delta.
RegressionState solve_decomposition(const Matrix& y, const graph::GraphOperators& g, const SolverConfig& cfg);
RegressionState solve_decomposition(const Matrix& y, const PenaltyMatrix& h, const SolverConfig& cfg);

/// "iter,xi,feasibility,objective" per iteration.
void write_trace_csv(std::ostream& os, const RegressionState& state);

}  // namespace gspcd::regression
