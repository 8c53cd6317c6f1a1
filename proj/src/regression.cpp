#include "gspcd/regression.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>

namespace gspcd::regression {

void SolverConfig::validate(Index n) const {
  if (!(alpha > 0.0)) throw InputError("alpha must be positive");
  if (!(mu > 0.0)) throw InputError("mu must be positive");
  if (!(xi0 > 0.0)) throw InputError("xi0 must be positive");
  if (max_iter < 1) throw InputError("max_iter must be at least 1");
  if (filter_coeffs.empty()) throw InputError("at least one filter coefficient is required");
  for (double h : filter_coeffs) {
    if (!(h >= 0.0) || !std::isfinite(h)) throw InputError("filter coefficients must be finite and nonnegative");
  }
  if (prox == ProxMode::topk && (tau < 1 || (n > 0 && tau > n))) throw InputError("topk needs 1 <= tau <= N");
}

Index PenaltyMatrix::size() const {
  return std::visit([](const auto& m) { return Index(m.rows()); }, storage_);
}

Matrix PenaltyMatrix::to_dense() const {
  return is_dense() ? dense() : Matrix(sparse());
}

Matrix PenaltyMatrix::operator*(const Matrix& x) const {
  return std::visit([&](const auto& m) -> Matrix { return m * x; }, storage_);
}

PenaltyMatrix build_penalty(const graph::GraphOperators& g, std::span<const double> coeffs) {
  if (coeffs.empty()) throw InputError("penalty needs at least one coefficient");
  for (double h : coeffs) {
    if (!(h >= 0.0)) throw InputError("penalty coefficients must be nonnegative");
  }
  const SparseMatrix& lap = g.laplacian;
  const Index n = lap.rows();
  const double dense_nnz = kDenseFillThreshold * double(n) * double(n);

  SparseMatrix power = lap;
  SparseMatrix h_sparse = coeffs[0] * lap;
  std::size_t m = 1;
  for (; m < coeffs.size(); ++m) {
    SparseMatrix next = (lap * power).pruned();
    if (double(next.nonZeros()) > dense_nnz) break;
    power = std::move(next);
    h_sparse += coeffs[m] * power;
  }
  if (m == coeffs.size()) return PenaltyMatrix(SparseMatrix(h_sparse.pruned()));

  // Fill-in is too high: finish the series with sparse x dense products.
  Matrix h = Matrix(h_sparse);
  Matrix dpower = Matrix(power);
  for (; m < coeffs.size(); ++m) {
    dpower = lap * dpower;
    h += coeffs[m] * dpower;
  }
  // Powers of a symmetric L are symmetric; remove the rounding asymmetry.
  h = 0.5 * (h + h.transpose()).eval();
  return PenaltyMatrix(std::move(h));
}

struct ZSolver::Impl {
  using DenseCG = Eigen::ConjugateGradient<Matrix, Eigen::Lower | Eigen::Upper, Eigen::DiagonalPreconditioner<double>>;
  using SparseCG =
      Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper, Eigen::DiagonalPreconditioner<double>>;

  Matrix dense_system;
  SparseMatrix sparse_system;
  std::variant<std::monostate, Eigen::LLT<Matrix>, Eigen::SimplicialLLT<SparseMatrix>, DenseCG, SparseCG> solver;
};

namespace {
constexpr double kCgTolerance = 1e-9;
}

ZSolver::ZSolver(const PenaltyMatrix& h, double mu, LinearSolverKind kind) : impl_(std::make_unique<Impl>()) {
  if (!(mu > 0.0)) throw InputError("mu must be positive");
  const Index n = h.size();
  if (h.is_dense()) {
    impl_->dense_system = 2.0 * h.dense();
    impl_->dense_system.diagonal().array() += mu;
    if (kind == LinearSolverKind::direct) {
      auto& llt = impl_->solver.emplace<Eigen::LLT<Matrix>>(impl_->dense_system);
      if (llt.info() != Eigen::Success) throw ConvergenceError("2H + mu I is not positive definite");
    } else {
      auto& cg = impl_->solver.emplace<Impl::DenseCG>();
      cg.setTolerance(kCgTolerance);
      cg.setMaxIterations(std::max<Index>(1000, 2 * n));
      cg.compute(impl_->dense_system);
    }
  } else {
    SparseMatrix eye(n, n);
    eye.setIdentity();
    impl_->sparse_system = 2.0 * h.sparse() + mu * eye;
    if (kind == LinearSolverKind::direct) {
      auto& llt = impl_->solver.emplace<Eigen::SimplicialLLT<SparseMatrix>>(impl_->sparse_system);
      if (llt.info() != Eigen::Success) throw ConvergenceError("2H + mu I is not positive definite");
    } else {
      auto& cg = impl_->solver.emplace<Impl::SparseCG>();
      cg.setTolerance(kCgTolerance);
      cg.setMaxIterations(std::max<Index>(1000, 2 * n));
      cg.compute(impl_->sparse_system);
    }
  }
}

ZSolver::~ZSolver() = default;
ZSolver::ZSolver(ZSolver&&) noexcept = default;
ZSolver& ZSolver::operator=(ZSolver&&) noexcept = default;

Matrix ZSolver::solve(const Matrix& rhs) const {
  return solve(rhs, Matrix::Zero(rhs.rows(), rhs.cols()));
}

Matrix ZSolver::solve(const Matrix& rhs, const Matrix& guess) const {
  if (!rhs.allFinite()) throw InputError("non-finite right-hand side in Z update");
  return std::visit(
      [&](auto& s) -> Matrix {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, std::monostate>) {
          throw std::logic_error("ZSolver used before initialization");
        } else if constexpr (std::is_same_v<S, Impl::DenseCG> || std::is_same_v<S, Impl::SparseCG>) {
          Matrix z = s.solveWithGuess(rhs, guess);
          return z;
        } else {
          return s.solve(rhs);
        }
      },
      impl_->solver);
}

Matrix update_z(const PenaltyMatrix& h, const Matrix& y, const Matrix& delta, const Matrix& r, double mu,
                LinearSolverKind kind) {
  if (y.rows() != h.size() || delta.rows() != y.rows() || r.rows() != y.rows() || delta.cols() != y.cols() ||
      r.cols() != y.cols())
    throw InputError("Z update operands have mismatched shapes");
  ZSolver solver(h, mu, kind);
  return solver.solve(mu * y - mu * delta + r);
}

Matrix prox_rows(const Matrix& q, ProxMode mode, double alpha, double mu, Index tau, HardThresholdRule rule) {
  const Index n = q.rows();
  Matrix out = Matrix::Zero(n, q.cols());
  const Vector norms = q.rowwise().norm();
  switch (mode) {
    case ProxMode::l21: {
      const double shrink = alpha / mu;
      for (Index i = 0; i < n; ++i) {
        if (norms(i) > shrink) out.row(i) = (1.0 - shrink / norms(i)) * q.row(i);
      }
      break;
    }
    case ProxMode::l20: {
      const double thresh = rule == HardThresholdRule::derived ? std::sqrt(2.0 * alpha / mu) : 2.0 * alpha / mu;
      for (Index i = 0; i < n; ++i) {
        if (norms(i) > thresh) out.row(i) = q.row(i);
      }
      break;
    }
    case ProxMode::topk: {
      if (tau < 1) throw InputError("topk prox needs tau >= 1");
      std::vector<Index> idx(n);
      std::iota(idx.begin(), idx.end(), Index(0));
      const Index keep = std::min(tau, n);
      std::partial_sort(idx.begin(), idx.begin() + keep, idx.end(), [&](Index a, Index b) {
        return norms(a) > norms(b) || (norms(a) == norms(b) && a < b);
      });
      for (Index j = 0; j < keep; ++j) out.row(idx[j]) = q.row(idx[j]);
      break;
    }
  }
  return out;
}

double objective(const PenaltyMatrix& h, const Matrix& z, const Matrix& delta, const SolverConfig& cfg) {
  const double smooth = (z.transpose() * (h * z)).trace();
  const Vector norms = delta.rowwise().norm();
  switch (cfg.prox) {
    case ProxMode::l21:
      return smooth + cfg.alpha * norms.sum();
    case ProxMode::l20:
      return smooth + cfg.alpha * double((norms.array() > 0.0).count());
    case ProxMode::topk:
      return smooth;
  }
  return smooth;
}

RegressionState solve_decomposition(const Matrix& y, const PenaltyMatrix& h, const SolverConfig& cfg) {
  cfg.validate(y.rows());
  if (y.rows() != h.size()) throw InputError("signal rows do not match the graph size");
  if (!y.allFinite()) throw InputError("signal contains non-finite values");

  const ZSolver solver(h, cfg.mu, cfg.linear_solver);
  const double y_norm = y.norm();

  RegressionState s;
  s.delta = Matrix::Zero(y.rows(), y.cols());
  s.r = Matrix::Zero(y.rows(), y.cols());
  s.z = Matrix::Zero(y.rows(), y.cols());

  for (int t = 0; t < cfg.max_iter; ++t) {
    s.z = solver.solve(cfg.mu * (y - s.delta) + s.r, s.z);
    const Matrix q = y - s.z + s.r / cfg.mu;
    Matrix next = prox_rows(q, cfg.prox, cfg.alpha, cfg.mu, cfg.tau, cfg.l20_rule);
    s.r += cfg.mu * (y - s.z - next);

    const double prev_norm = s.delta.norm();
    const double xi = prev_norm > 0.0 ? (next - s.delta).norm() / prev_norm : std::numeric_limits<double>::infinity();
    s.delta = std::move(next);
    s.iter = t + 1;
    const double feas = (y - s.z - s.delta).norm();
    s.xi_history.push_back(xi);
    s.feas_history.push_back(feas);
    s.objective_history.push_back(objective(h, s.z, s.delta, cfg));
    if (xi < cfg.xi0) break;
  }
  const double feas = s.feas_history.empty() ? 0.0 : s.feas_history.back();
  const double xi = s.xi_history.empty() ? 0.0 : s.xi_history.back();
  s.converged = xi < cfg.xi0 && feas <= 1e-4 * y_norm;
  return s;
}

RegressionState solve_decomposition(const Matrix& y, const graph::GraphOperators& g, const SolverConfig& cfg) {
  cfg.validate(y.rows());
  return solve_decomposition(y, build_penalty(g, cfg.filter_coeffs), cfg);
}

void write_trace_csv(std::ostream& os, const RegressionState& state) {
  os << "iter,xi,feasibility,objective\n";
  os.precision(17);
  for (std::size_t t = 0; t < state.xi_history.size(); ++t) {
    os << (t + 1) << ',' << state.xi_history[t] << ',' << state.feas_history[t] << ',' << state.objective_history[t]
       << '\n';
  }
}

}  // namespace gspcd::regression
