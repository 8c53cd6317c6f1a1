#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "gspcd/graph.hpp"

using namespace gspcd;
using namespace gspcd::graph;

namespace {

FeatureMatrix random_features(Index n, Index m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  FeatureMatrix f(n, m);
  for (Index i = 0; i < f.size(); ++i) f.data()[i] = g(rng);
  return f;
}

// Euclidean projection onto the probability simplex (sort and threshold).
Vector project_simplex(const Vector& v) {
  std::vector<double> u(v.data(), v.data() + v.size());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0, theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cum += u[j];
    const double t = (cum - 1.0) / double(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  return (v.array() - theta).max(0.0);
}

std::set<std::pair<Index, Index>> edges(const SparseMatrix& w) {
  std::set<std::pair<Index, Index>> e;
  for (Index c = 0; c < w.outerSize(); ++c) {
    for (SparseMatrix::InnerIterator it(w, c); it; ++it) {
      if (it.value() != 0.0) e.emplace(std::min(it.row(), it.col()), std::max(it.row(), it.col()));
    }
  }
  return e;
}

Matrix dist_from_points(const std::vector<double>& x) {
  FeatureMatrix f(x.size(), 1);
  for (std::size_t i = 0; i < x.size(); ++i) f(i, 0) = x[i];
  return pairwise_sq_distances(f);
}

}  // namespace

TEST_CASE("pairwise distances") {
  FeatureMatrix two(2, 1);
  two << 0.0, 3.0;
  const Matrix d = pairwise_sq_distances(two);
  CHECK(d(0, 0) == 0.0);
  CHECK(d(0, 1) == 9.0);
  CHECK(d(1, 0) == 9.0);
  CHECK(d(1, 1) == 0.0);

  CHECK(pairwise_sq_distances(FeatureMatrix::Constant(4, 3, 0.7)).isZero());

  const FeatureMatrix f = random_features(5, 3, 1);
  const Matrix dd = pairwise_sq_distances(f);
  for (Index i = 0; i < 5; ++i) {
    for (Index j = 0; j < 5; ++j) {
      const double expansion = f.row(i).squaredNorm() + f.row(j).squaredNorm() - 2.0 * f.row(i).dot(f.row(j));
      CHECK(std::abs(dd(i, j) - expansion) <= 1e-9);
      CHECK(dd(i, j) == dd(j, i));
    }
  }

  CHECK_THROWS_AS(pairwise_sq_distances(FeatureMatrix::Zero(1, 2)), InputError);
  FeatureMatrix bad = FeatureMatrix::Zero(3, 1);
  bad(1, 0) = std::nan("");
  CHECK_THROWS_AS(pairwise_sq_distances(bad), InputError);
}

TEST_CASE("l2 adaptive weights on a small row") {
  // Row 0 sees distances {1, 2, 5} to vertices 1, 2, 3.
  Matrix d = Matrix::Zero(4, 4);
  const double row[] = {1.0, 2.0, 5.0};
  for (int j = 0; j < 3; ++j) d(0, j + 1) = d(j + 1, 0) = row[j];
  d(1, 2) = d(2, 1) = 1.0;
  d(1, 3) = d(3, 1) = 4.0;
  d(2, 3) = d(3, 2) = 3.0;
  const auto w = build_adaptive_affinity(d, 2, AffinityMode::l2);
  CHECK(w.weights.coeff(0, 1) == doctest::Approx(4.0 / 7.0).epsilon(1e-14));
  CHECK(w.weights.coeff(0, 2) == doctest::Approx(3.0 / 7.0).epsilon(1e-14));
  CHECK(w.weights.coeff(0, 3) == 0.0);
  CHECK(w.beta[0] == doctest::Approx(3.5));
}

TEST_CASE("k = 1 puts all weight on the nearest neighbour") {
  const Matrix d = pairwise_sq_distances(random_features(12, 2, 2));
  for (auto mode : {AffinityMode::l2, AffinityMode::entropy}) {
    const auto w = build_adaptive_affinity(d, 1, mode);
    for (Index i = 0; i < 12; ++i) {
      Index nearest = -1;
      double best = INFINITY;
      for (Index j = 0; j < 12; ++j) {
        if (j != i && d(i, j) < best) best = d(i, j), nearest = j;
      }
      CHECK(w.weights.coeff(i, nearest) == doctest::Approx(1.0));
      CHECK(Vector(w.weights.row(i)).sum() == doctest::Approx(1.0));
    }
  }
}

TEST_CASE("l2 rows are simplex projections of -d/(2 beta)") {
  const Index n = 60;
  const int k = 7;
  const Matrix d = pairwise_sq_distances(random_features(n, 4, 3));
  const auto w = build_adaptive_affinity(d, k, AffinityMode::l2);
  const Matrix dense = Matrix(w.weights);
  for (Index i = 0; i < n; ++i) {
    REQUIRE(w.beta[i] > 0.0);
    // Project over every other vertex, not just the k chosen ones.
    Vector v(n - 1);
    std::vector<Index> others;
    for (Index j = 0; j < n; ++j) {
      if (j != i) others.push_back(j);
    }
    for (std::size_t j = 0; j < others.size(); ++j) v(j) = -d(i, others[j]) / (2.0 * w.beta[i]);
    const Vector p = project_simplex(v);
    for (std::size_t j = 0; j < others.size(); ++j) CHECK(std::abs(p(j) - dense(i, others[j])) <= 1e-12);

    CHECK(dense(i, i) == 0.0);
    CHECK(std::abs(dense.row(i).sum() - 1.0) <= 1e-9);
    CHECK((dense.row(i).array() >= 0.0).all());
    CHECK((dense.row(i).array() > 0.0).count() == k);
  }
}

TEST_CASE("l2 weights decrease with distance") {
  const Index n = 40;
  const Matrix d = pairwise_sq_distances(random_features(n, 3, 4));
  const Matrix w = Matrix(build_adaptive_affinity(d, 9, AffinityMode::l2).weights);
  for (Index i = 0; i < n; ++i) {
    for (Index a = 0; a < n; ++a) {
      for (Index b = 0; b < n; ++b) {
        if (a != i && b != i && d(i, a) < d(i, b)) CHECK(w(i, a) >= w(i, b));
      }
    }
  }
}

TEST_CASE("l2 with k = N - 1 keeps every neighbour") {
  const Matrix d = pairwise_sq_distances(random_features(6, 2, 5));
  const Matrix w = Matrix(build_adaptive_affinity(d, 5, AffinityMode::l2).weights);
  for (Index i = 0; i < 6; ++i) {
    CHECK(std::abs(w.row(i).sum() - 1.0) <= 1e-12);
    CHECK((w.row(i).array() > 0.0).count() == 5);
  }
}

TEST_CASE("equal candidate distances give uniform weights") {
  Matrix d = Matrix::Constant(5, 5, 2.0);
  d.diagonal().setZero();
  for (auto mode : {AffinityMode::l2, AffinityMode::entropy}) {
    const Matrix w = Matrix(build_adaptive_affinity(d, 3, mode).weights);
    for (Index i = 0; i < 5; ++i) {
      CHECK((w.row(i).array() > 0.0).count() == 3);
      for (Index j = 0; j < 5; ++j) {
        if (w(i, j) > 0.0) CHECK(w(i, j) == doctest::Approx(1.0 / 3.0));
      }
    }
  }
}

TEST_CASE("entropy rows hit the target entropy") {
  const int k = 10;
  const Matrix d = pairwise_sq_distances(random_features(50, 3, 6));
  const auto w = build_adaptive_affinity(d, k, AffinityMode::entropy);
  const Matrix dense = Matrix(w.weights);
  for (Index i = 0; i < 50; ++i) {
    double h = 0.0;
    for (Index j = 0; j < 50; ++j) {
      if (dense(i, j) > 0.0) h -= dense(i, j) * std::log(dense(i, j));
    }
    CHECK(std::abs(h - 0.5 * std::log(double(k))) <= 1e-6);
    CHECK(std::abs(dense.row(i).sum() - 1.0) <= 1e-9);
    // Softmin: w_a / w_b = exp(-(d_a - d_b) / beta).
    Index a = -1, b = -1;
    for (Index j = 0; j < 50; ++j) {
      if (dense(i, j) > 0.0) (a < 0 ? a : b) = j;
    }
    CHECK(std::log(dense(i, a) / dense(i, b)) == doctest::Approx(-(d(i, a) - d(i, b)) / w.beta[i]).epsilon(1e-9));
  }
}

TEST_CASE("affinity argument checks") {
  const Matrix d = pairwise_sq_distances(random_features(4, 2, 7));
  CHECK_THROWS_AS(build_adaptive_affinity(d, 0, AffinityMode::l2), InputError);
  CHECK_THROWS_AS(build_adaptive_affinity(d, 4, AffinityMode::l2), InputError);
  CHECK_THROWS_AS(build_kfn_affinity(d, 4), InputError);
  CHECK_THROWS_AS(build_adaptive_affinity(Matrix::Zero(3, 2), 1, AffinityMode::l2), InputError);
}

TEST_CASE("kfn on three collinear points") {
  const auto w = build_kfn_affinity(dist_from_points({0.0, 1.0, 10.0}), 1);
  const std::set<std::pair<Index, Index>> expect = {{0, 2}, {1, 2}};
  CHECK(edges(w.weights) == expect);
  CHECK(w.symmetric);
  CHECK(w.weights.coeff(2, 0) == 1.0);
  CHECK(w.weights.coeff(0, 1) == 0.0);
}

TEST_CASE("kfn with k = N - 1 is complete") {
  const auto w = build_kfn_affinity(pairwise_sq_distances(random_features(7, 2, 8)), 6);
  CHECK(edges(w.weights).size() == 21u);
  for (Index i = 0; i < 7; ++i) CHECK(w.weights.coeff(i, i) == 0.0);
}

TEST_CASE("kfn and knn overlap only through symmetrization") {
  // Per row, the k nearest and k farthest are disjoint whenever N - 1 >= 2k. After max(W, W^T) a
  // KFN edge (i, j) can still join KNN neighbours when j is an outlier: i is then among j's
  // farthest while j is among i's nearest. Seed 13 has such an outlier, the others have none.
  const int k = 5;
  const Index n = 40;
  for (std::uint64_t seed = 10; seed < 15; ++seed) {
    const Matrix d = pairwise_sq_distances(random_features(n, 2, seed));
    const Matrix far = Matrix(build_kfn_affinity(d, k).weights);
    const Matrix near = Matrix(build_adaptive_affinity(d, k, AffinityMode::l2).weights);
    std::vector<std::set<Index>> farthest(n);
    for (Index i = 0; i < n; ++i) {
      std::vector<Index> order;
      for (Index j = 0; j < n; ++j) {
        if (j != i) order.push_back(j);
      }
      std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return d(i, a) > d(i, b); });
      farthest[i].insert(order.begin(), order.begin() + k);
    }
    int shared = 0;
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < n; ++j) {
        if (near(i, j) == 0.0) continue;
        CHECK(farthest[i].count(j) == 0);
        if (far(i, j) > 0.0) {
          ++shared;
          CHECK(farthest[j].count(i) == 1);
        }
      }
    }
    CHECK((shared > 0) == (seed == 13));
  }
}

TEST_CASE("sinkhorn on 2x2 examples") {
  SparseAffinity a;
  a.weights = Matrix{{1.0, 3.0}, {3.0, 1.0}}.sparseView();
  const Matrix s = Matrix(sinkhorn_symmetrize(a).weights);
  CHECK(s(0, 0) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(s(0, 1) == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(s(1, 0) == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(s(1, 1) == doctest::Approx(0.25).epsilon(1e-14));

  SparseAffinity p;
  p.weights = Matrix{{0.0, 1.0}, {1.0, 0.0}}.sparseView();
  const auto res = sinkhorn_balance(p);
  CHECK(res.iterations == 0);
  CHECK(Matrix(res.affinity.weights) == Matrix{{0.0, 1.0}, {1.0, 0.0}});

  SparseAffinity eye;
  eye.weights = Matrix::Identity(3, 3).sparseView();
  CHECK(Matrix(sinkhorn_symmetrize(eye).weights) == Matrix::Identity(3, 3));
}

TEST_CASE("sinkhorn output is exactly symmetric and doubly stochastic") {
  const Index n = 300;
  const auto w = build_adaptive_affinity(pairwise_sq_distances(random_features(n, 5, 9)), 12, AffinityMode::l2);
  const auto res = sinkhorn_balance(w);
  const SparseMatrix& s = res.affinity.weights;
  CHECK(res.iterations <= 500);
  const SparseMatrix st = s.transpose();
  CHECK(Matrix(s - st).cwiseAbs().maxCoeff() == 0.0);
  const Vector rows = s * Vector::Ones(n);
  const Vector cols = st * Vector::Ones(n);
  CHECK((rows.array() - 1.0).abs().maxCoeff() <= 1e-6);
  CHECK((cols.array() - 1.0).abs().maxCoeff() <= 1e-6);
  CHECK(res.affinity.doubly_stochastic);

  // Spectrum of W^sym: top eigenvalue 1 with the constant eigenvector, all |gamma| <= 1.
  Eigen::SelfAdjointEigenSolver<Matrix> es{Matrix(s)};
  const Vector gamma = es.eigenvalues();
  CHECK(std::abs(gamma(n - 1) - 1.0) <= 1e-9);
  CHECK(gamma.cwiseAbs().maxCoeff() <= 1.0 + 1e-9);
  const Vector top = es.eigenvectors().col(n - 1);
  CHECK(std::abs(std::abs(top.sum()) / std::sqrt(double(n)) - 1.0) <= 1e-9);
}

TEST_CASE("sinkhorn errors") {
  SparseAffinity zero_row;
  zero_row.weights = Matrix{{0.0, 0.0}, {0.0, 1.0}}.sparseView();
  CHECK_THROWS_AS(sinkhorn_balance(zero_row), InputError);

  SparseAffinity negative;
  negative.weights = Matrix{{1.0, -1.0}, {-1.0, 1.0}}.sparseView();
  CHECK_THROWS_AS(sinkhorn_balance(negative), InputError);

  // Without total support the scaling diverges: [[1,1],[1,0]] cannot be balanced.
  SparseAffinity no_support;
  no_support.weights = Matrix{{1.0, 1.0}, {1.0, 0.0}}.sparseView();
  CHECK_THROWS_AS(sinkhorn_balance(no_support), ConvergenceError);
}

TEST_CASE("laplacian examples") {
  SparseAffinity w;
  w.weights = Matrix{{0.25, 0.75}, {0.75, 0.25}}.sparseView();
  const auto g = laplacian_from_affinity(w);
  const Matrix l = Matrix(g.laplacian);
  CHECK((l - Matrix{{0.75, -0.75}, {-0.75, 0.75}}).cwiseAbs().maxCoeff() <= 1e-15);
  Eigen::SelfAdjointEigenSolver<Matrix> es2(l);
  CHECK(es2.eigenvalues()(0) == doctest::Approx(0.0));
  CHECK(es2.eigenvalues()(1) == doctest::Approx(1.5));

  SparseAffinity u;
  u.weights = (0.5 * (Matrix::Ones(3, 3) - Matrix::Identity(3, 3))).sparseView();
  Eigen::SelfAdjointEigenSolver<Matrix> es3{Matrix(laplacian_from_affinity(u).laplacian)};
  CHECK(std::abs(es3.eigenvalues()(0)) <= 1e-12);
  CHECK(es3.eigenvalues()(1) == doctest::Approx(1.5));
  CHECK(es3.eigenvalues()(2) == doctest::Approx(1.5));

  SparseAffinity not_stochastic;
  not_stochastic.weights = Matrix{{0.0, 2.0}, {2.0, 0.0}}.sparseView();
  CHECK_THROWS_AS(laplacian_from_affinity(not_stochastic), InputError);
  SparseAffinity asym;
  asym.weights = Matrix{{0.5, 0.5}, {0.4, 0.6}}.sparseView();
  CHECK_THROWS_AS(laplacian_from_affinity(asym), InputError);
}

TEST_CASE("graph operators: constant nullspace, symmetric PSD spectrum in [0, 2]") {
  for (auto mode : {AffinityMode::l2, AffinityMode::entropy}) {
    const auto g = build_graph(random_features(120, 4, 11), 8, mode);
    const Index n = g.size();
    CHECK((g.laplacian * Vector::Ones(n)).cwiseAbs().maxCoeff() <= 1e-9);
    const Matrix l = Matrix(g.laplacian);
    CHECK((l - l.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
    Eigen::SelfAdjointEigenSolver<Matrix> es(l);
    CHECK(es.eigenvalues().minCoeff() >= -1e-9);
    CHECK(es.eigenvalues().maxCoeff() <= 2.0 + 1e-9);
    CHECK((g.degree.array() - 1.0).abs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("coordinate list round trip") {
  const auto g = build_graph(random_features(30, 3, 12), 4, AffinityMode::l2);
  std::stringstream ss;
  write_affinity_coo(ss, g.affinity);
  std::string header;
  std::getline(ss, header);
  CHECK(header == "30 " + std::to_string(g.affinity.weights.nonZeros()));
  ss.seekg(0);
  const auto back = read_affinity_coo(ss);
  CHECK(Matrix(back.weights - g.affinity.weights).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.symmetric);
  CHECK(back.doubly_stochastic);

  std::stringstream bad("3 2\n0 1 0.5\n");
  CHECK_THROWS_AS(read_affinity_coo(bad), InputError);
  std::stringstream out_of_range("2 1\n0 5 0.5\n");
  CHECK_THROWS_AS(read_affinity_coo(out_of_range), InputError);
}
