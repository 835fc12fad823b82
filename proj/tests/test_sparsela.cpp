//
// ... Test header files
//
#include <catch_amalgamated.hpp>

//
// ... Standard header files
//
#include <cmath>
#include <random>

//
// ... stdisagg header files
//
#include <stdisagg/sparsela/cholesky.hpp>
#include <stdisagg/sparsela/dense.hpp>
#include <stdisagg/sparsela/kron_factor.hpp>
#include <stdisagg/sparsela/sparse_sym.hpp>
#include <stdisagg/stmodel.hpp>

using namespace stdisagg;
using Catch::Approx;

namespace {

  // Random sparse SPD: sparse symmetric pattern plus a dominant diagonal.
  SparseSym random_spd(int n, double density, unsigned seed) {
    std::mt19937 gen(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    Mat d = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < i; ++j) {
        if (coin(gen) < density) { d(i, j) = d(j, i) = u(gen); }
      }
    }
    for (int i = 0; i < n; ++i) { d(i, i) = d.row(i).cwiseAbs().sum() + 0.5 + coin(gen); }
    return SparseSym::from_dense(d);
  }

  // Path-graph Laplacian (Besag on a line) made proper by a tiny ridge.
  Mat path_laplacian(int n) {
    Mat q = Mat::Zero(n, n);
    for (int i = 0; i + 1 < n; ++i) {
      q(i, i) += 1; q(i + 1, i + 1) += 1; q(i, i + 1) -= 1; q(i + 1, i) -= 1;
    }
    return q;
  }

} // namespace

TEST_CASE("identity factor", "[sparsela]") {
  auto f = factorize(SparseSym::identity(3));
  REQUIRE(f.logdet() == Approx(0.0).margin(1e-15));
  Mat l = f.dense_l();
  REQUIRE((l - Mat::Identity(3, 3)).cwiseAbs().maxCoeff() == 0.0);
  Vec x = solve(f, Vec::LinSpaced(3, 1, 3));
  REQUIRE(x[0] == 1.0);
  REQUIRE(x[2] == 3.0);
}

TEST_CASE("2x2 determinant and inverse", "[sparsela]") {
  Mat a(2, 2);
  a << 2, 1, 1, 2;
  auto f = factorize(SparseSym::from_dense(a));
  REQUIRE(f.logdet() == Approx(std::log(3.0)).epsilon(1e-14));
  Vec x = f.solve(Vec(Vec::Unit(2, 0)));
  REQUIRE(x[0] == Approx(2.0 / 3.0).epsilon(1e-14));
  REQUIRE(x[1] == Approx(-1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("AR(1) log-determinant", "[sparsela]") {
  // covariance determinant (1-rho^2)^{n-1}, so logdet Q = -(n-1) log(1-rho^2)
  auto f = factorize(ar1_precision(5, 0.5));
  REQUIRE(f.logdet() == Approx(-4.0 * std::log(0.75)).epsilon(1e-12));
  REQUIRE(f.logdet() == Approx(1.150728).epsilon(1e-6));
}

TEST_CASE("factor reproduces random SPD matrices", "[sparsela]") {
  for (unsigned seed = 1; seed <= 8; ++seed) {
    int n = 20 + 10 * static_cast<int>(seed);
    auto q = random_spd(n, 0.08, seed);
    for (auto ord : {OrderingChoice::amd, OrderingChoice::natural}) {
      auto f = factorize(q, ord);
      Mat l = f.dense_l();
      Mat qd = q.dense();
      Mat pq(n, n);
      auto const& p = f.permutation();
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) { pq(i, j) = qd(p[i], p[j]); }
      }
      double rel = (l * l.transpose() - pq).norm() / pq.norm();
      REQUIRE(rel < 1e-10);
      REQUIRE(l.diagonal().minCoeff() > 0.0);
      REQUIRE(f.logdet() == Approx(dense::logdet_spd(qd)).epsilon(1e-10));
    }
  }
}

TEST_CASE("solve against dense elimination", "[sparsela]") {
  auto q = random_spd(50, 0.1, 42);
  auto f = factorize(q);
  std::mt19937 gen(3);
  std::normal_distribution<double> z;
  Vec b(50);
  for (int i = 0; i < 50; ++i) { b[i] = z(gen); }
  Vec x = f.solve(b);
  Vec xd = dense::solve_lu(q.dense(), b);
  REQUIRE((x - xd).cwiseAbs().maxCoeff() < 1e-9);
  Vec r = q.multiply(x) - b;
  REQUIRE(r.cwiseAbs().maxCoeff() / b.cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("dimension checks", "[sparsela]") {
  auto f = factorize(SparseSym::identity(3));
  REQUIRE_THROWS_AS(f.solve(Vec(Vec::Zero(4))), DimensionMismatch);
  REQUIRE_THROWS_AS(quad_form(SparseSym::identity(3), Vec::Zero(2)), DimensionMismatch);
}

TEST_CASE("singular Besag precision is rejected", "[sparsela]") {
  auto q = SparseSym::from_dense(path_laplacian(4));
  REQUIRE_THROWS_AS(factorize(q), NotPositiveDefinite);
  Mat neg(2, 2);
  neg << 1, 2, 2, 1;
  REQUIRE_THROWS_AS(factorize(SparseSym::from_dense(neg)), NotPositiveDefinite);
}

TEST_CASE("quad_form and kron", "[sparsela]") {
  Vec x(3);
  x << 1, 2, 2;
  REQUIRE(quad_form(SparseSym::identity(3), x) == 9.0);

  Mat b(2, 2);
  b << 2, 1, 1, 2;
  Mat k = kron(SparseSym::identity(2), SparseSym::from_dense(b)).dense();
  Mat expect = Mat::Zero(4, 4);
  expect.block(0, 0, 2, 2) = b;
  expect.block(2, 2, 2, 2) = b;
  REQUIRE(k == expect);

  // AR(1) (x) Besag(path 4) against a dense Kronecker loop
  Mat a = ar1_precision(3, 0.5).dense();
  Mat l = path_laplacian(4);
  Mat ks = kron(SparseSym::from_dense(a), SparseSym::from_dense(l)).dense();
  for (int i = 0; i < 12; ++i) {
    for (int j = 0; j < 12; ++j) {
      REQUIRE(ks(i, j) == a(i / 4, j / 4) * l(i % 4, j % 4));
    }
  }
  REQUIRE(ks == dense::kron(a, l));
}

TEST_CASE("kron log-determinant identity", "[sparsela]") {
  for (unsigned seed = 0; seed < 5; ++seed) {
    auto a = random_spd(5 + seed, 0.3, 100 + seed);
    auto b = random_spd(20 - seed, 0.2, 200 + seed);
    double lk = factorize(kron(a, b)).logdet();
    double la = factorize(a).logdet();
    double lb = factorize(b).logdet();
    REQUIRE(std::abs(lk - (b.n() * la + a.n() * lb)) < 1e-8);
    KronFactor kf(factorize(a), factorize(b));
    REQUIRE(std::abs(kf.logdet() - lk) < 1e-8);
  }
}

TEST_CASE("GMRF sampling", "[sparsela]") {
  SECTION("identity") {
    auto f = factorize(SparseSym::identity(2));
    int ns = 20000;
    Vec s2 = Vec::Zero(2);
    for (int i = 0; i < ns; ++i) { s2 += sample_gmrf(f, 1000 + i).array().square().matrix(); }
    s2 /= ns;
    REQUIRE(std::abs(s2[0] - 1.0) < 0.03);
    REQUIRE(std::abs(s2[1] - 1.0) < 0.03);
  }
  SECTION("2x2 and 4x4 covariance within 3 standard errors") {
    Mat a(2, 2);
    a << 2, 1, 1, 2;
    auto q4 = random_spd(4, 0.9, 9);
    for (Mat qd : {a, q4.dense()}) {
      int n = static_cast<int>(qd.rows());
      auto f = factorize(SparseSym::from_dense(qd));
      Mat sigma = qd.inverse();
      int ns = 20000;
      Mat acc = Mat::Zero(n, n);
      std::vector<Vec> xs;
      for (int i = 0; i < ns; ++i) {
        xs.push_back(sample_gmrf(f, 77 + i));
        acc += xs.back() * xs.back().transpose();
      }
      acc /= ns;
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          // var(x_i x_j) = s_ii s_jj + s_ij^2 for a centred Gaussian
          double se = std::sqrt((sigma(i, i) * sigma(j, j) + sigma(i, j) * sigma(i, j)) / ns);
          REQUIRE(std::abs(acc(i, j) - sigma(i, j)) < 3.0 * se);
        }
      }
    }
  }
  SECTION("determinism") {
    auto f = factorize(random_spd(30, 0.1, 5));
    Vec a = sample_gmrf(f, 123);
    Vec b = sample_gmrf(f, 123);
    REQUIRE(a == b);
    REQUIRE(!(a == sample_gmrf(f, 124)));
  }
}

TEST_CASE("Kronecker sampler matches the kron precision", "[sparsela]") {
  Mat a = ar1_precision(3, 0.6).dense();
  auto b = random_spd(3, 0.9, 4);
  KronFactor kf(factorize(SparseSym::from_dense(a)), factorize(b));
  Mat sigma = dense::kron(a, b.dense()).inverse();
  int ns = 20000;
  Mat acc = Mat::Zero(9, 9);
  for (int i = 0; i < ns; ++i) {
    Vec x = kf.sample(500 + i);
    acc += x * x.transpose();
  }
  acc /= ns;
  for (int i = 0; i < 9; ++i) {
    for (int j = 0; j < 9; ++j) {
      double se = std::sqrt((sigma(i, i) * sigma(j, j) + sigma(i, j) * sigma(i, j)) / ns);
      REQUIRE(std::abs(acc(i, j) - sigma(i, j)) < 3.5 * se);
    }
  }
}

TEST_CASE("inverse diagonal by solves", "[sparsela]") {
  auto q = random_spd(40, 0.1, 11);
  auto f = factorize(q);
  Mat inv = q.dense().inverse();
  std::vector<int> idx{0, 7, 39};
  Vec d = inverse_diagonal(f, idx);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    REQUIRE(d[static_cast<Eigen::Index>(k)] == Approx(inv(idx[k], idx[k])).epsilon(1e-10));
  }
}
