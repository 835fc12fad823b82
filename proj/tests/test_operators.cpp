//
// ... Test header files
//
#include <catch_amalgamated.hpp>

//
// ... Standard header files
//
#include <cmath>
#include <complex>
#include <numbers>
#include <random>

//
// ... stdisagg header files
//
#include <stdisagg/operators.hpp>
#include <stdisagg/sparsela/cholesky.hpp>
#include <stdisagg/spectral_basis.hpp>

using namespace stdisagg;
using Catch::Approx;

TEST_CASE("single cell operator", "[operators]") {
  auto s = build_lattice(1, 1, 1, {0, 0.5, 0, 0.25}, 0);
  auto op = build_operator(s, 3.0);
  REQUIRE(op.K.n() == 1);
  REQUIRE(op.K.coeff(0, 0) == Approx(9.0 * 0.125));
  REQUIRE(operator_power(op, 2).coeff(0, 0) == Approx(81.0 * 0.125));
  REQUIRE_THROWS_AS(operator_power(op, 3), UnsupportedPower);
}

TEST_CASE("5-point stencil", "[operators]") {
  auto s = build_lattice(3, 3, 1, {0, 3, 0, 3}, 0);
  auto op = build_operator(s, 1.0);
  Mat g = op.G.dense();
  // centre node 4: neighbours 1,3,5,7
  REQUIRE(g(4, 4) == 4.0);
  for (int j : {1, 3, 5, 7}) { REQUIRE(g(4, j) == -1.0); }
  for (int j : {0, 2, 6, 8}) { REQUIRE(g(4, j) == 0.0); }
  // corner has two neighbours under reflection
  REQUIRE(g(0, 0) == 2.0);
}

TEST_CASE("anisotropic weights, row sums, symmetry", "[operators]") {
  auto s = build_lattice(5, 4, 1, {0, 1, 0, 2}, 1);
  auto op = build_operator(s, 2.0);
  Mat g = op.G.dense();
  REQUIRE(g(8, 9) == Approx(-s.dy / s.dx));
  REQUIRE(g(8, 8 + s.gx()) == Approx(-s.dx / s.dy));
  REQUIRE(g.rowwise().sum().cwiseAbs().maxCoeff() < 1e-14);
  REQUIRE(g == g.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(g);
  REQUIRE(es.eigenvalues().minCoeff() > -1e-12);
}

TEST_CASE("periodic spectrum equals the DFT of one row", "[operators]") {
  int n = 8;
  double h = 0.1;
  double gamma = 2.5;
  auto s = build_lattice(n, n, 1, {0, n * h, 0, n * h}, 0);
  auto op = build_operator_periodic(s, gamma);
  Mat k = op.K.dense() / (h * h);
  // node 0 row; circulant eigenvalue = sum_j c_j exp(-2 pi i (kx jx + ky jy)/n)
  for (int kx = 0; kx < n; ++kx) {
    for (int ky = 0; ky < n; ++ky) {
      std::complex<double> dft = 0.0;
      for (int j = 0; j < n * n; ++j) {
        double ang = -2.0 * std::numbers::pi * (kx * (j % n) + ky * (j / n)) / n;
        dft += k(0, j) * std::polar(1.0, ang);
      }
      double expect = gamma * gamma +
                      (2 - 2 * std::cos(2 * std::numbers::pi * kx / n)) / (h * h) +
                      (2 - 2 * std::cos(2 * std::numbers::pi * ky / n)) / (h * h);
      REQUIRE(std::abs(dft.real() - expect) < 1e-10);
      REQUIRE(std::abs(dft.imag()) < 1e-10);
    }
  }
  // periodic build is stationary: constant marginal variance of (K C^-1 K)^-1
  Mat cov = operator_power(op, 2).dense().inverse();
  REQUIRE(cov.diagonal().maxCoeff() - cov.diagonal().minCoeff() < 1e-8 * cov(0, 0));
}

TEST_CASE("squared operator against dense product", "[operators]") {
  auto s = build_lattice(4, 4, 1, {0, 1, 0, 1}, 0);
  auto op = build_operator(s, 7.0);
  Mat kd = op.K.dense();
  Mat cinv = op.C.dense().inverse();
  Mat expect = kd * cinv * kd;
  Mat got = operator_power(op, 2).dense();
  REQUIRE((got - expect).cwiseAbs().maxCoeff() <= 1e-12 * expect.cwiseAbs().maxCoeff());
  // 13-point stencil at an interior node
  auto s6 = build_lattice(6, 6, 1, {0, 1, 0, 1}, 0);
  auto counts = SparseSym(operator_power(build_operator(s6, 1.0), 2)).row_counts();
  REQUIRE(counts[2 * 6 + 2] == 13);
}

TEST_CASE("squared operator is SPD over a range of gamma", "[operators]") {
  std::mt19937 gen(1);
  std::uniform_real_distribution<double> u(0.5, 50.0);
  auto s = build_lattice(10, 8, 1, {0, 1, 0, 1}, 2);
  for (int r = 0; r < 10; ++r) {
    auto op = build_operator(s, u(gen));
    auto q = operator_power(op, 2);
    REQUIRE(q.dense() == q.dense().transpose());
    REQUIRE_NOTHROW(factorize(q));
  }
}

TEST_CASE("DCT basis diagonalises K", "[operators]") {
  auto s = build_lattice(5, 3, 1, {0, 1, 0, 0.9}, 1);
  double gamma = 4.0;
  auto op = build_operator(s, gamma);
  SpectralBasis b(s);
  Mat u(s.spatial_nodes(), s.spatial_nodes());
  for (int iy = 0; iy < s.gy(); ++iy) {
    for (int ix = 0; ix < s.gx(); ++ix) {
      Mat m = b.node_modes(ix, iy);
      u.row(iy * s.gx() + ix) = Eigen::Map<Eigen::RowVectorXd>(m.data(), m.size());
    }
  }
  Mat lam = b.k_eigenvalues(gamma);
  Mat rebuilt = u * Eigen::Map<Vec>(lam.data(), lam.size()).asDiagonal() * u.transpose();
  REQUIRE((rebuilt - op.K.dense()).cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE((u.transpose() * u - Mat::Identity(u.rows(), u.rows())).cwiseAbs().maxCoeff() < 1e-12);
  // forward/inverse round trip
  Mat f = Mat::Random(s.gx(), s.gy());
  REQUIRE((b.inverse(b.forward(f)) - f).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("Matern range from sampled fields", "[operators]") {
  // r_s = 0.2 at dx = 0.04; correlation at distance r_s should be near 0.139
  double rs = 0.2;
  double gamma = std::sqrt(8.0) / rs;
  auto s = build_lattice(25, 25, 1, {0, 1, 0, 1}, 5);
  auto q = operator_power(build_operator(s, gamma), 2);
  auto f = factorize(q);
  int c = s.gx() / 2;
  int lag = 5;
  int a = c * s.gx() + c;
  std::vector<std::pair<int, int>> pairs{{a, a + lag}, {a, a - lag}, {a, a + lag * s.gx()},
                                         {a, a - lag * s.gx()}};
  double sxy = 0, sxx = 0, syy = 0;
  for (int r = 0; r < 5000; ++r) {
    Vec x = sample_gmrf(f, 9000 + r);
    for (auto [i, j] : pairs) {
      sxy += x[i] * x[j];
      sxx += x[i] * x[i];
      syy += x[j] * x[j];
    }
  }
  double corr = sxy / std::sqrt(sxx * syy);
  REQUIRE(std::abs(corr - 0.139) < 0.02);
}
