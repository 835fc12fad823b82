//
// ... Test header files
//
#include <catch_amalgamated.hpp>

//
// ... Standard header files
//
#include <cmath>

//
// ... stdisagg header files
//
#include <stdisagg/baseline.hpp>
#include <stdisagg/sparsela/dense.hpp>

using namespace stdisagg;
using Catch::Approx;

TEST_CASE("Besag precision on small graphs", "[baseline]") {
  Adjacency path{3, {{0, 1}, {1, 2}}};
  Mat q = besag_precision(path).dense();
  Mat ref(3, 3);
  ref << 1, -1, 0, -1, 2, -1, 0, -1, 1;
  CHECK(q == ref);

  Mat q22 = besag_precision(rook_adjacency(2, 2)).dense();
  CHECK(q22.diagonal() == Vec::Constant(4, 2.0));
  CHECK(q22.rowwise().sum().cwiseAbs().maxCoeff() == 0.0);

  Mat q33 = besag_precision(rook_adjacency(3, 3)).dense();
  Eigen::SelfAdjointEigenSolver<Mat> es(q33);
  Vec ev = es.eigenvalues();
  CHECK(ev.minCoeff() > -1e-12);
  int zeros = 0;
  for (double e : ev) { zeros += std::abs(e) < 1e-10; }
  CHECK(zeros == 1);

  Adjacency split{4, {{0, 1}, {2, 3}}};
  CHECK_THROWS_AS(besag_precision(split), DisconnectedGraph);
}

TEST_CASE("pseudoinverse and jitter covariances", "[baseline]") {
  SparseSym q = besag_precision(rook_adjacency(3, 2));
  Mat pinv = besag_covariance(q, BesagMode::constraint, 0);
  Mat qd = q.dense();
  // Moore-Penrose conditions
  CHECK((qd * pinv * qd - qd).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((pinv * qd * pinv - pinv).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(pinv.rowwise().sum().cwiseAbs().maxCoeff() < 1e-10);
  Mat jit = besag_covariance(q, BesagMode::jitter, 1e-3);
  CHECK(((qd + 1e-3 * Mat::Identity(6, 6)) * jit - Mat::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("Kronecker ordering matches the time-major dense covariance", "[baseline]") {
  // labelled data: every entry distinct so any permutation error shows
  int nr = 6, nt = 4;
  Mat as = besag_covariance(besag_precision(rook_adjacency(3, 2)), BesagMode::jitter, 0.3);
  Mat at = detail::ar1_stationary_cov(nt, 0.6);
  double tau = 7.0;
  detail::KronData d;
  d.nr = nr;
  d.nw = nt;
  d.y.resize(nr * nt);
  for (int i = 0; i < nr * nt; ++i) { d.y[i] = std::sin(1.3 * i) + 0.1 * i; }
  d.x = Mat::Ones(nr * nt, 1);
  KronCore k;
  k.set(as, at, tau);
  auto g = detail::kron_gls(k, d, 1e-6);
  Mat sig = dense::kron(at, as) + d.x * d.x.transpose() / 1e-6;
  sig.diagonal().array() += 1.0 / tau;
  CHECK(g.loglik == Approx(dense::mvn_logpdf(d.y, sig)).margin(1e-6));
  // the transposed ordering gives a different value
  Mat wrong = dense::kron(as, at) + d.x * d.x.transpose() / 1e-6;
  wrong.diagonal().array() += 1.0 / tau;
  CHECK(std::abs(g.loglik - dense::mvn_logpdf(d.y, wrong)) > 1e-3);
}

namespace {

  // Besag x AR(1) data with the given rho, on an nx x ny region grid.
  Vec areal_data(int nx, int ny, int nt, double rho, double tau_s, double tau_e,
                 std::uint64_t seed) {
    Mat as = besag_covariance(besag_precision(rook_adjacency(nx, ny)), BesagMode::constraint, 0) / tau_s;
    Eigen::SelfAdjointEigenSolver<Mat> es(as);
    Mat half = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    Rng rng(seed);
    int nr = nx * ny;
    Vec y(nr * nt);
    Vec z = half * standard_normal_vector(rng, nr) / std::sqrt(1 - rho * rho);
    for (int t = 0; t < nt; ++t) {
      if (t > 0) { z = rho * z + half * standard_normal_vector(rng, nr); }
      y.segment(t * nr, nr) = z + standard_normal_vector(rng, nr) / std::sqrt(tau_e) +
                              Vec::Constant(nr, 0.3);
    }
    return y;
  }

} // namespace

TEST_CASE("rho = 0 data: CI for rho contains 0", "[baseline]") {
  int hits = 0;
  for (int r = 0; r < 20; ++r) {
    Vec y = areal_data(5, 5, 8, 0.0, 2.0, 25.0, derive_seed(5, r));
    ArealFit af = fit_areal(y, Mat::Ones(y.size(), 1), rook_adjacency(5, 5), 8);
    CHECK(std::abs(af.rho_hat) < 1.0);
    CHECK(af.tau_s_hat > 0.0);
    CHECK(af.tau_eps_hat > 0.0);
    hits += af.rho_ci.lo <= 0.0 && 0.0 <= af.rho_ci.hi;
  }
  CHECK(hits >= 18);
}

TEST_CASE("strong rho is recovered", "[baseline]") {
  Vec y = areal_data(6, 6, 12, 0.8, 1.0, 50.0, 99);
  ArealFit af = fit_areal(y, Mat::Ones(y.size(), 1), rook_adjacency(6, 6), 12);
  CHECK(af.rho_ci.lo < 0.8);
  CHECK(af.rho_ci.hi > 0.8);
  CHECK(af.beta_mean[0] == Approx(0.3).margin(0.3));
}

TEST_CASE("sum-to-zero of the Besag component per time", "[baseline]") {
  Vec y = areal_data(4, 3, 5, 0.5, 1.0, 20.0, 3);
  ArealFit af = fit_areal(y, Mat::Ones(y.size(), 1), rook_adjacency(4, 3), 5);
  for (int t = 0; t < 5; ++t) { CHECK(std::abs(af.besag_mean.segment(t * 12, 12).mean()) < 1e-8); }
  ArealOptions j;
  j.mode = BesagMode::jitter;
  ArealFit aj = fit_areal(y, Mat::Ones(y.size(), 1), rook_adjacency(4, 3), 5, j);
  CHECK(std::isfinite(aj.loglik));
}

TEST_CASE("duplication is piecewise constant", "[baseline]") {
  LatticeSpec s = build_lattice(8, 8, 4, Extents{}, 2);
  Projection p = build_projection(s, {2, 2});
  ModelSpec m;
  m.kind = ModelKind::Separable102;
  m.sigma2 = 0.25;
  m.range_t = 3;
  Field w = simulate_field(m, s, {0.1}, Mat(), 4);
  Vec y = aggregate_observe(w, p, 44.0, 5);
  ObsModel o = make_obs_model(y, p, m);
  ArealFit af = fit_areal(o);
  Field const& f = af.fine.mean;
  auto const& fs = f.spec;
  for (int t = 0; t < fs.nt; t += 2) {
    for (int iy = 0; iy < fs.ny; iy += 2) {
      for (int ix = 0; ix < fs.nx; ix += 2) {
        double v = f.values[fs.interior_index(ix, iy, t)];
        double var = 0.0;
        for (int dt = 0; dt < 2; ++dt) {
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              double u = f.values[fs.interior_index(ix + dx, iy + dy, t + dt)] - v;
              var += u * u;
            }
          }
        }
        CHECK(var == 0.0);
      }
    }
  }
  CHECK(af.fine.mean.values.size() == s.interior_nodes());
}

TEST_CASE("areal input errors", "[baseline]") {
  Vec y = Vec::LinSpaced(10, 0, 1);
  CHECK_THROWS_AS(fit_areal(y, Mat::Ones(10, 1), rook_adjacency(2, 2), 3), DimensionMismatch);
  Vec c = Vec::Constant(12, 1.0);
  CHECK_THROWS_AS(fit_areal(c, Mat::Ones(12, 1), rook_adjacency(2, 2), 3), DegenerateData);
}
