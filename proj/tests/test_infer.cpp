//
// ... Test header files
//
#include <catch_amalgamated.hpp>

//
// ... Standard header files
//
#include <cmath>
#include <numbers>
#include <vector>

//
// ... stdisagg header files
//
#include <stdisagg/infer/engines.hpp>
#include <stdisagg/operators.hpp>
#include <stdisagg/sparsela/dense.hpp>

#include "support/dense_oracle.hpp"

using namespace stdisagg;
using Catch::Approx;
using namespace stdisagg::oracle;

namespace {

  void check_engine(Engine& e, ObsModel const& o, Hyper const& h, double tol) {
    Oracle r = dense_oracle(o, h);
    INFO(e.name());
    CHECK(e.loglik(h) == Approx(r.loglik).margin(tol));
    LatentPosterior post = e.posterior(h);
    for (Eigen::Index i = 0; i < r.beta.size(); ++i) {
      CHECK(post.beta_mean[i] == Approx(r.beta[i]).margin(1e-6));
    }
    CHECK((post.mean - r.mean).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((post.var - r.var).cwiseAbs().maxCoeff() < 1e-6);
  }

} // namespace

TEST_CASE("conjugate special case: identity projection, white latent", "[infer]") {
  int n = 7;
  double tau = 3.0, tau_e = 5.0;
  Vec y(n);
  y << 0.3, -1.2, 0.8, 2.0, -0.4, 0.1, 1.5;
  SparseSym q = SparseSym::identity(n, tau);
  CscMat a(n, n);
  a.setIdentity();
  auto sp = sparse_posterior(q, Mat(n, 0), a, y, tau_e, 1e-6);
  double var = 1.0 / tau + 1.0 / tau_e;
  double ref = 0.0;
  for (int i = 0; i < n; ++i) {
    ref += -0.5 * std::log(2 * std::numbers::pi * var) - 0.5 * y[i] * y[i] / var;
  }
  CHECK(sp.loglik == Approx(ref).epsilon(0).margin(1e-10));
  // posterior mean shrinks each cell by tau_e / (tau + tau_e)
  CHECK(sp.mu[3] == Approx(y[3] * tau_e / (tau + tau_e)).margin(1e-12));
}

TEST_CASE("4x4x3 lattice, s_f=2, t_f=1: dense oracle", "[infer]") {
  LatticeSpec s = build_lattice(4, 4, 3, Extents{}, 1);
  for (auto k : {ModelKind::Separable102, ModelKind::NonSeparable121}) {
    ObsModel o = synthetic(spec_of(k), s, {2, 1}, 1, 11);
    Hyper h = Hyper::of(o.model);
    DenseModalEngine d(o);
    check_engine(d, o, h, 1e-6);
    if (k == ModelKind::Separable102) {
      KronEngine kr(o);
      check_engine(kr, o, h, 1e-6);
      SparseEngine sp(o);
      check_engine(sp, o, h, 1e-6);
    }
  }
  ObsModel o = synthetic(spec_of(ModelKind::NonSeparable121, TemporalScheme::implicit_euler),
                         s, {2, 1}, 1, 12);
  Hyper h = Hyper::of(o.model);
  SparseEngine sp(o);
  check_engine(sp, o, h, 1e-6);
  DenseModalEngine d(o);
  check_engine(d, o, h, 1e-6);
}

TEST_CASE("dense oracle over a grid of small lattices", "[infer]") {
  struct Case {
    int nx, ny, nt, buf, sf, tf, ncov;
  };
  std::vector<Case> cases{{2, 2, 2, 1, 1, 1, 0}, {4, 2, 4, 1, 2, 2, 1}, {2, 4, 3, 2, 2, 1, 0},
                          {6, 6, 2, 0, 3, 2, 2}, {4, 4, 4, 0, 2, 4, 1}, {3, 3, 5, 1, 3, 1, 0},
                          {6, 4, 3, 1, 2, 3, 1}, {4, 6, 2, 1, 1, 2, 0}, {2, 2, 6, 1, 2, 3, 1},
                          {5, 5, 2, 1, 5, 1, 1}, {4, 4, 3, 1, 4, 3, 0}, {6, 6, 4, 0, 2, 2, 1}};
  std::uint64_t seed = 100;
  for (auto const& c : cases) {
    LatticeSpec s = build_lattice(c.nx, c.ny, c.nt, Extents{0, 1.2, 0, 0.9, 0, 1}, c.buf);
    REQUIRE(s.nodes() <= 200);
    for (auto sch : {TemporalScheme::exact, TemporalScheme::implicit_euler}) {
      for (auto k : {ModelKind::Separable102, ModelKind::NonSeparable121}) {
        if (k == ModelKind::Separable102 && sch == TemporalScheme::implicit_euler) { continue; }
        ObsModel o = synthetic(spec_of(k, sch), s, {c.sf, c.tf}, c.ncov, ++seed);
        Hyper h = Hyper::of(o.model);
        double ref = dense_oracle(o, h).loglik;
        CAPTURE(c.nx, c.ny, c.nt, c.sf, c.tf, to_string(k));
        CHECK(make_engine(o)->loglik(h) == Approx(ref).margin(1e-6));
        if (k == ModelKind::Separable102 || sch == TemporalScheme::implicit_euler) {
          CHECK(log_marginal_likelihood(o, h) == Approx(ref).margin(1e-6));
        }
      }
    }
  }
}

TEST_CASE("missing cells: dense engine on a row subset", "[infer]") {
  LatticeSpec s = build_lattice(4, 4, 4, Extents{}, 1);
  ObsModel full = synthetic(spec_of(ModelKind::Separable102), s, {2, 2}, 1, 7);
  full.y[1] = std::nan("");
  full.y[6] = std::nan("");
  ObsModel o = drop_missing(full);
  REQUIRE(o.n_obs() == full.n_obs() - 2);
  REQUIRE_FALSE(o.P.complete());
  Hyper h = Hyper::of(o.model);
  DenseModalEngine d(o);
  check_engine(d, o, h, 1e-6);
  SparseEngine sp(o);
  check_engine(sp, o, h, 1e-6);
  CHECK(make_engine(o)->name() == "dense-modal");
}

TEST_CASE("general partition uses unequal weights", "[infer]") {
  LatticeSpec s = build_lattice(5, 4, 5, Extents{}, 1);
  Projection p = build_projection_general(s, {0, 0.4, 1.0}, {0, 0.5, 1.0}, {0, 2, 5});
  Rng rng(3);
  Vec y = standard_normal_vector(rng, p.rows());
  for (auto k : {ModelKind::Separable102, ModelKind::NonSeparable121}) {
    ObsModel o = make_obs_model(y, p, spec_of(k));
    Hyper h = Hyper::of(o.model);
    auto e = make_engine(o);
    check_engine(*e, o, h, 1e-6);
  }
}

TEST_CASE("engine errors", "[infer]") {
  LatticeSpec s = build_lattice(4, 4, 2, Extents{}, 1);
  ObsModel o = synthetic(spec_of(ModelKind::NonSeparable121), s, {2, 1}, 0, 1);
  CHECK_THROWS_AS(SparseEngine(o), ValidationError);
  CHECK_THROWS_AS(KronEngine(o), ValidationError);
  CHECK_THROWS_AS(parse_engine("nope"), ValidationError);
  ObsModel bad = o;
  bad.y.conservativeResize(bad.y.size() - 1);
  CHECK_THROWS_AS(DenseModalEngine(bad), DimensionMismatch);
}
