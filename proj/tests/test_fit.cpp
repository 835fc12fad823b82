//
// ... Test header files
//
#include <catch_amalgamated.hpp>

//
// ... Standard header files
//
#include <cmath>
#include <vector>

//
// ... stdisagg header files
//
#include <stdisagg/infer.hpp>

using namespace stdisagg;
using Catch::Approx;

namespace {

  ModelSpec sep_model(double rt) {
    ModelSpec m;
    m.kind = ModelKind::Separable102;
    m.sigma2 = 0.25;
    m.range_s = 0.2;
    m.range_t = rt;
    m.tau_eps = 1.0 / (0.15 * 0.15);
    return m;
  }

  ObsModel simulated(ModelSpec const& m, LatticeSpec const& s, AggScheme sc,
                     std::uint64_t seed, double beta0 = 0.0) {
    Field w = simulate_field(m, s, {beta0}, Mat(), derive_seed(seed, 1));
    Projection p = build_projection(s, sc);
    Vec y = aggregate_observe(w, p, m.tau_eps, derive_seed(seed, 2));
    return make_obs_model(y, p, m);
  }

} // namespace

TEST_CASE("Nelder-Mead and finite-difference Hessian on a quadratic", "[fit]") {
  Eigen::Matrix2d a;
  a << 3.0, 1.0, 1.0, 2.0;
  Eigen::Vector2d c(0.7, -1.3);
  auto f = [&](Eigen::VectorXd const& x) {
    Eigen::Vector2d d = x - c;
    return 0.5 * d.dot(a * d) + 4.0;
  };
  NelderMeadOptions o;
  o.ftol = 1e-12;
  o.xtol = 1e-7;
  auto r = nelder_mead(f, Eigen::Vector2d(3.0, 3.0), o);
  CHECK(r.converged);
  CHECK((r.x - c).norm() < 1e-5);
  Eigen::MatrixXd h = fd_hessian(f, c, 0.02, f(c));
  CHECK((h - Eigen::MatrixXd(a)).cwiseAbs().maxCoeff() < 1e-8);

  NelderMeadOptions capped;
  capped.max_iter = 3;
  auto rc = nelder_mead(f, Eigen::Vector2d(3.0, 3.0), capped);
  CHECK_FALSE(rc.converged);
  CHECK(std::isfinite(rc.f));
}

TEST_CASE("no aggregation, no noise: latent mean reproduces y", "[fit]") {
  LatticeSpec s = build_lattice(6, 6, 4, Extents{}, 2);
  ModelSpec m = sep_model(3.0);
  ObsModel o = simulated(m, s, {1, 1}, 5);
  Hyper h = Hyper::of(m);
  h.tau_eps = 1e10;
  for (auto c : {EngineChoice::kronecker, EngineChoice::dense, EngineChoice::sparse}) {
    LatentPosterior post = make_engine(o, c)->posterior(h);
    // interior order equals the row order of the identity projection
    CHECK((post.mean - o.y).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("posterior sd decreases when tau_eps increases", "[fit]") {
  LatticeSpec s = build_lattice(8, 8, 4, Extents{}, 2);
  ObsModel o = simulated(sep_model(3.0), s, {2, 2}, 9);
  auto eng = make_engine(o);
  Hyper h = Hyper::of(o.model);
  Vec v1 = eng->posterior(h).var;
  h.tau_eps *= 4.0;
  Vec v2 = eng->posterior(h).var;
  CHECK((v2.array() < v1.array()).all());
}

TEST_CASE("scale equivariance at transformed hyperparameters", "[fit]") {
  LatticeSpec s = build_lattice(8, 8, 4, Extents{}, 2);
  ObsModel o = simulated(sep_model(3.0), s, {2, 1}, 13, 0.4);
  double a = 3.0, b = -2.0;
  ObsModel o2 = o;
  o2.y = a * o.y.array() + b;
  Hyper h = Hyper::of(o.model);
  Hyper h2 = h;
  h2.sigma2 *= a * a;
  h2.tau_eps /= a * a;
  for (auto c : {EngineChoice::kronecker, EngineChoice::dense}) {
    auto p1 = make_engine(o, c)->posterior(h);
    auto p2 = make_engine(o2, c)->posterior(h2);
    CHECK(p2.beta_mean[0] == Approx(a * p1.beta_mean[0] + b).margin(1e-6));
    CHECK(((p2.mean.array() - b) / a - p1.mean.array()).abs().maxCoeff() < 1e-6);
    CHECK((p2.var.array().sqrt() / a - p1.var.array().sqrt()).abs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("intercept-only model on pure noise", "[fit]") {
  LatticeSpec s = build_lattice(8, 8, 8, Extents{}, 1);
  Projection p = build_projection(s, {2, 2});
  Rng rng(21);
  Vec y = standard_normal_vector(rng, p.rows()).array() * 0.5 + 1.7;
  ObsModel o = make_obs_model(y, p, sep_model(2.0));
  FitResult fr = fit(o);
  double se = std::sqrt(detail::sample_var(y) / y.size());
  CHECK(std::abs(fr.beta_mean[0] - y.mean()) < 2.0 * se);
  CHECK(std::isfinite(fr.loglik));
}

TEST_CASE("fit on simulated separable data", "[fit]") {
  LatticeSpec s = build_lattice(16, 16, 12, Extents{0, 1, 0, 1, 0, 1}, default_buffer(0.2, 1.0 / 16));
  ModelSpec m = sep_model(6.0);
  ObsModel o = simulated(m, s, {2, 2}, 31, 0.5);
  FitResult fr = fit(o);
  CHECK(fr.converged);
  CHECK(fr.engine == "kronecker");
  for (auto const& p : fr.theta_ci) {
    CHECK(p.lo < p.median);
    CHECK(p.median < p.hi);
  }
  CHECK((fr.latent_sd().values.array() >= 0.0).all());
  CHECK(fr.latent_mean().values.size() == 16 * 16 * 12);
  // posterior consistency: cell means of the prediction track y
  Field full = embed(fr.latent_mean(), s.buffer);
  Vec resid = (o.P.A * full.values - o.y).cwiseAbs();
  CHECK(resid.mean() <= 2.0 / std::sqrt(fr.hyper.tau_eps));
  // the dense engine reaches the same mode
  FitOptions d;
  d.engine = EngineChoice::dense;
  FitResult fd = fit(o, d);
  CHECK(fd.loglik == Approx(fr.loglik).margin(1e-3));
}

TEST_CASE("likelihood prefers the true spatial range", "[fit]") {
  LatticeSpec s = build_lattice(24, 24, 24, Extents{}, default_buffer(0.2, 1.0 / 24));
  ModelSpec m = sep_model(3.0);
  int wins = 0;
  for (int r = 0; r < 50; ++r) {
    ObsModel o = simulated(m, s, {2, 2}, derive_seed(77, r));
    KronEngine e(o);
    Hyper h = Hyper::of(m);
    Hyper h2 = h;
    h2.range_s *= 2.0;
    wins += e.loglik(h) >= e.loglik(h2);
  }
  CHECK(wins >= 45);
}

TEST_CASE("log sigma2 recovered within its CI with near-noiseless data", "[fit]") {
  LatticeSpec s = build_lattice(12, 12, 8, Extents{}, 3);
  ModelSpec m = sep_model(3.0);
  m.tau_eps = 1e6;
  int hits = 0;
  for (int r = 0; r < 20; ++r) {
    ObsModel o = simulated(m, s, {2, 2}, derive_seed(91, r));
    FitResult fr = fit(o);
    auto const& c = fr.theta_ci[0];
    hits += c.lo <= m.sigma2 && m.sigma2 <= c.hi;
  }
  CHECK(hits >= 18);
}

TEST_CASE("exceedance probabilities", "[fit]") {
  LatticeSpec s = build_lattice(8, 8, 4, Extents{}, 2);
  ObsModel o = simulated(sep_model(3.0), s, {2, 2}, 17, 2.0);
  FitResult fr = fit(o);
  Prediction const& p = fr.pred;
  int n = static_cast<int>(p.mean.values.size());
  // c far below every node
  double low = (p.mean.values - 10.0 * p.sd.values).minCoeff();
  CHECK((exceedance(p, low).values.array() > 1.0 - 1e-6).all());
  // c at the mean of one node
  Field e = exceedance(p, p.mean.values[n / 2]);
  CHECK(e.values[n / 2] == Approx(0.5).margin(1e-12));
  Vec a = exceedance(p, 1.5).values, b = exceedance(p, 2.0).values, c = exceedance(p, 2.5).values;
  CHECK((a.array() >= b.array()).all());
  CHECK((b.array() >= c.array()).all());
  CHECK((c.array() >= 0.0).all());
  CHECK((a.array() <= 1.0).all());
}

TEST_CASE("integration over the leading hyperparameter direction", "[fit]") {
  LatticeSpec s = build_lattice(8, 8, 4, Extents{}, 2);
  ObsModel o = simulated(sep_model(3.0), s, {2, 2}, 23, 1.0);
  FitOptions opt;
  opt.integrate = true;
  FitResult fr = fit(o, opt);
  Prediction plain = predict_fine(o, fr, false);
  REQUIRE(fr.pred.weights.size() == 5);
  double wsum = 0.0;
  for (double w : fr.pred.weights) { wsum += w; }
  CHECK(wsum == Approx(1.0));
  CHECK((fr.pred.lo.values.array() < fr.pred.mean.values.array()).all());
  CHECK((fr.pred.hi.values.array() > fr.pred.mean.values.array()).all());
  // mixture variance is at least the smallest component variance
  Vec smin = fr.pred.comp_sd[0];
  for (auto const& c : fr.pred.comp_sd) { smin = smin.cwiseMin(c); }
  CHECK((fr.pred.sd.values.array() >= smin.array() * (1.0 - 1e-12)).all());
  CHECK(plain.weights.size() == 1);
  Vec e1 = exceedance(fr, 1.0).values, e2 = exceedance(fr, 1.5).values;
  CHECK((e1.array() >= e2.array()).all());
}

TEST_CASE("fit errors", "[fit]") {
  LatticeSpec s = build_lattice(4, 4, 2, Extents{}, 1);
  Projection p = build_projection(s, {2, 1});
  ObsModel o = make_obs_model(Vec::Constant(p.rows(), 2.0), p, sep_model(2.0));
  CHECK_THROWS_AS(fit(o), DegenerateData);
  ObsModel one = drop_missing(o);
  one.y[0] = 1.0;
  std::vector<int> keep{0};
  one.P = o.P.subset(keep);
  one.y = Vec::Constant(1, 1.0);
  one.X_agg = Mat::Ones(1, 1);
  CHECK_THROWS_AS(fit(one), DegenerateData);
}
