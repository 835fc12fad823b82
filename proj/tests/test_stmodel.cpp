//
// ... Test header files
//
#include <catch_amalgamated.hpp>

//
// ... Standard header files
//
#include <cmath>
#include <numbers>

//
// ... stdisagg header files
//
#include <stdisagg/sparsela/dense.hpp>
#include <stdisagg/stmodel.hpp>

using namespace stdisagg;
using Catch::Approx;

namespace {

  ModelSpec model(ModelKind k, double rt, double sigma2 = 0.25,
                  TemporalScheme sch = TemporalScheme::exact) {
    ModelSpec m;
    m.kind = k;
    m.sigma2 = sigma2;
    m.range_s = 0.2;
    m.range_t = rt;
    m.scheme = sch;
    return m;
  }

  // Full covariance from the modal form, written out node by node.
  Mat modal_cov(ModalModel const& mm, LatticeSpec const& s) {
    int n = s.nodes();
    Mat c(n, n);
    for (int a = 0; a < n; ++a) {
      int ax, ay, at;
      s.unravel(a, ax, ay, at);
      for (int b = 0; b < n; ++b) {
        int bx, by, bt;
        s.unravel(b, bx, by, bt);
        c(a, b) = mm.covariance(ax, ay, bx, by, std::abs(at - bt));
      }
    }
    return c;
  }

  // Marginal variance by brute-force quadrature of the spectral density
  // S = 1/((2pi)^3 ge^2 m^ae (gt^2 w^2 + m^as)), m = gs^2 + |k|^2.
  double variance_by_quadrature(ModelSpec const& m, ScaleParams const& p) {
    auto a = m.alpha();
    auto dens = [&](double k, double w) {
      double mm = p.gamma_s * p.gamma_s + k * k;
      return 1.0 / (std::pow(2 * std::numbers::pi, 3) * p.gamma_e * p.gamma_e *
                    std::pow(mm, a.e) * (p.gamma_t * p.gamma_t * w * w + std::pow(mm, a.s)));
    };
    // k = gs * tan(u), w = tan(v) * scale; midpoint rule in (u, v)
    int n = 1500;
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      double u = (i + 0.5) / n * std::numbers::pi / 2;
      double k = p.gamma_s * std::tan(u);
      double dk = p.gamma_s / (std::cos(u) * std::cos(u)) * (std::numbers::pi / 2 / n);
      double mm = p.gamma_s * p.gamma_s + k * k;
      double ws = std::sqrt(std::pow(mm, a.s)) / p.gamma_t;
      for (int j = 0; j < n; ++j) {
        double v = (j + 0.5) / n * std::numbers::pi / 2;
        double w = ws * std::tan(v);
        double dw = ws / (std::cos(v) * std::cos(v)) * (std::numbers::pi / 2 / n);
        total += 2.0 * dens(k, w) * dw * 2 * std::numbers::pi * k * dk;
      }
    }
    return total;
  }

} // namespace

TEST_CASE("scale parameters", "[stmodel]") {
  auto sep = model(ModelKind::Separable102, 1.0);
  auto p = to_scale_params(sep);
  REQUIRE(p.gamma_s == Approx(14.14214).epsilon(1e-6));
  REQUIRE(p.gamma_t == Approx(0.5).epsilon(1e-12));

  auto ns = model(ModelKind::NonSeparable121, 2.0);
  ns.range_s = std::sqrt(8.0 / 200.0);
  auto q = to_scale_params(ns);
  REQUIRE(q.gamma_s * q.gamma_s == Approx(200.0).epsilon(1e-12));
  REQUIRE(q.gamma_t == Approx(200.0).epsilon(1e-12));

  for (auto const& m : {sep, ns, model(ModelKind::NonSeparable121, 6.0, 0.7)}) {
    auto s = to_scale_params(m);
    REQUIRE(variance_by_quadrature(m, s) == Approx(m.sigma2).epsilon(2e-3));
  }
}

TEST_CASE("nonseparability parameter", "[stmodel]") {
  REQUIRE(nonseparability_beta(model(ModelKind::Separable102, 1)) == 0.0);
  REQUIRE(nonseparability_beta(model(ModelKind::NonSeparable121, 1)) == 0.5);
  REQUIRE(nonseparability_beta(0) == 1.0);
}

TEST_CASE("separable precision is the Kronecker product", "[stmodel]") {
  auto s = build_lattice(4, 4, 3, {}, 0);
  auto m = model(ModelKind::Separable102, 3.0);
  auto q = build_precision(m, s);
  auto f = separable_factors(m, s);
  REQUIRE(q.dense() == dense::kron(f.qt.dense(), f.qs.dense()));
  // Q_t is the exact OU precision: its inverse has rho^|i-j|
  Mat ct = f.qt.dense().inverse();
  double rho = std::exp(-1.0 / 3.0);
  REQUIRE(ct(0, 2) == Approx(rho * rho).epsilon(1e-12));
  REQUIRE(ct(1, 1) == Approx(1.0).epsilon(1e-12));
}

TEST_CASE("sparse builds agree with the modal form", "[stmodel]") {
  auto s = build_lattice(4, 3, 3, {0, 0.8, 0, 0.6}, 1);
  SpectralBasis b(s);
  for (auto m : {model(ModelKind::Separable102, 3.0),
                 model(ModelKind::NonSeparable121, 6.0, 0.25, TemporalScheme::implicit_euler)}) {
    Mat cov = build_precision(m, s).dense().inverse();
    auto mm = build_modal(m, s, b);
    Mat mc = modal_cov(mm, s);
    REQUIRE((cov - mc).cwiseAbs().maxCoeff() < 1e-9 * cov.cwiseAbs().maxCoeff());
  }
  REQUIRE_THROWS_AS(build_precision(model(ModelKind::NonSeparable121, 2.0), s), ValidationError);
}

TEST_CASE("variance normalisation", "[stmodel]") {
  auto s = build_lattice(10, 10, 5, {}, 2);
  for (double rt : {1.0, 3.0, 12.0}) {
    auto m = model(ModelKind::Separable102, rt);
    auto f = factorize(build_precision(m, s));
    REQUIRE(inverse_diagonal(f, {s.mid_node()})[0] == Approx(0.25).epsilon(0.01));
  }
  for (double rt : {2.0, 6.0, 24.0}) {
    auto m = model(ModelKind::NonSeparable121, rt, 0.25, TemporalScheme::implicit_euler);
    auto q = build_precision(m, s);
    auto f = factorize(q);
    REQUIRE(inverse_diagonal(f, {s.mid_node()})[0] == Approx(0.25).epsilon(0.01));
    // stationary in time: first and last slice share the mid variance
    int g = s.spatial_nodes();
    int mid0 = s.mid_node() - (s.nt / 2) * g;
    REQUIRE(inverse_diagonal(f, {mid0})[0] == Approx(0.25).epsilon(1e-8));
    REQUIRE(inverse_diagonal(f, {mid0 + (s.nt - 1) * g})[0] == Approx(0.25).epsilon(1e-8));
    SpectralBasis b(s);
    auto mm = build_modal(model(ModelKind::NonSeparable121, rt), s, b);
    int c = s.gx() / 2;
    REQUIRE(mm.covariance(c, c, c, c, 0) == Approx(0.25).epsilon(1e-12));
  }
}

TEST_CASE("precision sparsity", "[stmodel]") {
  auto s = build_lattice(8, 8, 4, {}, 1);
  auto sep = build_precision(model(ModelKind::Separable102, 3.0), s).row_counts();
  REQUIRE(*std::max_element(sep.begin(), sep.end()) <= 39);
  auto ie = build_precision(model(ModelKind::NonSeparable121, 6.0, 0.25,
                                  TemporalScheme::implicit_euler), s).row_counts();
  REQUIRE(*std::max_element(ie.begin(), ie.end()) <= 51);
}

TEST_CASE("spectral oracle", "[stmodel]") {
  auto sep = model(ModelKind::Separable102, 3.0);
  REQUIRE(spectral_oracle(sep, 0, 0) == Approx(1.0).epsilon(1e-12));
  double prod = spectral_oracle(sep, 0.1, 0) * spectral_oracle(sep, 0, 2);
  REQUIRE(std::abs(spectral_oracle(sep, 0.1, 2) - prod) < 1e-6);
  // Matern nu=1 at distance r_s: sqrt(8) K_1(sqrt(8)) = 0.1399
  REQUIRE(spectral_oracle(sep, 0.2, 0) == Approx(0.1399).epsilon(0.01));
  REQUIRE(spectral_oracle(sep, 0, 1) == Approx(std::exp(-1.0 / 3.0)).epsilon(1e-12));

  // (1,2,1) with r_t doubled decays faster than the separable model at r_t;
  // its spatially constant mode decays exactly like it.
  for (double r : {1.0, 3.0, 12.0}) {
    auto s1 = model(ModelKind::Separable102, r);
    auto n2 = model(ModelKind::NonSeparable121, 2 * r);
    for (double h : {0.5, 1.0, 2.0}) {
      REQUIRE(spectral_oracle(n2, 0, h) < spectral_oracle(s1, 0, h));
    }
    auto p = to_scale_params(n2);
    REQUIRE(std::exp(-p.gamma_s * p.gamma_s / p.gamma_t) == Approx(std::exp(-1.0 / r)).epsilon(1e-12));
  }
  auto ns = model(ModelKind::NonSeparable121, 6.0);
  double viol = spectral_oracle(ns, 0.1, 3.0) -
                spectral_oracle(ns, 0.1, 0) * spectral_oracle(ns, 0, 3.0);
  REQUIRE(std::abs(viol) > 0.01);
  REQUIRE_THROWS_AS(spectral_oracle(ns, 3.0, 0), TorusTooSmall);
}

TEST_CASE("simulate_field", "[stmodel]") {
  auto s = build_lattice(12, 12, 6, {}, 3);
  SECTION("degenerate variance") {
    auto m = model(ModelKind::Separable102, 3.0, 1e-8);
    auto w = simulate_field(m, s, {0.1}, Mat(), 3);
    REQUIRE((w.values.array() - 0.1).abs().maxCoeff() < 1e-3);
  }
  SECTION("determinism and covariates") {
    auto m = model(ModelKind::NonSeparable121, 6.0);
    Mat x = Mat::Constant(s.nodes(), 1, 2.0);
    auto a = simulate_field(m, s, {0.1, -0.5}, x, 5);
    auto b = simulate_field(m, s, {0.1, -0.5}, x, 5);
    REQUIRE(a.values == b.values);
    auto c = simulate_field(m, s, {0.1, 0.0}, x, 5);
    REQUIRE((a.values - c.values).cwiseAbs().maxCoeff() == Approx(1.0));
    REQUIRE_THROWS_AS(simulate_field(m, s, {0.1}, x, 5), DimensionMismatch);
  }
  SECTION("marginal variance 0.25 over nodes and replicates") {
    auto lat = build_lattice(24, 24, 6, {}, 5);
    for (auto k : {ModelKind::Separable102, ModelKind::NonSeparable121}) {
      auto m = model(k, k == ModelKind::Separable102 ? 12.0 : 24.0, 0.25);
      LatentSampler smp(m, lat);
      double ss = 0;
      long cnt = 0;
      auto idx = lat.interior_indices();
      for (int r = 0; r < 40; ++r) {
        Vec z = smp.sample(100 + r);
        for (int i : idx) { ss += z[i] * z[i]; ++cnt; }
      }
      REQUIRE(std::abs(ss / cnt - 0.25) < 0.03);
    }
  }
}
