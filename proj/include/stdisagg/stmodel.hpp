#pragma once

//
// ... Standard header files
//
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

//
// ... stdisagg header files
//
#include <stdisagg/errors.hpp>
#include <stdisagg/lattice.hpp>
#include <stdisagg/operators.hpp>
#include <stdisagg/random.hpp>
#include <stdisagg/sparsela/cholesky.hpp>
#include <stdisagg/sparsela/kron_factor.hpp>
#include <stdisagg/sparsela/sparse_sym.hpp>
#include <stdisagg/spectral_basis.hpp>

namespace stdisagg {

  enum class ModelKind { Separable102, NonSeparable121 };

  // exact: per-mode OU transition exp(-dt L/gamma_t) (dense in space);
  // implicit_euler: sparse block-bidiagonal discretisation.
  enum class TemporalScheme { exact, implicit_euler };

  // exponential: Corr(h) = exp(-h/r_t); matern: exp(-2h/r_t) (sqrt(8 nu_t) = 2).
  enum class RangeConvention { exponential, matern };

  struct Alpha {
    int t, s, e;
  };

  struct ModelSpec {
    ModelKind kind = ModelKind::Separable102;
    double sigma2 = 1.0;
    double range_s = 0.2;
    double range_t = 1.0;
    double tau_eps = 1.0 / (0.15 * 0.15);
    TemporalScheme scheme = TemporalScheme::exact;
    RangeConvention convention = RangeConvention::exponential;

    Alpha alpha() const {
      return kind == ModelKind::Separable102 ? Alpha{1, 0, 2} : Alpha{1, 2, 1};
    }

    void validate() const {
      if (!(sigma2 > 0.0) || !(range_s > 0.0) || !(range_t > 0.0) ||
          !(tau_eps > 0.0)) {
        throw ValidationError("model parameters must be positive");
      }
    }
  };

  inline std::string to_string(ModelKind k) {
    return k == ModelKind::Separable102 ? "separable" : "nonseparable";
  }

  inline ModelKind parse_kind(std::string const& s) {
    if (s == "separable" || s == "Separable102" || s == "sep") {
      return ModelKind::Separable102;
    }
    if (s == "nonseparable" || s == "NonSeparable121" || s == "nonsep") {
      return ModelKind::NonSeparable121;
    }
    throw ValidationError("unknown model kind '" + s + "'");
  }

  struct ScaleParams {
    double gamma_s;
    double gamma_t;
    double gamma_e;
  };

  inline constexpr double nu_s = 1.0;

  // gamma_s = sqrt(8 nu_s)/r_s; r_t = gamma_t gamma_s^{-alpha_s} sqrt(8(alpha_t - 1/2)).
  // gamma_e from the marginal variance of the continuum model
  //   sigma^2 = 1 / (8 pi gamma_t gamma_e^2 (alpha - 1) gamma_s^{2(alpha-1)}),
  // alpha = alpha_e + alpha_s (alpha_t - 1/2) = 2 for both kinds (d = 2).
  inline ScaleParams to_scale_params(ModelSpec const& m, int d = 2) {
    auto a = m.alpha();
    double gs = std::sqrt(8.0 * nu_s) / m.range_s;
    double gt = m.range_t * std::pow(gs, a.s) / std::sqrt(8.0 * (a.t - 0.5));
    double alpha = a.e + a.s * (a.t - 0.5);
    double half_d = 0.5 * d;
    double ge2 = std::tgamma(a.t - 0.5) * std::tgamma(alpha - half_d) /
                 (std::tgamma(a.t) * std::tgamma(alpha) *
                  std::pow(4.0 * std::numbers::pi, half_d + 0.5) * gt *
                  std::pow(gs, 2.0 * (alpha - half_d)) * m.sigma2);
    return {gs, gt, std::sqrt(ge2)};
  }

  inline double nonseparability_beta(int alpha_e, double nu = nu_s, int d = 2) {
    return 1.0 - alpha_e / (nu + 0.5 * d);
  }
  inline double nonseparability_beta(ModelSpec const& m, int d = 2) {
    return nonseparability_beta(m.alpha().e, nu_s, d);
  }

  inline double temporal_rho(ModelSpec const& m, double dt) {
    double c = m.convention == RangeConvention::exponential ? 1.0 : 2.0;
    return std::exp(-c * dt / m.range_t);
  }

  // Unit-variance stationary AR(1) precision on n points.
  inline SparseSym ar1_precision(int n, double rho, double marginal_var = 1.0) {
    std::vector<Triplet> ts;
    double s = 1.0 / ((1.0 - rho * rho) * marginal_var);
    for (int i = 0; i < n; ++i) {
      bool end = (i == 0 || i == n - 1);
      double d = (n == 1) ? 1.0 / marginal_var : (end ? s : (1.0 + rho * rho) * s);
      ts.push_back({i, i, d});
      if (i + 1 < n) { ts.push_back({i + 1, i, -rho * s}); }
    }
    return SparseSym::from_triplets(n, ts);
  }

  // ------------------------------------------------------------------
  // Modal form: in the DCT eigenbasis of K every spatial mode is an
  // independent stationary AR(1) in time with coefficient phi_k (per dt)
  // and variance var_k. Shared by the sampler and the observation-space
  // inference engines.
  struct ModalModel {
    SpectralBasis const* basis = nullptr;
    Eigen::MatrixXd phi; // gx x gy
    Eigen::MatrixXd var; // gx x gy, scaled so the mid node has variance sigma2
    bool constant_phi = false;

    double phi0() const { return phi(0, 0); }

    // Stationary covariance between spatial nodes a, b at time lag h steps.
    double covariance(int ax, int ay, int bx, int by, int h) const {
      Eigen::MatrixXd ua = basis->node_modes(ax, ay);
      Eigen::MatrixXd ub = basis->node_modes(bx, by);
      return (ua.array() * ub.array() * var.array() *
              phi.array().pow(static_cast<double>(h)))
          .sum();
    }
  };

  inline ModalModel build_modal(ModelSpec const& m, LatticeSpec const& spec,
                                SpectralBasis const& basis) {
    auto sp = to_scale_params(m);
    Eigen::MatrixXd lam = basis.k_eigenvalues(sp.gamma_s);
    ModalModel mm;
    mm.basis = &basis;
    if (m.kind == ModelKind::Separable102) {
      mm.phi = Eigen::MatrixXd::Constant(lam.rows(), lam.cols(),
                                         temporal_rho(m, spec.dt));
      mm.var = lam.array().square().inverse();
      mm.constant_phi = true;
    } else if (m.scheme == TemporalScheme::exact) {
      Eigen::ArrayXXd lhat = lam.array() / basis.cell_area();
      mm.phi = (-spec.dt * lhat / sp.gamma_t).exp();
      mm.var = lhat.square().inverse();
    } else {
      double ac = sp.gamma_t / spec.dt * basis.cell_area();
      mm.phi = ac / (ac + lam.array());
      mm.var = (lam.array().square() * (2.0 * ac + lam.array())).inverse();
    }
    int mx = spec.gx() / 2;
    int my = spec.gy() / 2;
    Eigen::MatrixXd u = basis.node_modes(mx, my);
    double v = (u.array().square() * mm.var.array()).sum();
    mm.var *= m.sigma2 / v;
    return mm;
  }

  // ------------------------------------------------------------------
  // Sparse precisions.

  namespace detail {
    inline double mid_variance(SparseSym const& q, int node) {
      auto f = factorize(q);
      return inverse_diagonal(f, {node})[0];
    }
  } // end of namespace detail

  struct SeparablePrecision {
    SparseSym qt;
    SparseSym qs;
  };

  // Q_t (unit-variance OU sampled at dt) and Q_s = c K C^{-1} K with c set so
  // the mid-domain node has variance sigma2 (one spatial solve).
  inline SeparablePrecision separable_factors(ModelSpec const& m,
                                              LatticeSpec const& spec) {
    auto sp = to_scale_params(m);
    auto op = build_operator(spec, sp.gamma_s);
    SparseSym q2 = operator_power(op, 2);
    int mid = (spec.gy() / 2) * spec.gx() + spec.gx() / 2;
    double v1 = detail::mid_variance(q2, mid);
    return {ar1_precision(spec.nt, temporal_rho(m, spec.dt)),
            q2.scaled(v1 / m.sigma2)};
  }

  namespace detail {

    inline CscMat scalar_plus(CscMat const& k, double a) {
      CscMat i(k.rows(), k.cols());
      i.setIdentity();
      CscMat r = k + a * i;
      r.makeCompressed();
      return r;
    }

    // Implicit-Euler (1,2,1): F = aC + K, Q_w = s K, stationary first slice.
    inline SparseSym nonseparable_ie(ModelSpec const& m, LatticeSpec const& spec) {
      auto sp = to_scale_params(m);
      auto op = build_operator(spec, sp.gamma_s);
      int g = spec.spatial_nodes();
      int nt = spec.nt;
      double ac = sp.gamma_t / spec.dt * op.cell_area();
      CscMat k = op.K.full();
      CscMat f = scalar_plus(k, ac);
      CscMat fk = (f * k).pruned();          // F Q_w / s
      CscMat fkf = (fk * f).pruned();        // F Q_w F / s
      CscMat q1 = (k * scalar_plus(k, 2.0 * ac)).pruned();
      q1 = (k * q1).pruned();                // K^2 (2ac + K)

      // normalisation scalar s from the stationary slice
      int mid = (spec.gy() / 2) * spec.gx() + spec.gx() / 2;
      double v1 = mid_variance(SparseSym::from_lower(q1), mid);
      double s = v1 / m.sigma2;

      std::vector<Triplet> ts;
      auto put = [&](CscMat const& b, int bi, int bj, double scale, bool lower_only) {
        for (int j = 0; j < b.outerSize(); ++j) {
          for (CscMat::InnerIterator it(b, j); it; ++it) {
            int r = bi * g + static_cast<int>(it.row());
            int c = bj * g + j;
            if (lower_only && r < c) { continue; }
            ts.push_back({r, c, scale * it.value()});
          }
        }
      };
      double a2c2 = ac * ac;
      for (int t = 0; t < nt; ++t) {
        if (t == 0) {
          put(q1, 0, 0, s, true);
          if (nt > 1) { put(k, 0, 0, s * a2c2, true); }
        } else {
          put(fkf, t, t, s, true);
          if (t + 1 < nt) { put(k, t, t, s * a2c2, true); }
          // block (t, t-1) = -ac F Q_w
          put(fk, t, t - 1, -ac * s, false);
        }
      }
      return SparseSym::from_triplets(g * nt, ts);
    }

  } // end of namespace detail

  inline SparseSym build_precision(ModelSpec const& m, LatticeSpec const& spec) {
    m.validate();
    if (m.kind == ModelKind::Separable102) {
      auto f = separable_factors(m, spec);
      return kron(f.qt, f.qs);
    }
    if (m.scheme == TemporalScheme::exact) {
      throw ValidationError(
          "the exact temporal scheme has a dense transition; build_precision "
          "needs scheme implicit_euler");
    }
    return detail::nonseparable_ie(m, spec);
  }

  // ------------------------------------------------------------------
  // Continuum correlation by summing the spectral density over the
  // wavenumbers of a periodic torus; the time integral is done in closed
  // form (a Lorentzian in omega for alpha_t = 1).
  struct OracleOptions {
    double torus_ranges = 20.0; // torus side in units of r_s
    int n = 2048;               // wavenumbers per axis
  };

  inline double spectral_oracle(ModelSpec const& m, double lag_s, double lag_t,
                                OracleOptions const& o = {}) {
    double len = o.torus_ranges * m.range_s;
    if (o.torus_ranges < 10.0) { throw TorusTooSmall("torus must span >= 10 r_s"); }
    if (std::abs(lag_s) > 0.5 * len) { throw TorusTooSmall("spatial lag beyond half torus"); }
    auto sp = to_scale_params(m);
    double g2 = sp.gamma_s * sp.gamma_s;
    double dk = 2.0 * std::numbers::pi / len;
    int half = o.n / 2;
    double h = std::abs(lag_t);
    bool sep = m.kind == ModelKind::Separable102;
    double num = 0.0;
    double den = 0.0;
    for (int a = -half; a < half; ++a) {
      double kx = a * dk;
      double rowh = 0.0;
      double row0 = 0.0;
      for (int b = -half; b < half; ++b) {
        double ky = b * dk;
        double mm = g2 + kx * kx + ky * ky;
        double s0 = 1.0 / (mm * mm);
        row0 += s0;
        rowh += sep ? s0 : s0 * std::exp(-mm * h / sp.gamma_t);
      }
      num += std::cos(kx * lag_s) * rowh;
      den += row0;
    }
    double c = num / den;
    if (sep) { c *= std::pow(temporal_rho(m, 1.0), h); }
    return c;
  }

  // ------------------------------------------------------------------
  // Simulation.

  // Separable: Kronecker factor of (Q_t, Q_s). NonSeparable121 exact: modal
  // AR(1) sampler. NonSeparable121 implicit Euler: sparse factor of Q.
  class LatentSampler {
  public:
    LatentSampler(ModelSpec const& m, LatticeSpec const& spec)
        : m_(m), spec_(spec) {
      m.validate();
      if (m.kind == ModelKind::Separable102) {
        auto f = separable_factors(m, spec);
        kf_.emplace(factorize(f.qt), factorize(f.qs));
      } else if (m.scheme == TemporalScheme::implicit_euler) {
        sf_.emplace(factorize(build_precision(m, spec)));
      } else {
        basis_.emplace(spec);
        modal_.emplace(build_modal(m, spec, *basis_));
      }
    }

    Eigen::VectorXd sample(std::uint64_t seed) const {
      Rng rng(seed);
      if (kf_) { return kf_->sample_from(standard_normal_vector(rng, kf_->n())); }
      if (sf_) { return sf_->sample_from(standard_normal_vector(rng, sf_->n())); }
      return modal_sample(rng);
    }

  private:
    Eigen::VectorXd modal_sample(Rng& rng) const {
      int gx = spec_.gx();
      int gy = spec_.gy();
      int g = gx * gy;
      Eigen::VectorXd out(spec_.nodes());
      Eigen::ArrayXXd sd = modal_->var.array().sqrt();
      Eigen::ArrayXXd innov = (sd.square() * (1.0 - modal_->phi.array().square())).sqrt();
      Normal z;
      Eigen::ArrayXXd a(gx, gy);
      for (int t = 0; t < spec_.nt; ++t) {
        for (int jy = 0; jy < gy; ++jy) {
          for (int jx = 0; jx < gx; ++jx) {
            double e = z(rng);
            a(jx, jy) = (t == 0) ? sd(jx, jy) * e
                                 : modal_->phi(jx, jy) * a(jx, jy) + innov(jx, jy) * e;
          }
        }
        Eigen::MatrixXd f = basis_->inverse(a.matrix());
        out.segment(t * g, g) = Eigen::Map<Eigen::VectorXd>(f.data(), g);
      }
      return out;
    }

    ModelSpec m_;
    LatticeSpec spec_;
    std::optional<KronFactor> kf_;
    std::optional<CholFactor> sf_;
    std::optional<SpectralBasis> basis_;
    std::optional<ModalModel> modal_;
  };

  inline Eigen::VectorXd sample_latent(ModelSpec const& m, LatticeSpec const& spec,
                                       std::uint64_t seed) {
    return LatentSampler(m, spec).sample(seed);
  }

  // W = beta_0 + sum_j beta_j X_j + z. X holds one column per covariate
  // (without the intercept), rows in node order.
  inline Field simulate_field(ModelSpec const& m, LatticeSpec const& spec,
                              std::vector<double> const& beta,
                              Eigen::MatrixXd const& x, std::uint64_t seed) {
    if (beta.empty()) { throw ValidationError("beta needs an intercept"); }
    if (x.cols() + 1 != static_cast<Eigen::Index>(beta.size()) ||
        (x.cols() > 0 && x.rows() != spec.nodes())) {
      throw DimensionMismatch("covariates do not conform to the lattice");
    }
    Eigen::VectorXd w = sample_latent(m, spec, seed);
    w.array() += beta[0];
    for (Eigen::Index j = 0; j < x.cols(); ++j) { w += beta[j + 1] * x.col(j); }
    return Field(spec, std::move(w));
  }

} // end of namespace stdisagg
