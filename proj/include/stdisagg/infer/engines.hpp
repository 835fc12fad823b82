#pragma once

//
// ... Standard header files
//
#include <cmath>
#include <map>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

//
// ... External header files
//
#include <Eigen/Dense>

//
// ... stdisagg header files
//
#include <stdisagg/aggregate.hpp>
#include <stdisagg/errors.hpp>
#include <stdisagg/infer/obs_model.hpp>
#include <stdisagg/sparsela/cholesky.hpp>
#include <stdisagg/spectral_basis.hpp>
#include <stdisagg/stmodel.hpp>

namespace stdisagg {

  // Posterior of the fine field w = x'beta + z at the interior nodes, in
  // LatticeSpec::interior_indices() order, given hyperparameters.
  struct LatentPosterior {
    Eigen::VectorXd beta_mean;
    Eigen::MatrixXd beta_cov;
    Eigen::VectorXd mean;
    Eigen::VectorXd var;
  };

  class Engine {
  public:
    virtual ~Engine() = default;
    virtual double loglik(Hyper const& h) = 0;
    virtual LatentPosterior posterior(Hyper const& h) = 0;
    virtual std::string name() const = 0;
  };

  namespace detail {

    inline double log2pi() { return std::log(2.0 * std::numbers::pi); }

    // y ~ N(0, S + X X'/eps). Inputs are log|S|, S^-1 y and S^-1 X.
    struct Gls {
      double loglik;
      Eigen::VectorXd beta;
      Eigen::MatrixXd beta_cov;
      Eigen::VectorXd alpha; // S^-1 (y - X beta)
    };

    inline Gls gls(Eigen::VectorXd const& y, Eigen::MatrixXd const& x, double eps,
                   double logdet_s, Eigen::VectorXd const& siy,
                   Eigen::MatrixXd const& six) {
      int p = static_cast<int>(x.cols());
      Eigen::MatrixXd m = x.transpose() * six;
      m.diagonal().array() += eps;
      Eigen::LLT<Eigen::MatrixXd> lm(m);
      if (lm.info() != Eigen::Success) { throw NotPositiveDefinite(0); }
      Eigen::VectorXd b = x.transpose() * siy;
      Gls g;
      g.beta = lm.solve(b);
      g.beta_cov = lm.solve(Eigen::MatrixXd::Identity(p, p));
      double quad = y.dot(siy) - b.dot(g.beta);
      double ldm = 2.0 * lm.matrixLLT().diagonal().array().log().sum();
      double ld = logdet_s + ldm - p * std::log(eps);
      g.loglik = -0.5 * (ld + quad + static_cast<double>(y.size()) * log2pi());
      g.alpha = siy - six * g.beta;
      if (!std::isfinite(g.loglik)) { throw NonFiniteLikelihood("gls"); }
      return g;
    }

    // Mode matrix row for a weighted set of spatial nodes.
    inline Eigen::RowVectorXd region_modes(SpectralBasis const& b, Region const& r,
                                           int gx) {
      Eigen::MatrixXd f = Eigen::MatrixXd::Zero(b.gx(), b.gy());
      for (std::size_t i = 0; i < r.nodes.size(); ++i) {
        f(r.nodes[i] % gx, r.nodes[i] / gx) += r.weights[i];
      }
      Eigen::MatrixXd a = b.forward(f);
      return Eigen::Map<Eigen::RowVectorXd>(a.data(), a.size());
    }

    // Interior rows of the mode matrix U (nx*ny x G).
    inline Eigen::MatrixXd interior_modes(SpectralBasis const& b, LatticeSpec const& s) {
      Eigen::MatrixXd u(s.interior_spatial(), b.modes());
      for (int iy = 0; iy < s.ny; ++iy) {
        for (int ix = 0; ix < s.nx; ++ix) {
          Eigen::MatrixXd m = b.node_modes(ix + s.buffer, iy + s.buffer);
          u.row(iy * s.nx + ix) = Eigen::Map<Eigen::RowVectorXd>(m.data(), m.size());
        }
      }
      return u;
    }

    // Prior variance of every interior spatial node: (Ex.^2) V (Ey.^2)'.
    inline Eigen::VectorXd interior_prior_var(SpectralBasis const& b, LatticeSpec const& s,
                                              Eigen::MatrixXd const& var) {
      Eigen::MatrixXd f = b.ex().array().square().matrix() * var *
                          b.ey().array().square().matrix().transpose();
      Eigen::VectorXd out(s.interior_spatial());
      for (int iy = 0; iy < s.ny; ++iy) {
        for (int ix = 0; ix < s.nx; ++ix) {
          out[iy * s.nx + ix] = f(ix + s.buffer, iy + s.buffer);
        }
      }
      return out;
    }

    inline Eigen::VectorXd interior_of(Eigen::MatrixXd const& f, LatticeSpec const& s) {
      Eigen::VectorXd out(s.interior_spatial());
      for (int iy = 0; iy < s.ny; ++iy) {
        for (int ix = 0; ix < s.nx; ++ix) { out[iy * s.nx + ix] = f(ix + s.buffer, iy + s.buffer); }
      }
      return out;
    }

    // Interior rows of the fine design for time t.
    inline Eigen::MatrixXd fine_rows(Eigen::MatrixXd const& xf, LatticeSpec const& s, int t) {
      Eigen::MatrixXd out(s.interior_spatial(), xf.cols());
      for (int iy = 0; iy < s.ny; ++iy) {
        for (int ix = 0; ix < s.nx; ++ix) {
          out.row(iy * s.nx + ix) = xf.row(s.interior_index(ix, iy, t));
        }
      }
      return out;
    }

  } // end of namespace detail

  // ------------------------------------------------------------------
  // Sigma = At (x) As + I/tau on a complete region x window grid, through
  // the eigendecompositions of both factors.
  class KronCore {
  public:
    void set(Eigen::MatrixXd const& as, Eigen::MatrixXd const& at, double tau) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(as), et(at);
      es_ = es.eigenvectors();
      et_ = et.eigenvectors();
      Eigen::VectorXd ds = es.eigenvalues().cwiseMax(0.0);
      Eigen::VectorXd dt = et.eigenvalues().cwiseMax(0.0);
      d_ = (ds * dt.transpose()).array() + 1.0 / tau;
      logdet_ = d_.array().log().sum();
    }

    double logdet() const { return logdet_; }
    Eigen::MatrixXd const& es() const { return es_; }
    Eigen::MatrixXd const& et() const { return et_; }
    Eigen::MatrixXd const& d() const { return d_; }

    // Sigma^-1 v, v stored as regions x windows.
    Eigen::MatrixXd solve(Eigen::MatrixXd const& v) const {
      Eigen::MatrixXd w = es_.transpose() * v * et_;
      w.array() /= d_.array();
      return es_ * w * et_.transpose();
    }

  private:
    Eigen::MatrixXd es_, et_, d_;
    double logdet_ = 0.0;
  };

  namespace detail {

    // Kronecker GLS: y and X columns reshaped to regions x windows.
    struct KronData {
      int nr = 0, nw = 0;
      Eigen::VectorXd y;
      Eigen::MatrixXd x;
    };

    inline Gls kron_gls(KronCore const& k, KronData const& d, double eps,
                        std::vector<Eigen::MatrixXd>* six_mats = nullptr) {
      auto as_mat = [&](Eigen::VectorXd const& v) {
        return Eigen::Map<Eigen::MatrixXd const>(v.data(), d.nr, d.nw);
      };
      Eigen::MatrixXd siy_m = k.solve(as_mat(d.y));
      Eigen::VectorXd siy = Eigen::Map<Eigen::VectorXd>(siy_m.data(), siy_m.size());
      Eigen::MatrixXd six(d.y.size(), d.x.cols());
      for (Eigen::Index c = 0; c < d.x.cols(); ++c) {
        Eigen::VectorXd col = d.x.col(c);
        Eigen::MatrixXd s = k.solve(as_mat(col));
        six.col(c) = Eigen::Map<Eigen::VectorXd>(s.data(), s.size());
        if (six_mats) { six_mats->push_back(s); }
      }
      return gls(d.y, d.x, eps, k.logdet(), siy, six);
    }

    // Posterior at fine nodes for Sigma = At(x)As + I/tau with cross
    // covariance Cs(s, r) Ct(t, j) and prior variance c0s(s) c0t(t).
    inline LatentPosterior kron_posterior(KronCore const& k, KronData const& d, double eps,
                                          Eigen::MatrixXd const& cs, Eigen::MatrixXd const& ct,
                                          Eigen::VectorXd const& c0s, Eigen::VectorXd const& c0t,
                                          std::vector<Eigen::MatrixXd> const& xfine_st) {
      std::vector<Eigen::MatrixXd> six;
      Gls g = kron_gls(k, d, eps, &six);
      Eigen::Map<Eigen::MatrixXd const> am(g.alpha.data(), d.nr, d.nw);
      Eigen::MatrixXd z = cs * am * ct.transpose(); // ns x nt
      Eigen::MatrixXd fs = (cs * k.es()).array().square();
      Eigen::MatrixXd ft = (ct * k.et()).array().square();
      Eigen::MatrixXd red = fs * k.d().cwiseInverse() * ft.transpose();
      int ns = static_cast<int>(cs.rows());
      int nt = static_cast<int>(ct.rows());
      int p = static_cast<int>(d.x.cols());
      std::vector<Eigen::MatrixXd> gx;
      for (int c = 0; c < p; ++c) { gx.push_back(cs * six[c] * ct.transpose()); }
      LatentPosterior out;
      out.beta_mean = g.beta;
      out.beta_cov = g.beta_cov;
      out.mean.resize(ns * nt);
      out.var.resize(ns * nt);
      Eigen::VectorXd r(p);
      for (int t = 0; t < nt; ++t) {
        for (int s = 0; s < ns; ++s) {
          double mu = z(s, t);
          for (int c = 0; c < p; ++c) {
            double x = xfine_st[c](s, t);
            mu += x * g.beta[c];
            r[c] = x - gx[c](s, t);
          }
          double v = c0s[s] * c0t[t] - red(s, t) + r.dot(g.beta_cov * r);
          out.mean[t * ns + s] = mu;
          out.var[t * ns + s] = std::max(v, 0.0);
        }
      }
      return out;
    }

  } // end of namespace detail

  // ------------------------------------------------------------------
  // Separable model on a complete grid of uniform-or-general cells.
  class KronEngine : public Engine {
  public:
    explicit KronEngine(ObsModel const& o) : o_(o), basis_(o.P.spec) {
      o.validate();
      if (o.model.kind != ModelKind::Separable102 || !o.P.complete()) {
        throw ValidationError("Kronecker engine needs the separable model and complete cells");
      }
      auto const& s = o.P.spec;
      int nr = static_cast<int>(o.P.regions.size());
      int nw = static_cast<int>(o.P.windows.size());
      phi_.resize(nr, basis_.modes());
      for (int r = 0; r < nr; ++r) {
        phi_.row(r) = detail::region_modes(basis_, o.P.regions[r], s.gx());
      }
      bw_ = Eigen::MatrixXd::Zero(nw, s.nt);
      for (int j = 0; j < nw; ++j) {
        auto const& w = o.P.windows[j];
        for (std::size_t a = 0; a < w.times.size(); ++a) { bw_(j, w.times[a]) += w.weights[a]; }
      }
      data_.nr = nr;
      data_.nw = nw;
      data_.y = o.y;
      data_.x = o.X_agg;
    }

    std::string name() const override { return "kronecker"; }

    double loglik(Hyper const& h) override {
      setup(h);
      return detail::kron_gls(core_, data_, o_.beta_prior_precision).loglik;
    }

    LatentPosterior posterior(Hyper const& h) override {
      setup(h);
      auto const& s = o_.P.spec;
      int nr = data_.nr;
      Eigen::MatrixXd cs(s.interior_spatial(), nr);
      for (int r = 0; r < nr; ++r) {
        Eigen::VectorXd a = phi_.row(r).transpose().cwiseProduct(vvec_);
        Eigen::MatrixXd f = basis_.inverse(Eigen::Map<Eigen::MatrixXd>(a.data(), basis_.gx(), basis_.gy()));
        cs.col(r) = detail::interior_of(f, s);
      }
      Eigen::VectorXd c0s = detail::interior_prior_var(basis_, s, modal_.var);
      Eigen::VectorXd c0t = Eigen::VectorXd::Ones(s.nt);
      std::vector<Eigen::MatrixXd> xst;
      for (Eigen::Index c = 0; c < o_.X_fine.cols(); ++c) {
        Eigen::MatrixXd m(s.interior_spatial(), s.nt);
        for (int t = 0; t < s.nt; ++t) { m.col(t) = detail::fine_rows(o_.X_fine, s, t).col(c); }
        xst.push_back(m);
      }
      return detail::kron_posterior(core_, data_, o_.beta_prior_precision, cs, ct_, c0s, c0t, xst);
    }

  private:
    void setup(Hyper const& h) {
      ModelSpec m = h.apply(o_.model);
      modal_ = build_modal(m, o_.P.spec, basis_);
      vvec_ = Eigen::Map<Eigen::VectorXd const>(modal_.var.data(), modal_.var.size());
      Eigen::MatrixXd as = phi_ * vvec_.asDiagonal() * phi_.transpose();
      int nt = o_.P.spec.nt;
      double rho = modal_.phi0();
      Eigen::MatrixXd rt(nt, nt);
      for (int a = 0; a < nt; ++a) {
        for (int b = 0; b < nt; ++b) { rt(a, b) = std::pow(rho, std::abs(a - b)); }
      }
      ct_ = rt * bw_.transpose();
      Eigen::MatrixXd at = bw_ * ct_;
      core_.set(as, at, h.tau_eps);
    }

    ObsModel o_;
    SpectralBasis basis_;
    Eigen::MatrixXd phi_;
    Eigen::MatrixXd bw_;
    Eigen::MatrixXd ct_;
    ModalModel modal_;
    Eigen::VectorXd vvec_;
    KronCore core_;
    detail::KronData data_;
  };

  // ------------------------------------------------------------------
  // Any modal model (either kind, either scheme), any cell subset: dense
  // observation covariance assembled window pair by window pair.
  class DenseModalEngine : public Engine {
  public:
    explicit DenseModalEngine(ObsModel const& o) : o_(o), basis_(o.P.spec) {
      o.validate();
      auto const& s = o.P.spec;
      int nreg = static_cast<int>(o.P.regions.size());
      phi_all_.resize(nreg, basis_.modes());
      for (int r = 0; r < nreg; ++r) {
        phi_all_.row(r) = detail::region_modes(basis_, o.P.regions[r], s.gx());
      }
      int nw = static_cast<int>(o.P.windows.size());
      rows_.assign(nw, {});
      regs_.assign(nw, {});
      for (int i = 0; i < o.P.rows(); ++i) {
        auto [r, j] = o.P.cells[i];
        rows_[j].push_back(i);
        regs_[j].push_back(r);
      }
      same_regions_ = true;
      for (int j = 1; j < nw; ++j) {
        if (regs_[j] != regs_[0]) { same_regions_ = false; }
      }
      phi_w_.resize(nw);
      for (int j = 0; j < nw; ++j) {
        phi_w_[j].resize(static_cast<Eigen::Index>(regs_[j].size()), basis_.modes());
        for (std::size_t a = 0; a < regs_[j].size(); ++a) {
          phi_w_[j].row(static_cast<Eigen::Index>(a)) = phi_all_.row(regs_[j][a]);
        }
      }
      // lag histograms per window pair
      std::map<std::vector<double>, int> keys;
      pair_key_.assign(nw, std::vector<int>(nw, -1));
      for (int j = 0; j < nw; ++j) {
        for (int k = 0; k < nw; ++k) {
          std::vector<double> hist(static_cast<std::size_t>(s.nt), 0.0);
          auto const& a = o.P.windows[j];
          auto const& b = o.P.windows[k];
          for (std::size_t u = 0; u < a.times.size(); ++u) {
            for (std::size_t v = 0; v < b.times.size(); ++v) {
              hist[static_cast<std::size_t>(std::abs(a.times[u] - b.times[v]))] +=
                  a.weights[u] * b.weights[v];
            }
          }
          auto it = keys.find(hist);
          if (it == keys.end()) {
            it = keys.emplace(hist, static_cast<int>(hists_.size())).first;
            hists_.push_back(hist);
          }
          pair_key_[j][k] = it->second;
        }
      }
    }

    std::string name() const override { return "dense-modal"; }

    double loglik(Hyper const& h) override {
      setup(h);
      return gls_.loglik;
    }

    LatentPosterior posterior(Hyper const& h) override {
      setup(h);
      auto const& s = o_.P.spec;
      int g = basis_.modes();
      int ns = s.interior_spatial();
      int nobs = o_.n_obs();
      int nw = static_cast<int>(o_.P.windows.size());
      Eigen::MatrixXd u = detail::interior_modes(basis_, s);
      Eigen::VectorXd c0 = detail::interior_prior_var(basis_, s, modal_.var);
      Eigen::MatrixXd lx = llt_.matrixL().solve(o_.X_agg);
      LatentPosterior out;
      out.beta_mean = gls_.beta;
      out.beta_cov = gls_.beta_cov;
      out.mean.resize(ns * s.nt);
      out.var.resize(ns * s.nt);
      Eigen::MatrixXd hmat(g, nobs);
      for (int t = 0; t < s.nt; ++t) {
        for (int j = 0; j < nw; ++j) {
          auto const& win = o_.P.windows[j];
          Eigen::ArrayXd c = Eigen::ArrayXd::Zero(g);
          for (std::size_t a = 0; a < win.times.size(); ++a) {
            c += win.weights[a] * powers_[static_cast<std::size_t>(std::abs(t - win.times[a]))];
          }
          c *= vvec_.array();
          for (std::size_t a = 0; a < rows_[j].size(); ++a) {
            hmat.col(rows_[j][a]) = phi_w_[j].row(static_cast<Eigen::Index>(a)).transpose().array() * c;
          }
        }
        Eigen::MatrixXd ct = u * hmat; // ns x nobs
        Eigen::VectorXd z = ct * gls_.alpha;
        Eigen::MatrixXd w = llt_.matrixL().solve(ct.transpose());
        Eigen::VectorXd red = w.colwise().squaredNorm().transpose();
        Eigen::MatrixXd xsc = lx.transpose() * w; // p x ns
        Eigen::MatrixXd xf = detail::fine_rows(o_.X_fine, s, t);
        for (int i = 0; i < ns; ++i) {
          Eigen::VectorXd r = xf.row(i).transpose() - xsc.col(i);
          out.mean[t * ns + i] = z[i] + xf.row(i).dot(gls_.beta);
          out.var[t * ns + i] = std::max(c0[i] - red[i] + r.dot(gls_.beta_cov * r), 0.0);
        }
      }
      return out;
    }

    Eigen::MatrixXd const& covariance() const { return sigma_; }

  private:
    void setup(Hyper const& h) {
      auto const& s = o_.P.spec;
      ModelSpec m = h.apply(o_.model);
      modal_ = build_modal(m, s, basis_);
      vvec_ = Eigen::Map<Eigen::VectorXd const>(modal_.var.data(), modal_.var.size());
      Eigen::ArrayXd phi = Eigen::Map<Eigen::ArrayXd const>(modal_.phi.data(), modal_.phi.size());
      powers_.assign(static_cast<std::size_t>(s.nt), Eigen::ArrayXd::Ones(phi.size()));
      for (int d = 1; d < s.nt; ++d) { powers_[d] = powers_[d - 1] * phi; }
      std::vector<Eigen::VectorXd> wk;
      for (auto const& hist : hists_) {
        Eigen::ArrayXd acc = Eigen::ArrayXd::Zero(phi.size());
        for (std::size_t d = 0; d < hist.size(); ++d) {
          if (hist[d] != 0.0) { acc += hist[d] * powers_[d]; }
        }
        wk.push_back((acc * vvec_.array()).matrix());
      }
      int nobs = o_.n_obs();
      int nw = static_cast<int>(o_.P.windows.size());
      sigma_.resize(nobs, nobs);
      std::map<int, Eigen::MatrixXd> cache;
      for (int j = 0; j < nw; ++j) {
        for (int k = j; k < nw; ++k) {
          if (rows_[j].empty() || rows_[k].empty()) { continue; }
          int key = pair_key_[j][k];
          Eigen::MatrixXd blk;
          if (same_regions_) {
            auto it = cache.find(key);
            if (it == cache.end()) {
              it = cache.emplace(key, (phi_w_[j] * wk[key].asDiagonal()) * phi_w_[k].transpose()).first;
            }
            blk = it->second;
          } else {
            blk = (phi_w_[j] * wk[key].asDiagonal()) * phi_w_[k].transpose();
          }
          for (std::size_t a = 0; a < rows_[j].size(); ++a) {
            for (std::size_t b = 0; b < rows_[k].size(); ++b) {
              double v = blk(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
              sigma_(rows_[j][a], rows_[k][b]) = v;
              sigma_(rows_[k][b], rows_[j][a]) = v;
            }
          }
        }
      }
      sigma_.diagonal().array() += 1.0 / h.tau_eps;
      llt_.compute(sigma_);
      if (llt_.info() != Eigen::Success) { throw NotPositiveDefinite(0); }
      double ld = 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
      Eigen::VectorXd siy = llt_.solve(o_.y);
      Eigen::MatrixXd six = llt_.solve(o_.X_agg);
      gls_ = detail::gls(o_.y, o_.X_agg, o_.beta_prior_precision, ld, siy, six);
    }

    ObsModel o_;
    SpectralBasis basis_;
    Eigen::MatrixXd phi_all_;
    std::vector<std::vector<int>> rows_, regs_;
    std::vector<Eigen::MatrixXd> phi_w_;
    bool same_regions_ = true;
    std::vector<std::vector<double>> hists_;
    std::vector<std::vector<int>> pair_key_;
    ModalModel modal_;
    Eigen::VectorXd vvec_;
    std::vector<Eigen::ArrayXd> powers_;
    Eigen::MatrixXd sigma_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    detail::Gls gls_;
  };

  // ------------------------------------------------------------------
  // The sparse GMRF route: u = (beta, z), Q_prior = blockdiag(eps I, Q),
  // B = [X, A], Q_post = Q_prior + tau B'B, mu = Q_post^-1 tau B'y,
  // log p(y) = 1/2 [log|Q_prior| + N log tau - log|Q_post| - tau y'y
  //                 + mu' Q_post mu] - N/2 log 2 pi.
  struct SparsePosterior {
    double loglik = 0.0;
    std::unique_ptr<CholFactor> factor;
    Eigen::VectorXd mu;
  };

  template <typename AMat>
  SparsePosterior sparse_posterior(SparseSym const& q, Eigen::MatrixXd const& x,
                                   AMat const& amat, Eigen::VectorXd const& y, double tau,
                                   double eps) {
    int p = static_cast<int>(x.cols());
    int n = q.n();
    int n_obs = static_cast<int>(y.size());
    if (amat.rows() != n_obs || amat.cols() != n || x.rows() != n_obs) {
      throw DimensionMismatch("sparse posterior inputs");
    }
    double ld_q = factorize(q).logdet();
    std::vector<Triplet> ts;
    CscMat ql = q.lower();
    for (int j = 0; j < n; ++j) {
      for (CscMat::InnerIterator it(ql, j); it; ++it) {
        ts.push_back({p + static_cast<int>(it.row()), p + j, it.value()});
      }
    }
    for (int i = 0; i < p; ++i) { ts.push_back({i, i, eps}); }
    Eigen::MatrixXd xtx = x.transpose() * x;
    for (int i = 0; i < p; ++i) {
      for (int j = 0; j <= i; ++j) { ts.push_back({i, j, tau * xtx(i, j)}); }
    }
    CscMat a = amat;
    if (p > 0) {
      Eigen::MatrixXd atx = a.transpose() * x; // n x p
      for (int j = 0; j < n; ++j) {
        for (int i = 0; i < p; ++i) {
          if (atx(j, i) != 0.0) { ts.push_back({p + j, i, tau * atx(j, i)}); }
        }
      }
    }
    CscMat ata = CscMat(a.transpose() * a).pruned();
    for (int j = 0; j < n; ++j) {
      for (CscMat::InnerIterator it(ata, j); it; ++it) {
        if (it.row() >= j) { ts.push_back({p + static_cast<int>(it.row()), p + j, tau * it.value()}); }
      }
    }
    SparsePosterior out;
    out.factor = std::make_unique<CholFactor>(factorize(SparseSym::from_triplets(p + n, ts)));
    Eigen::VectorXd rhs(p + n);
    rhs.head(p) = tau * (x.transpose() * y);
    rhs.tail(n) = tau * (a.transpose() * y);
    out.mu = out.factor->solve(rhs);
    double ld_prior = p * std::log(eps) + ld_q;
    out.loglik = 0.5 * (ld_prior + n_obs * std::log(tau) - out.factor->logdet() -
                        tau * y.squaredNorm() + out.mu.dot(rhs)) -
                 0.5 * n_obs * detail::log2pi();
    if (!std::isfinite(out.loglik)) { throw NonFiniteLikelihood("sparse"); }
    return out;
  }

  class SparseEngine : public Engine {
  public:
    explicit SparseEngine(ObsModel const& o) : o_(o) {
      o.validate();
      if (o.model.kind == ModelKind::NonSeparable121 &&
          o.model.scheme == TemporalScheme::exact) {
        throw ValidationError("sparse engine needs a sparse precision (implicit_euler scheme)");
      }
    }

    std::string name() const override { return "sparse"; }

    double loglik(Hyper const& h) override { return run(h).loglik; }

    LatentPosterior posterior(Hyper const& h) override {
      SparsePosterior sp = run(h);
      auto const& s = o_.P.spec;
      int p = o_.n_fixed();
      LatentPosterior out;
      out.beta_mean = sp.mu.head(p);
      Eigen::MatrixXd e = Eigen::MatrixXd::Zero(sp.mu.size(), p);
      e.topRows(p).setIdentity();
      out.beta_cov = sp.factor->solve(e).topRows(p);
      auto idx = s.interior_indices();
      out.mean.resize(static_cast<Eigen::Index>(idx.size()));
      out.var.resize(static_cast<Eigen::Index>(idx.size()));
      Eigen::VectorXd v = Eigen::VectorXd::Zero(sp.mu.size());
      for (std::size_t k = 0; k < idx.size(); ++k) {
        int node = idx[k];
        v.head(p) = o_.X_fine.row(node).transpose();
        v[p + node] = 1.0;
        out.mean[static_cast<Eigen::Index>(k)] = v.dot(sp.mu);
        out.var[static_cast<Eigen::Index>(k)] = sp.factor->half_solve(v).squaredNorm();
        v[p + node] = 0.0;
      }
      return out;
    }

  private:
    SparsePosterior run(Hyper const& h) {
      SparseSym q = build_precision(h.apply(o_.model), o_.P.spec);
      return sparse_posterior(q, o_.X_agg, o_.P.A, o_.y, h.tau_eps, o_.beta_prior_precision);
    }

    ObsModel o_;
  };

  enum class EngineChoice { automatic, kronecker, dense, sparse };

  inline EngineChoice parse_engine(std::string const& s) {
    if (s == "auto") { return EngineChoice::automatic; }
    if (s == "kronecker" || s == "kron") { return EngineChoice::kronecker; }
    if (s == "dense") { return EngineChoice::dense; }
    if (s == "sparse") { return EngineChoice::sparse; }
    throw ValidationError("unknown engine '" + s + "'");
  }

  inline std::unique_ptr<Engine> make_engine(ObsModel const& o,
                                             EngineChoice c = EngineChoice::automatic) {
    switch (c) {
      case EngineChoice::kronecker: return std::make_unique<KronEngine>(o);
      case EngineChoice::dense: return std::make_unique<DenseModalEngine>(o);
      case EngineChoice::sparse: return std::make_unique<SparseEngine>(o);
      case EngineChoice::automatic: break;
    }
    if (o.model.kind == ModelKind::Separable102 && o.P.complete()) {
      return std::make_unique<KronEngine>(o);
    }
    return std::make_unique<DenseModalEngine>(o);
  }

  inline double log_marginal_likelihood(ObsModel const& o, Hyper const& h,
                                        EngineChoice c = EngineChoice::sparse) {
    return make_engine(o, c)->loglik(h);
  }

} // end of namespace stdisagg
