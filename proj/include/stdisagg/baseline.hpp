#pragma once

//
// ... Standard header files
//
#include <cmath>
#include <queue>
#include <string>
#include <utility>
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
#include <stdisagg/infer/engines.hpp>
#include <stdisagg/infer/fit.hpp>
#include <stdisagg/infer/optimize.hpp>
#include <stdisagg/sparsela/sparse_sym.hpp>

namespace stdisagg {

  struct Adjacency {
    int n_regions = 0;
    std::vector<std::pair<int, int>> pairs; // i < j
  };

  // Rook neighbours on an nx x ny grid of regions, index = iy * nx + ix.
  inline Adjacency rook_adjacency(int nx, int ny) {
    if (nx < 1 || ny < 1) { throw ValidationError("empty region grid"); }
    Adjacency a;
    a.n_regions = nx * ny;
    for (int iy = 0; iy < ny; ++iy) {
      for (int ix = 0; ix < nx; ++ix) {
        int i = iy * nx + ix;
        if (ix + 1 < nx) { a.pairs.emplace_back(i, i + 1); }
        if (iy + 1 < ny) { a.pairs.emplace_back(i, i + nx); }
      }
    }
    return a;
  }

  inline int connected_components(Adjacency const& a) {
    std::vector<std::vector<int>> nb(static_cast<std::size_t>(a.n_regions));
    for (auto [i, j] : a.pairs) {
      nb[i].push_back(j);
      nb[j].push_back(i);
    }
    std::vector<int> seen(static_cast<std::size_t>(a.n_regions), 0);
    int comps = 0;
    for (int s = 0; s < a.n_regions; ++s) {
      if (seen[s]) { continue; }
      ++comps;
      std::queue<int> q;
      q.push(s);
      seen[s] = 1;
      while (!q.empty()) {
        int u = q.front();
        q.pop();
        for (int v : nb[u]) {
          if (!seen[v]) {
            seen[v] = 1;
            q.push(v);
          }
        }
      }
    }
    return comps;
  }

  // Q_S = D - W.
  inline SparseSym besag_precision(Adjacency const& a) {
    std::vector<Triplet> ts;
    for (auto [i, j] : a.pairs) {
      if (i == j || i < 0 || j < 0 || i >= a.n_regions || j >= a.n_regions) {
        throw ValidationError("bad adjacency pair");
      }
      ts.push_back({std::max(i, j), std::min(i, j), -1.0});
      ts.push_back({i, i, 1.0});
      ts.push_back({j, j, 1.0});
    }
    for (int i = 0; i < a.n_regions; ++i) { ts.push_back({i, i, 0.0}); }
    if (connected_components(a) > 1) {
      throw DisconnectedGraph(std::to_string(connected_components(a)) + " components");
    }
    return SparseSym::from_triplets(a.n_regions, ts);
  }

  enum class BesagMode { constraint, jitter };

  // Dense spatial covariance factor of the Besag field (tau_S = 1).
  inline Eigen::MatrixXd besag_covariance(SparseSym const& q, BesagMode mode, double jitter) {
    Eigen::MatrixXd d = q.dense();
    int n = static_cast<int>(d.rows());
    if (mode == BesagMode::jitter) {
      d.diagonal().array() += jitter;
      return d.llt().solve(Eigen::MatrixXd::Identity(n, n));
    }
    // Moore-Penrose pseudoinverse, which is the covariance under the
    // sum-to-zero constraint on a connected graph
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(d);
    Eigen::VectorXd ev = es.eigenvalues();
    double cut = 1e-10 * std::max(1.0, ev.maxCoeff());
    Eigen::VectorXd inv = ev.unaryExpr([&](double e) { return e > cut ? 1.0 / e : 0.0; });
    return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
  }

  struct ArealOptions {
    BesagMode mode = BesagMode::constraint;
    double jitter = 1e-8;
    NelderMeadOptions nm;
    double hessian_step = 0.02;
    double beta_prior_precision = 1e-6;
  };

  struct ArealFit {
    Eigen::VectorXd beta_mean;
    Eigen::MatrixXd beta_cov;
    std::vector<ParamSummary> beta_post;
    double rho_hat = 0.0, tau_s_hat = 0.0, tau_eps_hat = 0.0;
    ParamSummary rho_ci, tau_s_ci, tau_eps_ci;
    Eigen::VectorXd cell_mean, cell_sd;  // linear predictor per cell
    Eigen::VectorXd besag_mean;          // spatio-temporal effect per cell
    double loglik = 0.0;
    bool converged = false;
    int iterations = 0;
    Prediction fine;                     // duplicated onto the fine lattice
  };

  namespace detail {

    inline Eigen::MatrixXd ar1_stationary_cov(int n, double rho) {
      Eigen::MatrixXd a(n, n);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) { a(i, j) = std::pow(rho, std::abs(i - j)) / (1.0 - rho * rho); }
      }
      return a;
    }

  } // end of namespace detail

  // Separable Besag x AR(1) model at the aggregated resolution. y and rows
  // of X_agg are region-major within each time: row = t * n_regions + i.
  inline ArealFit fit_areal(Eigen::VectorXd const& y, Eigen::MatrixXd const& x_agg,
                            Adjacency const& adj, int n_times, ArealOptions const& opts = {}) {
    int nr = adj.n_regions;
    if (y.size() != static_cast<Eigen::Index>(nr) * n_times || x_agg.rows() != y.size()) {
      throw DimensionMismatch("areal data must cover every region and time");
    }
    if (y.size() < 2) { throw DegenerateData("fewer than two cells"); }
    double vy = detail::sample_var(y);
    if (!(vy > 1e-300)) { throw DegenerateData("observations are constant"); }
    Eigen::MatrixXd qs_cov = besag_covariance(besag_precision(adj), opts.mode, opts.jitter);
    double mean_diag = qs_cov.diagonal().mean();

    detail::KronData data;
    data.nr = nr;
    data.nw = n_times;
    data.y = y;
    data.x = x_agg;
    double eps = opts.beta_prior_precision;

    // x = (atanh rho, log tau_S, log tau_eps)
    auto setup = [&](Eigen::VectorXd const& x, KronCore& k) {
      double rho = std::tanh(x[0]);
      k.set(qs_cov / std::exp(x[1]), detail::ar1_stationary_cov(n_times, rho), std::exp(x[2]));
    };
    Eigen::Vector3d lo(-4.0, -std::log(vy) - 10.0, -std::log(vy) - 7.0);
    Eigen::Vector3d hi(4.0, -std::log(vy) + 14.0, -std::log(vy) + 18.0);
    auto objective = [&](Eigen::VectorXd const& x) {
      double out = 0.0;
      for (int i = 0; i < 3; ++i) { out += std::max(0.0, lo[i] - x[i]) + std::max(0.0, x[i] - hi[i]); }
      if (out > 0.0) { return 1e10 * (1.0 + out); }
      try {
        KronCore k;
        setup(x, k);
        return -detail::kron_gls(k, data, eps).loglik;
      } catch (Error const&) {
        return std::numeric_limits<double>::infinity();
      }
    };
    // tau_S such that the Besag marginal variance is about var(y)/2
    Eigen::Vector3d x0(std::atanh(0.5), std::log(mean_diag / (0.5 * vy) / (1.0 - 0.25)),
                       std::log(2.0 / vy));
    ModeResult mode = find_mode(objective, x0, opts.nm, opts.hessian_step);
    if (!std::isfinite(mode.nm.f)) { throw NonFiniteLikelihood("areal model"); }
    Eigen::VectorXd xh = mode.nm.x;

    ArealFit af;
    af.converged = mode.nm.converged;
    af.iterations = mode.nm.iterations;
    af.loglik = -mode.nm.f;
    af.rho_hat = std::tanh(xh[0]);
    af.tau_s_hat = std::exp(xh[1]);
    af.tau_eps_hat = std::exp(xh[2]);
    {
      double sd = std::sqrt(mode.cov(0, 0));
      af.rho_ci = {"rho", af.rho_hat, 0.0, std::tanh(xh[0] - z975 * sd), af.rho_hat,
                   std::tanh(xh[0] + z975 * sd)};
      af.rho_ci.sd = sd * (1.0 - af.rho_hat * af.rho_hat);
      af.tau_s_ci = detail::lognormal_summary("tau_S", xh[1], mode.cov(1, 1));
      af.tau_eps_ci = detail::lognormal_summary("tau_eps", xh[2], mode.cov(2, 2));
    }

    KronCore k;
    setup(xh, k);
    Eigen::MatrixXd as = qs_cov / af.tau_s_hat;
    Eigen::MatrixXd at = detail::ar1_stationary_cov(n_times, af.rho_hat);
    std::vector<Eigen::MatrixXd> xst;
    for (Eigen::Index c = 0; c < x_agg.cols(); ++c) {
      Eigen::VectorXd col = x_agg.col(c);
      xst.push_back(Eigen::Map<Eigen::MatrixXd>(col.data(), nr, n_times));
    }
    LatentPosterior post = detail::kron_posterior(k, data, eps, as, at, as.diagonal(),
                                                  at.diagonal(), xst);
    af.beta_mean = post.beta_mean;
    af.beta_cov = post.beta_cov;
    for (Eigen::Index i = 0; i < af.beta_mean.size(); ++i) {
      af.beta_post.push_back(detail::normal_summary("beta" + std::to_string(i), af.beta_mean[i],
                                                    af.beta_cov(i, i)));
    }
    af.cell_mean = post.mean;
    af.cell_sd = post.var.cwiseSqrt();
    af.besag_mean = post.mean - x_agg * post.beta_mean;
    return af;
  }

  // Piecewise-constant duplication of cell values onto the interior fine
  // lattice of a uniform projection.
  inline Eigen::VectorXd duplicate_to_fine(Eigen::VectorXd const& cell, Projection const& p) {
    if (p.scheme.s_f == 0 || !p.complete()) {
      throw ValidationError("duplication needs a complete uniform projection");
    }
    auto const& s = p.spec;
    Eigen::VectorXd out(s.interior_nodes());
    int nr = static_cast<int>(p.regions.size());
    for (int t = 0; t < s.nt; ++t) {
      for (int iy = 0; iy < s.ny; ++iy) {
        for (int ix = 0; ix < s.nx; ++ix) {
          int region = (iy / p.scheme.s_f) * p.regions_x + ix / p.scheme.s_f;
          int row = (t / p.scheme.t_f) * nr + region;
          out[(t * s.ny + iy) * s.nx + ix] = cell[row];
        }
      }
    }
    return out;
  }

  // Convenience: fit the areal model to an aggregated observation model and
  // duplicate the cell posterior onto the fine lattice.
  inline ArealFit fit_areal(ObsModel const& o, ArealOptions const& opts = {}) {
    if (o.P.scheme.s_f == 0 || !o.P.complete()) {
      throw ValidationError("areal baseline needs a complete uniform aggregation");
    }
    Adjacency adj = rook_adjacency(o.P.regions_x, o.P.regions_y);
    ArealFit af = fit_areal(o.y, o.X_agg, adj, static_cast<int>(o.P.windows.size()), opts);
    LatticeSpec is = detail::interior_spec(o.P.spec);
    Eigen::VectorXd m = duplicate_to_fine(af.cell_mean, o.P);
    Eigen::VectorXd sd = duplicate_to_fine(af.cell_sd, o.P);
    af.fine.mean = Field(is, m);
    af.fine.sd = Field(is, sd);
    af.fine.lo = Field(is, m - z975 * sd);
    af.fine.hi = Field(is, m + z975 * sd);
    af.fine.weights = {1.0};
    af.fine.comp_mean = {m};
    af.fine.comp_sd = {sd};
    return af;
  }

} // end of namespace stdisagg
