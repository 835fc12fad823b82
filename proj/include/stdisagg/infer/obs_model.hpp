#pragma once

//
// ... Standard header files
//
#include <array>
#include <cmath>
#include <string>

//
// ... External header files
//
#include <Eigen/Dense>

//
// ... stdisagg header files
//
#include <stdisagg/aggregate.hpp>
#include <stdisagg/errors.hpp>
#include <stdisagg/stmodel.hpp>

namespace stdisagg {

  // Free hyperparameters, optimised on the log scale.
  struct Hyper {
    double sigma2 = 1.0;
    double range_s = 1.0;
    double range_t = 1.0;
    double tau_eps = 1.0;

    static constexpr int size = 4;
    static constexpr std::array<char const*, 4> names{"sigma2", "range_s", "range_t",
                                                      "tau_eps"};

    Eigen::Vector4d to_log() const {
      return {std::log(sigma2), std::log(range_s), std::log(range_t), std::log(tau_eps)};
    }
    static Hyper from_log(Eigen::Vector4d const& v) {
      return {std::exp(v[0]), std::exp(v[1]), std::exp(v[2]), std::exp(v[3])};
    }
    double operator[](int i) const {
      return i == 0 ? sigma2 : i == 1 ? range_s : i == 2 ? range_t : tau_eps;
    }
    static Hyper of(ModelSpec const& m) {
      return {m.sigma2, m.range_s, m.range_t, m.tau_eps};
    }
    ModelSpec apply(ModelSpec m) const {
      m.sigma2 = sigma2;
      m.range_s = range_s;
      m.range_t = range_t;
      m.tau_eps = tau_eps;
      return m;
    }
  };

  // Everything the likelihood needs. Rows of y, X_agg and P agree; missing
  // cells are simply absent. X_fine (intercept + covariates, one row per
  // lattice node) drives prediction.
  struct ObsModel {
    Eigen::VectorXd y;
    Eigen::MatrixXd X_agg;
    Projection P;
    Eigen::MatrixXd X_fine;
    ModelSpec model;
    double beta_prior_precision = 1e-6;

    int n_obs() const { return static_cast<int>(y.size()); }
    int n_fixed() const { return static_cast<int>(X_agg.cols()); }

    void validate() const {
      if (y.size() != P.rows() || X_agg.rows() != y.size()) {
        throw DimensionMismatch("y, X_agg and P rows differ");
      }
      if (X_fine.rows() != P.cols() || X_fine.cols() != X_agg.cols()) {
        throw DimensionMismatch("fine design does not match the lattice");
      }
      if (!y.allFinite()) { throw ValidationError("non-finite observation"); }
      if (!(beta_prior_precision > 0.0)) {
        throw ValidationError("beta prior precision must be positive");
      }
    }
  };

  // Intercept-only observation model over a projection; covariates (fine,
  // one column each) are aggregated through P.
  inline ObsModel make_obs_model(Eigen::VectorXd y, Projection p, ModelSpec m,
                                 Eigen::MatrixXd const& covariates = Eigen::MatrixXd()) {
    ObsModel o;
    o.X_agg = aggregate_covariates(covariates, p);
    o.X_fine = fine_design(covariates, p.cols());
    o.y = std::move(y);
    o.P = std::move(p);
    o.model = m;
    o.validate();
    return o;
  }

  // Drop missing (NaN) cells.
  inline ObsModel drop_missing(ObsModel const& o) {
    std::vector<int> keep;
    for (int i = 0; i < o.y.size(); ++i) {
      if (std::isfinite(o.y[i])) { keep.push_back(i); }
    }
    ObsModel r = o;
    r.P = o.P.subset(keep);
    r.y.resize(static_cast<Eigen::Index>(keep.size()));
    r.X_agg.resize(static_cast<Eigen::Index>(keep.size()), o.X_agg.cols());
    for (std::size_t k = 0; k < keep.size(); ++k) {
      r.y[static_cast<Eigen::Index>(k)] = o.y[keep[k]];
      r.X_agg.row(static_cast<Eigen::Index>(k)) = o.X_agg.row(keep[k]);
    }
    return r;
  }

} // end of namespace stdisagg
