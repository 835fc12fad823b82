#pragma once

//
// ... Standard header files
//
#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

//
// ... External header files
//
#include <Eigen/Dense>

//
// ... stdisagg header files
//
#include <stdisagg/errors.hpp>
#include <stdisagg/infer/engines.hpp>
#include <stdisagg/infer/obs_model.hpp>
#include <stdisagg/infer/optimize.hpp>
#include <stdisagg/lattice.hpp>

namespace stdisagg {

  inline constexpr double z975 = 1.959963984540054;

  inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

  struct LogNormalPenalty {
    bool on = false;
    double mean_log = 0.0;
    double sd_log = 1.0;
  };

  struct FitOptions {
    std::optional<Hyper> init;
    NelderMeadOptions nm;
    EngineChoice engine = EngineChoice::automatic;
    double hessian_step = 0.02;
    bool integrate = false;
    std::array<LogNormalPenalty, 4> penalties{};
    // box on the log parameters; unset means derived from the data
    std::optional<Eigen::Vector4d> lower, upper;
  };

  struct ParamSummary {
    std::string name;
    double mean = 0, sd = 0, lo = 0, median = 0, hi = 0;
  };

  struct TraceRow {
    int iter;
    double loglik;
    Hyper hyper;
  };

  // Fine-lattice prediction on interior nodes (unbuffered lattice).
  struct Prediction {
    Field mean, sd, lo, hi;
    // mixture components when integrated over hyperparameters
    std::vector<double> weights;
    std::vector<Eigen::VectorXd> comp_mean, comp_sd;
  };

  struct FitResult {
    ModelSpec theta_hat;
    Hyper hyper;
    Eigen::Vector4d log_hat;
    Eigen::Matrix4d log_cov;
    bool hessian_ok = true;
    std::vector<ParamSummary> theta_ci;
    std::vector<ParamSummary> beta_post;
    Eigen::VectorXd beta_mean;
    Eigen::MatrixXd beta_cov;
    Prediction pred;
    double loglik = 0.0;
    bool converged = false;
    int iterations = 0;
    int evaluations = 0;
    std::vector<TraceRow> opt_trace;
    std::string engine;
    double seconds_optimize = 0.0, seconds_hessian = 0.0, seconds_predict = 0.0;

    Field const& latent_mean() const { return pred.mean; }
    Field const& latent_sd() const { return pred.sd; }
  };

  namespace detail {

    inline double sample_var(Eigen::VectorXd const& y) {
      double m = y.mean();
      return (y.array() - m).square().sum() / std::max<double>(1.0, static_cast<double>(y.size()) - 1);
    }

    inline Hyper default_init(ObsModel const& o) {
      auto const& s = o.P.spec;
      double v = sample_var(o.y);
      double w = std::max(s.nx * s.dx, s.ny * s.dy);
      return {v / 2.0, w / 4.0, s.nt * s.dt / 4.0, 2.0 / v};
    }

    inline void default_bounds(ObsModel const& o, Eigen::Vector4d& lo, Eigen::Vector4d& hi) {
      auto const& s = o.P.spec;
      double lv = std::log(sample_var(o.y));
      double w = std::max(s.nx * s.dx, s.ny * s.dy);
      lo << lv - 14.0, std::log(0.5 * std::min(s.dx, s.dy)), std::log(0.1 * s.dt), -lv - 7.0;
      hi << lv + 7.0, std::log(10.0 * w), std::log(50.0 * s.nt * s.dt), -lv + 18.0;
    }

    inline ParamSummary lognormal_summary(std::string name, double m, double v) {
      double sd = std::sqrt(std::max(v, 0.0));
      ParamSummary p;
      p.name = std::move(name);
      p.median = std::exp(m);
      p.lo = std::exp(m - z975 * sd);
      p.hi = std::exp(m + z975 * sd);
      p.mean = std::exp(m + 0.5 * sd * sd);
      p.sd = p.mean * std::sqrt(std::expm1(sd * sd));
      return p;
    }

    inline ParamSummary normal_summary(std::string name, double m, double v) {
      double sd = std::sqrt(std::max(v, 0.0));
      return {std::move(name), m, sd, m - z975 * sd, m, m + z975 * sd};
    }

    inline LatticeSpec interior_spec(LatticeSpec s) {
      s.buffer = 0;
      return s;
    }

    // Quantile of a Gaussian mixture by bisection.
    inline double mixture_quantile(double p, std::vector<double> const& w,
                                   std::vector<double> const& m, std::vector<double> const& sd) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (std::size_t k = 0; k < w.size(); ++k) {
        lo = std::min(lo, m[k] - 10.0 * sd[k] - 1e-12);
        hi = std::max(hi, m[k] + 10.0 * sd[k] + 1e-12);
      }
      auto cdf = [&](double x) {
        double c = 0.0;
        for (std::size_t k = 0; k < w.size(); ++k) {
          c += w[k] * (sd[k] > 0 ? normal_cdf((x - m[k]) / sd[k]) : (x >= m[k] ? 1.0 : 0.0));
        }
        return c;
      };
      for (int it = 0; it < 100 && hi - lo > 1e-12 * (1.0 + std::abs(lo) + std::abs(hi)); ++it) {
        double mid = 0.5 * (lo + hi);
        (cdf(mid) < p ? lo : hi) = mid;
      }
      return 0.5 * (lo + hi);
    }

  } // end of namespace detail

  // Posterior prediction at every interior node. Without integration the
  // hyperparameters are fixed at the mode; with it, a 5-point grid along
  // the leading eigendirection of the log-scale covariance, weighted by the
  // marginal likelihood, mixes the Gaussian conditionals.
  inline Prediction predict_fine(ObsModel const& o, FitResult const& fr, bool integrate,
                                 EngineChoice engine = EngineChoice::automatic) {
    auto eng = make_engine(o, engine);
    LatticeSpec is = detail::interior_spec(o.P.spec);
    Prediction p;
    if (!integrate) {
      LatentPosterior post = eng->posterior(fr.hyper);
      Eigen::VectorXd sd = post.var.cwiseSqrt();
      p.mean = Field(is, post.mean);
      p.sd = Field(is, sd);
      p.lo = Field(is, post.mean - z975 * sd);
      p.hi = Field(is, post.mean + z975 * sd);
      p.weights = {1.0};
      p.comp_mean = {post.mean};
      p.comp_sd = {sd};
      return p;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(fr.log_cov);
    Eigen::Vector4d dir = es.eigenvectors().col(3) * std::sqrt(std::max(es.eigenvalues()[3], 0.0));
    std::vector<double> lls;
    for (int z = -2; z <= 2; ++z) {
      Hyper h = Hyper::from_log(fr.log_hat + z * dir);
      try {
        LatentPosterior post = eng->posterior(h);
        lls.push_back(eng->loglik(h));
        p.comp_mean.push_back(post.mean);
        p.comp_sd.push_back(post.var.cwiseSqrt());
      } catch (NumericalError const&) {
        continue;
      }
    }
    double mx = *std::max_element(lls.begin(), lls.end());
    double tot = 0.0;
    for (double l : lls) {
      p.weights.push_back(std::exp(l - mx));
      tot += p.weights.back();
    }
    for (double& w : p.weights) { w /= tot; }
    Eigen::Index n = p.comp_mean[0].size();
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(n), m2 = Eigen::VectorXd::Zero(n);
    for (std::size_t k = 0; k < p.weights.size(); ++k) {
      mean += p.weights[k] * p.comp_mean[k];
      m2 += p.weights[k] * (p.comp_sd[k].array().square() + p.comp_mean[k].array().square()).matrix();
    }
    Eigen::VectorXd sd = (m2 - mean.cwiseProduct(mean)).cwiseMax(0.0).cwiseSqrt();
    Eigen::VectorXd lo(n), hi(n);
    std::vector<double> mk(p.weights.size()), sk(p.weights.size());
    for (Eigen::Index i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < p.weights.size(); ++k) {
        mk[k] = p.comp_mean[k][i];
        sk[k] = p.comp_sd[k][i];
      }
      lo[i] = detail::mixture_quantile(0.025, p.weights, mk, sk);
      hi[i] = detail::mixture_quantile(0.975, p.weights, mk, sk);
    }
    p.mean = Field(is, mean);
    p.sd = Field(is, sd);
    p.lo = Field(is, lo);
    p.hi = Field(is, hi);
    return p;
  }

  // Empirical-Bayes fit: Nelder-Mead on the log hyperparameters, Hessian at
  // the mode, Laplace intervals, then prediction.
  inline FitResult fit(ObsModel const& obs, FitOptions const& opts = {}) {
    obs.validate();
    if (obs.n_obs() < 2) { throw DegenerateData("fewer than two observed cells"); }
    double vy = detail::sample_var(obs.y);
    if (!(vy > 1e-300)) { throw DegenerateData("observations are constant"); }

    auto eng = make_engine(obs, opts.engine);
    Eigen::Vector4d lo, hi;
    detail::default_bounds(obs, lo, hi);
    if (opts.lower) { lo = *opts.lower; }
    if (opts.upper) { hi = *opts.upper; }
    Hyper h0 = opts.init ? *opts.init : detail::default_init(obs);
    Eigen::Vector4d x0 = h0.to_log().cwiseMax(lo).cwiseMin(hi);

    auto penalty = [&](Eigen::VectorXd const& x) {
      double pen = 0.0;
      for (int i = 0; i < 4; ++i) {
        auto const& q = opts.penalties[i];
        if (q.on) {
          double z = (x[i] - q.mean_log) / q.sd_log;
          pen += 0.5 * z * z;
        }
      }
      return pen;
    };
    // objective: negative (penalised) log marginal likelihood
    auto objective = [&](Eigen::VectorXd const& x) {
      double out = 0.0;
      for (int i = 0; i < 4; ++i) {
        out += std::max(0.0, lo[i] - x[i]) + std::max(0.0, x[i] - hi[i]);
      }
      if (out > 0.0) { return 1e10 * (1.0 + out); }
      try {
        return -eng->loglik(Hyper::from_log(x)) + penalty(x);
      } catch (Error const&) {
        return std::numeric_limits<double>::infinity();
      }
    };

    FitResult fr;
    fr.engine = eng->name();
    ModeResult mode = find_mode(objective, x0, opts.nm, opts.hessian_step,
                                [&](int it, Eigen::VectorXd const& x, double f) {
                                  fr.opt_trace.push_back({it, -f, Hyper::from_log(x)});
                                });
    auto const& nm = mode.nm;
    if (!std::isfinite(nm.f)) { throw NonFiniteLikelihood("no finite likelihood found"); }
    fr.converged = nm.converged;
    fr.iterations = nm.iterations;
    fr.evaluations = nm.evaluations;
    fr.log_hat = nm.x;
    fr.hyper = Hyper::from_log(nm.x);
    fr.theta_hat = fr.hyper.apply(obs.model);
    fr.loglik = eng->loglik(fr.hyper);
    fr.log_cov = mode.cov;
    fr.hessian_ok = mode.hessian_ok;
    fr.seconds_optimize = mode.seconds_optimize;
    fr.seconds_hessian = mode.seconds_hessian;
    auto t2 = std::chrono::steady_clock::now();
    for (int i = 0; i < 4; ++i) {
      fr.theta_ci.push_back(detail::lognormal_summary(Hyper::names[i], fr.log_hat[i], fr.log_cov(i, i)));
    }

    LatentPosterior post = eng->posterior(fr.hyper);
    fr.beta_mean = post.beta_mean;
    fr.beta_cov = post.beta_cov;
    for (Eigen::Index i = 0; i < fr.beta_mean.size(); ++i) {
      fr.beta_post.push_back(detail::normal_summary("beta" + std::to_string(i), fr.beta_mean[i],
                                                    fr.beta_cov(i, i)));
    }
    LatticeSpec is = detail::interior_spec(obs.P.spec);
    if (opts.integrate) {
      fr.pred = predict_fine(obs, fr, true, opts.engine);
    } else {
      Eigen::VectorXd sd = post.var.cwiseSqrt();
      fr.pred.mean = Field(is, post.mean);
      fr.pred.sd = Field(is, sd);
      fr.pred.lo = Field(is, post.mean - z975 * sd);
      fr.pred.hi = Field(is, post.mean + z975 * sd);
      fr.pred.weights = {1.0};
      fr.pred.comp_mean = {post.mean};
      fr.pred.comp_sd = {sd};
    }
    auto t3 = std::chrono::steady_clock::now();
    fr.seconds_predict = std::chrono::duration<double>(t3 - t2).count();
    if (!std::isfinite(fr.loglik)) { throw NonFiniteLikelihood("at the mode"); }
    return fr;
  }

  // Posterior at fixed hyperparameters (no optimisation). The hyperparameter
  // summaries are point masses.
  inline FitResult condition_on(ObsModel const& obs, Hyper const& h,
                                EngineChoice engine = EngineChoice::automatic) {
    obs.validate();
    auto eng = make_engine(obs, engine);
    FitResult fr;
    fr.engine = eng->name();
    fr.hyper = h;
    fr.log_hat = h.to_log();
    fr.log_cov.setZero();
    fr.theta_hat = h.apply(obs.model);
    fr.loglik = eng->loglik(h);
    fr.converged = true;
    for (int i = 0; i < 4; ++i) {
      fr.theta_ci.push_back({Hyper::names[i], h[i], 0.0, h[i], h[i], h[i]});
    }
    auto t0 = std::chrono::steady_clock::now();
    LatentPosterior post = eng->posterior(h);
    fr.beta_mean = post.beta_mean;
    fr.beta_cov = post.beta_cov;
    for (Eigen::Index i = 0; i < fr.beta_mean.size(); ++i) {
      fr.beta_post.push_back(detail::normal_summary("beta" + std::to_string(i), fr.beta_mean[i],
                                                    fr.beta_cov(i, i)));
    }
    LatticeSpec is = detail::interior_spec(obs.P.spec);
    Eigen::VectorXd sd = post.var.cwiseSqrt();
    fr.pred.mean = Field(is, post.mean);
    fr.pred.sd = Field(is, sd);
    fr.pred.lo = Field(is, post.mean - z975 * sd);
    fr.pred.hi = Field(is, post.mean + z975 * sd);
    fr.pred.weights = {1.0};
    fr.pred.comp_mean = {post.mean};
    fr.pred.comp_sd = {sd};
    fr.seconds_predict = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return fr;
  }

  // Pr{w > c} per interior node.
  inline Field exceedance(Prediction const& p, double c) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(p.mean.values.size());
    for (std::size_t k = 0; k < p.weights.size(); ++k) {
      for (Eigen::Index i = 0; i < out.size(); ++i) {
        double m = p.comp_mean[k][i], s = p.comp_sd[k][i];
        double e = s > 0 ? normal_cdf((m - c) / s) : (m > c ? 1.0 : 0.0);
        out[i] += p.weights[k] * e;
      }
    }
    return Field(p.mean.spec, out.cwiseMax(0.0).cwiseMin(1.0));
  }

  inline Field exceedance(FitResult const& fr, double c) { return exceedance(fr.pred, c); }

} // end of namespace stdisagg
