#pragma once

//
// ... Standard header files
//
#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

//
// ... External header files
//
#include <Eigen/Dense>

namespace stdisagg {

  struct NelderMeadOptions {
    int max_iter = 400;
    double ftol = 1e-5;  // spread of function values over the simplex
    double xtol = 1e-3;  // largest vertex distance from the best vertex
    double step = 0.5;   // initial simplex edge
  };

  struct NelderMeadResult {
    Eigen::VectorXd x;
    double f = std::numeric_limits<double>::infinity();
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
  };

  // Minimise f. trace(iter, best_x, best_f) is called once per iteration.
  inline NelderMeadResult nelder_mead(
      std::function<double(Eigen::VectorXd const&)> const& f, Eigen::VectorXd const& x0,
      NelderMeadOptions const& o = {},
      std::function<void(int, Eigen::VectorXd const&, double)> const& trace = nullptr) {
    int n = static_cast<int>(x0.size());
    NelderMeadResult res;
    auto eval = [&](Eigen::VectorXd const& x) {
      ++res.evaluations;
      double v = f(x);
      return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
    };
    std::vector<Eigen::VectorXd> s(n + 1, x0);
    std::vector<double> fv(n + 1);
    for (int i = 0; i < n; ++i) { s[i + 1][i] += o.step; }
    for (int i = 0; i <= n; ++i) { fv[i] = eval(s[i]); }
    std::vector<int> ord(n + 1);

    for (res.iterations = 0; res.iterations < o.max_iter; ++res.iterations) {
      std::iota(ord.begin(), ord.end(), 0);
      std::stable_sort(ord.begin(), ord.end(), [&](int a, int b) { return fv[a] < fv[b]; });
      int best = ord[0], worst = ord[n], second = ord[n - 1];
      if (trace) { trace(res.iterations, s[best], fv[best]); }
      double fspread = fv[worst] - fv[best];
      double xspread = 0.0;
      for (int i = 0; i <= n; ++i) {
        xspread = std::max(xspread, (s[i] - s[best]).lpNorm<Eigen::Infinity>());
      }
      if (std::isfinite(fspread) && fspread < o.ftol && xspread < o.xtol) {
        res.converged = true;
        break;
      }
      Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
      for (int i = 0; i <= n; ++i) {
        if (i != worst) { c += s[i]; }
      }
      c /= n;
      Eigen::VectorXd xr = c + (c - s[worst]);
      double fr = eval(xr);
      if (fr < fv[best]) {
        Eigen::VectorXd xe = c + 2.0 * (c - s[worst]);
        double fe = eval(xe);
        if (fe < fr) {
          s[worst] = xe;
          fv[worst] = fe;
        } else {
          s[worst] = xr;
          fv[worst] = fr;
        }
      } else if (fr < fv[second]) {
        s[worst] = xr;
        fv[worst] = fr;
      } else {
        // contraction, outside or inside
        bool outside = fr < fv[worst];
        Eigen::VectorXd xc = outside ? Eigen::VectorXd(c + 0.5 * (xr - c))
                                     : Eigen::VectorXd(c + 0.5 * (s[worst] - c));
        double fc = eval(xc);
        if (fc < (outside ? fr : fv[worst])) {
          s[worst] = xc;
          fv[worst] = fc;
        } else {
          for (int i = 0; i <= n; ++i) {
            if (i == best) { continue; }
            s[i] = s[best] + 0.5 * (s[i] - s[best]);
            fv[i] = eval(s[i]);
          }
        }
      }
    }
    int best = static_cast<int>(std::min_element(fv.begin(), fv.end()) - fv.begin());
    res.x = s[best];
    res.f = fv[best];
    return res;
  }

  // Central-difference Hessian of f at x with step h in every coordinate:
  // 1 + 2n + 2n(n-1) evaluations (33 for n = 4).
  inline Eigen::MatrixXd fd_hessian(std::function<double(Eigen::VectorXd const&)> const& f,
                                    Eigen::VectorXd const& x, double h, double f0) {
    int n = static_cast<int>(x.size());
    Eigen::MatrixXd hs(n, n);
    auto at = [&](int i, double di, int j, double dj) {
      Eigen::VectorXd y = x;
      y[i] += di;
      if (j >= 0) { y[j] += dj; }
      return f(y);
    };
    for (int i = 0; i < n; ++i) {
      hs(i, i) = (at(i, h, -1, 0) - 2.0 * f0 + at(i, -h, -1, 0)) / (h * h);
    }
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        double v = (at(i, h, j, h) - at(i, h, j, -h) - at(i, -h, j, h) + at(i, -h, j, -h)) /
                   (4.0 * h * h);
        hs(i, j) = hs(j, i) = v;
      }
    }
    return hs;
  }

  // Mode of a negative log density plus the Laplace covariance from the
  // Hessian there. Flat or non-convex directions get variance 100.
  struct ModeResult {
    NelderMeadResult nm;
    Eigen::MatrixXd cov;
    bool hessian_ok = true;
    double seconds_optimize = 0.0, seconds_hessian = 0.0;
  };

  inline ModeResult find_mode(
      std::function<double(Eigen::VectorXd const&)> const& f, Eigen::VectorXd const& x0,
      NelderMeadOptions const& o, double hstep,
      std::function<void(int, Eigen::VectorXd const&, double)> const& trace = nullptr) {
    ModeResult r;
    auto t0 = std::chrono::steady_clock::now();
    r.nm = nelder_mead(f, x0, o, trace);
    auto t1 = std::chrono::steady_clock::now();
    if (std::isfinite(r.nm.f)) {
      Eigen::MatrixXd hs = fd_hessian(f, r.nm.x, hstep, r.nm.f);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hs);
      Eigen::VectorXd ev = es.eigenvalues();
      r.hessian_ok = ev.allFinite() && ev.minCoeff() > 0.0;
      Eigen::VectorXd inv = ev.unaryExpr([](double e) {
        return std::isfinite(e) && e > 1e-2 ? 1.0 / e : 100.0;
      });
      r.cov = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
    }
    auto t2 = std::chrono::steady_clock::now();
    r.seconds_optimize = std::chrono::duration<double>(t1 - t0).count();
    r.seconds_hessian = std::chrono::duration<double>(t2 - t1).count();
    return r;
  }

} // end of namespace stdisagg
