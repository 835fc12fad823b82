// Acceptance checks. One PASS/FAIL line per criterion; tolerances are fixed
// here. The exit code is 0 whenever every check ran (failures are reported,
// not hidden), and 1 if a check could not be evaluated at all.

//
// ... Standard header files
//
#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

//
// ... External header files
//
#include <CLI11.hpp>

//
// ... stdisagg header files
//
#include <stdisagg/infer.hpp>
#include <stdisagg/simstudy.hpp>
#include <stdisagg/version.hpp>

#include "support/dense_oracle.hpp"

using namespace stdisagg;

namespace {

  using Clock = std::chrono::steady_clock;

  double since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
  }

  struct Report {
    std::ofstream file;
    int passed = 0, failed = 0;

    void line(bool ok, std::string const& name, std::string const& detail) {
      std::string s = std::string(ok ? "PASS " : "FAIL ") + name + ": " + detail;
      std::cout << s << std::endl;
      if (file) { file << s << "\n" << std::flush; }
      (ok ? passed : failed) += 1;
    }
    void note(std::string const& s) {
      std::cout << "  " << s << std::endl;
      if (file) { file << "  " << s << "\n" << std::flush; }
    }
  };

  std::string fmt(char const* f, auto... a) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, a...);
    return buf;
  }

  // ---------------------------------------------------------------- tables
  // Reference RMSE cells, indexed [s_f][t_f][level]; level = weak, moderate,
  // strong. Separable: areal and continuous; non-separable: continuous.
  struct Cell {
    double areal, cont;
  };
  std::map<std::array<int, 3>, Cell> const table_sep = {
      {{2, 2, 0}, {0.184, 0.175}}, {{2, 2, 1}, {0.189, 0.172}}, {{2, 2, 2}, {0.165, 0.143}},
      {{2, 3, 0}, {0.197, 0.191}}, {{2, 3, 1}, {0.204, 0.191}}, {{2, 3, 2}, {0.175, 0.155}},
      {{2, 4, 0}, {0.203, 0.199}}, {{2, 4, 1}, {0.213, 0.203}}, {{2, 4, 2}, {0.183, 0.163}},
      {{3, 2, 0}, {0.197, 0.189}}, {{3, 2, 1}, {0.209, 0.192}}, {{3, 2, 2}, {0.192, 0.171}},
      {{3, 3, 0}, {0.205, 0.201}}, {{3, 3, 1}, {0.221, 0.208}}, {{3, 3, 2}, {0.200, 0.180}},
      {{3, 4, 0}, {0.209, 0.208}}, {{3, 4, 1}, {0.227, 0.217}}, {{3, 4, 2}, {0.206, 0.188}},
      {{4, 2, 0}, {0.207, 0.206}}, {{4, 2, 1}, {0.224, 0.209}}, {{4, 2, 2}, {0.210, 0.192}},
      {{4, 3, 0}, {0.211, 0.214}}, {{4, 3, 1}, {0.232, 0.223}}, {{4, 3, 2}, {0.217, 0.200}},
      {{4, 4, 0}, {0.213, 0.220}}, {{4, 4, 1}, {0.237, 0.229}}, {{4, 4, 2}, {0.223, 0.207}},
      {{6, 2, 0}, {0.213, 0.221}}, {{6, 2, 1}, {0.239, 0.232}}, {{6, 2, 2}, {0.233, 0.222}},
      {{6, 3, 0}, {0.215, 0.232}}, {{6, 3, 1}, {0.243, 0.240}}, {{6, 3, 2}, {0.237, 0.227}},
      {{6, 4, 0}, {0.216, 0.238}}, {{6, 4, 1}, {0.245, 0.247}}, {{6, 4, 2}, {0.241, 0.233}},
      {{8, 2, 0}, {0.215, 0.232}}, {{8, 2, 1}, {0.244, 0.246}}, {{8, 2, 2}, {0.246, 0.241}},
      {{8, 3, 0}, {0.219, 0.235}}, {{8, 3, 1}, {0.247, 0.251}}, {{8, 3, 2}, {0.250, 0.246}},
      {{8, 4, 0}, {0.219, 0.246}}, {{8, 4, 1}, {0.249, 0.258}}, {{8, 4, 2}, {0.253, 0.251}},
  };
  std::map<std::array<int, 3>, double> const table_nonsep = {
      {{2, 2, 0}, 0.1526}, {{2, 2, 1}, 0.1544}, {{2, 2, 2}, 0.1406},
      {{2, 3, 0}, 0.1713}, {{2, 3, 1}, 0.1711}, {{2, 3, 2}, 0.1511},
      {{2, 4, 0}, 0.1810}, {{2, 4, 1}, 0.1834}, {{2, 4, 2}, 0.1591},
      {{3, 2, 0}, 0.1667}, {{3, 2, 1}, 0.1732}, {{3, 2, 2}, 0.1641},
      {{3, 3, 0}, 0.1808}, {{3, 3, 1}, 0.1877}, {{3, 3, 2}, 0.1732},
      {{3, 4, 0}, 0.1896}, {{3, 4, 1}, 0.1975}, {{3, 4, 2}, 0.1803},
      {{4, 2, 0}, 0.1799}, {{4, 2, 1}, 0.1895}, {{4, 2, 2}, 0.1845},
      {{4, 3, 0}, 0.1946}, {{4, 3, 1}, 0.2025}, {{4, 3, 2}, 0.1926},
      {{4, 4, 0}, 0.1982}, {{4, 4, 1}, 0.2104}, {{4, 4, 2}, 0.1981},
      {{6, 2, 0}, 0.2041}, {{6, 2, 1}, 0.2129}, {{6, 2, 2}, 0.2130},
      {{6, 3, 0}, 0.2104}, {{6, 3, 1}, 0.2238}, {{6, 3, 2}, 0.2196},
      {{6, 4, 0}, 0.2199}, {{6, 4, 1}, 0.2317}, {{6, 4, 2}, 0.2241},
      {{8, 2, 0}, 0.2158}, {{8, 2, 1}, 0.2317}, {{8, 2, 2}, 0.2304},
      {{8, 3, 0}, 0.2228}, {{8, 3, 1}, 0.2355}, {{8, 3, 2}, 0.2346},
      {{8, 4, 0}, 0.2255}, {{8, 4, 1}, 0.2429}, {{8, 4, 2}, 0.2405},
  };

  std::array<int, 3> key(ScenarioConfig const& c) {
    return {c.s_f, c.t_f, static_cast<int>(c.autocorr)};
  }
  std::string label(ScenarioConfig const& c) {
    return fmt("(%d,%d,%s)", c.s_f, c.t_f, to_string(c.autocorr).c_str());
  }

  // ------------------------------------------------------------ tolerances
  constexpr double tol_oracle = 1e-6;
  constexpr double max_oracle_seconds = 60.0;
  constexpr double tol_ar1 = 0.02;
  constexpr int ar1_samples = 10000;
  constexpr double range_target = 0.139, tol_range = 0.02;
  constexpr int range_samples = 4000;
  constexpr double tol_nonsep_rel = 0.05, min_violation = 0.01;
  constexpr double tol_band = 0.02;
  constexpr double ecp_lo = 0.85, ecp_hi = 0.99;
  constexpr double slack_width = 0.02;
  constexpr double min_param_cover = 0.80;
  constexpr double slack_rmse = 0.005;
  constexpr double min_sign_recovery = 0.80;

  // ---------------------------------------------------------------- checks

  void check_oracle(Report& rep) {
    auto t0 = Clock::now();
    struct Case {
      int nx, ny, nt, buf, sf, tf, ncov;
      ModelKind kind;
      TemporalScheme sch;
    };
    auto sep = ModelKind::Separable102;
    auto ns = ModelKind::NonSeparable121;
    auto ex = TemporalScheme::exact;
    auto ie = TemporalScheme::implicit_euler;
    std::vector<Case> cases{{4, 4, 3, 1, 2, 1, 1, sep, ex}, {4, 2, 4, 1, 2, 2, 1, ns, ex},
                            {6, 6, 2, 0, 3, 2, 2, sep, ex}, {3, 3, 5, 1, 3, 1, 0, ns, ie},
                            {6, 4, 3, 1, 2, 3, 1, ns, ex},  {4, 6, 2, 1, 1, 2, 0, sep, ex},
                            {2, 2, 6, 1, 2, 3, 1, ns, ie},  {5, 5, 2, 1, 5, 1, 1, ns, ex},
                            {4, 4, 3, 1, 4, 3, 0, sep, ex}, {6, 6, 4, 0, 2, 2, 1, ns, ie},
                            {2, 4, 3, 2, 2, 1, 0, ns, ex},  {4, 4, 4, 0, 2, 4, 1, sep, ex}};
    Rng rng(424242);
    double worst = 0.0;
    int n = 0;
    for (auto const& c : cases) {
      LatticeSpec s = build_lattice(c.nx, c.ny, c.nt, Extents{0, 1.2, 0, 0.9, 0, 1}, c.buf);
      ModelSpec m = oracle::spec_of(c.kind, c.sch);
      // random hyperparameters around the base values
      Normal z;
      m.sigma2 *= std::exp(0.5 * z(rng));
      m.range_s *= std::exp(0.3 * z(rng));
      m.range_t *= std::exp(0.3 * z(rng));
      m.tau_eps *= std::exp(0.5 * z(rng));
      ObsModel o = oracle::synthetic(m, s, {c.sf, c.tf}, c.ncov, derive_seed(9, n));
      Hyper h = Hyper::of(o.model);
      double ref = oracle::dense_oracle(o, h).loglik;
      double got = make_engine(o)->loglik(h);
      worst = std::max(worst, std::abs(got - ref));
      if (c.kind == sep || c.sch == ie) {
        worst = std::max(worst, std::abs(log_marginal_likelihood(o, h) - ref));
      }
      ++n;
    }
    double sec = since(t0);
    rep.line(worst <= tol_oracle && n >= 10 && sec < max_oracle_seconds, "dense-oracle equivalence",
             fmt("%d configs (<=200 nodes), max |dlogL| = %.2e (tol %.0e), %.1f s (< %.0f s)", n, worst,
                 tol_oracle, sec, max_oracle_seconds));
  }

  void check_kron(Report& rep) {
    auto s = build_lattice(4, 4, 3, {}, 0);
    ModelSpec m;
    m.kind = ModelKind::Separable102;
    m.sigma2 = 0.25;
    m.range_s = 0.2;
    m.range_t = 3.0;
    Mat q = build_precision(m, s).dense();
    auto f = separable_factors(m, s);
    Mat k = dense::kron(f.qt.dense(), f.qs.dense());
    double diff = (q - k).cwiseAbs().maxCoeff();
    rep.line(diff == 0.0, "separable precision = kron(Q_t, Q_s)",
             fmt("4x4x3 lattice, max |difference| = %.3g (exact equality required)", diff));
  }

  void check_ar1(Report& rep) {
    bool ok = true;
    std::string detail;
    auto s = build_lattice(4, 4, 2, {}, 0);
    for (double rt : {1.0, 3.0, 12.0}) {
      ModelSpec m;
      m.kind = ModelKind::Separable102;
      m.sigma2 = 0.25;
      m.range_s = 0.2;
      m.range_t = rt;
      LatentSampler smp(m, s);
      int g = s.spatial_nodes();
      int node = (s.gy() / 2) * s.gx() + s.gx() / 2;
      double sxy = 0, sxx = 0, syy = 0;
      for (int r = 0; r < ar1_samples; ++r) {
        Vec x = smp.sample(derive_seed(31, static_cast<std::uint64_t>(rt), r));
        sxy += x[node] * x[node + g];
        sxx += x[node] * x[node];
        syy += x[node + g] * x[node + g];
      }
      double corr = sxy / std::sqrt(sxx * syy);
      double target = rho_phi_map(rt);
      ok = ok && std::abs(corr - target) <= tol_ar1;
      detail += fmt("r_t=%g: %.4f vs %.4f; ", rt, corr, target);
    }
    rep.line(ok, "AR(1) mapping", detail + fmt("%d samples, tol %.2f", ar1_samples, tol_ar1));
  }

  void check_range(Report& rep) {
    bool ok = true;
    std::string detail;
    auto s = build_lattice(25, 25, 1, {0, 1, 0, 1}, 5);
    int c = s.gx() / 2;
    int lag = 5; // 0.2 / 0.04
    int a = c * s.gx() + c;
    std::vector<std::pair<int, int>> pairs{
        {a, a + lag}, {a, a - lag}, {a, a + lag * s.gx()}, {a, a - lag * s.gx()}};
    for (auto k : {ModelKind::Separable102, ModelKind::NonSeparable121}) {
      ModelSpec m;
      m.kind = k;
      m.sigma2 = 0.25;
      m.range_s = 0.2;
      m.range_t = 6.0;
      LatentSampler smp(m, s);
      double sxy = 0, sxx = 0, syy = 0;
      for (int r = 0; r < range_samples; ++r) {
        Vec x = smp.sample(derive_seed(77, static_cast<std::uint64_t>(k), r));
        for (auto [i, j] : pairs) {
          sxy += x[i] * x[j];
          sxx += x[i] * x[i];
          syy += x[j] * x[j];
        }
      }
      double corr = sxy / std::sqrt(sxx * syy);
      ok = ok && std::abs(corr - range_target) <= tol_range;
      detail += fmt("%s: %.4f; ", to_string(k).c_str(), corr);
    }
    rep.line(ok, "spatial range", detail + fmt("target %.3f +- %.2f, %d samples", range_target,
                                               tol_range, range_samples));
  }

  void check_nonsep(Report& rep) {
    ModelSpec m;
    m.kind = ModelKind::NonSeparable121;
    m.sigma2 = 0.25;
    m.range_s = 0.2;
    m.range_t = 6.0;
    // 12 cells per spatial range, window 4 ranges wide plus the buffer
    int cells = 12;
    int n = 4 * cells;
    double w = n * m.range_s / cells;
    auto s = build_lattice(n, n, 1, {0, w, 0, w, 0, 1}, 8);
    SpectralBasis b(s);
    ModalModel mm = build_modal(m, s, b);
    int c = s.gx() / 2;
    auto corr = [&](int dxc, int h) {
      return mm.covariance(c, c, c + dxc, c, h) /
             std::sqrt(mm.covariance(c, c, c, c, 0) * mm.covariance(c + dxc, c, c + dxc, c, 0));
    };
    struct Lag {
      int cells, t;
    };
    std::vector<Lag> lags{{6, 0}, {12, 0}, {0, 1}, {0, 3}, {6, 1}, {12, 2}};
    double worst = 0.0;
    std::string detail;
    for (auto l : lags) {
      double got = corr(l.cells, l.t);
      double ref = spectral_oracle(m, l.cells * s.dx, l.t);
      double rel = std::abs(got - ref) / std::abs(ref);
      worst = std::max(worst, rel);
      detail += fmt("(%.2f,%d) %.4f/%.4f; ", l.cells * s.dx, l.t, got, ref);
    }
    double viol_o = spectral_oracle(m, 0.1, 3) - spectral_oracle(m, 0.1, 0) * spectral_oracle(m, 0, 3);
    double viol_l = corr(6, 3) - corr(6, 0) * corr(0, 3);
    bool ok = worst <= tol_nonsep_rel && std::abs(viol_o) > min_violation &&
              std::abs(viol_l) > min_violation;
    rep.line(ok, "non-separable correlations vs spectral oracle",
             fmt("max rel err %.3f (tol %.2f) over 6 lags; separability violation at (0.1,3): "
                 "oracle %.4f, lattice %.4f (need > %.2f)",
                 worst, tol_nonsep_rel, viol_o, viol_l, min_violation));
    rep.note("lattice/oracle: " + detail);
  }

  // --------------------------------------------------------------- studies

  void check_tables(Report& rep, std::vector<MetricsReport> const& sep,
                    std::vector<MetricsReport> const& ns) {
    {
      bool ok = true;
      int nbad_c = 0, nbad_a = 0, nbad_o = 0;
      for (auto const& r : sep) {
        Cell ref = table_sep.at(key(r.cfg));
        bool bc = std::abs(r.rmse.mean - ref.cont) <= tol_band;
        bool ba = std::abs(r.rmse_areal.mean - ref.areal) <= tol_band;
        bool order = r.cfg.autocorr != Autocorr::strong || r.rmse.mean < r.rmse_areal.mean;
        nbad_c += !bc;
        nbad_a += !ba;
        nbad_o += !order;
        ok = ok && bc && ba && order && r.valid;
        rep.note(fmt("sep %-16s cont %.4f (ref %.3f)%s  areal %.4f (ref %.3f)%s%s  ok=%d/%d",
                     label(r.cfg).c_str(), r.rmse.mean, ref.cont, bc ? "" : " *",
                     r.rmse_areal.mean, ref.areal, ba ? "" : " *", order ? "" : " ORDER",
                     r.n_ok, r.cfg.replicates));
      }
      rep.line(ok, "separable RMSE bands",
               fmt("%zu scenarios; outside +-%.2f: continuous %d, areal %d; strong-level "
                   "ordering violations %d",
                   sep.size(), tol_band, nbad_c, nbad_a, nbad_o));
    }
    {
      bool ok = true;
      int nbad = 0;
      for (auto const& r : ns) {
        double ref = table_nonsep.at(key(r.cfg));
        bool b = std::abs(r.rmse.mean - ref) <= tol_band;
        nbad += !b;
        ok = ok && b && r.valid;
        rep.note(fmt("nonsep %-16s cont %.4f (ref %.4f)%s  ok=%d/%d", label(r.cfg).c_str(),
                     r.rmse.mean, ref, b ? "" : " *", r.n_ok, r.cfg.replicates));
      }
      rep.line(ok, "non-separable RMSE bands",
               fmt("%zu scenarios; outside +-%.2f: %d", ns.size(), tol_band, nbad));
    }
  }

  // Index a report list by (s_f, t_f, level).
  std::map<std::array<int, 3>, MetricsReport const*> index(std::vector<MetricsReport> const& v) {
    std::map<std::array<int, 3>, MetricsReport const*> out;
    for (auto const& r : v) { out[key(r.cfg)] = &r; }
    return out;
  }

  void check_calibration(Report& rep, std::vector<std::vector<MetricsReport> const*> const& all) {
    bool ok = true;
    double emin = 1.0, emax = 0.0;
    int width_bad = 0;
    for (auto const* v : all) {
      for (auto const& r : *v) {
        emin = std::min(emin, r.ecp.mean);
        emax = std::max(emax, r.ecp.mean);
        ok = ok && r.ecp.mean >= ecp_lo && r.ecp.mean <= ecp_hi;
      }
      auto ix = index(*v);
      for (auto const& [k, r] : ix) {
        // next larger s_f at the same t_f and level
        for (auto const& [k2, r2] : ix) {
          if (k2[1] == k[1] && k2[2] == k[2] && k2[0] > k[0]) {
            bool next = true;
            for (auto const& [k3, r3] : ix) {
              if (k3[1] == k[1] && k3[2] == k[2] && k3[0] > k[0] && k3[0] < k2[0]) { next = false; }
            }
            if (next && r2->width.mean < r->width.mean - slack_width) {
              ++width_bad;
              rep.note(fmt("width drop %s %s: %.4f -> %.4f", to_string(r->cfg.kind).c_str(),
                           label(r2->cfg).c_str(), r->width.mean, r2->width.mean));
            }
          }
        }
      }
    }
    ok = ok && width_bad == 0;
    rep.line(ok, "interval calibration",
             fmt("ECP range [%.3f, %.3f] (need within [%.2f, %.2f]); width monotone in s_f with "
                 "slack %.2f: %d violations",
                 emin, emax, ecp_lo, ecp_hi, slack_width, width_bad));
    for (auto const* v : all) {
      for (auto const& r : *v) {
        rep.note(fmt("%s %-16s ecp %.3f width %.3f | areal ecp %.3f width %.3f",
                     to_string(r.cfg.kind).c_str(), label(r.cfg).c_str(), r.ecp.mean, r.width.mean,
                     r.ecp_areal.mean, r.width_areal.mean));
      }
    }
  }

  void check_param_cover(Report& rep, std::vector<std::vector<MetricsReport> const*> const& all) {
    bool ok = true;
    std::string detail;
    bool found = false;
    for (auto const* v : all) {
      for (auto const& r : *v) {
        if (r.cfg.s_f != 2 || r.cfg.t_f != 2 || r.cfg.autocorr != Autocorr::strong) { continue; }
        found = true;
        detail += to_string(r.cfg.kind) + ":";
        for (int i = 0; i < 5; ++i) {
          ok = ok && r.param_cover[i] >= min_param_cover;
          detail += fmt(" %s %.2f", param_names[i], r.param_cover[i]);
        }
        detail += fmt(" (%d reps); ", r.n_ok);
      }
    }
    rep.line(ok && found, "parameter coverage at (2,2) strong",
             detail + fmt("need >= %.2f", min_param_cover));
    // reported, not asserted
    for (auto const* v : all) {
      for (auto const& r : *v) {
        std::string s = to_string(r.cfg.kind) + " " + label(r.cfg) + " cover";
        for (int i = 0; i < 5; ++i) { s += fmt(" %.2f", r.param_cover[i]); }
        rep.note(s);
      }
    }
  }

  void check_monotone(Report& rep, std::vector<std::vector<MetricsReport> const*> const& all) {
    int bad = 0, pairs = 0;
    for (auto const* v : all) {
      auto ix = index(*v);
      for (auto const& [k, r] : ix) {
        for (auto const& [k2, r2] : ix) {
          if (k2[2] != k[2]) { continue; }
          bool sf_step = k2[1] == k[1] && k2[0] > k[0];
          bool tf_step = k2[0] == k[0] && k2[1] > k[1];
          if (!sf_step && !tf_step) { continue; }
          ++pairs;
          if (r2->rmse.mean < r->rmse.mean - slack_rmse) {
            ++bad;
            rep.note(fmt("rmse drop %s %s -> %s: %.4f -> %.4f", to_string(r->cfg.kind).c_str(),
                         label(r->cfg).c_str(), label(r2->cfg).c_str(), r->rmse.mean,
                         r2->rmse.mean));
          }
        }
      }
    }
    rep.line(bad == 0, "RMSE monotone in each factor",
             fmt("%d ordered pairs, %d violations (slack %.3f)", pairs, bad, slack_rmse));
  }

  // ----------------------------------------------------- gridded analogue

  // Smooth synthetic elevation in km: a ridge along the northern edge and a
  // low plateau in the south.
  double elevation(double x, double y, double w, double h) {
    double ridge = 4.5 * std::exp(-std::pow((y - 0.92 * h) / (0.08 * h), 2));
    double plateau = 0.6 * std::exp(-std::pow((x - 0.35 * w) / (0.2 * w), 2) -
                                    std::pow((y - 0.3 * h) / (0.2 * h), 2));
    return 0.2 + ridge + plateau + 0.1 * std::sin(x / w * 6.0);
  }

  void check_gridded(Report& rep, int reps, int threads) {
    auto t0 = Clock::now();
    int cx = 17, cy = 18, ct = 20, sf = 3, tf = 3;
    double dx = 0.25;
    ModelSpec m;
    m.kind = ModelKind::Separable102;
    m.sigma2 = 0.16;
    m.range_s = 2.0;
    m.range_t = 12.0;
    m.tau_eps = 1.0 / (0.1 * 0.1);
    double beta0 = 3.0, beta1 = -0.08;
    int nx = cx * sf, ny = cy * sf, nt = ct * tf;
    auto s = build_lattice(nx, ny, nt, Extents{0, nx * dx, 0, ny * dx, 0, 1},
                           default_buffer(m.range_s, dx));
    Mat x(s.nodes(), 1);
    for (int i = 0; i < s.nodes(); ++i) {
      Coords c = node_coords(s, i);
      x(i, 0) = elevation(c.x, c.y, nx * dx, ny * dx);
    }
    Projection p = build_projection(s, {sf, tf});
    struct Out {
      bool ok = false, excl = false, neg = false, mono = false;
      double b1 = 0, lo = 0, hi = 0, sec = 0;
      std::string err;
    };
    std::vector<Out> out(static_cast<std::size_t>(reps));
    std::atomic<int> next{0};
    auto worker = [&]() {
      for (int r = next++; r < reps; r = next++) {
        auto t1 = Clock::now();
        Out& o = out[static_cast<std::size_t>(r)];
        try {
          Field w = simulate_field(m, s, {beta0, beta1}, x, derive_seed(2024, 11, r));
          Vec y = aggregate_observe(w, p, m.tau_eps, derive_seed(2024, 12, r));
          ObsModel obs = make_obs_model(y, p, m, x);
          FitResult fr = fit(obs);
          auto const& b = fr.beta_post.at(1);
          o.b1 = b.mean;
          o.lo = b.lo;
          o.hi = b.hi;
          o.excl = b.hi < 0.0 || b.lo > 0.0;
          o.neg = b.hi < 0.0;
          Field e1 = exceedance(fr, 2.5), e2 = exceedance(fr, 3.0), e3 = exceedance(fr, 3.5);
          o.mono = (e1.values.array() >= e2.values.array()).all() &&
                   (e2.values.array() >= e3.values.array()).all();
          o.ok = true;
        } catch (Error const& e) {
          o.err = e.what();
        }
        o.sec = since(t1);
      }
    };
    std::vector<std::thread> pool;
    for (int i = 0; i < std::max(1, std::min(threads, reps)); ++i) { pool.emplace_back(worker); }
    for (auto& t : pool) { t.join(); }
    int hits = 0, mono = 0, okc = 0;
    for (int r = 0; r < reps; ++r) {
      auto const& o = out[static_cast<std::size_t>(r)];
      hits += o.ok && o.neg;
      mono += o.ok && o.mono;
      okc += o.ok;
      rep.note(o.ok ? fmt("gridded rep %d: beta1 %.4f [%.4f, %.4f] %.1f s", r, o.b1, o.lo, o.hi, o.sec)
                    : fmt("gridded rep %d failed: %s", r, o.err.c_str()));
    }
    double frac = reps > 0 ? static_cast<double>(hits) / reps : 0.0;
    rep.line(frac >= min_sign_recovery && mono == reps, "gridded analogue (17x18 cells x 20, factors 3,3)",
             fmt("beta1 = %.2f: CI below 0 in %d/%d reps (need >= %.0f%%); exceedance monotone in "
                 "threshold {2.5,3,3.5} in %d/%d; fine lattice %dx%dx%d, %.0f s",
                 beta1, hits, reps, 100 * min_sign_recovery, mono, reps, nx, ny, nt, since(t0)));
  }

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"stdisagg acceptance checks"};
  int replicates = 20;
  int grid_reps = 10;
  int threads = default_threads();
  std::string out = "acceptance";
  std::vector<std::string> only;
  app.add_option("--replicates", replicates, "replicates per study scenario");
  app.add_option("--gridded-replicates", grid_reps, "replicates of the gridded analogue");
  app.add_option("--threads", threads, "worker threads");
  app.add_option("--out", out, "directory for the report and study CSVs");
  app.add_option("--only", only, "run a subset: oracle kron ar1 range nonsep study gridded");
  CLI11_PARSE(app, argc, argv);

  auto want = [&](std::string const& s) {
    return only.empty() || std::find(only.begin(), only.end(), s) != only.end();
  };
  std::filesystem::create_directories(out);
  Report rep;
  rep.file.open(out + "/acceptance.txt");
  rep.note(fmt("stdisagg %s, %d threads, %d study replicates", version, threads, replicates));
  auto t0 = Clock::now();
  int errors = 0;
  auto guard = [&](char const* name, std::function<void()> f) {
    try {
      f();
    } catch (std::exception const& e) {
      ++errors;
      rep.line(false, name, std::string("could not be evaluated: ") + e.what());
    }
  };
  if (want("oracle")) { guard("dense-oracle equivalence", [&] { check_oracle(rep); }); }
  if (want("kron")) { guard("separable precision", [&] { check_kron(rep); }); }
  if (want("ar1")) { guard("AR(1) mapping", [&] { check_ar1(rep); }); }
  if (want("range")) { guard("spatial range", [&] { check_range(rep); }); }
  if (want("nonsep")) { guard("non-separable correlations", [&] { check_nonsep(rep); }); }
  if (want("study")) {
    guard("simulation study", [&] {
      ScenarioConfig base;
      base.replicates = replicates;
      auto progress = [&](std::string tag) {
        return [&, tag](std::size_t k, int r, ReplicateResult const& x) {
          std::cerr << tag << " scenario " << k << " rep " << r << (x.ok ? "" : " FAILED") << " "
                    << x.seconds << " s\n";
        };
      };
      auto ts = Clock::now();
      auto sep = run_study(study_grid(ModelKind::Separable102, false, base), threads, progress("sep"));
      rep.note(fmt("separable study: %.0f s", since(ts)));
      base.fit_both = false;
      ts = Clock::now();
      auto ns = run_study(study_grid(ModelKind::NonSeparable121, false, base), threads, progress("nonsep"));
      rep.note(fmt("non-separable study: %.0f s", since(ts)));
      std::vector<MetricsReport> all = sep;
      all.insert(all.end(), ns.begin(), ns.end());
      write_study_csvs(all, out);
      check_tables(rep, sep, ns);
      std::vector<std::vector<MetricsReport> const*> both{&sep, &ns};
      check_calibration(rep, both);
      check_param_cover(rep, both);
      check_monotone(rep, both);
    });
  }
  if (want("gridded")) { guard("gridded analogue", [&] { check_gridded(rep, grid_reps, threads); }); }
  rep.note(fmt("%d passed, %d failed, %.0f s", rep.passed, rep.failed, since(t0)));
  return errors == 0 ? 0 : 1;
}
