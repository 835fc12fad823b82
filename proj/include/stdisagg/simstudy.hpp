#pragma once

//
// ... Standard header files
//
#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

//
// ... stdisagg header files
//
#include <stdisagg/aggregate.hpp>
#include <stdisagg/baseline.hpp>
#include <stdisagg/errors.hpp>
#include <stdisagg/infer/fit.hpp>
#include <stdisagg/lattice.hpp>
#include <stdisagg/random.hpp>
#include <stdisagg/stmodel.hpp>

namespace stdisagg {

  enum class Autocorr { weak, moderate, strong };

  inline std::string to_string(Autocorr a) {
    switch (a) {
      case Autocorr::weak: return "weak";
      case Autocorr::moderate: return "moderate";
      case Autocorr::strong: return "strong";
    }
    return "?";
  }

  inline Autocorr parse_autocorr(std::string const& s) {
    if (s == "weak") { return Autocorr::weak; }
    if (s == "moderate") { return Autocorr::moderate; }
    if (s == "strong") { return Autocorr::strong; }
    throw ValidationError("unknown autocorrelation level '" + s + "'");
  }

  // Temporal range per level; the non-separable values are doubled.
  inline double scenario_range_t(ModelKind k, Autocorr a) {
    static constexpr std::array<double, 3> sep{1.0, 3.0, 12.0};
    double r = sep[static_cast<int>(a)];
    return k == ModelKind::Separable102 ? r : 2.0 * r;
  }

  inline double rho_phi_map(double phi) { return std::exp(-1.0 / phi); }

  struct ScenarioConfig {
    ModelKind kind = ModelKind::Separable102;
    Autocorr autocorr = Autocorr::strong;
    int s_f = 2, t_f = 2;
    int replicates = 20;
    std::uint64_t seed = 20240101;
    bool fit_both = true;
    // generating setup
    int n = 24, nt = 24;
    double sigma2 = 0.0625;
    double range_s = 0.2;
    double beta0 = 0.1;
    double noise_sd = 0.15;
    TemporalScheme scheme = TemporalScheme::exact;
    // fitting
    EngineChoice engine = EngineChoice::automatic;
    bool integrate = false;
    int max_iter = 400;

    double range_t() const { return scenario_range_t(kind, autocorr); }

    void validate() const {
      auto in = [](int v, std::initializer_list<int> l) {
        return std::find(l.begin(), l.end(), v) != l.end();
      };
      if (!in(s_f, {2, 3, 4, 6, 8}) || !in(t_f, {2, 3, 4})) {
        throw ValidationError("aggregation factors outside the study grid");
      }
      if (replicates < 1 || n < 1 || nt < 1) { throw ValidationError("empty study"); }
      if (n % s_f || nt % t_f) { throw IndivisibleFactor("study lattice"); }
    }
  };

  // ---------------------------------------------------------------- metrics

  inline double rmse(Field const& pred, Field const& truth) {
    if (pred.values.size() != truth.values.size()) { throw ShapeMismatch("rmse"); }
    if (pred.values.size() == 0) { throw ShapeMismatch("rmse of empty fields"); }
    return std::sqrt((pred.values - truth.values).squaredNorm() / static_cast<double>(pred.values.size()));
  }

  struct EcpWidth {
    double ecp;
    double width;
  };

  inline EcpWidth ecp_and_width(Field const& lo, Field const& hi, Field const& truth) {
    auto n = truth.values.size();
    if (lo.values.size() != n || hi.values.size() != n || n == 0) { throw ShapeMismatch("ecp"); }
    double hit = 0.0, w = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      hit += lo.values[i] <= truth.values[i] && truth.values[i] <= hi.values[i];
      w += hi.values[i] - lo.values[i];
    }
    return {hit / static_cast<double>(n), w / static_cast<double>(n)};
  }

  inline constexpr std::array<char const*, 5> param_names{"sigma2", "range_s", "range_t", "tau_eps",
                                                         "beta0"};

  inline std::array<double, 5> param_cover(std::vector<std::array<bool, 5>> const& hits) {
    std::array<double, 5> out{};
    if (hits.empty()) { return out; }
    for (auto const& h : hits) {
      for (int i = 0; i < 5; ++i) { out[i] += h[i]; }
    }
    for (double& v : out) { v /= static_cast<double>(hits.size()); }
    return out;
  }

  // ---------------------------------------------------------------- runs

  struct ReplicateResult {
    bool ok = false;
    std::string error;
    double rmse = 0, ecp = 0, width = 0;
    std::array<bool, 5> cover{};
    Hyper hat;
    bool areal_ok = false;
    double rmse_areal = 0, ecp_areal = 0, width_areal = 0;
    double seconds = 0;
  };

  struct Summary {
    double mean = 0, se = 0;
  };

  inline Summary summarize(std::vector<double> const& v) {
    Summary s;
    if (v.empty()) { return {std::numeric_limits<double>::quiet_NaN(), 0}; }
    for (double x : v) { s.mean += x; }
    s.mean /= static_cast<double>(v.size());
    if (v.size() > 1) {
      double ss = 0;
      for (double x : v) { ss += (x - s.mean) * (x - s.mean); }
      s.se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
    }
    return s;
  }

  struct MetricsReport {
    ScenarioConfig cfg;
    int n_ok = 0, n_fail = 0;
    bool valid = false;
    Summary rmse, ecp, width;
    std::array<double, 5> param_cover{};
    int n_areal = 0;
    Summary rmse_areal, ecp_areal, width_areal;
    std::vector<ReplicateResult> reps;
  };

  inline LatticeSpec study_lattice(ScenarioConfig const& c) {
    double dx = 1.0 / c.n;
    return build_lattice(c.n, c.n, c.nt, Extents{0, 1, 0, 1, 1, 1}, default_buffer(c.range_s, dx));
  }

  inline ModelSpec study_model(ScenarioConfig const& c) {
    ModelSpec m;
    m.kind = c.kind;
    m.sigma2 = c.sigma2;
    m.range_s = c.range_s;
    m.range_t = c.range_t();
    m.tau_eps = 1.0 / (c.noise_sd * c.noise_sd);
    m.scheme = c.scheme;
    return m;
  }

  // One replicate. The latent field depends on (seed, kind, level, r) only,
  // so every aggregation scenario sees the same realisations.
  inline ReplicateResult run_replicate(ScenarioConfig const& c, int r) {
    ReplicateResult out;
    auto t0 = std::chrono::steady_clock::now();
    try {
      LatticeSpec s = study_lattice(c);
      ModelSpec m = study_model(c);
      std::uint64_t base = derive_seed(c.seed, static_cast<std::uint64_t>(c.kind) * 3 +
                                                   static_cast<std::uint64_t>(c.autocorr),
                                       static_cast<std::uint64_t>(r));
      Field w = simulate_field(m, s, {c.beta0}, Eigen::MatrixXd(), derive_seed(base, 1));
      Field truth = crop_interior(w);
      Projection p = build_projection(s, {c.s_f, c.t_f});
      Eigen::VectorXd y = aggregate_observe(w, p, m.tau_eps,
                                            derive_seed(base, 2, static_cast<std::uint64_t>(c.s_f),
                                                        static_cast<std::uint64_t>(c.t_f)));
      ObsModel o = make_obs_model(y, p, m);
      FitOptions fo;
      fo.engine = c.engine;
      fo.integrate = c.integrate;
      fo.nm.max_iter = c.max_iter;
      FitResult fr = fit(o, fo);
      out.rmse = rmse(fr.pred.mean, truth);
      auto ew = ecp_and_width(fr.pred.lo, fr.pred.hi, truth);
      out.ecp = ew.ecp;
      out.width = ew.width;
      out.hat = fr.hyper;
      Hyper truth_h = Hyper::of(m);
      for (int i = 0; i < 4; ++i) {
        out.cover[i] = fr.theta_ci[i].lo <= truth_h[i] && truth_h[i] <= fr.theta_ci[i].hi;
      }
      out.cover[4] = fr.beta_post[0].lo <= c.beta0 && c.beta0 <= fr.beta_post[0].hi;
      out.ok = true;
      if (c.fit_both) {
        try {
          ArealFit af = fit_areal(o);
          out.rmse_areal = rmse(af.fine.mean, truth);
          auto ea = ecp_and_width(af.fine.lo, af.fine.hi, truth);
          out.ecp_areal = ea.ecp;
          out.width_areal = ea.width;
          out.areal_ok = true;
        } catch (Error const&) {
          out.areal_ok = false;
        }
      }
    } catch (Error const& e) {
      out.ok = false;
      out.error = e.what();
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
  }

  inline MetricsReport reduce_replicates(ScenarioConfig const& c,
                                         std::vector<ReplicateResult> reps) {
    MetricsReport m;
    m.cfg = c;
    std::vector<double> r, e, w, ra, ea, wa;
    std::vector<std::array<bool, 5>> cov;
    for (auto const& x : reps) {
      if (!x.ok) {
        ++m.n_fail;
        continue;
      }
      ++m.n_ok;
      r.push_back(x.rmse);
      e.push_back(x.ecp);
      w.push_back(x.width);
      cov.push_back(x.cover);
      if (x.areal_ok) {
        ++m.n_areal;
        ra.push_back(x.rmse_areal);
        ea.push_back(x.ecp_areal);
        wa.push_back(x.width_areal);
      }
    }
    m.valid = m.n_fail * 10 <= static_cast<int>(reps.size());
    m.rmse = summarize(r);
    m.ecp = summarize(e);
    m.width = summarize(w);
    m.param_cover = param_cover(cov);
    m.rmse_areal = summarize(ra);
    m.ecp_areal = summarize(ea);
    m.width_areal = summarize(wa);
    m.reps = std::move(reps);
    return m;
  }

  inline int default_threads() {
    unsigned h = std::thread::hardware_concurrency();
    return h == 0 ? 1 : static_cast<int>(h);
  }

  // Runs every (scenario, replicate) pair on a pool of threads. Results are
  // stored by index and reduced in (scenario, replicate) order, so the
  // report does not depend on the thread count.
  inline std::vector<MetricsReport> run_study(
      std::vector<ScenarioConfig> const& cfgs, int threads = 1,
      std::function<void(std::size_t, int, ReplicateResult const&)> const& progress = nullptr) {
    for (auto const& c : cfgs) { c.validate(); }
    std::vector<std::pair<std::size_t, int>> jobs;
    std::vector<std::vector<ReplicateResult>> res(cfgs.size());
    for (std::size_t k = 0; k < cfgs.size(); ++k) {
      res[k].resize(static_cast<std::size_t>(cfgs[k].replicates));
      for (int r = 0; r < cfgs[k].replicates; ++r) { jobs.emplace_back(k, r); }
    }
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    auto worker = [&]() {
      for (;;) {
        std::size_t j = next.fetch_add(1);
        if (j >= jobs.size()) { return; }
        auto [k, r] = jobs[j];
        ReplicateResult x = run_replicate(cfgs[k], r);
        res[k][static_cast<std::size_t>(r)] = x;
        if (progress) {
          std::lock_guard<std::mutex> lock(mu);
          progress(k, r, x);
        }
      }
    };
    int nt = std::max(1, std::min<int>(threads, static_cast<int>(jobs.size())));
    if (nt == 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (int i = 0; i < nt; ++i) { pool.emplace_back(worker); }
      for (auto& t : pool) { t.join(); }
    }
    std::vector<MetricsReport> out;
    for (std::size_t k = 0; k < cfgs.size(); ++k) { out.push_back(reduce_replicates(cfgs[k], std::move(res[k]))); }
    return out;
  }

  inline MetricsReport run_scenario(ScenarioConfig const& c, int threads = 1) {
    return run_study({c}, threads)[0];
  }

  // Scenario grid: the default subset s_f in {2,4,8} x t_f in {2,4}, or
  // the full 5 x 3 grid, for every autocorrelation level.
  inline std::vector<ScenarioConfig> study_grid(ModelKind kind, bool full, ScenarioConfig base = {}) {
    std::vector<int> sfs = full ? std::vector<int>{2, 3, 4, 6, 8} : std::vector<int>{2, 4, 8};
    std::vector<int> tfs = full ? std::vector<int>{2, 3, 4} : std::vector<int>{2, 4};
    std::vector<ScenarioConfig> out;
    for (auto a : {Autocorr::weak, Autocorr::moderate, Autocorr::strong}) {
      for (int sf : sfs) {
        for (int tf : tfs) {
          ScenarioConfig c = base;
          c.kind = kind;
          c.autocorr = a;
          c.s_f = sf;
          c.t_f = tf;
          out.push_back(c);
        }
      }
    }
    return out;
  }

  // One CSV per table family: rmse, param_coverage, ecp, width. Columns:
  // kind, autocorr, s_f, t_f, model, metric, value, stderr.
  inline void write_study_csvs(std::vector<MetricsReport> const& reports, std::string const& dir) {
    auto open = [&](std::string const& name) {
      std::ofstream f(dir + "/" + name);
      if (!f) { throw IoError("cannot write " + dir + "/" + name); }
      f << std::setprecision(17);
      f << "kind,autocorr,s_f,t_f,model,metric,value,stderr\n";
      return f;
    };
    auto rm = open("rmse.csv");
    auto pc = open("param_coverage.csv");
    auto ec = open("ecp.csv");
    auto wd = open("width.csv");
    for (auto const& r : reports) {
      std::string key = to_string(r.cfg.kind) + "," + to_string(r.cfg.autocorr) + "," +
                        std::to_string(r.cfg.s_f) + "," + std::to_string(r.cfg.t_f) + ",";
      rm << key << "continuous,rmse," << r.rmse.mean << "," << r.rmse.se << "\n";
      ec << key << "continuous,ecp," << r.ecp.mean << "," << r.ecp.se << "\n";
      wd << key << "continuous,width," << r.width.mean << "," << r.width.se << "\n";
      for (int i = 0; i < 5; ++i) {
        double v = r.param_cover[i];
        double se = r.n_ok > 0 ? std::sqrt(v * (1 - v) / r.n_ok) : 0.0;
        pc << key << "continuous," << param_names[i] << "," << v << "," << se << "\n";
      }
      if (r.n_areal > 0) {
        rm << key << "areal,rmse," << r.rmse_areal.mean << "," << r.rmse_areal.se << "\n";
        ec << key << "areal,ecp," << r.ecp_areal.mean << "," << r.ecp_areal.se << "\n";
        wd << key << "areal,width," << r.width_areal.mean << "," << r.width_areal.se << "\n";
      }
    }
  }

} // end of namespace stdisagg
