// Command line front end: simulate, aggregate, fit, predict, evaluate,
// experiment. Exit codes: 0 ok, 1 usage or I/O, 2 validation, 3 numerical.
//
// Option values come from, in decreasing priority: the command line, an
// STDISAGG_<OPTION> environment variable, a JSON file given with --config,
// then the built-in default. The resolved values are written to
// <out>/config.json, which can be fed back through --config.

//
// ... Standard header files
//
#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

//
// ... External header files
//
#include <CLI11.hpp>
#include <json.hpp>

//
// ... stdisagg header files
//
#include <stdisagg/infer.hpp>
#include <stdisagg/io.hpp>
#include <stdisagg/simstudy.hpp>
#include <stdisagg/version.hpp>

using namespace stdisagg;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

  using Clock = std::chrono::steady_clock;

  // JSON-lines run log in the output directory.
  class RunLog {
  public:
    void open(std::string const& path) {
      fs::create_directories(fs::path(path).parent_path());
      f_.open(path, std::ios::app);
      if (!f_) { throw IoError("cannot write run log " + path); }
    }
    void write(json j) {
      j["elapsed"] = std::chrono::duration<double>(Clock::now() - t0_).count();
      if (f_) { f_ << j.dump() << "\n" << std::flush; }
    }
    // Times f and logs it as a stage.
    template <class F>
    auto stage(std::string const& name, F&& f) {
      auto t = Clock::now();
      if constexpr (std::is_void_v<decltype(f())>) {
        f();
        write({{"event", "stage"}, {"stage", name}, {"seconds", since(t)}});
      } else {
        auto r = f();
        write({{"event", "stage"}, {"stage", name}, {"seconds", since(t)}});
        return r;
      }
    }
    static double since(Clock::time_point t) {
      return std::chrono::duration<double>(Clock::now() - t).count();
    }

  private:
    std::ofstream f_;
    Clock::time_point t0_ = Clock::now();
  };

  std::string env_name(std::string const& lname) {
    std::string s = "STDISAGG_";
    for (char c : lname) { s += c == '-' ? '_' : static_cast<char>(std::toupper(c)); }
    return s;
  }

  bool internal_option(CLI::Option const* o) {
    return o->get_lnames().empty() || o->get_lnames()[0] == "help" || o->get_lnames()[0] == "config";
  }

  // Every long option of a subcommand reads STDISAGG_<NAME>.
  void add_env(CLI::App* sub) {
    for (CLI::Option* o : sub->get_options()) {
      if (!internal_option(o)) { o->envname(env_name(o->get_lnames()[0])); }
    }
  }

  // Values from --config fill options still unset after flags and env.
  void apply_config(CLI::App* sub, std::string const& path) {
    json j = io::read_json(path);
    if (!j.is_object()) { throw SchemaError(path + ": config must be a JSON object"); }
    for (auto const& [k, v] : j.items()) {
      if (k == "command" || k == "version") { continue; }
      CLI::Option* o = sub->get_option_no_throw("--" + k);
      if (o == nullptr) { throw SchemaError(path + ": unknown option '" + k + "'"); }
      if (o->count() > 0) { continue; }
      auto one = [](json const& x) { return x.is_string() ? x.get<std::string>() : x.dump(); };
      if (v.is_array()) {
        for (auto const& x : v) { o->add_result(one(x)); }
      } else if (!v.is_null()) {
        o->add_result(one(v));
      }
      o->run_callback();
    }
  }

  json resolved_config(CLI::App const* sub) {
    json j;
    j["command"] = sub->get_name();
    j["version"] = version;
    for (CLI::Option const* o : sub->get_options()) {
      if (internal_option(o)) { continue; }
      std::string k = o->get_lnames()[0];
      std::vector<std::string> vals = o->count() > 0 ? o->results() : std::vector<std::string>{};
      if (vals.empty()) {
        std::string d = o->get_default_str();
        if (d.empty()) { continue; }
        vals = {d};
      }
      if (o->get_expected_max() > 1) {
        j[k] = vals;
      } else {
        j[k] = vals.back();
      }
    }
    return j;
  }

  // ------------------------------------------------------------ options

  struct ModelFlags {
    std::string kind = "separable";
    std::string scheme = "exact";
    double sigma2 = 0.0625;
    double rs = 0.2;
    double rt = 3.0;

    void add(CLI::App* a, bool values) {
      a->add_option("--kind", kind, "separable | nonseparable")->capture_default_str();
      a->add_option("--scheme", scheme, "temporal scheme of the non-separable model: exact | implicit_euler")
          ->capture_default_str();
      if (values) {
        a->add_option("--sigma2", sigma2, "marginal variance")->capture_default_str();
        a->add_option("--rs", rs, "spatial range")->capture_default_str();
        a->add_option("--rt", rt, "temporal range")->capture_default_str();
      }
    }
    TemporalScheme scheme_enum() const {
      if (scheme == "exact") { return TemporalScheme::exact; }
      if (scheme == "implicit_euler" || scheme == "ie") { return TemporalScheme::implicit_euler; }
      throw ValidationError("unknown scheme '" + scheme + "'");
    }
    ModelSpec spec() const {
      ModelSpec m;
      m.kind = parse_kind(kind);
      m.scheme = scheme_enum();
      m.sigma2 = sigma2;
      m.range_s = rs;
      m.range_t = rt;
      return m;
    }
  };

  double parse_tau(std::string const& s) {
    auto v = io::parse_double(s);
    if (!v || !(*v > 0)) { throw ValidationError("--tau-eps must be positive or 'inf'"); }
    return *v;
  }

  // ------------------------------------------------------------ commands

  struct Common {
    std::string out;
    std::string config;
    int threads = default_threads();
  };

  struct Simulate {
    ModelFlags model;
    int nx = 24, ny = 24, nt = 24;
    double x0 = 0, y0 = 0, width = 1, height = 1, t0 = 0, dt = 1;
    double beta0 = 0.1;
    int buffer = -1;
    std::uint64_t seed = 1;
  };

  void cmd_simulate(Simulate const& o, Common const& c, RunLog& log) {
    ModelSpec m = o.model.spec();
    m.validate();
    LatticeSpec s = build_lattice(o.nx, o.ny, o.nt,
                                  Extents{o.x0, o.x0 + o.width, o.y0, o.y0 + o.height, o.t0, o.dt},
                                  o.buffer >= 0 ? o.buffer : default_buffer(m.range_s, o.width / o.nx));
    Field w = log.stage("simulate", [&] {
      return simulate_field(m, s, {o.beta0}, Eigen::MatrixXd(), o.seed);
    });
    json extra = {{"kind", to_string(m.kind)}, {"sigma2", m.sigma2}, {"range_s", m.range_s},
                  {"range_t", m.range_t}, {"beta0", o.beta0}, {"seed", o.seed},
                  {"buffer", s.buffer}};
    log.stage("write", [&] { io::write_field(crop_interior(w), c.out, extra); });
  }

  struct Aggregate {
    std::string in;
    int sf = 2, tf = 2;
    std::string tau_eps = "44.444444444444443";
    std::uint64_t seed = 2;
    std::string variable = "value";
    std::string units;
  };

  void cmd_aggregate(Aggregate const& o, Common const& c, RunLog& log) {
    Field f = log.stage("read", [&] { return io::read_field(o.in); });
    double tau = parse_tau(o.tau_eps);
    Projection p = build_projection(f.spec, {o.sf, o.tf});
    Eigen::VectorXd y = log.stage("aggregate", [&] { return aggregate_observe(f, p, tau, o.seed); });
    io::Metadata m;
    auto const& s = f.spec;
    m.x0 = s.x0;
    m.y0 = s.y0;
    m.dx = s.dx * o.sf;
    m.dy = s.dy * o.sf;
    m.nx = s.nx / o.sf;
    m.ny = s.ny / o.sf;
    m.t0 = s.t0;
    m.dt = s.dt * o.tf;
    m.nt = s.nt / o.tf;
    m.s_f = o.sf;
    m.t_f = o.tf;
    m.variable = o.variable;
    m.units = o.units;
    log.stage("write", [&] { io::write_dataset(c.out, m, y); });
  }

  struct FitCmd {
    std::string in;
    ModelFlags model;
    std::string engine = "auto";
    std::vector<double> thresholds;
    bool integrate = false;
    int buffer = -1;
    int max_iter = 400;
    std::string from; // predict: results directory holding summary.json
  };

  ObsModel load_obs(FitCmd const& o, ModelSpec const& m, RunLog& log,
                    std::vector<std::string>* names) {
    auto ds = log.stage("load", [&] {
      return io::load_dataset(o.in, o.buffer >= 0 ? std::optional<int>(o.buffer) : std::nullopt);
    });
    log.write({{"event", "dataset"},
               {"cells", ds.P.rows()},
               {"observed", ds.observed()},
               {"lattice", io::lattice_json(ds.spec)},
               {"covariates", ds.covariate_names}});
    if (names) {
      names->push_back("intercept");
      for (auto const& n : ds.covariate_names) { names->push_back(n); }
    }
    return ds.obs_model(m);
  }

  void write_trace(FitResult const& fr, std::string const& dir) {
    std::ofstream f(fs::path(dir) / "trace.csv");
    if (!f) { throw IoError("cannot write trace.csv"); }
    f << "iter,loglik,sigma2,range_s,range_t,tau_eps\n";
    for (auto const& r : fr.opt_trace) {
      f << r.iter << "," << io::num(r.loglik) << "," << io::num(r.hyper.sigma2) << ","
        << io::num(r.hyper.range_s) << "," << io::num(r.hyper.range_t) << ","
        << io::num(r.hyper.tau_eps) << "\n";
    }
  }

  void cmd_fit(FitCmd const& o, Common const& c, RunLog& log) {
    ModelSpec m = o.model.spec();
    io::ResultOptions ro;
    ro.thresholds = o.thresholds;
    ObsModel obs = load_obs(o, m, log, &ro.fixed_names);
    FitOptions fo;
    fo.engine = parse_engine(o.engine);
    fo.integrate = o.integrate;
    fo.nm.max_iter = o.max_iter;
    FitResult fr = log.stage("fit", [&] { return fit(obs, fo); });
    log.write({{"event", "fit"},
               {"engine", fr.engine},
               {"evaluations", fr.evaluations},
               {"iterations", fr.iterations},
               {"converged", fr.converged},
               {"seconds_optimize", fr.seconds_optimize},
               {"seconds_hessian", fr.seconds_hessian},
               {"seconds_predict", fr.seconds_predict}});
    log.stage("write", [&] {
      io::write_results(fr, c.out, ro);
      write_trace(fr, c.out);
    });
  }

  void cmd_predict(FitCmd const& o, Common const& c, RunLog& log) {
    if (o.from.empty()) { throw ValidationError("predict needs --from <fit output directory>"); }
    auto prev = log.stage("read", [&] { return io::read_results(o.from); });
    ModelFlags mf = o.model;
    mf.kind = prev.summary.value("model", mf.kind);
    mf.scheme = prev.summary.value("scheme", mf.scheme);
    io::ResultOptions ro;
    ro.thresholds = o.thresholds;
    ro.extra = {{"hyperparameters_from", o.from}};
    ObsModel obs = load_obs(o, mf.spec(), log, &ro.fixed_names);
    Hyper h = prev.hyper_median();
    FitResult fr = log.stage("predict", [&] { return condition_on(obs, h, parse_engine(o.engine)); });
    log.stage("write", [&] { io::write_results(fr, c.out, ro); });
  }

  struct Evaluate {
    std::string truth, pred;
  };

  void cmd_evaluate(Evaluate const& o, Common const& c, RunLog& log) {
    Field t = log.stage("read_truth", [&] { return io::read_field(o.truth); });
    auto r = log.stage("read_prediction", [&] { return io::read_results(o.pred); });
    if (!(t.spec == r.spec)) { throw ShapeMismatch("truth and prediction lattices differ"); }
    auto ew = ecp_and_width(r.lo, r.hi, t);
    json j = {{"rmse", rmse(r.mean, t)},
              {"ecp", ew.ecp},
              {"width", ew.width},
              {"nodes", t.spec.interior_nodes()},
              {"version", version}};
    fs::create_directories(c.out);
    io::open_out(fs::path(c.out) / "metrics.json") << j.dump(2) << "\n";
    std::cout << j.dump() << "\n";
  }

  struct Experiment {
    std::string kind = "both";
    bool full = false;
    bool list = false;
    int replicates = 20;
    std::uint64_t seed = 20240101;
    int n = 24, nt = 24;
    std::string scheme = "exact";
    std::string engine = "auto";
    bool integrate = false;
    std::vector<int> sf, tf;
    std::vector<std::string> autocorr;
  };

  void cmd_experiment(Experiment const& o, Common const& c, RunLog& log) {
    ScenarioConfig base;
    base.replicates = o.replicates;
    base.seed = o.seed;
    base.n = o.n;
    base.nt = o.nt;
    ModelFlags mf;
    mf.scheme = o.scheme;
    base.scheme = mf.scheme_enum();
    base.engine = parse_engine(o.engine);
    base.integrate = o.integrate;
    std::vector<ModelKind> kinds;
    if (o.kind == "both") {
      kinds = {ModelKind::Separable102, ModelKind::NonSeparable121};
    } else {
      kinds = {parse_kind(o.kind)};
    }
    std::vector<ScenarioConfig> cfgs;
    for (auto k : kinds) {
      ScenarioConfig b = base;
      // the areal baseline is separable, so it is only fitted there
      b.fit_both = k == ModelKind::Separable102;
      for (auto const& s : study_grid(k, o.full, b)) {
        auto in = [](auto const& v, auto x) { return v.empty() || std::find(v.begin(), v.end(), x) != v.end(); };
        if (in(o.sf, s.s_f) && in(o.tf, s.t_f) && in(o.autocorr, to_string(s.autocorr))) {
          cfgs.push_back(s);
        }
      }
    }
    for (auto const& s : cfgs) { s.validate(); }
    log.write({{"event", "scenarios"}, {"count", cfgs.size()}});
    if (o.list) {
      for (auto const& s : cfgs) {
        std::cout << to_string(s.kind) << "," << to_string(s.autocorr) << "," << s.s_f << "," << s.t_f
                  << "\n";
      }
      std::cout << cfgs.size() << " scenarios\n";
      return;
    }
    auto reports = log.stage("study", [&] {
      return run_study(cfgs, c.threads, [&](std::size_t k, int r, ReplicateResult const& x) {
        log.write({{"event", "replicate"},
                   {"scenario", k},
                   {"replicate", r},
                   {"ok", x.ok},
                   {"seconds", x.seconds},
                   {"error", x.error}});
      });
    });
    log.stage("write", [&] { write_study_csvs(reports, c.out); });
    for (auto const& r : reports) {
      std::cout << to_string(r.cfg.kind) << " " << to_string(r.cfg.autocorr) << " (" << r.cfg.s_f << ","
                << r.cfg.t_f << ") rmse " << r.rmse.mean;
      if (r.n_areal > 0) { std::cout << " areal " << r.rmse_areal.mean; }
      std::cout << " ecp " << r.ecp.mean << " ok " << r.n_ok << "/" << r.cfg.replicates << "\n";
    }
  }

  int exit_code(ErrorClass c) { return static_cast<int>(c); }

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatio-temporal disaggregation of aggregated gridded data"};
  app.set_version_flag("--version", version);
  app.require_subcommand(1);

  // checked after --config is merged, so a saved config can supply them
  std::vector<CLI::Option*> must;
  Common common;
  Simulate sim;
  Aggregate agg;
  FitCmd fitc, predc;
  Evaluate eval;
  Experiment exp;

  auto add_common = [&](CLI::App* s, bool need_out) {
    auto* o = s->add_option("--out", common.out, "output directory");
    if (need_out) { must.push_back(o); }
    s->add_option("--config", common.config, "JSON file with option values");
    s->add_option("--threads", common.threads, "worker threads")->capture_default_str();
  };

  auto* s_sim = app.add_subcommand("simulate", "simulate a latent field on a regular lattice");
  sim.model.add(s_sim, true);
  s_sim->add_option("--nx", sim.nx)->capture_default_str();
  s_sim->add_option("--ny", sim.ny)->capture_default_str();
  s_sim->add_option("--nt", sim.nt)->capture_default_str();
  s_sim->add_option("--x0", sim.x0)->capture_default_str();
  s_sim->add_option("--y0", sim.y0)->capture_default_str();
  s_sim->add_option("--width", sim.width)->capture_default_str();
  s_sim->add_option("--height", sim.height)->capture_default_str();
  s_sim->add_option("--t0", sim.t0)->capture_default_str();
  s_sim->add_option("--dt", sim.dt)->capture_default_str();
  s_sim->add_option("--beta0", sim.beta0, "intercept")->capture_default_str();
  s_sim->add_option("--buffer", sim.buffer, "lattice buffer in cells (-1: from the range)")
      ->capture_default_str();
  s_sim->add_option("--seed", sim.seed)->capture_default_str();
  add_common(s_sim, true);

  auto* s_agg = app.add_subcommand("aggregate", "average a field into coarse cells and add noise");
  must.push_back(s_agg->add_option("--in", agg.in, "field directory"));
  s_agg->add_option("--sf", agg.sf, "spatial factor")->capture_default_str();
  s_agg->add_option("--tf", agg.tf, "temporal factor")->capture_default_str();
  s_agg->add_option("--tau-eps", agg.tau_eps, "noise precision ('inf' for none)")->capture_default_str();
  s_agg->add_option("--seed", agg.seed)->capture_default_str();
  s_agg->add_option("--variable", agg.variable)->capture_default_str();
  s_agg->add_option("--units", agg.units);
  add_common(s_agg, true);

  auto fit_opts = [&](CLI::App* s, FitCmd& f) {
    must.push_back(s->add_option("--in", f.in, "dataset directory"));
    f.model.add(s, false);
    s->add_option("--engine", f.engine, "auto | kronecker | dense | sparse")->capture_default_str();
    s->add_option("--threshold", f.thresholds, "exceedance threshold (repeatable)");
    s->add_option("--buffer", f.buffer, "lattice buffer override")->capture_default_str();
  };
  auto* s_fit = app.add_subcommand("fit", "estimate hyperparameters and predict on the fine lattice");
  fit_opts(s_fit, fitc);
  s_fit->add_flag("--integrate", fitc.integrate, "mix over the leading hyperparameter direction");
  s_fit->add_option("--max-iter", fitc.max_iter)->capture_default_str();
  add_common(s_fit, true);

  auto* s_pred = app.add_subcommand("predict", "predict at the hyperparameters of an earlier fit");
  fit_opts(s_pred, predc);
  must.push_back(s_pred->add_option("--from", predc.from, "directory of an earlier fit"));
  add_common(s_pred, true);

  auto* s_eval = app.add_subcommand("evaluate", "score a prediction against a true field");
  must.push_back(s_eval->add_option("--truth", eval.truth, "field directory"));
  must.push_back(s_eval->add_option("--pred", eval.pred, "fit or predict output directory"));
  add_common(s_eval, true);

  auto* s_exp = app.add_subcommand("experiment", "run the simulation study and write the metric CSVs");
  s_exp->add_option("--kind", exp.kind, "both | separable | nonseparable")->capture_default_str();
  s_exp->add_flag("--full", exp.full, "all 15 aggregation scenarios per level");
  s_exp->add_flag("--list", exp.list, "print the scenarios and stop");
  s_exp->add_option("--replicates", exp.replicates)->capture_default_str();
  s_exp->add_option("--seed", exp.seed)->capture_default_str();
  s_exp->add_option("--n", exp.n, "fine cells per side")->capture_default_str();
  s_exp->add_option("--nt", exp.nt, "fine time steps")->capture_default_str();
  s_exp->add_option("--scheme", exp.scheme)->capture_default_str();
  s_exp->add_option("--engine", exp.engine)->capture_default_str();
  s_exp->add_flag("--integrate", exp.integrate);
  s_exp->add_option("--sf", exp.sf, "restrict to these spatial factors");
  s_exp->add_option("--tf", exp.tf, "restrict to these temporal factors");
  s_exp->add_option("--autocorr", exp.autocorr, "restrict to these levels");
  add_common(s_exp, false);

  for (auto* s : {s_sim, s_agg, s_fit, s_pred, s_eval, s_exp}) { add_env(s); }

  RunLog log;
  CLI::App* sub = nullptr;
  try {
    app.parse(argc, argv);
    sub = app.get_subcommands().at(0);
    if (!common.config.empty()) { apply_config(sub, common.config); }
    for (CLI::Option* o : sub->get_options()) {
      if (o->count() == 0 && std::find(must.begin(), must.end(), o) != must.end()) {
        throw CLI::RequiredError(o->get_name());
      }
    }
    if (sub == s_exp && common.out.empty() && !exp.list) {
      throw CLI::RequiredError("--out");
    }
  } catch (CLI::ParseError const& e) {
    return app.exit(e) == 0 ? 0 : 1;
  } catch (Error const& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.error_class());
  } catch (std::exception const& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  auto t0 = Clock::now();
  int code = 0;
  try {
    if (!common.out.empty()) {
      fs::create_directories(common.out);
      log.open((fs::path(common.out) / "run.jsonl").string());
      json cfg = resolved_config(sub);
      io::open_out(fs::path(common.out) / "config.json") << cfg.dump(2) << "\n";
      log.write({{"event", "start"}, {"command", sub->get_name()}, {"version", version}, {"config", cfg}});
    }
    if (sub == s_sim) { cmd_simulate(sim, common, log); }
    if (sub == s_agg) { cmd_aggregate(agg, common, log); }
    if (sub == s_fit) { cmd_fit(fitc, common, log); }
    if (sub == s_pred) { cmd_predict(predc, common, log); }
    if (sub == s_eval) { cmd_evaluate(eval, common, log); }
    if (sub == s_exp) { cmd_experiment(exp, common, log); }
  } catch (Error const& e) {
    std::cerr << "error: " << e.what() << "\n";
    code = exit_code(e.error_class());
    log.write({{"event", "error"}, {"class", code}, {"message", e.what()}});
  } catch (fs::filesystem_error const& e) {
    std::cerr << "error: " << e.what() << "\n";
    code = 1;
    log.write({{"event", "error"}, {"class", code}, {"message", e.what()}});
  } catch (std::exception const& e) {
    std::cerr << "error: " << e.what() << "\n";
    code = 3;
    log.write({{"event", "error"}, {"class", code}, {"message", e.what()}});
  }
  log.write({{"event", "end"}, {"status", code}, {"seconds", RunLog::since(t0)}});
  return code;
}
