#pragma once

//
// ... Standard header files
//
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

//
// ... External header files
//
#include <Eigen/Dense>
#include <json.hpp>

//
// ... stdisagg header files
//
#include <stdisagg/aggregate.hpp>
#include <stdisagg/errors.hpp>
#include <stdisagg/infer/fit.hpp>
#include <stdisagg/infer/obs_model.hpp>
#include <stdisagg/lattice.hpp>
#include <stdisagg/version.hpp>

// On-disk formats. Every integer coordinate is a lattice index, never a
// float: cells use aggregated indices (cell_x, cell_y, cell_t), fine rasters
// and predictions use fine interior indices (x, y, t). Doubles are written
// with 17 significant digits so a reload is bit-exact.
namespace stdisagg::io {

  using json = nlohmann::json;
  namespace fs = std::filesystem;

  // ----------------------------------------------------------- numbers

  inline std::string num(double v) {
    if (std::isnan(v)) { return "nan"; }
    if (std::isinf(v)) { return v > 0 ? "inf" : "-inf"; }
    char buf[32];
    auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, r.ptr);
  }

  inline std::optional<double> parse_double(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) { s.remove_prefix(1); }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
      s.remove_suffix(1);
    }
    if (s == "nan" || s == "NaN" || s == "NA") { return std::numeric_limits<double>::quiet_NaN(); }
    if (s == "inf") { return std::numeric_limits<double>::infinity(); }
    if (s == "-inf") { return -std::numeric_limits<double>::infinity(); }
    if (!s.empty() && s.front() == '+') { s.remove_prefix(1); }
    double v = 0.0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size() || s.empty()) { return std::nullopt; }
    return v;
  }

  inline std::optional<int> parse_int(std::string_view s) {
    auto d = parse_double(s);
    if (!d || !std::isfinite(*d) || *d != std::floor(*d) || std::abs(*d) > 1e9) { return std::nullopt; }
    return static_cast<int>(*d);
  }

  // ----------------------------------------------------------- CSV

  struct CsvRow {
    int line = 0; // 1-based line number in the file
    std::vector<std::string> cells;
  };

  struct Csv {
    std::string path;
    std::vector<std::string> header;
    std::vector<CsvRow> rows;

    int column(std::string const& name) const {
      for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) { return static_cast<int>(i); }
      }
      return -1;
    }
    std::string where(CsvRow const& r) const { return path + ":" + std::to_string(r.line); }
  };

  inline std::vector<std::string> split(std::string const& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
      if (c == ',') {
        out.push_back(cur);
        cur.clear();
      } else if (c != '\r') {
        cur += c;
      }
    }
    out.push_back(cur);
    for (auto& s : out) {
      auto a = s.find_first_not_of(" \t");
      auto b = s.find_last_not_of(" \t");
      s = a == std::string::npos ? "" : s.substr(a, b - a + 1);
    }
    return out;
  }

  inline Csv read_csv(std::string const& path) {
    std::ifstream f(path);
    if (!f) { throw IoError("cannot open " + path); }
    Csv c;
    c.path = path;
    std::string line;
    int n = 0;
    while (std::getline(f, line)) {
      ++n;
      if (line.empty() || line == "\r" || line[0] == '#') { continue; }
      if (c.header.empty()) {
        c.header = split(line);
        continue;
      }
      auto cells = split(line);
      if (cells.size() != c.header.size()) {
        throw SchemaError(path + ":" + std::to_string(n) + ": expected " +
                          std::to_string(c.header.size()) + " fields, got " +
                          std::to_string(cells.size()));
      }
      c.rows.push_back({n, std::move(cells)});
    }
    if (c.header.empty()) { throw SchemaError(path + ": empty file"); }
    return c;
  }

  inline void require_columns(Csv const& c, std::vector<std::string> const& cols) {
    for (auto const& name : cols) {
      if (c.column(name) < 0) { throw SchemaError(c.path + ":1: missing column '" + name + "'"); }
    }
  }

  inline int int_at(Csv const& c, CsvRow const& r, int col) {
    auto v = parse_int(r.cells[static_cast<std::size_t>(col)]);
    if (!v) {
      throw SchemaError(c.where(r) + ": '" + c.header[static_cast<std::size_t>(col)] +
                        "' is not an integer index: '" + r.cells[static_cast<std::size_t>(col)] + "'");
    }
    return *v;
  }

  inline double double_at(Csv const& c, CsvRow const& r, int col) {
    auto v = parse_double(r.cells[static_cast<std::size_t>(col)]);
    if (!v) {
      throw SchemaError(c.where(r) + ": '" + c.header[static_cast<std::size_t>(col)] +
                        "' is not a number: '" + r.cells[static_cast<std::size_t>(col)] + "'");
    }
    return *v;
  }

  inline std::ofstream open_out(fs::path const& p) {
    std::ofstream f(p);
    if (!f) { throw IoError("cannot write " + p.string()); }
    return f;
  }

  inline json read_json(fs::path const& p) {
    std::ifstream f(p);
    if (!f) { throw IoError("cannot open " + p.string()); }
    try {
      return json::parse(f);
    } catch (json::exception const& e) {
      throw SchemaError(p.string() + ": " + e.what());
    }
  }

  // ----------------------------------------------------------- lattices

  inline json lattice_json(LatticeSpec const& s) {
    return {{"nx", s.nx}, {"ny", s.ny}, {"nt", s.nt}, {"x0", s.x0}, {"y0", s.y0},
            {"dx", s.dx}, {"dy", s.dy}, {"t0", s.t0}, {"dt", s.dt}, {"buffer", s.buffer}};
  }

  inline LatticeSpec lattice_from_json(json const& j, std::string const& where) {
    try {
      LatticeSpec s;
      s.nx = j.at("nx").get<int>();
      s.ny = j.at("ny").get<int>();
      s.nt = j.at("nt").get<int>();
      s.x0 = j.at("x0").get<double>();
      s.y0 = j.at("y0").get<double>();
      s.dx = j.at("dx").get<double>();
      s.dy = j.at("dy").get<double>();
      s.t0 = j.at("t0").get<double>();
      s.dt = j.at("dt").get<double>();
      s.buffer = j.value("buffer", 0);
      if (s.nx < 1 || s.ny < 1 || s.nt < 1 || !(s.dx > 0) || !(s.dy > 0) || !(s.dt > 0) ||
          s.buffer < 0) {
        throw InvalidExtent(where + ": lattice counts and spacings must be positive");
      }
      return s;
    } catch (json::exception const& e) {
      throw SchemaError(where + ": lattice: " + e.what());
    }
  }

  // ----------------------------------------------------------- fields

  // A field on an unbuffered lattice: field.json (lattice plus free-form
  // provenance) and field.csv (x, y, t, value).
  inline void write_field(Field const& f, std::string const& dir, json const& extra = json::object()) {
    if (f.spec.buffer != 0) { throw ValidationError("write_field expects an interior field"); }
    fs::create_directories(dir);
    json j = extra;
    j["lattice"] = lattice_json(f.spec);
    j["version"] = version;
    open_out(fs::path(dir) / "field.json") << j.dump(2) << "\n";
    auto out = open_out(fs::path(dir) / "field.csv");
    out << "x,y,t,value\n";
    auto const& s = f.spec;
    for (int t = 0; t < s.nt; ++t) {
      for (int y = 0; y < s.ny; ++y) {
        for (int x = 0; x < s.nx; ++x) {
          out << x << "," << y << "," << t << "," << num(f.values[s.index(x, y, t)]) << "\n";
        }
      }
    }
  }

  // Reads columns (x, y, t, <cols>...) onto the interior lattice s. Every
  // node must appear exactly once.
  inline std::vector<Eigen::VectorXd> read_node_table(std::string const& path, LatticeSpec const& s,
                                                      std::vector<std::string> const& cols) {
    Csv c = read_csv(path);
    std::vector<std::string> need{"x", "y", "t"};
    need.insert(need.end(), cols.begin(), cols.end());
    require_columns(c, need);
    int cx = c.column("x"), cy = c.column("y"), ct = c.column("t");
    std::vector<int> cv;
    for (auto const& n : cols) { cv.push_back(c.column(n)); }
    std::vector<Eigen::VectorXd> out(cols.size(), Eigen::VectorXd::Constant(s.interior_nodes(),
                                                                            std::nan("")));
    std::vector<int> seen(static_cast<std::size_t>(s.interior_nodes()), 0);
    for (auto const& r : c.rows) {
      int x = int_at(c, r, cx), y = int_at(c, r, cy), t = int_at(c, r, ct);
      if (x < 0 || y < 0 || t < 0 || x >= s.nx || y >= s.ny || t >= s.nt) {
        throw BoundsError(c.where(r) + ": node (" + std::to_string(x) + "," + std::to_string(y) +
                          "," + std::to_string(t) + ") outside the lattice");
      }
      int i = (t * s.ny + y) * s.nx + x;
      if (seen[static_cast<std::size_t>(i)]++) {
        throw DuplicateCell(c.where(r) + ": node (" + std::to_string(x) + "," + std::to_string(y) +
                            "," + std::to_string(t) + ") repeated");
      }
      for (std::size_t k = 0; k < cols.size(); ++k) { out[k][i] = double_at(c, r, cv[k]); }
    }
    for (std::size_t i = 0; i < seen.size(); ++i) {
      if (!seen[i]) {
        int ii = static_cast<int>(i);
        throw CovariateGap(path + ": node (" + std::to_string(ii % s.nx) + "," +
                           std::to_string((ii / s.nx) % s.ny) + "," +
                           std::to_string(ii / (s.nx * s.ny)) + ") missing");
      }
    }
    return out;
  }

  inline Field read_field(std::string const& dir) {
    json j = read_json(fs::path(dir) / "field.json");
    if (!j.contains("lattice")) { throw SchemaError(dir + "/field.json: no lattice"); }
    LatticeSpec s = lattice_from_json(j["lattice"], dir + "/field.json");
    s.buffer = 0;
    auto v = read_node_table((fs::path(dir) / "field.csv").string(), s, {"value"});
    return Field(s, v[0]);
  }

  // ----------------------------------------------------------- datasets

  struct CovariateMeta {
    std::string name;
    std::string file;
    std::string units;
  };

  // metadata.json: the aggregated grid (cell origin, spacing, counts), the
  // time axis, the factors to the target lattice, the variable and its units,
  // optional covariate rasters and an optional lattice buffer.
  struct Metadata {
    double x0 = 0, y0 = 0, dx = 1, dy = 1;
    int nx = 1, ny = 1;
    double t0 = 0, dt = 1;
    int nt = 1;
    int s_f = 1, t_f = 1;
    std::string variable = "value";
    std::string units;
    std::optional<int> buffer;
    std::string observations = "observations.csv";
    std::vector<CovariateMeta> covariates;

    // Target (fine) lattice without buffer.
    LatticeSpec fine() const {
      LatticeSpec s;
      s.nx = nx * s_f;
      s.ny = ny * s_f;
      s.nt = nt * t_f;
      s.x0 = x0;
      s.y0 = y0;
      s.dx = dx / s_f;
      s.dy = dy / s_f;
      s.t0 = t0;
      s.dt = dt / t_f;
      return s;
    }
  };

  inline json to_json(Metadata const& m) {
    json j;
    j["grid"] = {{"x0", m.x0}, {"y0", m.y0}, {"dx", m.dx}, {"dy", m.dy}, {"nx", m.nx}, {"ny", m.ny}};
    j["time"] = {{"t0", m.t0}, {"dt", m.dt}, {"nt", m.nt}};
    j["factors"] = {{"s_f", m.s_f}, {"t_f", m.t_f}};
    j["variable"] = {{"name", m.variable}, {"units", m.units}};
    j["observations"] = m.observations;
    if (m.buffer) { j["buffer"] = *m.buffer; }
    j["covariates"] = json::array();
    for (auto const& c : m.covariates) {
      j["covariates"].push_back({{"name", c.name}, {"file", c.file}, {"units", c.units}});
    }
    return j;
  }

  inline Metadata metadata_from_json(json const& j, std::string const& where) {
    Metadata m;
    try {
      auto const& g = j.at("grid");
      m.x0 = g.value("x0", 0.0);
      m.y0 = g.value("y0", 0.0);
      m.dx = g.at("dx").get<double>();
      m.dy = g.at("dy").get<double>();
      m.nx = g.at("nx").get<int>();
      m.ny = g.at("ny").get<int>();
      auto const& t = j.at("time");
      m.t0 = t.value("t0", 0.0);
      m.dt = t.at("dt").get<double>();
      m.nt = t.at("nt").get<int>();
      if (j.contains("factors")) {
        m.s_f = j["factors"].value("s_f", 1);
        m.t_f = j["factors"].value("t_f", 1);
      }
      if (j.contains("variable")) {
        m.variable = j["variable"].value("name", m.variable);
        m.units = j["variable"].value("units", "");
      }
      m.observations = j.value("observations", m.observations);
      if (j.contains("buffer")) { m.buffer = j["buffer"].get<int>(); }
      for (auto const& c : j.value("covariates", json::array())) {
        m.covariates.push_back({c.at("name").get<std::string>(), c.at("file").get<std::string>(),
                                c.value("units", "")});
      }
    } catch (json::exception const& e) {
      throw SchemaError(where + ": " + e.what());
    }
    if (m.nx < 1 || m.ny < 1 || m.nt < 1 || !(m.dx > 0) || !(m.dy > 0) || !(m.dt > 0)) {
      throw InvalidExtent(where + ": grid counts and spacings must be positive");
    }
    if (m.s_f < 1 || m.t_f < 1) { throw ValidationError(where + ": factors must be >= 1"); }
    if (m.buffer && *m.buffer < 0) { throw InvalidExtent(where + ": negative buffer"); }
    return m;
  }

  struct GriddedDataset {
    Metadata meta;
    LatticeSpec spec;                  // buffered target lattice
    Projection P;                      // every cell of the aggregated grid
    Eigen::VectorXd y;                 // rows of P, NaN where missing
    Eigen::MatrixXd covariates;        // one column per covariate, rows = lattice nodes
    std::vector<std::string> covariate_names;

    int observed() const { return static_cast<int>((y.array() == y.array()).count()); }

    // Observation model with missing cells dropped.
    ObsModel obs_model(ModelSpec const& m) const {
      std::vector<int> keep;
      for (int i = 0; i < y.size(); ++i) {
        if (!std::isnan(y[i])) { keep.push_back(i); }
      }
      Eigen::VectorXd yk(static_cast<Eigen::Index>(keep.size()));
      for (std::size_t k = 0; k < keep.size(); ++k) { yk[static_cast<Eigen::Index>(k)] = y[keep[k]]; }
      return make_obs_model(yk, keep.size() == static_cast<std::size_t>(y.size()) ? P : P.subset(keep),
                            m, covariates);
    }
  };

  // Buffer used when the metadata does not fix one: enough for the initial
  // spatial range guess (a quarter of the window).
  inline int auto_buffer(LatticeSpec const& s) {
    double w = std::max(s.nx * s.dx, s.ny * s.dy);
    return default_buffer(w / 4.0, std::min(s.dx, s.dy));
  }

  // Fine covariate on the interior lattice extended to the buffer by the
  // nearest interior node.
  inline Eigen::VectorXd extend_to_buffer(std::vector<Eigen::VectorXd> const& per_t, bool time_varying,
                                          LatticeSpec const& s) {
    Eigen::VectorXd out(s.nodes());
    for (int t = 0; t < s.nt; ++t) {
      Eigen::VectorXd const& src = per_t[time_varying ? static_cast<std::size_t>(t) : 0];
      for (int iy = 0; iy < s.gy(); ++iy) {
        for (int ix = 0; ix < s.gx(); ++ix) {
          int x = std::clamp(ix - s.buffer, 0, s.nx - 1);
          int y = std::clamp(iy - s.buffer, 0, s.ny - 1);
          out[s.index(ix, iy, t)] = src[y * s.nx + x];
        }
      }
    }
    return out;
  }

  // Covariate CSV: (x, y, value) for a static raster or (x, y, t, value).
  inline Eigen::VectorXd read_covariate(std::string const& path, LatticeSpec const& s) {
    Csv c = read_csv(path);
    require_columns(c, {"x", "y", "value"});
    bool tv = c.column("t") >= 0;
    int cx = c.column("x"), cy = c.column("y"), ct = c.column("t"), cv = c.column("value");
    int nt = tv ? s.nt : 1;
    std::vector<Eigen::VectorXd> per_t(static_cast<std::size_t>(nt),
                                       Eigen::VectorXd::Constant(s.nx * s.ny, std::nan("")));
    for (auto const& r : c.rows) {
      int x = int_at(c, r, cx), y = int_at(c, r, cy), t = tv ? int_at(c, r, ct) : 0;
      if (x < 0 || y < 0 || t < 0 || x >= s.nx || y >= s.ny || t >= nt) {
        throw BoundsError(c.where(r) + ": fine node (" + std::to_string(x) + "," + std::to_string(y) +
                          (tv ? "," + std::to_string(t) : "") + ") outside the target lattice");
      }
      double& slot = per_t[static_cast<std::size_t>(t)][y * s.nx + x];
      if (!std::isnan(slot)) {
        throw DuplicateCell(c.where(r) + ": fine node (" + std::to_string(x) + "," +
                            std::to_string(y) + (tv ? "," + std::to_string(t) : "") + ") repeated");
      }
      double v = double_at(c, r, cv);
      if (!std::isfinite(v)) { throw SchemaError(c.where(r) + ": covariate value must be finite"); }
      slot = v;
    }
    for (int t = 0; t < nt; ++t) {
      for (int i = 0; i < s.nx * s.ny; ++i) {
        if (std::isnan(per_t[static_cast<std::size_t>(t)][i])) {
          throw CovariateGap(path + ": no value for fine node (" + std::to_string(i % s.nx) + "," +
                             std::to_string(i / s.nx) + (tv ? "," + std::to_string(t) : "") + ")");
        }
      }
    }
    return extend_to_buffer(per_t, tv, s);
  }

  // buffer overrides the metadata value when given.
  inline GriddedDataset load_dataset(std::string const& dir, std::optional<int> buffer = std::nullopt) {
    fs::path root(dir);
    if (!fs::is_directory(root)) { throw IoError("dataset directory not found: " + dir); }
    GriddedDataset d;
    d.meta = metadata_from_json(read_json(root / "metadata.json"), (root / "metadata.json").string());
    LatticeSpec s = d.meta.fine();
    if (buffer && *buffer < 0) { throw InvalidExtent("negative buffer"); }
    s.buffer = buffer ? *buffer : d.meta.buffer ? *d.meta.buffer : auto_buffer(s);
    d.spec = s;
    d.P = build_projection(s, {d.meta.s_f, d.meta.t_f});
    int nr = d.meta.nx * d.meta.ny;
    d.y = Eigen::VectorXd::Constant(d.P.rows(), std::nan(""));
    std::vector<int> line_of(static_cast<std::size_t>(d.P.rows()), 0);

    Csv c = read_csv((root / d.meta.observations).string());
    require_columns(c, {"cell_x", "cell_y", "cell_t", "value"});
    int cx = c.column("cell_x"), cy = c.column("cell_y"), ct = c.column("cell_t"),
        cv = c.column("value");
    for (auto const& r : c.rows) {
      int x = int_at(c, r, cx), y = int_at(c, r, cy), t = int_at(c, r, ct);
      if (x < 0 || y < 0 || t < 0 || x >= d.meta.nx || y >= d.meta.ny || t >= d.meta.nt) {
        throw BoundsError(c.where(r) + ": cell (" + std::to_string(x) + "," + std::to_string(y) +
                          "," + std::to_string(t) + ") outside the declared grid");
      }
      int row = t * nr + y * d.meta.nx + x;
      if (line_of[static_cast<std::size_t>(row)]) {
        throw DuplicateCell(c.where(r) + ": cell (" + std::to_string(x) + "," + std::to_string(y) +
                            "," + std::to_string(t) + ") already given on line " +
                            std::to_string(line_of[static_cast<std::size_t>(row)]));
      }
      line_of[static_cast<std::size_t>(row)] = r.line;
      double v = double_at(c, r, cv);
      if (std::isinf(v)) { throw SchemaError(c.where(r) + ": infinite value"); }
      d.y[row] = v;
    }
    d.covariates.resize(s.nodes(), static_cast<Eigen::Index>(d.meta.covariates.size()));
    for (std::size_t k = 0; k < d.meta.covariates.size(); ++k) {
      auto const& cm = d.meta.covariates[k];
      d.covariates.col(static_cast<Eigen::Index>(k)) = read_covariate((root / cm.file).string(), s);
      d.covariate_names.push_back(cm.name);
    }
    return d;
  }

  // Writes metadata.json, observations.csv (missing cells omitted) and the
  // covariate rasters. Covariates are interior values, one column each, in
  // interior (t, y, x) order, written static when flagged.
  struct CovariateRaster {
    CovariateMeta meta;
    Eigen::VectorXd values; // static: nx*ny; time-varying: nx*ny*nt
    bool time_varying = false;
  };

  inline void write_dataset(std::string const& dir, Metadata m, Eigen::VectorXd const& y,
                            std::vector<CovariateRaster> const& covs = {}) {
    int nr = m.nx * m.ny;
    if (y.size() != static_cast<Eigen::Index>(nr) * m.nt) {
      throw DimensionMismatch("observations do not match the declared grid");
    }
    fs::create_directories(dir);
    fs::path root(dir);
    m.covariates.clear();
    for (auto const& c : covs) { m.covariates.push_back(c.meta); }
    open_out(root / "metadata.json") << to_json(m).dump(2) << "\n";
    auto out = open_out(root / m.observations);
    out << "cell_x,cell_y,cell_t,value\n";
    for (int t = 0; t < m.nt; ++t) {
      for (int cy = 0; cy < m.ny; ++cy) {
        for (int cx = 0; cx < m.nx; ++cx) {
          double v = y[t * nr + cy * m.nx + cx];
          if (std::isnan(v)) { continue; }
          out << cx << "," << cy << "," << t << "," << num(v) << "\n";
        }
      }
    }
    LatticeSpec f = m.fine();
    for (auto const& c : covs) {
      auto co = open_out(root / c.meta.file);
      co << (c.time_varying ? "x,y,t,value\n" : "x,y,value\n");
      int nt = c.time_varying ? f.nt : 1;
      if (c.values.size() != static_cast<Eigen::Index>(f.nx) * f.ny * nt) {
        throw DimensionMismatch("covariate '" + c.meta.name + "' does not match the fine lattice");
      }
      for (int t = 0; t < nt; ++t) {
        for (int yy = 0; yy < f.ny; ++yy) {
          for (int xx = 0; xx < f.nx; ++xx) {
            co << xx << "," << yy << ",";
            if (c.time_varying) { co << t << ","; }
            co << num(c.values[(t * f.ny + yy) * f.nx + xx]) << "\n";
          }
        }
      }
    }
  }

  // ----------------------------------------------------------- results

  struct ResultOptions {
    std::vector<double> thresholds;
    std::vector<std::string> fixed_names; // defaults to intercept, beta1, ...
    json extra = json::object();
  };

  inline json summary_json(ParamSummary const& p) {
    return {{"mean", p.mean}, {"sd", p.sd}, {"q0.025", p.lo}, {"q0.5", p.median}, {"q0.975", p.hi}};
  }

  inline ParamSummary summary_from_json(std::string name, json const& j) {
    ParamSummary p;
    p.name = std::move(name);
    p.mean = j.at("mean").get<double>();
    p.sd = j.at("sd").get<double>();
    p.lo = j.at("q0.025").get<double>();
    p.median = j.at("q0.5").get<double>();
    p.hi = j.at("q0.975").get<double>();
    return p;
  }

  // summary.json, prediction.csv and, when thresholds are given,
  // exceedance.csv (x, y, t, threshold, probability).
  inline void write_results(FitResult const& fr, std::string const& dir, ResultOptions const& o = {}) {
    fs::create_directories(dir);
    fs::path root(dir);
    json j = o.extra;
    j["version"] = version;
    j["engine"] = fr.engine;
    j["model"] = to_string(fr.theta_hat.kind);
    j["scheme"] = fr.theta_hat.scheme == TemporalScheme::exact ? "exact" : "implicit_euler";
    j["loglik"] = fr.loglik;
    j["converged"] = fr.converged;
    j["iterations"] = fr.iterations;
    j["hessian_ok"] = fr.hessian_ok;
    j["lattice"] = lattice_json(fr.pred.mean.spec);
    j["hyperparameters"] = json::object();
    for (auto const& p : fr.theta_ci) { j["hyperparameters"][p.name] = summary_json(p); }
    j["fixed_effects"] = json::array();
    for (std::size_t i = 0; i < fr.beta_post.size(); ++i) {
      std::string name = i < o.fixed_names.size() ? o.fixed_names[i]
                         : i == 0                 ? std::string("intercept")
                                                  : "beta" + std::to_string(i);
      json e = summary_json(fr.beta_post[i]);
      e["name"] = name;
      j["fixed_effects"].push_back(e);
    }
    j["thresholds"] = o.thresholds;
    j["seconds"] = {{"optimize", fr.seconds_optimize},
                    {"hessian", fr.seconds_hessian},
                    {"predict", fr.seconds_predict}};
    // 17 significant digits in the JSON as well
    open_out(root / "summary.json") << j.dump(2) << "\n";

    auto const& s = fr.pred.mean.spec;
    auto pc = open_out(root / "prediction.csv");
    pc << "x,y,t,mean,sd,lo95,hi95\n";
    for (int t = 0; t < s.nt; ++t) {
      for (int y = 0; y < s.ny; ++y) {
        for (int x = 0; x < s.nx; ++x) {
          int i = (t * s.ny + y) * s.nx + x;
          pc << x << "," << y << "," << t << "," << num(fr.pred.mean.values[i]) << ","
             << num(fr.pred.sd.values[i]) << "," << num(fr.pred.lo.values[i]) << ","
             << num(fr.pred.hi.values[i]) << "\n";
        }
      }
    }
    if (!o.thresholds.empty()) {
      auto ec = open_out(root / "exceedance.csv");
      ec << "x,y,t,threshold,probability\n";
      std::vector<Field> ex;
      for (double c : o.thresholds) { ex.push_back(exceedance(fr.pred, c)); }
      for (int t = 0; t < s.nt; ++t) {
        for (int y = 0; y < s.ny; ++y) {
          for (int x = 0; x < s.nx; ++x) {
            int i = (t * s.ny + y) * s.nx + x;
            for (std::size_t k = 0; k < ex.size(); ++k) {
              ec << x << "," << y << "," << t << "," << num(o.thresholds[k]) << ","
                 << num(ex[k].values[i]) << "\n";
            }
          }
        }
      }
    }
  }

  struct LoadedResults {
    json summary;
    LatticeSpec spec;
    std::vector<ParamSummary> hyper;
    std::vector<ParamSummary> fixed;
    Field mean, sd, lo, hi;
    std::map<double, Field> exceedance;

    // Point estimate of the hyperparameters (posterior median).
    Hyper hyper_median() const {
      Hyper h;
      for (auto const& p : hyper) {
        if (p.name == "sigma2") { h.sigma2 = p.median; }
        if (p.name == "range_s") { h.range_s = p.median; }
        if (p.name == "range_t") { h.range_t = p.median; }
        if (p.name == "tau_eps") { h.tau_eps = p.median; }
      }
      return h;
    }
  };

  inline LoadedResults read_results(std::string const& dir) {
    fs::path root(dir);
    LoadedResults r;
    r.summary = read_json(root / "summary.json");
    std::string where = (root / "summary.json").string();
    r.spec = lattice_from_json(r.summary.at("lattice"), where);
    try {
      for (auto const& name : Hyper::names) {
        r.hyper.push_back(summary_from_json(name, r.summary.at("hyperparameters").at(name)));
      }
      for (auto const& e : r.summary.at("fixed_effects")) {
        r.fixed.push_back(summary_from_json(e.at("name").get<std::string>(), e));
      }
    } catch (json::exception const& e) {
      throw SchemaError(where + ": " + e.what());
    }
    auto cols = read_node_table((root / "prediction.csv").string(), r.spec,
                                {"mean", "sd", "lo95", "hi95"});
    r.mean = Field(r.spec, cols[0]);
    r.sd = Field(r.spec, cols[1]);
    r.lo = Field(r.spec, cols[2]);
    r.hi = Field(r.spec, cols[3]);
    if (fs::exists(root / "exceedance.csv")) {
      Csv c = read_csv((root / "exceedance.csv").string());
      require_columns(c, {"x", "y", "t", "threshold", "probability"});
      int cx = c.column("x"), cy = c.column("y"), ct = c.column("t"), ch = c.column("threshold"),
          cp = c.column("probability");
      for (auto const& row : c.rows) {
        double th = double_at(c, row, ch);
        auto it = r.exceedance.find(th);
        if (it == r.exceedance.end()) {
          it = r.exceedance
                   .emplace(th, Field(r.spec, Eigen::VectorXd::Constant(r.spec.interior_nodes(),
                                                                        std::nan(""))))
                   .first;
        }
        int x = int_at(c, row, cx), y = int_at(c, row, cy), t = int_at(c, row, ct);
        if (x < 0 || y < 0 || t < 0 || x >= r.spec.nx || y >= r.spec.ny || t >= r.spec.nt) {
          throw BoundsError(c.where(row) + ": node outside the lattice");
        }
        it->second.values[(t * r.spec.ny + y) * r.spec.nx + x] = double_at(c, row, cp);
      }
    }
    return r;
  }

} // end of namespace stdisagg::io
