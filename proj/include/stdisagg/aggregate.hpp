#pragma once

//
// ... Standard header files
//
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

//
// ... External header files
//
#include <Eigen/Dense>
#include <Eigen/Sparse>

//
// ... stdisagg header files
//
#include <stdisagg/errors.hpp>
#include <stdisagg/lattice.hpp>
#include <stdisagg/random.hpp>

namespace stdisagg {

  struct AggScheme {
    int s_f = 1;
    int t_f = 1;
  };

  // Spatial region: buffered-grid spatial nodes and their weights.
  struct Region {
    std::vector<int> nodes;
    std::vector<double> weights;
  };

  // Time window: time indices and weights.
  struct Window {
    std::vector<int> times;
    std::vector<double> weights;
  };

  using RowSparse = Eigen::SparseMatrix<double, Eigen::RowMajor, int>;

  // Observation operator from lattice nodes to aggregated cells. Every cell
  // is (region, window) and its weights factor as region weight x window
  // weight, which the fast inference engines rely on. Rows are time-major:
  // row = window * n_regions + region for the full grid.
  struct Projection {
    LatticeSpec spec;
    std::vector<Region> regions;
    std::vector<Window> windows;
    std::vector<std::pair<int, int>> cells; // row -> (region, window)
    RowSparse A;
    AggScheme scheme{0, 0}; // uniform factors, 0 if general
    int regions_x = 0, regions_y = 0;

    int rows() const { return static_cast<int>(cells.size()); }
    int cols() const { return spec.nodes(); }

    // All (region, window) pairs present in canonical order.
    bool complete() const {
      if (cells.size() != regions.size() * windows.size()) { return false; }
      int nr = static_cast<int>(regions.size());
      for (std::size_t r = 0; r < cells.size(); ++r) {
        if (cells[r].first != static_cast<int>(r) % nr ||
            cells[r].second != static_cast<int>(r) / nr) {
          return false;
        }
      }
      return true;
    }

    int row_of(int region, int window) const {
      for (std::size_t r = 0; r < cells.size(); ++r) {
        if (cells[r].first == region && cells[r].second == window) {
          return static_cast<int>(r);
        }
      }
      return -1;
    }

    void rebuild_matrix() {
      std::vector<Eigen::Triplet<double, int>> ts;
      int g = spec.spatial_nodes();
      for (std::size_t r = 0; r < cells.size(); ++r) {
        auto const& reg = regions[cells[r].first];
        auto const& win = windows[cells[r].second];
        for (std::size_t a = 0; a < win.times.size(); ++a) {
          for (std::size_t b = 0; b < reg.nodes.size(); ++b) {
            ts.emplace_back(static_cast<int>(r), win.times[a] * g + reg.nodes[b],
                            win.weights[a] * reg.weights[b]);
          }
        }
      }
      A.resize(rows(), cols());
      A.setFromTriplets(ts.begin(), ts.end());
      A.makeCompressed();
    }

    // Keep only the listed rows (missing cells dropped).
    Projection subset(std::vector<int> const& keep) const {
      Projection p = *this;
      p.cells.clear();
      for (int r : keep) { p.cells.push_back(cells.at(r)); }
      p.rebuild_matrix();
      return p;
    }
  };

  // Uniform factors: every row averages s_f^2 t_f nodes with weight
  // 1/(s_f^2 t_f). Buffer nodes never enter.
  inline Projection build_projection(LatticeSpec const& spec, AggScheme sc) {
    if (sc.s_f < 1 || sc.t_f < 1 || spec.nx % sc.s_f || spec.ny % sc.s_f ||
        spec.nt % sc.t_f) {
      throw IndivisibleFactor("s_f=" + std::to_string(sc.s_f) +
                              " t_f=" + std::to_string(sc.t_f) + " on " +
                              std::to_string(spec.nx) + "x" + std::to_string(spec.ny) +
                              "x" + std::to_string(spec.nt));
    }
    Projection p;
    p.spec = spec;
    p.scheme = sc;
    p.regions_x = spec.nx / sc.s_f;
    p.regions_y = spec.ny / sc.s_f;
    // weights are products of exact reciprocals; with the row weight
    // assigned directly to the product below
    double ws = 1.0 / (sc.s_f * sc.s_f);
    double wt = 1.0 / sc.t_f;
    for (int ry = 0; ry < p.regions_y; ++ry) {
      for (int rx = 0; rx < p.regions_x; ++rx) {
        Region r;
        for (int iy = 0; iy < sc.s_f; ++iy) {
          for (int ix = 0; ix < sc.s_f; ++ix) {
            int gx = spec.buffer + rx * sc.s_f + ix;
            int gy = spec.buffer + ry * sc.s_f + iy;
            r.nodes.push_back(gy * spec.gx() + gx);
            r.weights.push_back(ws);
          }
        }
        p.regions.push_back(std::move(r));
      }
    }
    for (int j = 0; j < spec.nt / sc.t_f; ++j) {
      Window w;
      for (int k = 0; k < sc.t_f; ++k) {
        w.times.push_back(j * sc.t_f + k);
        w.weights.push_back(wt);
      }
      p.windows.push_back(std::move(w));
    }
    int nr = static_cast<int>(p.regions.size());
    for (int j = 0; j < static_cast<int>(p.windows.size()); ++j) {
      for (int r = 0; r < nr; ++r) { p.cells.emplace_back(r, j); }
    }
    // assemble with the exact reciprocal of the cell size
    double w = 1.0 / (sc.s_f * sc.s_f * sc.t_f);
    std::vector<Eigen::Triplet<double, int>> ts;
    int g = spec.spatial_nodes();
    for (std::size_t row = 0; row < p.cells.size(); ++row) {
      auto const& reg = p.regions[p.cells[row].first];
      auto const& win = p.windows[p.cells[row].second];
      for (int t : win.times) {
        for (int s : reg.nodes) { ts.emplace_back(static_cast<int>(row), t * g + s, w); }
      }
    }
    p.A.resize(p.rows(), p.cols());
    p.A.setFromTriplets(ts.begin(), ts.end());
    p.A.makeCompressed();
    return p;
  }

  // General rectangular partition: x_cuts, y_cuts (coordinates) and t_cuts
  // (time values) delimit regions and windows; a node belongs to the cell
  // containing its centre. Weights |R_ik||T_jp| / (|R_i||T_j|).
  inline Projection build_projection_general(LatticeSpec const& spec,
                                             std::vector<double> const& x_cuts,
                                             std::vector<double> const& y_cuts,
                                             std::vector<double> const& t_cuts) {
    auto bin = [](std::vector<double> const& cuts, double v) {
      for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        if (v >= cuts[i] && v < cuts[i + 1]) { return static_cast<int>(i); }
      }
      return -1;
    };
    if (x_cuts.size() < 2 || y_cuts.size() < 2 || t_cuts.size() < 2) {
      throw ValidationError("need at least two cuts per axis");
    }
    Projection p;
    p.spec = spec;
    p.regions_x = static_cast<int>(x_cuts.size()) - 1;
    p.regions_y = static_cast<int>(y_cuts.size()) - 1;
    p.regions.resize(static_cast<std::size_t>(p.regions_x * p.regions_y));
    for (int iy = 0; iy < spec.ny; ++iy) {
      for (int ix = 0; ix < spec.nx; ++ix) {
        int bx = bin(x_cuts, spec.x_of(ix + spec.buffer));
        int by = bin(y_cuts, spec.y_of(iy + spec.buffer));
        if (bx < 0 || by < 0) { continue; }
        p.regions[by * p.regions_x + bx].nodes.push_back(
            (iy + spec.buffer) * spec.gx() + ix + spec.buffer);
      }
    }
    for (auto& r : p.regions) {
      if (r.nodes.empty()) { throw ValidationError("empty region in partition"); }
      r.weights.assign(r.nodes.size(), 1.0 / static_cast<double>(r.nodes.size()));
    }
    p.windows.resize(t_cuts.size() - 1);
    for (int it = 0; it < spec.nt; ++it) {
      int b = bin(t_cuts, spec.t_of(it));
      if (b >= 0) { p.windows[b].times.push_back(it); }
    }
    for (auto& w : p.windows) {
      if (w.times.empty()) { throw ValidationError("empty window in partition"); }
      w.weights.assign(w.times.size(), 1.0 / static_cast<double>(w.times.size()));
    }
    int nr = static_cast<int>(p.regions.size());
    for (int j = 0; j < static_cast<int>(p.windows.size()); ++j) {
      for (int r = 0; r < nr; ++r) { p.cells.emplace_back(r, j); }
    }
    p.rebuild_matrix();
    return p;
  }

  // y = P W + e, e ~ N(0, 1/tau). tau = +inf gives exact cell means.
  inline Eigen::VectorXd aggregate_observe(Field const& w, Projection const& p,
                                           double tau_eps, std::uint64_t seed) {
    if (w.spec != p.spec) { throw DimensionMismatch("field and projection lattices differ"); }
    if (!(tau_eps > 0.0)) { throw ValidationError("tau_eps must be positive"); }
    Eigen::VectorXd y = p.A * w.values;
    if (std::isfinite(tau_eps)) {
      Rng rng(seed);
      y += standard_normal_vector(rng, y.size()) / std::sqrt(tau_eps);
    }
    return y;
  }

  // Design at the aggregated resolution: intercept column then the cell mean
  // of every fine covariate (columns of x, rows in node order).
  inline Eigen::MatrixXd aggregate_covariates(Eigen::MatrixXd const& x,
                                              Projection const& p) {
    Eigen::MatrixXd d(p.rows(), 1 + x.cols());
    d.col(0).setOnes();
    if (x.cols() > 0) {
      if (x.rows() != p.cols()) { throw DimensionMismatch("covariate rows"); }
      d.rightCols(x.cols()) = p.A * x;
    }
    return d;
  }

  // Fine-resolution design (intercept + covariates) for every node.
  inline Eigen::MatrixXd fine_design(Eigen::MatrixXd const& x, int nodes) {
    Eigen::MatrixXd d(nodes, 1 + x.cols());
    d.col(0).setOnes();
    if (x.cols() > 0) { d.rightCols(x.cols()) = x; }
    return d;
  }

} // end of namespace stdisagg
