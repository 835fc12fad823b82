#pragma once

//
// ... Standard header files
//
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

//
// ... External header files
//
#include <Eigen/Dense>

//
// ... stdisagg header files
//
#include <stdisagg/errors.hpp>

namespace stdisagg {

  struct Extents {
    double x0 = 0.0, x1 = 1.0;
    double y0 = 0.0, y1 = 1.0;
    double t0 = 0.0;
    double dt = 1.0;
  };

  struct Coords {
    double x;
    double y;
    double t;
  };

  // Regular space-time lattice. nx, ny count the observation window; the
  // buffer adds cells on every side. Nodes sit at cell centres, so the origin
  // (x0, y0) is the window corner and buffer nodes have negative local index.
  struct LatticeSpec {
    int nx = 1, ny = 1, nt = 1;
    double x0 = 0.0, y0 = 0.0, dx = 1.0, dy = 1.0;
    int buffer = 0;
    double t0 = 0.0, dt = 1.0;

    int gx() const { return nx + 2 * buffer; }
    int gy() const { return ny + 2 * buffer; }
    int spatial_nodes() const { return gx() * gy(); }
    int nodes() const { return spatial_nodes() * nt; }
    int interior_spatial() const { return nx * ny; }
    int interior_nodes() const { return nx * ny * nt; }

    // ix, iy are buffered-grid indices in [0, gx), [0, gy).
    int index(int ix, int iy, int it) const {
      if (ix < 0 || iy < 0 || it < 0 || ix >= gx() || iy >= gy() || it >= nt) {
        throw IndexOutOfRange("lattice index");
      }
      return it * spatial_nodes() + iy * gx() + ix;
    }

    // index of an interior node given window-local indices
    int interior_index(int ix, int iy, int it) const {
      return index(ix + buffer, iy + buffer, it);
    }

    void unravel(int idx, int& ix, int& iy, int& it) const {
      if (idx < 0 || idx >= nodes()) { throw IndexOutOfRange("node index"); }
      it = idx / spatial_nodes();
      int s = idx % spatial_nodes();
      iy = s / gx();
      ix = s % gx();
    }

    double x_of(int ix) const { return x0 + (ix - buffer + 0.5) * dx; }
    double y_of(int iy) const { return y0 + (iy - buffer + 0.5) * dy; }
    double t_of(int it) const { return t0 + it * dt; }

    bool is_interior(int ix, int iy) const {
      return ix >= buffer && ix < buffer + nx && iy >= buffer && iy < buffer + ny;
    }

    // Node nearest to a coordinate; exact inverse of node_coords.
    int index_of(Coords c) const {
      int ix = static_cast<int>(std::lround((c.x - x0) / dx - 0.5)) + buffer;
      int iy = static_cast<int>(std::lround((c.y - y0) / dy - 0.5)) + buffer;
      int it = static_cast<int>(std::lround((c.t - t0) / dt));
      return index(ix, iy, it);
    }

    // Buffered-grid node used for variance normalisation.
    int mid_node() const { return index(gx() / 2, gy() / 2, nt / 2); }

    // Interior node indices in (t, y, x) order.
    std::vector<int> interior_indices() const {
      std::vector<int> out;
      out.reserve(static_cast<std::size_t>(interior_nodes()));
      for (int it = 0; it < nt; ++it) {
        for (int iy = 0; iy < ny; ++iy) {
          for (int ix = 0; ix < nx; ++ix) { out.push_back(interior_index(ix, iy, it)); }
        }
      }
      return out;
    }

    bool operator==(LatticeSpec const&) const = default;
  };

  inline int default_buffer(double range_s, double dx) {
    return std::min(8, static_cast<int>(std::ceil(range_s / dx - 1e-9)));
  }

  inline LatticeSpec build_lattice(int nx, int ny, int nt, Extents const& e,
                                   int buffer) {
    if (nx < 1 || ny < 1 || nt < 1) { throw InvalidExtent("counts must be >= 1"); }
    if (!(e.x1 > e.x0) || !(e.y1 > e.y0) || !(e.dt > 0.0)) {
      throw InvalidExtent("extents must be positive");
    }
    if (buffer < 0) { throw InvalidExtent("negative buffer"); }
    LatticeSpec s;
    s.nx = nx;
    s.ny = ny;
    s.nt = nt;
    s.x0 = e.x0;
    s.y0 = e.y0;
    s.dx = (e.x1 - e.x0) / nx;
    s.dy = (e.y1 - e.y0) / ny;
    s.buffer = buffer;
    s.t0 = e.t0;
    s.dt = e.dt;
    return s;
  }

  struct Field {
    LatticeSpec spec;
    Eigen::VectorXd values;

    Field() = default;
    Field(LatticeSpec s, Eigen::VectorXd v) : spec(s), values(std::move(v)) {
      if (values.size() != spec.nodes()) { throw DimensionMismatch("field length"); }
    }
  };

  inline Coords node_coords(LatticeSpec const& s, int idx) {
    int ix, iy, it;
    s.unravel(idx, ix, iy, it);
    return {s.x_of(ix), s.y_of(iy), s.t_of(it)};
  }

  inline Field crop_interior(Field const& f) {
    LatticeSpec s = f.spec;
    s.buffer = 0;
    Eigen::VectorXd v(s.nodes());
    auto idx = f.spec.interior_indices();
    for (std::size_t k = 0; k < idx.size(); ++k) {
      v[static_cast<Eigen::Index>(k)] = f.values[idx[k]];
    }
    return Field(s, std::move(v));
  }

  // Interior field placed into a buffered lattice (buffer nodes get fill).
  inline Field embed(Field const& interior, int buffer, double fill = 0.0) {
    if (interior.spec.buffer != 0) { throw DimensionMismatch("embed needs an unbuffered field"); }
    LatticeSpec s = interior.spec;
    s.buffer = buffer;
    Eigen::VectorXd v = Eigen::VectorXd::Constant(s.nodes(), fill);
    auto idx = s.interior_indices();
    for (std::size_t k = 0; k < idx.size(); ++k) {
      v[idx[k]] = interior.values[static_cast<Eigen::Index>(k)];
    }
    return Field(s, std::move(v));
  }

} // end of namespace stdisagg
