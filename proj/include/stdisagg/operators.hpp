#pragma once

//
// ... Standard header files
//
#include <cmath>
#include <vector>

//
// ... stdisagg header files
//
#include <stdisagg/errors.hpp>
#include <stdisagg/lattice.hpp>
#include <stdisagg/sparsela/sparse_sym.hpp>

namespace stdisagg {

  // L_s = gamma_s^2 - Laplacian on the buffered spatial grid of a lattice.
  // C is the lumped mass (cell area on the diagonal), G the 5-point
  // stiffness with reflecting (Neumann) boundary, K = gamma_s^2 C + G.
  struct SpatialOperator {
    int gx = 1, gy = 1;
    double dx = 1.0, dy = 1.0;
    double gamma_s = 1.0;
    bool periodic = false;
    SparseSym C;
    SparseSym G;
    SparseSym K;

    double cell_area() const { return dx * dy; }
  };

  namespace detail {

    inline SparseSym stiffness(int gx, int gy, double dx, double dy,
                               bool periodic) {
      double wx = dy / dx;
      double wy = dx / dy;
      std::vector<Triplet> ts;
      std::vector<double> d(static_cast<std::size_t>(gx * gy), 0.0);
      auto link = [&](int a, int b, double w) {
        if (a == b) { return; }
        ts.push_back({a, b, -w});
        d[a] += w;
        d[b] += w;
      };
      for (int iy = 0; iy < gy; ++iy) {
        for (int ix = 0; ix < gx; ++ix) {
          int k = iy * gx + ix;
          if (ix + 1 < gx) {
            link(k, k + 1, wx);
          } else if (periodic && gx > 2) {
            link(k, iy * gx, wx);
          }
          if (iy + 1 < gy) {
            link(k, k + gx, wy);
          } else if (periodic && gy > 2) {
            link(k, ix, wy);
          }
        }
      }
      for (int k = 0; k < gx * gy; ++k) { ts.push_back({k, k, d[k]}); }
      return SparseSym::from_triplets(gx * gy, ts);
    }

  } // end of namespace detail

  inline SpatialOperator build_operator_grid(int gx, int gy, double dx,
                                             double dy, double gamma_s,
                                             bool periodic = false) {
    if (!(gamma_s > 0.0)) { throw InvalidExtent("gamma_s must be positive"); }
    SpatialOperator op;
    op.gx = gx;
    op.gy = gy;
    op.dx = dx;
    op.dy = dy;
    op.gamma_s = gamma_s;
    op.periodic = periodic;
    op.C = SparseSym::identity(gx * gy, dx * dy);
    op.G = detail::stiffness(gx, gy, dx, dy, periodic);
    op.K = op.C.scaled(gamma_s * gamma_s) + op.G;
    return op;
  }

  inline SpatialOperator build_operator(LatticeSpec const& spec, double gamma_s) {
    return build_operator_grid(spec.gx(), spec.gy(), spec.dx, spec.dy, gamma_s);
  }

  // Periodic variant; only used to check the stencil against its spectrum.
  inline SpatialOperator build_operator_periodic(LatticeSpec const& spec,
                                                 double gamma_s) {
    return build_operator_grid(spec.gx(), spec.gy(), spec.dx, spec.dy, gamma_s,
                               true);
  }

  // k = 1 -> K, k = 2 -> K C^{-1} K. C is a scalar multiple of I here, so the
  // product is K*K / (dx dy).
  inline SparseSym operator_power(SpatialOperator const& op, int k) {
    if (k == 1) { return op.K; }
    if (k != 2) { throw UnsupportedPower(k); }
    CscMat kf = op.K.full();
    CscMat k2 = (kf * kf).pruned();
    k2 /= op.cell_area();
    return SparseSym::from_lower(k2);
  }

} // end of namespace stdisagg
