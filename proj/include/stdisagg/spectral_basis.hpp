#pragma once

//
// ... Standard header files
//
#include <cmath>
#include <numbers>

//
// ... External header files
//
#include <Eigen/Dense>

//
// ... stdisagg header files
//
#include <stdisagg/lattice.hpp>

namespace stdisagg {

  // Eigenbasis of the Neumann 5-point stiffness on a gx x gy grid. The 1D
  // reflecting Laplacian tridiag(-1, 2, -1) (with 1 in the corners) has
  // eigenvalues 2 - 2cos(pi j / n) and cosine eigenvectors at cell centres,
  // and the 2D operator is a Kronecker sum. Modes are indexed jy*gx + jx,
  // matching the node layout.
  class SpectralBasis {
  public:
    SpectralBasis() = default;

    SpectralBasis(int gx, int gy, double dx, double dy)
        : gx_(gx), gy_(gy), dx_(dx), dy_(dy), ex_(basis(gx)), ey_(basis(gy)),
          mux_(eigs(gx)), muy_(eigs(gy)) {}

    explicit SpectralBasis(LatticeSpec const& s)
        : SpectralBasis(s.gx(), s.gy(), s.dx, s.dy) {}

    int gx() const { return gx_; }
    int gy() const { return gy_; }
    int modes() const { return gx_ * gy_; }
    double cell_area() const { return dx_ * dy_; }
    Eigen::MatrixXd const& ex() const { return ex_; }
    Eigen::MatrixXd const& ey() const { return ey_; }

    // Eigenvalues of K = gamma^2 C + G, as a gx x gy array (jx, jy).
    Eigen::MatrixXd k_eigenvalues(double gamma_s) const {
      Eigen::MatrixXd lam(gx_, gy_);
      double wx = dy_ / dx_;
      double wy = dx_ / dy_;
      double c = gamma_s * gamma_s * dx_ * dy_;
      for (int jy = 0; jy < gy_; ++jy) {
        for (int jx = 0; jx < gx_; ++jx) {
          lam(jx, jy) = c + wx * mux_[jx] + wy * muy_[jy];
        }
      }
      return lam;
    }

    // Spatial field stored as a gx x gy matrix (column-major = node order).
    Eigen::MatrixXd forward(Eigen::MatrixXd const& f) const {
      return ex_.transpose() * f * ey_;
    }
    Eigen::MatrixXd inverse(Eigen::MatrixXd const& a) const {
      return ex_ * a * ey_.transpose();
    }

    // Value of every mode at spatial node (ix, iy), as a gx x gy matrix.
    Eigen::MatrixXd node_modes(int ix, int iy) const {
      return ex_.row(ix).transpose() * ey_.row(iy);
    }

  private:
    static Eigen::MatrixXd basis(int n) {
      Eigen::MatrixXd e(n, n);
      for (int j = 0; j < n; ++j) {
        double s = (j == 0) ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
        for (int i = 0; i < n; ++i) {
          e(i, j) = s * std::cos(std::numbers::pi * j * (i + 0.5) / n);
        }
      }
      return e;
    }
    static Eigen::VectorXd eigs(int n) {
      Eigen::VectorXd m(n);
      for (int j = 0; j < n; ++j) {
        m[j] = 2.0 - 2.0 * std::cos(std::numbers::pi * j / n);
      }
      return m;
    }

    int gx_ = 1, gy_ = 1;
    double dx_ = 1.0, dy_ = 1.0;
    Eigen::MatrixXd ex_, ey_;
    Eigen::VectorXd mux_, muy_;
  };

} // end of namespace stdisagg
