#pragma once

//
// ... External header files
//
#include <Eigen/Dense>

//
// ... stdisagg header files
//
#include <stdisagg/errors.hpp>
#include <stdisagg/sparsela/sparse_sym.hpp>

namespace stdisagg::dense {

  // Brute-force routines used as oracles for the sparse path (n <= 512).

  inline constexpr int max_oracle_n = 512;

  inline Eigen::LLT<Mat> llt(Mat const& a) {
    Eigen::LLT<Mat> f(a);
    if (f.info() != Eigen::Success) { throw NotPositiveDefinite(0); }
    return f;
  }

  inline double logdet_spd(Mat const& a) {
    auto f = llt(a);
    return 2.0 * f.matrixLLT().diagonal().array().log().sum();
  }

  inline Vec solve_spd(Mat const& a, Vec const& b) { return llt(a).solve(b); }

  // Gaussian elimination with partial pivoting; independent of LLT.
  inline Vec solve_lu(Mat const& a, Vec const& b) {
    return a.partialPivLu().solve(b);
  }

  inline Mat kron(Mat const& a, Mat const& b) {
    Mat k(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      for (Eigen::Index j = 0; j < a.cols(); ++j) {
        k.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
      }
    }
    return k;
  }

  // log N(y; 0, S)
  inline double mvn_logpdf(Vec const& y, Mat const& s) {
    auto f = llt(s);
    Vec w = f.matrixL().solve(y);
    double ld = 2.0 * f.matrixLLT().diagonal().array().log().sum();
    return -0.5 * (ld + w.squaredNorm() +
                   static_cast<double>(y.size()) * std::log(2.0 * M_PI));
  }

} // end of namespace stdisagg::dense
