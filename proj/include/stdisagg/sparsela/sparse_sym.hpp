#pragma once

//
// ... Standard header files
//
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <tuple>
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

namespace stdisagg {

  using Vec = Eigen::VectorXd;
  using Mat = Eigen::MatrixXd;
  using CscMat = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

  struct Triplet {
    int row;
    int col;
    double value;
  };

  // Symmetric sparse matrix. Only the lower triangle (row >= col) is kept,
  // compressed by column. Duplicate coordinates are summed at assembly, so the
  // stored pattern has unique (row, col) pairs.
  class SparseSym {
  public:
    SparseSym() = default;

    explicit SparseSym(int n) : lower_(n, n) {
      if (n < 1) { throw DimensionMismatch("SparseSym needs n >= 1"); }
    }

    // Entries may be given in either triangle; (i,j) and (j,i) are folded
    // onto the lower triangle and summed.
    static SparseSym from_triplets(int n, std::vector<Triplet> const& ts) {
      SparseSym s(n);
      std::vector<Eigen::Triplet<double, int>> et;
      et.reserve(ts.size());
      for (auto const& t : ts) {
        if (t.row < 0 || t.col < 0 || t.row >= n || t.col >= n) {
          throw DimensionMismatch("triplet outside matrix");
        }
        int r = std::max(t.row, t.col);
        int c = std::min(t.row, t.col);
        et.emplace_back(r, c, t.value);
      }
      s.lower_.setFromTriplets(et.begin(), et.end());
      s.lower_.makeCompressed();
      return s;
    }

    // From any square Eigen sparse matrix; the strict upper part is ignored.
    static SparseSym from_lower(CscMat const& m) {
      if (m.rows() != m.cols()) { throw DimensionMismatch("not square"); }
      SparseSym s(static_cast<int>(m.rows()));
      s.lower_ = m.triangularView<Eigen::Lower>();
      s.lower_.makeCompressed();
      return s;
    }

    static SparseSym from_dense(Mat const& d, double drop = 0.0) {
      std::vector<Triplet> ts;
      for (int j = 0; j < d.cols(); ++j) {
        for (int i = j; i < d.rows(); ++i) {
          if (std::abs(d(i, j)) > drop) { ts.push_back({i, j, d(i, j)}); }
        }
      }
      return from_triplets(static_cast<int>(d.rows()), ts);
    }

    static SparseSym identity(int n, double v = 1.0) {
      std::vector<Triplet> ts;
      for (int i = 0; i < n; ++i) { ts.push_back({i, i, v}); }
      return from_triplets(n, ts);
    }

    static SparseSym diagonal(Vec const& d) {
      std::vector<Triplet> ts;
      for (int i = 0; i < d.size(); ++i) { ts.push_back({i, i, d[i]}); }
      return from_triplets(static_cast<int>(d.size()), ts);
    }

    int n() const { return static_cast<int>(lower_.rows()); }
    std::size_t nnz_lower() const {
      return static_cast<std::size_t>(lower_.nonZeros());
    }
    CscMat const& lower() const { return lower_; }

    // Full symmetric matrix (both triangles).
    CscMat full() const {
      CscMat f = lower_.selfadjointView<Eigen::Lower>();
      f.makeCompressed();
      return f;
    }

    Mat dense() const { return Mat(full()); }

    double coeff(int i, int j) const {
      if (i < j) { std::swap(i, j); }
      return lower_.coeff(i, j);
    }

    Vec diag() const {
      Vec d = Vec::Zero(n());
      for (int j = 0; j < n(); ++j) { d[j] = lower_.coeff(j, j); }
      return d;
    }

    Vec multiply(Vec const& x) const {
      if (x.size() != n()) { throw DimensionMismatch("multiply"); }
      return lower_.selfadjointView<Eigen::Lower>() * x;
    }

    // Number of nonzeros in each row of the full symmetric matrix.
    std::vector<int> row_counts() const {
      std::vector<int> c(static_cast<std::size_t>(n()), 0);
      for (int j = 0; j < n(); ++j) {
        for (CscMat::InnerIterator it(lower_, j); it; ++it) {
          ++c[static_cast<std::size_t>(it.row())];
          if (it.row() != j) { ++c[static_cast<std::size_t>(j)]; }
        }
      }
      return c;
    }

    SparseSym scaled(double a) const {
      SparseSym s = *this;
      s.lower_ *= a;
      return s;
    }

    SparseSym operator+(SparseSym const& o) const {
      if (o.n() != n()) { throw DimensionMismatch("add"); }
      SparseSym s = *this;
      s.lower_ = lower_ + o.lower_;
      s.lower_.makeCompressed();
      return s;
    }

    bool operator==(SparseSym const& o) const {
      if (o.n() != n()) { return false; }
      CscMat d = lower_ - o.lower_;
      for (int j = 0; j < d.outerSize(); ++j) {
        for (CscMat::InnerIterator it(d, j); it; ++it) {
          if (it.value() != 0.0) { return false; }
        }
      }
      return true;
    }

  private:
    CscMat lower_;
  };

  inline double quad_form(SparseSym const& q, Vec const& x) {
    if (x.size() != q.n()) { throw DimensionMismatch("quad_form"); }
    // x'Qx = sum_diag q_ii x_i^2 + 2 sum_{i>j} q_ij x_i x_j
    double s = 0.0;
    auto const& l = q.lower();
    for (int j = 0; j < q.n(); ++j) {
      for (CscMat::InnerIterator it(l, j); it; ++it) {
        double v = it.value() * x[it.row()] * x[j];
        s += (it.row() == j) ? v : 2.0 * v;
      }
    }
    return s;
  }

  // Kronecker product a (x) b. With a indexed by time and b by space the
  // result uses node index t*nb + s.
  inline SparseSym kron(SparseSym const& a, SparseSym const& b) {
    int na = a.n();
    int nb = b.n();
    CscMat af = a.full();
    CscMat bf = b.full();
    std::vector<Triplet> ts;
    ts.reserve(a.nnz_lower() * b.nnz_lower() * 2);
    for (int ja = 0; ja < na; ++ja) {
      for (CscMat::InnerIterator ia(af, ja); ia; ++ia) {
        for (int jb = 0; jb < nb; ++jb) {
          for (CscMat::InnerIterator ib(bf, jb); ib; ++ib) {
            int r = static_cast<int>(ia.row()) * nb + static_cast<int>(ib.row());
            int c = ja * nb + jb;
            if (r >= c) { ts.push_back({r, c, ia.value() * ib.value()}); }
          }
        }
      }
    }
    return SparseSym::from_triplets(na * nb, ts);
  }

} // end of namespace stdisagg
