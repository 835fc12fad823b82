#pragma once

//
// ... Standard header files
//
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

//
// ... stdisagg header files
//
#include <stdisagg/errors.hpp>
#include <stdisagg/random.hpp>
#include <stdisagg/sparsela/ordering.hpp>
#include <stdisagg/sparsela/sparse_sym.hpp>

namespace stdisagg {

  // Sparse Cholesky factor P Q P' = L L'. L is stored by column with the
  // diagonal first in every column.
  class CholFactor {
  public:
    int n() const { return n_; }
    std::vector<int> const& permutation() const { return perm_; }
    std::size_t nnz() const { return li_.size(); }

    double logdet() const {
      double s = 0.0;
      for (int k = 0; k < n_; ++k) { s += std::log(lx_[lp_[k]]); }
      return 2.0 * s;
    }

    // Solve Q x = b.
    Vec solve(Vec const& b) const {
      if (b.size() != n_) { throw DimensionMismatch("solve"); }
      Vec y(n_);
      for (int k = 0; k < n_; ++k) { y[k] = b[perm_[k]]; }
      lsolve(y.data());
      ltsolve(y.data());
      Vec x(n_);
      for (int k = 0; k < n_; ++k) { x[perm_[k]] = y[k]; }
      return x;
    }

    Mat solve(Mat const& b) const {
      if (b.rows() != n_) { throw DimensionMismatch("solve"); }
      Mat x(b.rows(), b.cols());
      for (int c = 0; c < b.cols(); ++c) { x.col(c) = solve(Vec(b.col(c))); }
      return x;
    }

    // Returns L^{-1} P b: then b'Q^{-1}b = |result|^2.
    Vec half_solve(Vec const& b) const {
      if (b.size() != n_) { throw DimensionMismatch("half_solve"); }
      Vec y(n_);
      for (int k = 0; k < n_; ++k) { y[k] = b[perm_[k]]; }
      lsolve(y.data());
      return y;
    }

    // x = P' L^{-T} z, so x ~ N(0, Q^{-1}) when z is standard normal.
    Vec sample_from(Vec z) const {
      if (z.size() != n_) { throw DimensionMismatch("sample"); }
      ltsolve(z.data());
      Vec x(n_);
      for (int k = 0; k < n_; ++k) { x[perm_[k]] = z[k]; }
      return x;
    }

    // Dense L (permuted order) for tests.
    Mat dense_l() const {
      Mat l = Mat::Zero(n_, n_);
      for (int j = 0; j < n_; ++j) {
        for (int p = lp_[j]; p < lp_[j + 1]; ++p) { l(li_[p], j) = lx_[p]; }
      }
      return l;
    }

    friend CholFactor factorize(SparseSym const&, OrderingChoice);
    friend CholFactor factorize_with(SparseSym const&, std::vector<int>);

  private:
    void lsolve(double* x) const {
      for (int j = 0; j < n_; ++j) {
        x[j] /= lx_[lp_[j]];
        for (int p = lp_[j] + 1; p < lp_[j + 1]; ++p) {
          x[li_[p]] -= lx_[p] * x[j];
        }
      }
    }
    void ltsolve(double* x) const {
      for (int j = n_ - 1; j >= 0; --j) {
        double s = x[j];
        for (int p = lp_[j] + 1; p < lp_[j + 1]; ++p) {
          s -= lx_[p] * x[li_[p]];
        }
        x[j] = s / lx_[lp_[j]];
      }
    }

    int n_ = 0;
    std::vector<int> perm_;
    std::vector<int> lp_;
    std::vector<int> li_;
    std::vector<double> lx_;
  };

  namespace detail {

    // Upper triangle of P Q P' by column (row < = col).
    struct UpperCsc {
      int n;
      std::vector<int> p;
      std::vector<int> i;
      std::vector<double> x;
    };

    inline UpperCsc permute_upper(SparseSym const& q,
                                  std::vector<int> const& perm) {
      int n = q.n();
      std::vector<int> pinv(static_cast<std::size_t>(n));
      for (int k = 0; k < n; ++k) { pinv[perm[k]] = k; }
      auto const& l = q.lower();
      UpperCsc c{n, std::vector<int>(n + 1, 0), {}, {}};
      for (int j = 0; j < n; ++j) {
        for (CscMat::InnerIterator it(l, j); it; ++it) {
          int a = pinv[it.row()];
          int b = pinv[j];
          ++c.p[std::max(a, b) + 1];
        }
      }
      for (int k = 0; k < n; ++k) { c.p[k + 1] += c.p[k]; }
      c.i.resize(c.p[n]);
      c.x.resize(c.p[n]);
      std::vector<int> next(c.p.begin(), c.p.end() - 1);
      for (int j = 0; j < n; ++j) {
        for (CscMat::InnerIterator it(l, j); it; ++it) {
          int a = pinv[it.row()];
          int b = pinv[j];
          int col = std::max(a, b);
          int q2 = next[col]++;
          c.i[q2] = std::min(a, b);
          c.x[q2] = it.value();
        }
      }
      return c;
    }

    inline std::vector<int> etree(UpperCsc const& c) {
      std::vector<int> parent(c.n, -1), ancestor(c.n, -1);
      for (int k = 0; k < c.n; ++k) {
        for (int p = c.p[k]; p < c.p[k + 1]; ++p) {
          int i = c.i[p];
          while (i != -1 && i < k) {
            int inext = ancestor[i];
            ancestor[i] = k;
            if (inext == -1) { parent[i] = k; }
            i = inext;
          }
        }
      }
      return parent;
    }

    // Pattern of row k of L (excluding the diagonal) as s[top..n-1].
    inline int ereach(UpperCsc const& c, int k, std::vector<int> const& parent,
                      std::vector<int>& s, std::vector<int>& mark) {
      int top = c.n;
      mark[k] = k;
      for (int p = c.p[k]; p < c.p[k + 1]; ++p) {
        int i = c.i[p];
        if (i > k) { continue; }
        int len = 0;
        for (; mark[i] != k; i = parent[i]) {
          s[len++] = i;
          mark[i] = k;
        }
        while (len > 0) { s[--top] = s[--len]; }
      }
      return top;
    }

  } // end of namespace detail

  // Up-looking sparse Cholesky on a given pivot order.
  inline CholFactor factorize_with(SparseSym const& q, std::vector<int> perm) {
    int n = q.n();
    if (static_cast<int>(perm.size()) != n) {
      throw DimensionMismatch("permutation length");
    }
    auto c = detail::permute_upper(q, perm);
    auto parent = detail::etree(c);

    std::vector<int> s(n), mark(n, -1), count(n, 1);
    for (int k = 0; k < n; ++k) {
      int top = detail::ereach(c, k, parent, s, mark);
      for (int t = top; t < n; ++t) { ++count[s[t]]; }
    }

    CholFactor f;
    f.n_ = n;
    f.perm_ = std::move(perm);
    f.lp_.assign(n + 1, 0);
    for (int k = 0; k < n; ++k) { f.lp_[k + 1] = f.lp_[k] + count[k]; }
    f.li_.resize(f.lp_[n]);
    f.lx_.resize(f.lp_[n]);

    double maxdiag = 0.0;
    for (int k = 0; k < n; ++k) {
      for (int p = c.p[k]; p < c.p[k + 1]; ++p) {
        if (c.i[p] == k) { maxdiag = std::max(maxdiag, std::abs(c.x[p])); }
      }
    }
    double const tol = 1e-12 * maxdiag;

    std::vector<int> next(f.lp_.begin(), f.lp_.end() - 1);
    std::vector<double> x(n, 0.0);
    std::fill(mark.begin(), mark.end(), -1);
    for (int k = 0; k < n; ++k) {
      int top = detail::ereach(c, k, parent, s, mark);
      x[k] = 0.0;
      for (int p = c.p[k]; p < c.p[k + 1]; ++p) {
        if (c.i[p] <= k) { x[c.i[p]] += c.x[p]; }
      }
      double d = x[k];
      x[k] = 0.0;
      for (; top < n; ++top) {
        int i = s[top];
        double lki = x[i] / f.lx_[f.lp_[i]];
        x[i] = 0.0;
        for (int p = f.lp_[i] + 1; p < next[i]; ++p) {
          x[f.li_[p]] -= f.lx_[p] * lki;
        }
        d -= lki * lki;
        int p = next[i]++;
        f.li_[p] = k;
        f.lx_[p] = lki;
      }
      if (!(d > tol)) { throw NotPositiveDefinite(f.perm_[k]); }
      int p = next[k]++;
      f.li_[p] = k;
      f.lx_[p] = std::sqrt(d);
    }
    return f;
  }

  inline CholFactor factorize(SparseSym const& q,
                              OrderingChoice choice = OrderingChoice::amd) {
    return factorize_with(q, fill_reducing_order(q, choice));
  }

  inline Vec solve(CholFactor const& f, Vec const& b) { return f.solve(b); }

  inline Vec sample_gmrf(CholFactor const& f, std::uint64_t seed) {
    Rng rng(seed);
    return f.sample_from(standard_normal_vector(rng, f.n()));
  }

  // Diagonal of Q^{-1} at the requested nodes, by unit-vector solves.
  inline Vec inverse_diagonal(CholFactor const& f, std::vector<int> const& idx) {
    Vec out(static_cast<Eigen::Index>(idx.size()));
    Vec e = Vec::Zero(f.n());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      e[idx[k]] = 1.0;
      out[static_cast<Eigen::Index>(k)] = f.half_solve(e).squaredNorm();
      e[idx[k]] = 0.0;
    }
    return out;
  }

} // end of namespace stdisagg
