#pragma once

//
// ... Standard header files
//
#include <cstdint>

//
// ... stdisagg header files
//
#include <stdisagg/random.hpp>
#include <stdisagg/sparsela/cholesky.hpp>

namespace stdisagg {

  // Factor of kron(Qa, Qb) held as the pair of factors of Qa and Qb; the
  // Kronecker product of two Cholesky factors is a Cholesky factor of the
  // product, so sampling and log-determinants never form the big matrix.
  class KronFactor {
  public:
    KronFactor(CholFactor a, CholFactor b) : a_(std::move(a)), b_(std::move(b)) {}

    int n() const { return a_.n() * b_.n(); }

    double logdet() const {
      return b_.n() * a_.logdet() + a_.n() * b_.logdet();
    }

    // Node index = ia * nb + ib.
    Vec sample_from(Vec const& z) const {
      int na = a_.n();
      int nb = b_.n();
      if (z.size() != n()) { throw DimensionMismatch("kron sample"); }
      Mat m = Eigen::Map<Mat const>(z.data(), nb, na);
      for (int j = 0; j < na; ++j) { m.col(j) = b_.sample_from(m.col(j)); }
      for (int i = 0; i < nb; ++i) {
        m.row(i) = a_.sample_from(m.row(i).transpose()).transpose();
      }
      return Eigen::Map<Vec>(m.data(), n());
    }

    Vec sample(std::uint64_t seed) const {
      Rng rng(seed);
      return sample_from(standard_normal_vector(rng, n()));
    }

  private:
    CholFactor a_;
    CholFactor b_;
  };

} // end of namespace stdisagg
