#pragma once

//
// ... Standard header files
//
#include <numeric>
#include <vector>

//
// ... External header files
//
#include <Eigen/OrderingMethods>
#include <Eigen/Sparse>

//
// ... stdisagg header files
//
#include <stdisagg/sparsela/sparse_sym.hpp>

namespace stdisagg {

  enum class OrderingChoice { amd, natural };

  // perm[k] = original index of the k-th pivot.
  inline std::vector<int> fill_reducing_order(SparseSym const& q,
                                              OrderingChoice choice) {
    std::vector<int> perm(static_cast<std::size_t>(q.n()));
    if (choice == OrderingChoice::natural) {
      std::iota(perm.begin(), perm.end(), 0);
      return perm;
    }
    // Eigen's AMD symmetrizes the pattern itself; its indices() follow the
    // "k-th eliminated node" convention.
    CscMat f = q.full();
    Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> p;
    Eigen::AMDOrdering<int> amd;
    amd(f, p);
    for (int k = 0; k < q.n(); ++k) {
      perm[static_cast<std::size_t>(k)] = p.indices()[k];
    }
    return perm;
  }

} // end of namespace stdisagg
