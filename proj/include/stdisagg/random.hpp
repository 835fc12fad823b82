#pragma once

//
// ... Standard header files
//
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

//
// ... External header files
//
#include <Eigen/Dense>

namespace stdisagg {

  using Rng = std::mt19937_64;

  // Box-Muller on top of mt19937_64. std::normal_distribution is not pinned
  // by the standard, and fixed seeds must give identical files everywhere.
  class Normal {
  public:
    double operator()(Rng& rng) {
      if (have_) {
        have_ = false;
        return spare_;
      }
      double u1 = uniform(rng);
      double u2 = uniform(rng);
      double r = std::sqrt(-2.0 * std::log(u1));
      double a = 2.0 * std::numbers::pi * u2;
      spare_ = r * std::sin(a);
      have_ = true;
      return r * std::cos(a);
    }

    // (0, 1], 53-bit resolution
    static double uniform(Rng& rng) {
      return (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
    }

  private:
    double spare_ = 0.0;
    bool have_ = false;
  };

  inline Eigen::VectorXd standard_normal_vector(Rng& rng, Eigen::Index n) {
    Normal z;
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) { v[i] = z(rng); }
    return v;
  }

  // Seeds for independent streams derived from one base seed.
  inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                                   std::uint64_t b = 0, std::uint64_t c = 0) {
    // splitmix64 steps
    auto mix = [](std::uint64_t z) {
      z += 0x9e3779b97f4a7c15ULL;
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
      return z ^ (z >> 31);
    };
    return mix(mix(mix(mix(base) ^ a) ^ b) ^ c);
  }

} // end of namespace stdisagg
