//
// ... Test header files
//
#include <catch_amalgamated.hpp>

//
// ... stdisagg header files
//
#include <stdisagg/lattice.hpp>

using namespace stdisagg;
using Catch::Approx;

TEST_CASE("24x24 unit square", "[lattice]") {
  auto s = build_lattice(24, 24, 24, {}, 0);
  REQUIRE(s.dx == Approx(1.0 / 24.0));
  REQUIRE(s.dy == Approx(0.041667).epsilon(1e-5));
  REQUIRE(s.interior_spatial() == 576);
}

TEST_CASE("single node", "[lattice]") {
  auto s = build_lattice(1, 1, 1, {}, 0);
  REQUIRE(s.nodes() == 1);
  REQUIRE(s.index(0, 0, 0) == 0);
}

TEST_CASE("buffer arithmetic", "[lattice]") {
  auto s = build_lattice(24, 24, 2, {}, 3);
  REQUIRE(s.gx() == 30);
  REQUIRE(s.gy() == 30);
  REQUIRE(s.interior_spatial() == 576);
  REQUIRE(s.nodes() == 900 * 2);
  REQUIRE(static_cast<int>(s.interior_indices().size()) == 576 * 2);
  REQUIRE(default_buffer(0.2, 1.0 / 24.0) == 5);
  REQUIRE(default_buffer(10.0, 0.25) == 8);
}

TEST_CASE("node coordinates at cell centres", "[lattice]") {
  Extents e{0.0, 2.0, 0.0, 4.0, 10.0, 0.5};
  auto s = build_lattice(2, 2, 2, e, 0);
  auto c = node_coords(s, 0);
  REQUIRE(c.x == s.x0 + s.dx / 2);
  REQUIRE(c.y == s.y0 + s.dy / 2);
  REQUIRE(c.t == 10.0);
  REQUIRE_THROWS_AS(node_coords(s, 8), IndexOutOfRange);
}

TEST_CASE("index round trip", "[lattice]") {
  Extents e{-1.0, 4.0, 2.0, 6.0, 0.0, 1.0};
  for (int b : {0, 2}) {
    auto s = build_lattice(5, 4, 3, e, b);
    for (int i = 0; i < s.nodes(); ++i) {
      REQUIRE(s.index_of(node_coords(s, i)) == i);
      int ix, iy, it;
      s.unravel(i, ix, iy, it);
      REQUIRE(s.index(ix, iy, it) == i);
    }
  }
}

TEST_CASE("crop and embed", "[lattice]") {
  auto s = build_lattice(3, 2, 2, {}, 0);
  Field f(s, Eigen::VectorXd::LinSpaced(s.nodes(), 0, s.nodes() - 1));
  auto same = crop_interior(f);
  REQUIRE(same.values == f.values);
  auto big = embed(f, 2, -7.0);
  REQUIRE(big.spec.nodes() == 7 * 6 * 2);
  REQUIRE(crop_interior(big).values == f.values);
  REQUIRE(big.values[0] == -7.0);
}

TEST_CASE("invalid extents", "[lattice]") {
  REQUIRE_THROWS_AS(build_lattice(0, 2, 2, {}, 0), InvalidExtent);
  REQUIRE_THROWS_AS(build_lattice(2, 2, 2, {1.0, 1.0}, 0), InvalidExtent);
  REQUIRE_THROWS_AS(build_lattice(2, 2, 2, {}, -1), InvalidExtent);
}
