#include <catch2/catch_amalgamated.hpp>

#include "msm/topology.hpp"

using namespace msm;

TEST_CASE("2x1 layout puts the receiver on Tx1's axis") {
  const Topology topo = make_topology(Scheme::k2x1, 4.0, 4.0, 0.0, 2.0);
  REQUIRE(topo.num_transmitters() == 2);
  REQUIRE(topo.num_receivers() == 1);
  CHECK(topo.surface_distance(0, 0) == Catch::Approx(4.0));
  // d2 = sqrt(h^2 + (d1+Rr)^2) - Rr
  CHECK(topo.surface_distance(0, 1) == Catch::Approx(5.21110255092797859).epsilon(1e-12));
}

TEST_CASE("2x1 with coincident transmitters collapses to the paired distance") {
  const Topology topo = make_topology(Scheme::k2x1, 4.0, 0.0, 0.0, 2.0);
  CHECK(topo.surface_distance(0, 1) == Catch::Approx(topo.surface_distance(0, 0)));
}

TEST_CASE("4x4 distance classes match brute-force 3-D distances") {
  // Reference parameters: receiver gaps h = 10, w = 4, radius 3, so the
  // vertex center offsets are 16 and 10.
  const double d1 = 6.0, h = 10.0, w = 4.0, rr = 3.0;
  const Topology topo = make_topology(Scheme::k4x4, d1, h, w, rr);
  REQUIRE(topo.num_transmitters() == 4);
  REQUIRE(topo.num_receivers() == 4);

  // Independent oracle: direct Euclidean distances from the parameters.
  const double axis = d1 + rr;
  const double oy = h + 2.0 * rr, oz = w + 2.0 * rr;
  const double expected[4] = {d1, std::sqrt(axis * axis + oy * oy) - rr,
                              std::sqrt(axis * axis + oz * oz) - rr,
                              std::sqrt(axis * axis + oy * oy + oz * oz) - rr};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      const int cls = topo.distance_class(i, j);
      CHECK(topo.surface_distance(i, j) == Catch::Approx(expected[cls]).epsilon(1e-12));
      // The oracle recomputed straight from the coordinates.
      CHECK(topo.surface_distance(i, j) ==
            Catch::Approx(distance(topo.transmitters[j], topo.receivers[i].center) - rr)
                .epsilon(1e-14));
    }
  // Frozen values for the reference geometry.
  CHECK(expected[1] == Catch::Approx(15.3575597506858193).epsilon(1e-12));
  CHECK(expected[2] == Catch::Approx(10.4536240470737103).epsilon(1e-12));
  CHECK(expected[3] == Catch::Approx(17.9045449603668723).epsilon(1e-12));
  // All four receiver spheres stay pairwise disjoint.
  CHECK_NOTHROW(validate_geometry(topo));
}

TEST_CASE("distance matrix depends only on the class for symmetric schemes") {
  for (const Scheme scheme : {Scheme::k2x2, Scheme::k4x4}) {
    const Topology topo = scheme == Scheme::k2x2
                              ? make_topology(scheme, 6.0, 5.0, 0.0, 2.0)
                              : make_topology(scheme, 6.0, 10.0, 8.0, 3.0);
    for (int i = 0; i < topo.num_receivers(); ++i)
      for (int j = 0; j < topo.num_transmitters(); ++j) {
        const int cls = topo.distance_class(i, j);
        CHECK(topo.surface_distance(i, j) ==
              Catch::Approx(topo.class_surface_distance(cls)).epsilon(1e-12));
        CHECK(topo.distance_class(j, i) == cls);
      }
  }
}

TEST_CASE("scaling the geometry parameters scales every distance") {
  const double factor = 2.5;
  const Topology base = make_topology(Scheme::k4x4, 6.0, 10.0, 4.0, 3.0);
  const Topology scaled =
      make_topology(Scheme::k4x4, 6.0 * factor, 10.0 * factor, 4.0 * factor, 3.0 * factor);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      CHECK(scaled.surface_distance(i, j) ==
            Catch::Approx(factor * base.surface_distance(i, j)).epsilon(1e-12));
}

TEST_CASE("invalid geometries are rejected") {
  CHECK_THROWS_AS(make_topology(Scheme::kSiso, -1.0, 0.0, 0.0, 2.0), InvalidGeometryError);
  CHECK_THROWS_AS(make_topology(Scheme::kSiso, 4.0, 0.0, 0.0, 0.0), InvalidGeometryError);
  CHECK_THROWS_AS(make_topology(Scheme::k2x2, 6.0, -1.0, 0.0, 2.0), InvalidGeometryError);
  CHECK_THROWS_AS(make_topology(Scheme::k4x4, 6.0, 10.0, -2.0, 3.0), InvalidGeometryError);

  // Hand-built layouts run through the same validation: overlapping
  // spheres and a transmitter inside a sphere are both rejected.
  Topology overlap;
  overlap.scheme = Scheme::k2x2;
  overlap.transmitters = {{0, 0, 0}, {0, 3, 0}};
  overlap.receivers = {{{8, 0, 0}, 2.0}, {{8, 3, 0}, 2.0}};
  CHECK_THROWS_AS(validate_geometry(overlap), InvalidGeometryError);

  Topology inside;
  inside.scheme = Scheme::kSiso;
  inside.transmitters = {{7.5, 0, 0}};
  inside.receivers = {{{8, 0, 0}, 2.0}};
  CHECK_THROWS_AS(validate_geometry(inside), InvalidGeometryError);

  // On the surface is allowed (strictly inside is not).
  Topology on_surface = inside;
  on_surface.transmitters = {{6.0, 0, 0}};
  CHECK_NOTHROW(validate_geometry(on_surface));
}

TEST_CASE("physical parameter validation") {
  PhysicalParams params;
  params.slot_duration = 0.1;
  params.step_time = 1e-4;
  CHECK_NOTHROW(params.validate());
  CHECK(params.steps_per_slot() == 1000);
  params.step_time = 3e-4;  // not a divisor of the slot
  CHECK_THROWS_AS(params.validate(), ConfigError);
  params.step_time = -1.0;
  CHECK_THROWS_AS(params.validate(), ConfigError);
}

TEST_CASE("default escape distance is ten times the largest center distance") {
  const Topology topo = make_topology(Scheme::k2x1, 4.0, 4.0, 0.0, 2.0);
  const double far = topo.center_distance(0, 1);
  CHECK(topo.default_escape_distance() == Catch::Approx(10.0 * far));
}
