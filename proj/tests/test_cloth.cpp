#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <omp.h>

#include "kcflat/cloth.hpp"
#include "kcflat/errors.hpp"
#include "kcflat/render.hpp"

using namespace kcflat;
using cloth::ClothState;
using cloth::GarmentTemplate;
using cloth::ShapeClass;

namespace {

// Two particles joined by one vertical spring; enough to check the
// integrator against pencil-and-paper statics.
GarmentTemplate two_particle_chain(double rest, double stiffness, double mass) {
  GarmentTemplate tpl;
  tpl.shape = ShapeClass::towel;
  tpl.resolution = 10.0;
  tpl.rest_positions = {{0.0, 0.0}, {0.0, rest}};
  tpl.springs = {{0, 1, rest, stiffness}};
  tpl.particle_mass = mass;
  tpl.incident = {{0}, {0}};
  tpl.goal_area = 1.0;
  return tpl;
}

}  // namespace

TEST_CASE("towel template is a rectangle with ten grasp landmarks") {
  const GarmentTemplate tpl = cloth::make_template(ShapeClass::towel, 0, 10.0, 0.0);
  CHECK(tpl.particle_count() > 0);
  CHECK(tpl.boundary.size() == 4);

  // goal_area equals the boundary polygon area within 1%
  const double poly = polygon_area(tpl.boundary);
  CHECK(tpl.goal_area == doctest::Approx(poly).epsilon(0.01));

  // rectangle area in closed form
  double w = 0, h = 0;
  for (const Vec2 &p : tpl.boundary) {
    w = std::max(w, std::abs(p.x) * 2);
    h = std::max(h, std::abs(p.y) * 2);
  }
  CHECK(tpl.goal_area == doctest::Approx(w * h).epsilon(0.02));

  // ten distinct grasp vertices, all valid particle indices
  std::array<int, 10> gv = tpl.grasp_vertices;
  std::sort(gv.begin(), gv.end());
  CHECK(std::adjacent_find(gv.begin(), gv.end()) == gv.end());
  for (int v : gv) {
    CHECK(v >= 0);
    CHECK(v < tpl.particle_count());
  }
}

TEST_CASE("every shape has exactly ten distinct grasp vertices") {
  for (int code = 0; code < cloth::kShapeCount; ++code) {
    const GarmentTemplate tpl = cloth::make_template(cloth::shape_from_code(code), 2, 10.0, 0.0);
    std::array<int, 10> gv = tpl.grasp_vertices;
    std::sort(gv.begin(), gv.end());
    CHECK(std::adjacent_find(gv.begin(), gv.end()) == gv.end());
  }
}

TEST_CASE("jittered jean instance stays within ten percent of instance zero") {
  const GarmentTemplate base = cloth::make_template(ShapeClass::jean, 0, 10.0, 0.1);
  const GarmentTemplate other = cloth::make_template(ShapeClass::jean, 1, 10.0, 0.1);
  CHECK(other.goal_area > 0.8 * base.goal_area);
  CHECK(other.goal_area < 1.25 * base.goal_area);
  CHECK(other.goal_area != base.goal_area);  // the jitter actually applied
}

TEST_CASE("template preconditions are enforced") {
  CHECK_THROWS_AS(cloth::shape_from_code(5), std::invalid_argument);
  CHECK_THROWS_AS(cloth::shape_from_code(-1), std::invalid_argument);
  CHECK_THROWS_AS(cloth::make_template(ShapeClass::towel, 4, 10.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(cloth::make_template(ShapeClass::towel, 0, 4.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(cloth::make_template(ShapeClass::towel, 0, 10.0, 0.3), std::invalid_argument);
}

TEST_CASE("template JSON round-trips") {
  const GarmentTemplate tpl = cloth::make_template(ShapeClass::shirt, 1, 8.0, 0.1);
  const GarmentTemplate back = GarmentTemplate::from_json(tpl.to_json());
  CHECK(back.shape == tpl.shape);
  CHECK(back.instance_id == tpl.instance_id);
  CHECK(back.particle_count() == tpl.particle_count());
  CHECK(back.springs.size() == tpl.springs.size());
  CHECK(back.goal_area == doctest::Approx(tpl.goal_area).epsilon(1e-12));
  CHECK(back.grasp_vertices == tpl.grasp_vertices);
}

TEST_CASE("crumple is deterministic and strictly shrinks the footprint") {
  const GarmentTemplate tpl = cloth::make_template(ShapeClass::towel, 0, 10.0, 0.0);
  const ClothState a = cloth::crumple(tpl, 7);
  const ClothState b = cloth::crumple(tpl, 7);
  CHECK(a == b);

  for (const Vec3 &p : a.positions) CHECK(p.z >= 0.0);

  const render::OrthoCamera top = render::top_camera();
  const long goal = render::footprint_mask(tpl, cloth::rest_state(tpl), top).area_px;
  for (std::uint64_t seed : {1ULL, 7ULL, 23ULL}) {
    const long crumpled = render::footprint_mask(tpl, cloth::crumple(tpl, seed), top).area_px;
    CHECK(double(crumpled) / double(goal) < 1.0);
  }
}

TEST_CASE("zero folds and zero noise leave the cloth flat") {
  const GarmentTemplate tpl = cloth::make_template(ShapeClass::towel, 0, 10.0, 0.0);
  cloth::CrumpleParams quiet;
  quiet.max_folds = 0;
  quiet.noise_xy = 0.0;
  quiet.noise_z = 0.0;
  const ClothState flat = cloth::crumple(tpl, 99, quiet);

  const render::OrthoCamera top = render::top_camera();
  const long goal = render::footprint_mask(tpl, cloth::rest_state(tpl), top).area_px;
  const long got = render::footprint_mask(tpl, flat, top).area_px;
  CHECK(double(got) / double(goal) == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("free fall changes velocity by minus g dt") {
  GarmentTemplate tpl = two_particle_chain(0.1, 50.0, 0.01);
  tpl.springs.clear();  // no springs: pure gravity
  tpl.incident = {{}, {}};
  ClothState st = cloth::rest_state(tpl);
  for (Vec3 &p : st.positions) p.z = 1.0;

  cloth::SimParams params;
  params.drag = 0.0;
  params.table_collision = false;
  cloth::step_inplace(tpl, st, 0.01, params);
  CHECK(st.velocities[0].z == doctest::Approx(-9.81 * 0.01).epsilon(1e-12));
  CHECK(st.velocities[1].z == doctest::Approx(-9.81 * 0.01).epsilon(1e-12));
}

TEST_CASE("fully pinned cloth does not move") {
  const GarmentTemplate tpl = cloth::make_template(ShapeClass::towel, 0, 8.0, 0.0);
  ClothState st = cloth::rest_state(tpl);
  for (Vec3 &p : st.positions) p.z = 0.5;
  for (int i = 0; i < tpl.particle_count(); ++i) st.pinned[i] = st.positions[std::size_t(i)];

  const ClothState before = st;
  for (int k = 0; k < 10; ++k) cloth::step_inplace(tpl, st, 1e-3);
  CHECK(st.positions == before.positions);
}

TEST_CASE("stretched spring pair obeys Newton's third law") {
  // symmetric stretched pair, no gravity/drag: momentum stays zero
  GarmentTemplate tpl = two_particle_chain(0.1, 50.0, 0.01);
  ClothState st;
  st.positions = {{0.0, 0.0, 0.5 - 0.09}, {0.0, 0.0, 0.5 + 0.09}};
  st.velocities = {{}, {}};

  cloth::SimParams params;
  params.gravity = 0.0;
  params.drag = 0.0;
  params.table_collision = false;
  for (int k = 0; k < 50; ++k) {
    cloth::step_inplace(tpl, st, 1e-3, params);
    const Vec3 momentum = st.velocities[0] + st.velocities[1];
    CHECK(std::abs(momentum.x) < 1e-12);
    CHECK(std::abs(momentum.y) < 1e-12);
    CHECK(std::abs(momentum.z) < 1e-12);
  }
}

TEST_CASE("two-particle chain settles to the analytic spring extension") {
  const double rest = 0.1, k = 50.0, m = 0.01;
  const GarmentTemplate tpl = two_particle_chain(rest, k, m);
  ClothState st;
  st.positions = {{0.0, 0.0, 1.0}, {0.0, 0.0, 1.0 - rest}};
  st.velocities = {{}, {}};
  st.pinned[0] = {0.0, 0.0, 1.0};

  cloth::HangParams hang;
  hang.ke_tolerance = 1e-12;
  cloth::SimParams params;
  params.table_collision = false;
  // Overdamped so vanishing kinetic energy implies static force balance
  // rather than a turning point of a decaying oscillation.
  params.drag = 200.0;
  const cloth::SettleResult out = cloth::settle(tpl, st, hang, params);
  REQUIRE(out.converged);

  const double separation = out.state.positions[0].z - out.state.positions[1].z;
  CHECK(separation == doctest::Approx(rest + m * 9.81 / k).epsilon(1e-4));
  CHECK(out.state.positions[0] == Vec3{0.0, 0.0, 1.0});  // pin held exactly
}

TEST_CASE("towel hung from a corner drapes to most of its diagonal") {
  const GarmentTemplate tpl = cloth::make_template(ShapeClass::towel, 0, 10.0, 0.0);
  // grasp vertex 0 is a corner landmark
  const int pin = tpl.grasp_vertices[0];
  ClothState st = cloth::rest_state(tpl);
  const Vec3 anchor{0.0, 0.0, 1.2};
  for (std::size_t i = 0; i < st.positions.size(); ++i)
    st.positions[i] += anchor - st.positions[std::size_t(pin)];

  cloth::SimParams params;
  params.table_collision = false;
  const cloth::SettleResult out = cloth::hang_to_equilibrium(tpl, st, pin, {}, params);
  REQUIRE(out.converged);

  double diag = 0;
  const Vec2 corner = tpl.rest_positions[std::size_t(pin)];
  for (const Vec2 &p : tpl.rest_positions) diag = std::max(diag, (p - corner).norm());

  double lowest = anchor.z;
  for (const Vec3 &p : out.state.positions) lowest = std::min(lowest, p.z);
  CHECK(anchor.z - lowest >= 0.9 * diag);
}

TEST_CASE("divergence raises an error with the offending step") {
  const double rest = 0.1, k = 50.0, m = 0.01;
  const GarmentTemplate tpl = two_particle_chain(rest, k, m);
  ClothState st;
  st.positions = {{0.0, 0.0, 1.0}, {0.0, 0.0, 0.9}};
  st.velocities = {{}, {}};
  st.pinned[0] = {0.0, 0.0, 1.0};

  cloth::HangParams hang;
  hang.dt = 10.0 * cloth::stable_dt_bound(tpl);  // far past the bound
  CHECK_THROWS_AS(cloth::settle(tpl, st, hang), DivergenceError);
  try {
    cloth::settle(tpl, st, hang);
  } catch (const DivergenceError &e) {
    CHECK(e.step_index >= 0);
  }
}

TEST_CASE("mechanical energy dissipates over hundred-step windows") {
  const GarmentTemplate tpl = cloth::make_template(ShapeClass::tshirt, 0, 8.0, 0.0);
  ClothState st = cloth::crumple(tpl, 3);
  const int pin = tpl.grasp_vertices[2];
  st.pinned[pin] = st.positions[std::size_t(pin)];

  cloth::SimParams params;  // drag 4.0 by default, table on
  double prev = cloth::mechanical_energy(tpl, st, params);
  for (int window = 0; window < 20; ++window) {
    for (int s = 0; s < 100; ++s) cloth::step_inplace(tpl, st, 5e-4, params);
    const double now = cloth::mechanical_energy(tpl, st, params);
    CHECK(now <= prev * (1.0 + 1e-9) + 1e-12);
    prev = now;
  }
}

TEST_CASE("stepping is bit-identical across OpenMP thread counts") {
  const GarmentTemplate tpl = cloth::make_template(ShapeClass::sweater, 0, 10.0, 0.0);

  auto run = [&](int threads) {
    omp_set_num_threads(threads);
    ClothState st = cloth::crumple(tpl, 13);
    const int pin = tpl.grasp_vertices[1];
    st.pinned[pin] = st.positions[std::size_t(pin)] + Vec3{0, 0, 0.5};
    for (int s = 0; s < 500; ++s) cloth::step_inplace(tpl, st, 1e-3);
    return st;
  };

  const ClothState a = run(1);
  const ClothState b = run(2);
  const ClothState c = run(4);
  CHECK(a == b);
  CHECK(a == c);
}

TEST_CASE("dt bound formula matches the stiffest spring") {
  const GarmentTemplate tpl = cloth::make_template(ShapeClass::jean, 0, 10.0, 0.0);
  CHECK(cloth::stable_dt_bound(tpl) ==
        doctest::Approx(2.0 * std::sqrt(tpl.particle_mass / tpl.max_stiffness())));
}

TEST_CASE("same pin from different crumples settles to matching silhouettes") {
  const GarmentTemplate tpl = cloth::make_template(ShapeClass::towel, 0, 10.0, 0.0);
  const int pin = tpl.grasp_vertices[0];
  const render::OrthoCamera front = render::front_camera();

  auto settled_mask = [&](std::uint64_t seed) {
    ClothState st = cloth::crumple(tpl, seed);
    const Vec3 anchor{0.0, 0.0, 1.2};
    cloth::move_pin(tpl, st, pin, anchor, 1.0, 1e-3);
    cloth::SettleResult out = cloth::settle(tpl, std::move(st));
    cloth::canonicalize_azimuth(tpl, out.state, pin);
    return render::footprint_mask(tpl, out.state, front);
  };

  const render::FootprintMask a = settled_mask(101);
  const render::FootprintMask b = settled_mask(202);
  CHECK(render::mask_iou(a, b) >= 0.85);
}
