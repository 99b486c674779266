#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "kcflat/geom.hpp"

namespace kcflat::cloth {

// The five garment shapes. Integer codes are stable (used for one-hot
// encodings and flat class codes) and must never be reordered.
enum class ShapeClass : int { towel = 0, tshirt = 1, shirt = 2, sweater = 3, jean = 4 };

constexpr int kShapeCount = 5;
constexpr int kGraspPointsPerShape = 10;

const char *shape_name(ShapeClass s);
ShapeClass shape_from_name(const std::string &name);
ShapeClass shape_from_code(int code);

struct Spring {
  int a = 0, b = 0;
  double rest_length = 0;   // meters
  double stiffness = 0;     // N/m
};

// Mass-spring garment template. Particles sample the shape's boundary
// polygon on a regular lattice; springs are structural (4-neighborhood)
// plus shear (diagonals). Grid bookkeeping is kept so that renders can
// interpolate the surface between particles.
struct GarmentTemplate {
  ShapeClass shape = ShapeClass::towel;
  int instance_id = 0;
  double resolution = 0;  // particles per meter used to build the lattice

  std::vector<Vec2> rest_positions;
  std::vector<Spring> springs;
  double particle_mass = 0;  // kg, identical for all particles
  std::array<int, kGraspPointsPerShape> grasp_vertices{};
  double goal_area = 0;  // m^2, area of the flattened boundary polygon

  std::vector<Vec2> boundary;  // the shape's polygon (already jittered)

  // lattice topology
  int grid_cols = 0, grid_rows = 0;
  std::vector<int> grid;                    // (row*cols+col) -> particle index or -1
  std::vector<std::array<int, 4>> quads;    // fully occupied lattice cells
  std::vector<std::vector<int>> incident;   // particle -> indices into springs

  int particle_count() const { return static_cast<int>(rest_positions.size()); }
  double max_stiffness() const;

  std::string to_json() const;
  static GarmentTemplate from_json(const std::string &text);
};

struct ClothState {
  std::vector<Vec3> positions;
  std::vector<Vec3> velocities;
  std::map<int, Vec3> pinned;  // particle index -> anchor point

  bool operator==(const ClothState &o) const = default;
};

struct SimParams {
  double gravity = 9.81;       // m/s^2, along -z
  double drag = 4.0;           // 1/s, linear velocity drag (force = -drag*m*v)
  double table_z = 0.0;
  bool table_collision = true;
  double table_friction = 1.0;  // 1 = sticky contact, 0 = frictionless
};

struct HangParams {
  double dt = 1e-3;
  int max_steps = 20000;
  double ke_tolerance = 1e-6;  // joules
};

// Stability bound of the semi-implicit Euler integrator for the stiffest
// spring in the template: dt < 2*sqrt(m/k).
double stable_dt_bound(const GarmentTemplate &tpl);

GarmentTemplate make_template(ShapeClass shape, int instance_id, double resolution,
                              double size_jitter);

// All 20 templates (5 shapes x 4 instances) at the given lattice resolution.
std::vector<GarmentTemplate> make_all_templates(double resolution, double size_jitter);

// Flat state: rest positions on the table plane, zero velocity, no pins.
ClothState rest_state(const GarmentTemplate &tpl);

struct CrumpleParams {
  int max_folds = 3;
  double noise_xy = 0.010;   // meters
  double noise_z = 0.004;    // meters
  double layer_gap = 0.004;  // z offset added per fold layer
};

// Randomized fold-and-perturb crumple onto the table. Deterministic per
// seed; with zero folds and zero noise this is just the flat rest state.
ClothState crumple(const GarmentTemplate &tpl, std::uint64_t seed,
                   const CrumpleParams &params = {});

// One semi-implicit Euler step, in place. Gravity, per-spring Hooke forces,
// linear drag, optional table contact. Pinned particles are re-anchored
// after integration. The per-particle force accumulation walks incident
// springs in fixed index order, so results are bit-identical for any
// OpenMP thread count.
void step_inplace(const GarmentTemplate &tpl, ClothState &state, double dt,
                  const SimParams &params = {});

// Pure variant of step_inplace.
ClothState step(const GarmentTemplate &tpl, const ClothState &state, double dt,
                const SimParams &params = {});

double kinetic_energy(const GarmentTemplate &tpl, const ClothState &state);
// kinetic + spring potential + gravitational potential (zero at table plane)
double mechanical_energy(const GarmentTemplate &tpl, const ClothState &state,
                         const SimParams &params = {});

struct SettleResult {
  ClothState state;
  int steps = 0;
  bool converged = false;
  double kinetic = 0;
};

// Integrate with the current pin set (possibly empty) until the total
// kinetic energy drops below ke_tolerance or max_steps is exhausted. Throws
// DivergenceError (with the step index) if the state goes non-finite.
SettleResult settle(const GarmentTemplate &tpl, ClothState state, const HangParams &hang = {},
                    const SimParams &params = {});

// Pin `pin` at its current position, then settle.
SettleResult hang_to_equilibrium(const GarmentTemplate &tpl, ClothState state, int pin,
                                 const HangParams &hang = {}, const SimParams &params = {});

// A cloth hanging from one pin can rotate freely about the vertical axis
// through the anchor (the gripper wrist fixes it on a real robot). This
// rotates the state about that axis into a canonical azimuth: the principal
// horizontal axis of the particle cloud aligns with +x and the third moment
// along it is non-negative. Makes same-configuration drapes comparable
// across seeds.
void canonicalize_azimuth(const GarmentTemplate &tpl, ClothState &state, int pin);

// Move the anchor of `pin` linearly from its current location to `target`
// over `duration` seconds of simulated time, then leave it pinned there.
void move_pin(const GarmentTemplate &tpl, ClothState &state, int pin, const Vec3 &target,
              double duration, double dt, const SimParams &params = {});

// Dense surface samples: every particle plus bilinear interpolation inside
// each fully occupied lattice cell at sub-spacing <= max_spacing.
std::vector<Vec3> sample_surface(const GarmentTemplate &tpl, const ClothState &state,
                                 double max_spacing);

}  // namespace kcflat::cloth
