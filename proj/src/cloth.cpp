#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "kcflat/cloth.hpp"
#include "kcflat/errors.hpp"
#include "kcflat/rng.hpp"

namespace kcflat::cloth {

namespace {

struct Scratch {
  std::vector<Vec3> acc;
};

// Two passes so the parallel force evaluation only reads positions that no
// thread is mutating. Each particle walks its own incident springs in index
// order; this keeps the trajectory bit-identical for any thread count.
void step_with(const GarmentTemplate &tpl, ClothState &state, double dt,
               const SimParams &params, Scratch &ws) {
  const int n = tpl.particle_count();
  ws.acc.resize(std::size_t(n));
  const double inv_m = 1.0 / tpl.particle_mass;

#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    Vec3 a{0.0, 0.0, -params.gravity};
    const Vec3 p = state.positions[std::size_t(i)];
    for (int si : tpl.incident[std::size_t(i)]) {
      const Spring &s = tpl.springs[std::size_t(si)];
      const int j = (s.a == i) ? s.b : s.a;
      const Vec3 d = state.positions[std::size_t(j)] - p;
      const double len = d.norm();
      if (len > 1e-12) {
        a += (s.stiffness * (len - s.rest_length) / len * inv_m) * d;
      }
    }
    a += (-params.drag) * state.velocities[std::size_t(i)];
    ws.acc[std::size_t(i)] = a;
  }

  // Sticky-but-slippable table: tangential velocity decays to 5% per 10 ms
  // of contact, scaled by the friction coefficient. Cloth parked on the
  // table stays put, yet can still be dragged by a pinned neighbor.
  const double fr = (params.table_collision && params.table_friction > 0)
                        ? std::pow(0.05, params.table_friction * dt * 100.0)
                        : 1.0;

#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    Vec3 v = state.velocities[std::size_t(i)] + dt * ws.acc[std::size_t(i)];
    Vec3 p = state.positions[std::size_t(i)] + dt * v;
    if (params.table_collision && p.z < params.table_z) {
      p.z = params.table_z;
      if (v.z < 0) v.z = 0;
      v.x *= fr;
      v.y *= fr;
    }
    state.velocities[std::size_t(i)] = v;
    state.positions[std::size_t(i)] = p;
  }

  for (const auto &[idx, anchor] : state.pinned) {
    state.positions[std::size_t(idx)] = anchor;
    state.velocities[std::size_t(idx)] = {0.0, 0.0, 0.0};
  }
}

void check_pin(const GarmentTemplate &tpl, int pin) {
  if (pin < 0 || pin >= tpl.particle_count())
    throw std::invalid_argument("pin index out of range");
}

}  // namespace

ClothState rest_state(const GarmentTemplate &tpl) {
  ClothState st;
  st.positions.reserve(std::size_t(tpl.particle_count()));
  for (const Vec2 &p : tpl.rest_positions) st.positions.push_back({p.x, p.y, 0.0});
  st.velocities.assign(std::size_t(tpl.particle_count()), Vec3{});
  return st;
}

ClothState crumple(const GarmentTemplate &tpl, std::uint64_t seed, const CrumpleParams &params) {
  if (params.max_folds < 0) throw std::invalid_argument("max_folds must be >= 0");
  if (params.noise_xy < 0 || params.noise_z < 0 || params.layer_gap < 0)
    throw std::invalid_argument("crumple noise must be >= 0");

  ClothState st = rest_state(tpl);
  const int n = tpl.particle_count();
  Rng rng(mix_seed(seed, 0xC1A0ULL));
  std::vector<int> layer(std::size_t(n), 0);

  double minx = tpl.rest_positions[0].x, maxx = minx;
  double miny = tpl.rest_positions[0].y, maxy = miny;
  for (const Vec2 &p : tpl.rest_positions) {
    minx = std::min(minx, p.x);
    maxx = std::max(maxx, p.x);
    miny = std::min(miny, p.y);
    maxy = std::max(maxy, p.y);
  }

  const int folds = params.max_folds == 0 ? 0 : 1 + int(rng.uniform_index(std::uint64_t(params.max_folds)));
  for (int f = 0; f < folds; ++f) {
    // fold line through an interior point; the smaller side flips over
    const double qx = minx + (maxx - minx) * rng.uniform(0.3, 0.7);
    const double qy = miny + (maxy - miny) * rng.uniform(0.3, 0.7);
    const double phi = rng.uniform(0.0, 3.14159265358979323846);
    const double nx = -std::sin(phi), ny = std::cos(phi);

    int positive = 0;
    for (int i = 0; i < n; ++i) {
      const Vec3 &p = st.positions[std::size_t(i)];
      if ((p.x - qx) * nx + (p.y - qy) * ny > 0) ++positive;
    }
    const bool flip_positive = positive * 2 <= n;
    for (int i = 0; i < n; ++i) {
      Vec3 &p = st.positions[std::size_t(i)];
      const double d = (p.x - qx) * nx + (p.y - qy) * ny;
      if ((d > 0) == flip_positive) {
        p.x -= 2.0 * d * nx;
        p.y -= 2.0 * d * ny;
        ++layer[std::size_t(i)];
      }
    }
  }

  for (int i = 0; i < n; ++i) {
    Vec3 &p = st.positions[std::size_t(i)];
    p.z = 0.002 + layer[std::size_t(i)] * params.layer_gap +
          std::abs(rng.gaussian()) * params.noise_z;
    p.x += rng.gaussian() * params.noise_xy;
    p.y += rng.gaussian() * params.noise_xy;
  }
  return st;
}

void step_inplace(const GarmentTemplate &tpl, ClothState &state, double dt,
                  const SimParams &params) {
  if (dt <= 0) throw std::invalid_argument("dt must be > 0");
  if (state.positions.size() != std::size_t(tpl.particle_count()) ||
      state.velocities.size() != state.positions.size())
    throw std::invalid_argument("state size does not match template");
  Scratch ws;
  step_with(tpl, state, dt, params, ws);
}

ClothState step(const GarmentTemplate &tpl, const ClothState &state, double dt,
                const SimParams &params) {
  ClothState out = state;
  step_inplace(tpl, out, dt, params);
  return out;
}

double kinetic_energy(const GarmentTemplate &tpl, const ClothState &state) {
  double ke = 0;
  for (const Vec3 &v : state.velocities) ke += v.norm2();
  return 0.5 * tpl.particle_mass * ke;
}

double mechanical_energy(const GarmentTemplate &tpl, const ClothState &state,
                         const SimParams &params) {
  double e = kinetic_energy(tpl, state);
  for (const Spring &s : tpl.springs) {
    const double stretch =
        (state.positions[std::size_t(s.b)] - state.positions[std::size_t(s.a)]).norm() -
        s.rest_length;
    e += 0.5 * s.stiffness * stretch * stretch;
  }
  for (const Vec3 &p : state.positions)
    e += tpl.particle_mass * params.gravity * (p.z - params.table_z);
  return e;
}

SettleResult settle(const GarmentTemplate &tpl, ClothState state, const HangParams &hang,
                    const SimParams &params) {
  if (hang.dt <= 0) throw std::invalid_argument("dt must be > 0");
  if (hang.max_steps < 0) throw std::invalid_argument("max_steps must be >= 0");

  Scratch ws;
  SettleResult r;
  r.kinetic = kinetic_energy(tpl, state);
  for (int s = 0; s < hang.max_steps; ++s) {
    step_with(tpl, state, hang.dt, params, ws);
    ++r.steps;
    r.kinetic = kinetic_energy(tpl, state);
    if (!std::isfinite(r.kinetic)) throw DivergenceError("cloth integration diverged", r.steps);
    if (r.kinetic <= hang.ke_tolerance) {
      r.converged = true;
      break;
    }
  }
  r.state = std::move(state);
  return r;
}

SettleResult hang_to_equilibrium(const GarmentTemplate &tpl, ClothState state, int pin,
                                 const HangParams &hang, const SimParams &params) {
  check_pin(tpl, pin);
  if (!state.pinned.count(pin)) state.pinned[pin] = state.positions[std::size_t(pin)];
  return settle(tpl, std::move(state), hang, params);
}

void move_pin(const GarmentTemplate &tpl, ClothState &state, int pin, const Vec3 &target,
              double duration, double dt, const SimParams &params) {
  check_pin(tpl, pin);
  if (duration <= 0 || dt <= 0) throw std::invalid_argument("duration and dt must be > 0");
  if (!target.finite()) throw std::invalid_argument("target must be finite");

  const Vec3 start =
      state.pinned.count(pin) ? state.pinned[pin] : state.positions[std::size_t(pin)];
  state.pinned[pin] = start;
  const int steps = std::max(1, int(std::ceil(duration / dt)));
  Scratch ws;
  for (int k = 1; k <= steps; ++k) {
    const double t = double(k) / steps;
    state.pinned[pin] = (k == steps) ? target : Vec3{start + t * (target - start)};
    step_with(tpl, state, dt, params, ws);
    if ((k & 63) == 0 && !std::isfinite(kinetic_energy(tpl, state)))
      throw DivergenceError("pin move diverged", k);
  }
  if (!std::isfinite(kinetic_energy(tpl, state)))
    throw DivergenceError("pin move diverged", steps);
}

void canonicalize_azimuth(const GarmentTemplate &tpl, ClothState &state, int pin) {
  check_pin(tpl, pin);
  const Vec3 axis = state.pinned.count(pin) ? state.pinned.at(pin)
                                            : state.positions[std::size_t(pin)];
  const int n = tpl.particle_count();

  double sxx = 0, syy = 0, sxy = 0;
  for (const Vec3 &p : state.positions) {
    const double dx = p.x - axis.x, dy = p.y - axis.y;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }

  double angle = 0;
  if (std::abs(sxy) > 1e-12 || std::abs(sxx - syy) > 1e-12) {
    angle = -0.5 * std::atan2(2.0 * sxy, sxx - syy);
  }

  auto rotate_all = [&](double a) {
    const double ca = std::cos(a), sa = std::sin(a);
    auto rot = [&](Vec3 &p, bool about_axis) {
      const double ox = about_axis ? axis.x : 0.0, oy = about_axis ? axis.y : 0.0;
      const double dx = p.x - ox, dy = p.y - oy;
      p.x = ox + ca * dx - sa * dy;
      p.y = oy + sa * dx + ca * dy;
    };
    for (Vec3 &p : state.positions) rot(p, true);
    for (Vec3 &v : state.velocities) rot(v, false);
    for (auto &[idx, anchor] : state.pinned) rot(anchor, true);
  };
  rotate_all(angle);

  // Orient the principal axis: positive skewness along +x, with a
  // farthest-particle fallback for skew-free (symmetric) drapes.
  double skew = 0;
  for (const Vec3 &p : state.positions) {
    const double dx = p.x - axis.x;
    skew += dx * dx * dx;
  }
  if (skew < -1e-12) {
    rotate_all(3.14159265358979323846);
  } else if (std::abs(skew) <= 1e-12) {
    int far_i = 0;
    double far_d = -1;
    for (int i = 0; i < n; ++i) {
      const double d = std::abs(state.positions[std::size_t(i)].x - axis.x);
      if (d > far_d + 1e-15) {
        far_d = d;
        far_i = i;
      }
    }
    if (far_d > 1e-9 && state.positions[std::size_t(far_i)].x - axis.x < 0)
      rotate_all(3.14159265358979323846);
  }
}

std::vector<Vec3> sample_surface(const GarmentTemplate &tpl, const ClothState &state,
                                 double max_spacing) {
  if (max_spacing <= 0) throw std::invalid_argument("max_spacing must be > 0");
  std::vector<Vec3> out = state.positions;
  for (const auto &q : tpl.quads) {
    const Vec3 &p00 = state.positions[std::size_t(q[0])];
    const Vec3 &p10 = state.positions[std::size_t(q[1])];
    const Vec3 &p11 = state.positions[std::size_t(q[2])];
    const Vec3 &p01 = state.positions[std::size_t(q[3])];
    const double edge = std::max(std::max((p10 - p00).norm(), (p11 - p10).norm()),
                                 std::max((p01 - p00).norm(), (p11 - p01).norm()));
    const int sub = std::clamp(int(std::ceil(edge / max_spacing)), 1, 64);
    for (int i = 0; i <= sub; ++i) {
      for (int j = 0; j <= sub; ++j) {
        if ((i == 0 || i == sub) && (j == 0 || j == sub)) continue;  // corners are particles
        const double s = double(i) / sub, t = double(j) / sub;
        out.push_back((1 - s) * (1 - t) * p00 + s * (1 - t) * p10 + s * t * p11 +
                      (1 - s) * t * p01);
      }
    }
  }
  return out;
}

}  // namespace kcflat::cloth
