#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "kcflat/dataset.hpp"
#include "kcflat/errors.hpp"
#include "kcflat/pipeline.hpp"
#include "kcflat/plan_author.hpp"
#include "kcflat/render.hpp"
#include "kcflat/rng.hpp"

namespace kcflat::plans {

namespace {

const Quat kGripDown{0.0, 1.0, 0.0, 0.0};  // 180 deg about x: fingers down
const Vec3 kParkLeft{-0.5, -0.5, 1.5};
const Vec3 kParkRight{0.5, -0.5, 1.5};
constexpr double kMinPairDistance = 0.15;  // m, partners closer than this cannot stretch
constexpr double kStretchZHigh = 1.1, kStretchZLow = 1.0;
constexpr double kLayZ = 0.02;
constexpr int kRobustSeeds = 5;   // crumples each candidate is verified against
constexpr int kRefineTop = 3;     // candidates that get the variant sweep

// Builds commands while tracking each arm's last pose so the non-active
// fields are always hold-last-pose targets.
struct PlanBuilder {
  ManipulationPlan plan;
  Vec3 pose[2] = {kParkLeft, kParkRight};

  explicit PlanBuilder(const kcnet::KnownConfigLabel &label) { plan.label = label; }

  void add(int phase, Arm arm, Grip g, const Vec3 &target) {
    GripperCommand c;
    const int slot = arm == Arm::left ? 0 : 1;
    pose[slot] = target;
    c.left_pos = pose[0];
    c.right_pos = pose[1];
    c.left_quat = kGripDown;
    c.right_quat = kGripDown;
    c.active_arm = arm;
    c.gripper_action = g;
    plan.phases[std::size_t(phase)].push_back(c);
  }
};

struct StretchSpec {
  Vec3 first;        // where the right arm closes (hang vertex or drape bottom)
  Vec3 second;       // partner position at the moment the left arm closes
  bool regrip = false;  // true: first grasp takes the drape bottom and re-hangs it
  double width = 0;  // rest distance of the pair = stretched separation
  double side = 1;   // +1 when the partner hangs on +x, else -1
};

// Lay-down geometry knobs explored per candidate. `dir` flips the sweep
// toward -y, `width` under-stretches slightly to keep slack for the drop.
struct Variant {
  double width = 1.0;
  double sweep = 1.05;
  double dir = 1.0;
};

// Phase 1: right arm takes over the garment. Anchored mode closes on the
// hanging vertex and holds; regrip mode closes on the drape bottom and
// carries it back up to the anchor, re-hanging the garment from that point.
void emit_first_grasp(PlanBuilder &b, const StretchSpec &s) {
  b.add(0, Arm::right, Grip::open, s.first + Vec3{0.0, -0.15, 0.05});
  b.add(0, Arm::right, Grip::close, s.first);
  if (s.regrip)
    b.add(0, Arm::right, Grip::close, dataset::kDefaultAnchor);
  else
    b.add(0, Arm::right, Grip::close, s.first);  // hold while the other arm works
  b.plan.grasp_slot_first = 1;
}

// Phase 2: left arm takes the partner point where it hangs.
void emit_second_grasp(PlanBuilder &b, const StretchSpec &s) {
  b.add(1, Arm::left, Grip::open, s.second + Vec3{0.0, -0.15, 0.05});
  b.add(1, Arm::left, Grip::close, s.second);
  b.add(1, Arm::left, Grip::close, s.second);
  b.plan.grasp_slot_second = 4;
}

// First half of phase 3: pull the pair apart to the stretched separation.
// `y0` is the y plane the stretched pair is brought to.
void emit_stretch(PlanBuilder &b, const StretchSpec &s, double stretch_width, double y0) {
  const double q = stretch_width / 4.0, h = stretch_width / 2.0;
  b.add(2, Arm::right, Grip::close, {-s.side * q, y0, kStretchZHigh});
  b.add(2, Arm::left, Grip::close, {s.side * q, y0, kStretchZHigh});
  b.add(2, Arm::right, Grip::close, {-s.side * h, y0, kStretchZLow});
  b.add(2, Arm::left, Grip::close, {s.side * h, y0, kStretchZLow});
}

// Three lay-down waypoints per arm (alternating) plus the two releases.
// `sweep` is signed: negative lays the garment toward -y.
void emit_lay_down(PlanBuilder &b, const StretchSpec &s, double stretch_width, double y0,
                   double sweep) {
  const double h = stretch_width / 2.0;
  const double zs[3] = {0.65, 0.33, kLayZ};
  for (int k = 1; k <= 3; ++k) {
    const double y = y0 + sweep * double(k) / 3.0;
    b.add(2, Arm::right, Grip::close, {-s.side * h, y, zs[k - 1]});
    b.add(2, Arm::left, Grip::close, {s.side * h, y, zs[k - 1]});
  }
  b.add(2, Arm::right, Grip::open, kParkRight);
  b.add(2, Arm::left, Grip::open, kParkLeft);
}

ManipulationPlan build_full_plan(const kcnet::KnownConfigLabel &label, const StretchSpec &s,
                                 double drape, const Variant &v) {
  const double stretch_width = v.width * s.width;
  const double sweep = v.dir * v.sweep * drape;
  const double y0 = -0.5 * sweep;
  PlanBuilder b(label);
  emit_first_grasp(b, s);
  emit_second_grasp(b, s);
  emit_stretch(b, s, stretch_width, y0);
  emit_lay_down(b, s, stretch_width, y0, sweep);
  return b.plan;
}

// Partner vertices worth trying: the labeled landmarks plus the boundary
// polygon's corners, midpoints and quarter points (snapped to particles).
// Grasping is by position, so partners are not limited to the landmark set.
std::vector<int> partner_candidates(const cloth::GarmentTemplate &tpl, int first_vertex) {
  auto nearest_rest = [&](const Vec2 &q) {
    int best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (int i = 0; i < tpl.particle_count(); ++i) {
      const Vec2 d = tpl.rest_positions[std::size_t(i)] - q;
      const double d2 = d.x * d.x + d.y * d.y;
      if (d2 < best_d2) {
        best_d2 = d2;
        best = i;
      }
    }
    return best;
  };

  std::vector<int> cand;
  for (int g = 0; g < cloth::kGraspPointsPerShape; ++g)
    cand.push_back(tpl.grasp_vertices[std::size_t(g)]);
  const std::size_t nb = tpl.boundary.size();
  for (std::size_t i = 0; i < nb; ++i) {
    const Vec2 a = tpl.boundary[i];
    const Vec2 b = tpl.boundary[(i + 1) % nb];
    for (const double t : {0.0, 0.25, 0.5, 0.75})
      cand.push_back(nearest_rest(Vec2{a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)}));
  }
  std::sort(cand.begin(), cand.end());
  cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
  cand.erase(std::remove(cand.begin(), cand.end(), first_vertex), cand.end());
  return cand;
}

int lowest_particle(const cloth::ClothState &state) {
  int best = 0;
  for (int i = 1; i < int(state.positions.size()); ++i)
    if (state.positions[std::size_t(i)].z < state.positions[std::size_t(best)].z) best = i;
  return best;
}

// Silhouette extremes of a hanging state. Unlike mid-drape points these
// are unambiguous across crumples, which makes them dependable targets.
std::vector<int> extreme_particles(const cloth::ClothState &state) {
  int lo_z = 0, lo_x = 0, hi_x = 0;
  for (int i = 1; i < int(state.positions.size()); ++i) {
    const Vec3 &p = state.positions[std::size_t(i)];
    if (p.z < state.positions[std::size_t(lo_z)].z) lo_z = i;
    if (p.x < state.positions[std::size_t(lo_x)].x) lo_x = i;
    if (p.x > state.positions[std::size_t(hi_x)].x) hi_x = i;
  }
  return {lo_z, lo_x, hi_x};
}

}  // namespace

ManipulationPlan author_plan(const cloth::GarmentTemplate &tpl, int grasp_index,
                             std::uint64_t seed,
                             const std::vector<cloth::GarmentTemplate> &siblings) {
  if (grasp_index < 0 || grasp_index >= cloth::kGraspPointsPerShape)
    throw std::invalid_argument("grasp_index must be in [0,10)");

  const kcnet::KnownConfigLabel label{tpl.shape, grasp_index};
  const int first_vertex = tpl.grasp_vertices[std::size_t(grasp_index)];
  const render::OrthoCamera top = render::top_camera();

  // A plan is only as good as its worst outing, so every candidate is
  // verified against several start states: fresh crumples of the authored
  // template plus the sibling instances the plan must also serve (their
  // jittered dimensions are the hard part). The primary seed supplies the
  // authored grasp coordinates.
  struct EvalPoint {
    const cloth::GarmentTemplate *tpl;
    cloth::ClothState start;
    long goal_px;
  };
  std::vector<std::pair<const cloth::GarmentTemplate *, std::uint64_t>> draws;
  draws.emplace_back(&tpl, seed);
  int extra = 1;
  for (const cloth::GarmentTemplate &sib : siblings)
    draws.emplace_back(&sib, mix_seed(seed, std::uint64_t(0xB0 + extra++)));
  while (int(draws.size()) < kRobustSeeds)
    draws.emplace_back(&tpl, mix_seed(seed, std::uint64_t(0xB0 + extra++)));

  std::vector<EvalPoint> evals;
  for (const auto &[t, s] : draws)
    evals.push_back({t, dataset::known_config_state(*t, grasp_index, s, dataset::kDefaultAnchor),
                     render::footprint_mask(*t, cloth::rest_state(*t), top).area_px});
  const cloth::ClothState &hang = evals.front().start;

  auto min_cover = [&](const ManipulationPlan &plan) {
    double lo = std::numeric_limits<double>::infinity();
    for (const EvalPoint &e : evals) {
      try {
        pipeline::ExecResult done = pipeline::execute_plan_sim(*e.tpl, e.start, plan);
        const long px = render::footprint_mask(*e.tpl, done.state, top).area_px;
        lo = std::min(lo, double(px) / double(e.goal_px));
      } catch (const DivergenceError &) {
        return -1.0;  // unstable candidate; the search just skips it
      }
    }
    return lo;
  };

  struct Scored {
    double cover = -1.0;
    double drape = 0.0;
    StretchSpec spec;
  };

  // Two ways to take the garment over: hold it where it already hangs, or
  // regrip the drape bottom and re-hang from there. The second rescues
  // labels whose vertex sits mid-panel, where any anchored pair leaves
  // fabric doubled.
  std::vector<StretchSpec> seeds_specs;
  {
    StretchSpec anchored;
    anchored.first = hang.positions[std::size_t(first_vertex)];
    anchored.regrip = false;
    seeds_specs.push_back(anchored);

    StretchSpec regrip;
    regrip.first = hang.positions[std::size_t(lowest_particle(hang))];
    regrip.regrip = true;
    seeds_specs.push_back(regrip);
  }

  std::vector<Scored> scored;
  for (const StretchSpec &mode : seeds_specs) {
    // the state the partner is picked from: the original hang, or the
    // re-hung drape after the regrip lift
    cloth::ClothState base = hang;
    int held_vertex = first_vertex;
    if (mode.regrip) {
      PlanBuilder lift(label);
      emit_first_grasp(lift, mode);
      // hold-in-place padding: the executor requires non-empty phases
      lift.add(1, Arm::left, Grip::open, kParkLeft);
      lift.add(2, Arm::right, Grip::close, dataset::kDefaultAnchor);
      try {
        base = pipeline::execute_plan_sim(tpl, hang, lift.plan).state;
      } catch (const DivergenceError &) {
        continue;
      }
      held_vertex = lowest_particle(hang);
    }

    std::vector<int> cand = partner_candidates(tpl, held_vertex);
    for (const int e : extreme_particles(base))
      if (e != held_vertex && std::find(cand.begin(), cand.end(), e) == cand.end())
        cand.push_back(e);

    const Vec2 held_rest = tpl.rest_positions[std::size_t(held_vertex)];
    for (const int pv : cand) {
      const Vec2 d = tpl.rest_positions[std::size_t(pv)] - held_rest;
      Scored s;
      s.spec = mode;
      s.spec.width = d.norm();
      if (s.spec.width < kMinPairDistance) continue;
      s.spec.second = base.positions[std::size_t(pv)];
      s.spec.side = s.spec.second.x >= 0.0 ? 1.0 : -1.0;

      try {
        // probe: grasp both points and stretch, to measure how deep the
        // garment drapes below the stretched pair
        PlanBuilder probe(label);
        emit_first_grasp(probe, s.spec);
        emit_second_grasp(probe, s.spec);
        emit_stretch(probe, s.spec, s.spec.width, 0.0);
        pipeline::ExecResult stretched = pipeline::execute_plan_sim(tpl, hang, probe.plan);
        double z_min = kStretchZLow;
        for (const Vec3 &p : stretched.state.positions) z_min = std::min(z_min, p.z);
        s.drape = std::max(0.08, kStretchZLow - z_min);
      } catch (const DivergenceError &) {
        continue;
      }

      s.cover = min_cover(build_full_plan(label, s.spec, s.drape, Variant{}));
      if (s.cover >= 0.0) scored.push_back(s);
    }
  }
  if (scored.empty())
    throw std::runtime_error(std::string("no viable partner vertex for ") +
                             cloth::shape_name(tpl.shape) + " grasp " +
                             std::to_string(grasp_index));

  std::stable_sort(scored.begin(), scored.end(),
                   [](const Scored &a, const Scored &b) { return a.cover > b.cover; });

  // refine the front-runners with the lay-down variants
  static const Variant kVariants[] = {
      {1.0, 1.35, 1.0}, {0.92, 1.05, 1.0}, {0.92, 1.35, 1.0},
      {1.0, 1.05, -1.0}, {1.0, 1.35, -1.0},
  };
  double best_cover = scored.front().cover;
  ManipulationPlan best_plan =
      build_full_plan(label, scored.front().spec, scored.front().drape, Variant{});
  const int top_n = std::min<int>(kRefineTop, int(scored.size()));
  for (int i = 0; i < top_n; ++i) {
    for (const Variant &v : kVariants) {
      ManipulationPlan plan = build_full_plan(label, scored[std::size_t(i)].spec,
                                              scored[std::size_t(i)].drape, v);
      const double cover = min_cover(plan);
      if (cover > best_cover) {
        best_cover = cover;
        best_plan = std::move(plan);
      }
    }
  }

  const PlanCheck check = validate_plan(best_plan);
  if (!check.ok()) throw std::runtime_error("authored plan failed validation: " + check.errors[0]);
  return best_plan;
}

void author_library(const std::string &plans_dir, const std::string &templates_dir,
                    double resolution, double size_jitter, std::uint64_t seed,
                    const std::function<void(const std::string &)> &progress) {
  namespace fs = std::filesystem;
  fs::create_directories(plans_dir);
  fs::create_directories(templates_dir);

  const std::vector<cloth::GarmentTemplate> templates =
      cloth::make_all_templates(resolution, size_jitter);

  auto write_file = [](const std::string &path, const std::string &text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
  };

  for (const cloth::GarmentTemplate &tpl : templates) {
    const std::string tpath = templates_dir + "/" + cloth::shape_name(tpl.shape) + "_" +
                              std::to_string(tpl.instance_id) + ".json";
    write_file(tpath, tpl.to_json());
    if (progress) progress(tpath);
  }

  for (const cloth::GarmentTemplate &tpl : templates) {
    if (tpl.instance_id != 0) continue;
    std::vector<cloth::GarmentTemplate> siblings;
    for (const cloth::GarmentTemplate &sib : templates)
      if (sib.shape == tpl.shape && sib.instance_id != 0) siblings.push_back(sib);
    for (int g = 0; g < cloth::kGraspPointsPerShape; ++g) {
      const ManipulationPlan plan =
          author_plan(tpl, g, mix_seed(seed, std::uint64_t(int(tpl.shape)), std::uint64_t(g)),
                      siblings);
      const std::string path = plans_dir + "/" + cloth::shape_name(tpl.shape) + "_" +
                               std::to_string(g) + ".json";
      write_file(path, serialize_plan(plan));
      if (progress) progress(path);
    }
  }
}

}  // namespace kcflat::plans
