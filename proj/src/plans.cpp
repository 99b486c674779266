#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <utility>

#include <json.hpp>

#include "kcflat/plans.hpp"

namespace kcflat::plans {

namespace fs = std::filesystem;
using nlohmann::json;

const std::array<const char *, kPhaseCount> kPhaseNames = {"grasp_first", "grasp_second",
                                                           "stretch_flatten"};

const Box3 kDefaultWorkspace{{-1.0, -1.0, 0.0}, {1.0, 1.0, 2.0}};

int ManipulationPlan::command_count() const {
  int n = 0;
  for (const auto &p : phases) n += int(p.size());
  return n;
}

const GripperCommand &ManipulationPlan::command(int global_index) const {
  for (const auto &p : phases) {
    if (global_index < int(p.size())) return p[std::size_t(global_index)];
    global_index -= int(p.size());
  }
  throw std::out_of_range("command index out of range");
}

GripperCommand &ManipulationPlan::command(int global_index) {
  return const_cast<GripperCommand &>(std::as_const(*this).command(global_index));
}

int ManipulationPlan::phase_of(int global_index) const {
  for (int ph = 0; ph < kPhaseCount; ++ph) {
    if (global_index < int(phases[std::size_t(ph)].size())) return ph;
    global_index -= int(phases[std::size_t(ph)].size());
  }
  throw std::out_of_range("command index out of range");
}

namespace {

json vec_json(const Vec3 &v) { return {v.x, v.y, v.z}; }
json quat_json(const Quat &q) { return {q.w, q.x, q.y, q.z}; }

Vec3 vec_from(const json &j, const std::string &field) {
  if (!j.is_array() || j.size() != 3) throw PlanParseError("expected [x,y,z]", field);
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

Quat quat_from(const json &j, const std::string &field) {
  if (!j.is_array() || j.size() != 4) throw PlanParseError("expected [w,x,y,z]", field);
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(),
          j.at(3).get<double>()};
}

json command_json(const GripperCommand &c) {
  return {{"left_pos", vec_json(c.left_pos)},
          {"left_quat", quat_json(c.left_quat)},
          {"right_pos", vec_json(c.right_pos)},
          {"right_quat", quat_json(c.right_quat)},
          {"active_arm", c.active_arm == Arm::left ? "left" : "right"},
          {"gripper_action", c.gripper_action == Grip::open ? "open" : "close"}};
}

GripperCommand command_from(const json &j, const std::string &where) {
  GripperCommand c;
  for (const char *key :
       {"left_pos", "left_quat", "right_pos", "right_quat", "active_arm", "gripper_action"}) {
    if (!j.contains(key)) throw PlanParseError("missing field", where + "." + key);
  }
  c.left_pos = vec_from(j.at("left_pos"), where + ".left_pos");
  c.left_quat = quat_from(j.at("left_quat"), where + ".left_quat");
  c.right_pos = vec_from(j.at("right_pos"), where + ".right_pos");
  c.right_quat = quat_from(j.at("right_quat"), where + ".right_quat");
  const std::string arm = j.at("active_arm").get<std::string>();
  if (arm == "left")
    c.active_arm = Arm::left;
  else if (arm == "right")
    c.active_arm = Arm::right;
  else
    throw PlanParseError("active_arm must be left|right", where + ".active_arm");
  const std::string grip = j.at("gripper_action").get<std::string>();
  if (grip == "open")
    c.gripper_action = Grip::open;
  else if (grip == "close")
    c.gripper_action = Grip::close;
  else
    throw PlanParseError("gripper_action must be open|close", where + ".gripper_action");
  return c;
}

// Derived gripper events: a close/open entry only counts when it changes
// the commanded state of the command's own arm (both arms start open).
struct Event {
  int global_index;
  Arm arm;
  Grip to;
};

std::vector<Event> derive_events(const ManipulationPlan &plan) {
  std::vector<Event> events;
  Grip state[2] = {Grip::open, Grip::open};
  int idx = 0;
  for (const auto &phase : plan.phases) {
    for (const GripperCommand &c : phase) {
      Grip &s = state[c.active_arm == Arm::left ? 0 : 1];
      if (c.gripper_action != s) {
        s = c.gripper_action;
        events.push_back({idx, c.active_arm, c.gripper_action});
      }
      ++idx;
    }
  }
  return events;
}

}  // namespace

ManipulationPlan parse_plan(const std::string &text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception &e) {
    throw PlanParseError(e.what(), "(json)");
  }
  for (const char *key : {"schema_version", "label", "grasp_slots", "phases"}) {
    if (!j.contains(key)) throw PlanParseError("missing field", key);
  }
  if (j.at("schema_version").get<int>() != 1)
    throw PlanParseError("unsupported schema_version", "schema_version");

  ManipulationPlan plan;
  const json &label = j.at("label");
  if (!label.contains("shape") || !label.contains("grasp_index"))
    throw PlanParseError("label needs shape and grasp_index", "label");
  try {
    plan.label = {cloth::shape_from_name(label.at("shape").get<std::string>()),
                  label.at("grasp_index").get<int>()};
  } catch (const std::invalid_argument &e) {
    throw PlanParseError(e.what(), "label.shape");
  }
  if (plan.label.grasp_index < 0 || plan.label.grasp_index >= cloth::kGraspPointsPerShape)
    throw PlanParseError("grasp_index must be in [0,10)", "label.grasp_index");

  const json &phases = j.at("phases");
  for (int ph = 0; ph < kPhaseCount; ++ph) {
    const std::string name = kPhaseNames[std::size_t(ph)];
    if (!phases.contains(name)) throw PlanParseError("missing phase", "phases." + name);
    int ci = 0;
    for (const json &jc : phases.at(name)) {
      plan.phases[std::size_t(ph)].push_back(
          command_from(jc, "phases." + name + "[" + std::to_string(ci) + "]"));
      ++ci;
    }
  }

  const json &slots = j.at("grasp_slots");
  if (!slots.contains("first") || !slots.contains("second"))
    throw PlanParseError("grasp_slots needs first and second", "grasp_slots");
  plan.grasp_slot_first = slots.at("first").get<int>();
  plan.grasp_slot_second = slots.at("second").get<int>();
  return plan;
}

std::string serialize_plan(const ManipulationPlan &plan) {
  json j;
  j["schema_version"] = 1;
  j["label"] = {{"shape", cloth::shape_name(plan.label.shape)},
                {"grasp_index", plan.label.grasp_index}};
  j["grasp_slots"] = {{"first", plan.grasp_slot_first}, {"second", plan.grasp_slot_second}};
  json phases = json::object();
  for (int ph = 0; ph < kPhaseCount; ++ph) {
    json arr = json::array();
    for (const GripperCommand &c : plan.phases[std::size_t(ph)]) arr.push_back(command_json(c));
    phases[kPhaseNames[std::size_t(ph)]] = std::move(arr);
  }
  j["phases"] = std::move(phases);
  return j.dump(2);
}

PlanCheck validate_plan(const ManipulationPlan &plan, const Box3 &workspace) {
  PlanCheck check;
  auto err = [&](const std::string &m) { check.errors.push_back(m); };

  for (int ph = 0; ph < kPhaseCount; ++ph) {
    if (plan.phases[std::size_t(ph)].empty())
      err(std::string("phase ") + kPhaseNames[std::size_t(ph)] + " is empty");
  }
  if (plan.label.grasp_index < 0 || plan.label.grasp_index >= cloth::kGraspPointsPerShape)
    err("label grasp_index out of range");

  const int total = plan.command_count();
  int idx = 0;
  for (int ph = 0; ph < kPhaseCount; ++ph) {
    for (const GripperCommand &c : plan.phases[std::size_t(ph)]) {
      const std::string where = std::string(kPhaseNames[std::size_t(ph)]) + "[" +
                                std::to_string(idx) + "]";
      for (const Vec3 *p : {&c.left_pos, &c.right_pos}) {
        if (!p->finite())
          err(where + ": non-finite position");
        else if (!workspace.contains(*p))
          err(where + ": position outside workspace");
      }
      for (const Quat *q : {&c.left_quat, &c.right_quat}) {
        const double dev = std::abs(q->norm() - 1.0);
        if (!std::isfinite(dev) || dev > 1e-3) {
          err(where + ": quaternion norm deviates by more than 1e-3");
        } else if (dev > 1e-9) {
          check.warnings.push_back(where + ": quaternion renormalized");
        }
      }
      ++idx;
    }
  }

  // grasp slots: in range, in the right phase, and exactly the close events
  const bool slots_ok = plan.grasp_slot_first >= 0 && plan.grasp_slot_first < total &&
                        plan.grasp_slot_second >= 0 && plan.grasp_slot_second < total;
  if (!slots_ok) {
    err("grasp slots out of range");
  } else {
    if (plan.phase_of(plan.grasp_slot_first) != 0)
      err("grasp_slot_first must lie in phase grasp_first");
    if (plan.phase_of(plan.grasp_slot_second) != 1)
      err("grasp_slot_second must lie in phase grasp_second");
  }

  const std::vector<Event> events = derive_events(plan);
  int close_in_phase[kPhaseCount] = {0, 0, 0};
  for (const Event &e : events) {
    if (e.to == Grip::close) close_in_phase[plan.phase_of(e.global_index)] += 1;
  }
  if (close_in_phase[0] != 1)
    err("phase grasp_first must contain exactly one close event");
  if (close_in_phase[1] != 1)
    err("phase grasp_second must contain exactly one close event");
  if (close_in_phase[2] != 0)
    err("phase stretch_flatten must not introduce new grasps");
  if (slots_ok) {
    for (const Event &e : events) {
      if (e.to != Grip::close) continue;
      const int ph = plan.phase_of(e.global_index);
      if (ph == 0 && e.global_index != plan.grasp_slot_first)
        err("phase grasp_first close event is not at grasp_slot_first");
      if (ph == 1 && e.global_index != plan.grasp_slot_second)
        err("phase grasp_second close event is not at grasp_slot_second");
    }
  }
  return check;
}

PlanLibrary load_library(const std::string &dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir);
  std::vector<fs::path> files;
  for (const auto &entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json")
      files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  PlanLibrary lib;
  for (const fs::path &file : files) {
    std::ifstream f(file);
    if (!f) throw std::runtime_error("cannot open: " + file.string());
    const std::string text((std::istreambuf_iterator<char>(f)),
                           std::istreambuf_iterator<char>());
    ManipulationPlan plan;
    try {
      plan = parse_plan(text);
    } catch (const PlanParseError &e) {
      throw PlanParseError(file.filename().string() + ": " + e.what(), e.field);
    }
    const int code = plan.label.flat_code();
    if (lib.by_code.count(code))
      throw std::runtime_error("duplicate plan for label " + std::to_string(code) + " in " +
                               file.string());
    lib.by_code.emplace(code, std::move(plan));
  }
  return lib;
}

const ManipulationPlan &select_plan(const PlanLibrary &lib, const kcnet::KnownConfigLabel &label) {
  const int code = label.flat_code();
  if (code < 0 || code >= kcnet::kClassCount)
    throw std::invalid_argument("flat code outside 0..49");
  auto it = lib.by_code.find(code);
  if (it == lib.by_code.end())
    throw std::out_of_range("no plan for label " + std::to_string(code));
  return it->second;
}

ManipulationPlan bind_grasps(const ManipulationPlan &plan, const Vec3 &first, const Vec3 &second,
                             const Box3 &workspace) {
  for (const Vec3 *p : {&first, &second}) {
    if (!p->finite()) throw std::invalid_argument("grasp point must be finite");
    if (!workspace.contains(*p)) throw std::invalid_argument("grasp point outside workspace");
  }
  ManipulationPlan bound = plan;
  bound.command(bound.grasp_slot_first).active_pos() = first;
  bound.command(bound.grasp_slot_second).active_pos() = second;
  return bound;
}

LintReport lint_library(const std::string &dir) {
  LintReport rep;
  PlanLibrary lib;
  try {
    lib = load_library(dir);
  } catch (const std::exception &e) {
    rep.errors.push_back(e.what());
    return rep;
  }

  rep.plan_count = int(lib.by_code.size());
  long commands = 0;
  std::array<int, cloth::kShapeCount> per_shape{};
  for (const auto &[code, plan] : lib.by_code) {
    const std::string prefix = "label " + std::to_string(code) + ": ";
    const PlanCheck check = validate_plan(plan);
    for (const std::string &e : check.errors) rep.errors.push_back(prefix + e);
    for (const std::string &w : check.warnings) rep.warnings.push_back(prefix + w);
    commands += plan.command_count();
    per_shape[std::size_t(code / cloth::kGraspPointsPerShape)] += 1;
  }

  for (int code = 0; code < kcnet::kClassCount; ++code) {
    if (!lib.by_code.count(code))
      rep.errors.push_back("missing plan for label " + std::to_string(code));
  }
  for (int s = 0; s < cloth::kShapeCount; ++s) {
    if (per_shape[std::size_t(s)] != cloth::kGraspPointsPerShape)
      rep.errors.push_back(std::string("shape ") + cloth::shape_name(cloth::ShapeClass(s)) +
                           " does not have exactly 10 plans");
  }
  if (rep.plan_count > 0) {
    rep.mean_commands = double(commands) / rep.plan_count;
    if (rep.mean_commands < 14.0 || rep.mean_commands > 22.0)
      rep.errors.push_back("mean command count outside 18 +/- 4");
  }
  return rep;
}

}  // namespace kcflat::plans
