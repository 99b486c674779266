#pragma once

#include <array>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "kcflat/geom.hpp"
#include "kcflat/kcnet.hpp"

namespace kcflat::plans {

enum class Arm { left, right };
enum class Grip { open, close };

// One 16-parameter gripper command: two poses (3 position + 4 quaternion
// each), the arm that executes this command, and the commanded gripper
// state of that arm. The gripper field is a state command (idempotent):
// consecutive `close` entries mean "stay closed"; a close *event* is a
// transition from open, and the state-machine check runs on events.
// Non-active-arm fields are hold-last-pose targets.
struct GripperCommand {
  Vec3 left_pos, right_pos;
  Quat left_quat, right_quat;
  Arm active_arm = Arm::left;
  Grip gripper_action = Grip::open;

  const Vec3 &active_pos() const { return active_arm == Arm::left ? left_pos : right_pos; }
  Vec3 &active_pos() { return active_arm == Arm::left ? left_pos : right_pos; }
};

constexpr int kPhaseCount = 3;
extern const std::array<const char *, kPhaseCount> kPhaseNames;  // grasp_first, grasp_second, stretch_flatten

struct ManipulationPlan {
  kcnet::KnownConfigLabel label;
  std::array<std::vector<GripperCommand>, kPhaseCount> phases;
  int grasp_slot_first = -1;   // global command index into flattened phases
  int grasp_slot_second = -1;

  int command_count() const;
  const GripperCommand &command(int global_index) const;
  GripperCommand &command(int global_index);
  // phase index containing a global command index
  int phase_of(int global_index) const;
};

struct PlanParseError : std::runtime_error {
  std::string field;
  PlanParseError(const std::string &what, std::string f)
      : std::runtime_error(what), field(std::move(f)) {}
};

// Default workspace for this rig: the table plane at z=0, hanging anchor
// at 1.2 m, everything within a 2x2 m footprint.
extern const Box3 kDefaultWorkspace;

ManipulationPlan parse_plan(const std::string &text);
std::string serialize_plan(const ManipulationPlan &plan);

// All invariant violations (empty = valid): three nonempty phases, unit
// quaternions (|norm-1| <= 1e-3 renormalized with a note in `warnings`,
// larger is an error), workspace containment, exactly one close event per
// grasp phase located at its fine-tunable slot, and per-arm gripper events
// alternating close/open.
struct PlanCheck {
  std::vector<std::string> errors;
  std::vector<std::string> warnings;
  bool ok() const { return errors.empty(); }
};

PlanCheck validate_plan(const ManipulationPlan &plan, const Box3 &workspace = kDefaultWorkspace);

struct PlanLibrary {
  std::map<int, ManipulationPlan> by_code;  // flat_code -> plan
};

// Loads every plans/v1 JSON file in a directory; throws on parse errors.
PlanLibrary load_library(const std::string &dir);
// Exact-match lookup; throws std::out_of_range for missing labels and
// std::invalid_argument for flat codes outside 0..49.
const ManipulationPlan &select_plan(const PlanLibrary &lib, const kcnet::KnownConfigLabel &label);

// Replaces the active-arm positions of the two fine-tunable slot commands;
// everything else is copied unchanged. Throws std::invalid_argument if a
// point is non-finite or outside the workspace.
ManipulationPlan bind_grasps(const ManipulationPlan &plan, const Vec3 &first, const Vec3 &second,
                             const Box3 &workspace = kDefaultWorkspace);

struct LintReport {
  int plan_count = 0;
  double mean_commands = 0;
  std::vector<std::string> errors;    // across all files, prefixed by file
  std::vector<std::string> warnings;
  bool ok() const { return errors.empty(); }
};

// Directory-level lint: per-plan validation plus library completeness
// (all 50 flat codes exactly once, 10 per shape) and the ~18-command
// average (asserted within 18±4).
LintReport lint_library(const std::string &dir);

}  // namespace kcflat::plans
