#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>
#include <string>

#include "kcflat/plans.hpp"

using namespace kcflat;
using plans::Arm;
using plans::Grip;
using plans::GripperCommand;
using plans::ManipulationPlan;

namespace {

const std::string kPlansDir = std::string(KCFLAT_SOURCE_DIR) + "/plans/v1";

// Smallest legal plan: one close per grasp phase, stretch phase releases
// both arms.
ManipulationPlan minimal_plan() {
  ManipulationPlan p;
  p.label = {cloth::ShapeClass::towel, 0};
  auto cmd = [](Arm arm, Grip g, const Vec3 &pos) {
    GripperCommand c;
    c.active_arm = arm;
    c.gripper_action = g;
    c.active_pos() = pos;
    return c;
  };
  p.phases[0] = {cmd(Arm::right, Grip::close, {0.1, 0.0, 1.0})};
  p.phases[1] = {cmd(Arm::left, Grip::close, {-0.1, 0.0, 1.0})};
  p.phases[2] = {cmd(Arm::right, Grip::close, {0.3, 0.0, 1.0}),
                 cmd(Arm::left, Grip::close, {-0.3, 0.0, 1.0}),
                 cmd(Arm::right, Grip::open, {0.3, 0.0, 1.0}),
                 cmd(Arm::left, Grip::open, {-0.3, 0.0, 1.0})};
  p.grasp_slot_first = 0;
  p.grasp_slot_second = 1;
  return p;
}

}  // namespace

TEST_CASE("minimal plan round-trips through serialize and parse") {
  const ManipulationPlan p = minimal_plan();
  REQUIRE(plans::validate_plan(p).ok());

  const std::string text = plans::serialize_plan(p);
  const ManipulationPlan q = plans::parse_plan(text);
  CHECK(q.label == p.label);
  CHECK(q.grasp_slot_first == p.grasp_slot_first);
  CHECK(q.grasp_slot_second == p.grasp_slot_second);
  REQUIRE(q.command_count() == p.command_count());
  for (int i = 0; i < p.command_count(); ++i) {
    CHECK(q.command(i).active_arm == p.command(i).active_arm);
    CHECK(q.command(i).gripper_action == p.command(i).gripper_action);
    CHECK(q.command(i).left_pos == p.command(i).left_pos);
    CHECK(q.command(i).right_pos == p.command(i).right_pos);
  }
}

TEST_CASE("missing phase is a parse error naming the phase") {
  // strip the stretch_flatten phase out of a valid document
  const std::string text = plans::serialize_plan(minimal_plan());
  const std::size_t at = text.find("\"stretch_flatten\"");
  REQUIRE(at != std::string::npos);
  std::string broken = text;
  broken.replace(at, 17, "\"something_else\"");
  CHECK_THROWS_AS(plans::parse_plan(broken), plans::PlanParseError);
}

TEST_CASE("command indexing crosses phase boundaries") {
  const ManipulationPlan p = minimal_plan();
  CHECK(p.command_count() == 6);
  CHECK(p.phase_of(0) == 0);
  CHECK(p.phase_of(1) == 1);
  CHECK(p.phase_of(2) == 2);
  CHECK(p.phase_of(5) == 2);
  CHECK(p.command(1).active_arm == Arm::left);
  CHECK_THROWS_AS(p.command(6), std::out_of_range);
}

TEST_CASE("validator rejects structural violations") {
  SUBCASE("empty phase") {
    ManipulationPlan p = minimal_plan();
    p.phases[1].clear();
    CHECK(!plans::validate_plan(p).ok());
  }
  SUBCASE("grasp phase with no close event") {
    ManipulationPlan p = minimal_plan();
    p.phases[0][0].gripper_action = Grip::open;
    CHECK(!plans::validate_plan(p).ok());
  }
  SUBCASE("close following close on the same arm") {
    ManipulationPlan p = minimal_plan();
    // open then close again without an intervening open on the right arm
    GripperCommand extra = p.phases[2][2];  // right open
    p.phases[2].push_back(extra);
    p.phases[2][3].gripper_action = Grip::close;  // left close after left close event? craft below
    // simpler: make phase 3 do right close -> right open -> right close -> right open is legal;
    // instead corrupt the second grasp slot to a second close on the right arm
    ManipulationPlan q = minimal_plan();
    q.phases[1][0].active_arm = Arm::right;  // right closes twice with no open between
    CHECK(!plans::validate_plan(q).ok());
  }
  SUBCASE("workspace violation") {
    ManipulationPlan p = minimal_plan();
    p.phases[2][0].right_pos = {5.0, 0.0, 1.0};
    const plans::PlanCheck check = plans::validate_plan(p);
    CHECK(!check.ok());
  }
  SUBCASE("grasp slot must be the phase's close event") {
    ManipulationPlan p = minimal_plan();
    p.grasp_slot_first = 2;  // points into the stretch phase
    CHECK(!plans::validate_plan(p).ok());
  }
}

TEST_CASE("quaternion norms: small drift renormalizes, large drift errors") {
  ManipulationPlan p = minimal_plan();
  p.phases[0][0].right_quat = {0.0, 1.0 + 5e-4, 0.0, 0.0};  // |n|-1 ~ 5e-4
  const plans::PlanCheck soft = plans::validate_plan(p);
  CHECK(soft.ok());
  CHECK(!soft.warnings.empty());

  p.phases[0][0].right_quat = {0.3, 1.2, 0.0, 0.0};  // far from unit
  CHECK(!plans::validate_plan(p).ok());
}

TEST_CASE("bind_grasps identity, locality, and re-validation") {
  const ManipulationPlan p = minimal_plan();
  const Vec3 pre1 = p.command(p.grasp_slot_first).active_pos();
  const Vec3 pre2 = p.command(p.grasp_slot_second).active_pos();

  SUBCASE("binding the plan's own points changes nothing") {
    const ManipulationPlan b = plans::bind_grasps(p, pre1, pre2);
    CHECK(plans::serialize_plan(b) == plans::serialize_plan(p));
  }
  SUBCASE("binding shifted points changes exactly the two slot positions") {
    const Vec3 s1 = pre1 + Vec3{0.02, 0.0, -0.01};
    const Vec3 s2 = pre2 + Vec3{-0.03, 0.01, 0.0};
    const ManipulationPlan b = plans::bind_grasps(p, s1, s2);
    int differing = 0;
    for (int i = 0; i < p.command_count(); ++i) {
      const bool same = b.command(i).left_pos == p.command(i).left_pos &&
                        b.command(i).right_pos == p.command(i).right_pos;
      differing += same ? 0 : 1;
    }
    CHECK(differing == 2);
    CHECK(b.command(b.grasp_slot_first).active_pos() == s1);
    CHECK(b.command(b.grasp_slot_second).active_pos() == s2);
    CHECK(plans::validate_plan(b).ok());
  }
  SUBCASE("points outside the workspace are rejected") {
    CHECK_THROWS_AS(plans::bind_grasps(p, {9.0, 0.0, 1.0}, pre2), std::invalid_argument);
    const double nan = std::nan("");
    CHECK_THROWS_AS(plans::bind_grasps(p, {nan, 0.0, 1.0}, pre2), std::invalid_argument);
  }
}

TEST_CASE("shipped library loads complete and valid") {
  const plans::PlanLibrary lib = plans::load_library(kPlansDir);
  REQUIRE(lib.by_code.size() == 50);

  std::array<int, cloth::kShapeCount> per_shape{};
  long total_commands = 0;
  for (const auto &[code, plan] : lib.by_code) {
    CHECK(plan.label.flat_code() == code);
    CHECK(plans::validate_plan(plan).ok());
    per_shape[std::size_t(code / 10)] += 1;
    total_commands += plan.command_count();
  }
  for (int s = 0; s < cloth::kShapeCount; ++s) CHECK(per_shape[std::size_t(s)] == 10);

  // 18 +- 4 commands on average
  const double mean = double(total_commands) / 50.0;
  CHECK(mean >= 14.0);
  CHECK(mean <= 22.0);

  // spot-check the towel corner plan shape
  const ManipulationPlan &towel0 = plans::select_plan(lib, {cloth::ShapeClass::towel, 0});
  CHECK(towel0.command_count() >= 14);
  CHECK(towel0.command_count() <= 22);
  CHECK(towel0.grasp_slot_first >= 0);
  CHECK(towel0.grasp_slot_second > towel0.grasp_slot_first);
}

TEST_CASE("serialization round-trips the whole shipped library") {
  const plans::PlanLibrary lib = plans::load_library(kPlansDir);
  for (const auto &[code, plan] : lib.by_code) {
    const ManipulationPlan re = plans::parse_plan(plans::serialize_plan(plan));
    CHECK(plans::serialize_plan(re) == plans::serialize_plan(plan));
  }
}

TEST_CASE("select_plan lookups and range errors") {
  const plans::PlanLibrary lib = plans::load_library(kPlansDir);
  std::set<const ManipulationPlan *> distinct;
  for (int code = 0; code < 50; ++code) {
    const ManipulationPlan &p = plans::select_plan(lib, kcnet::KnownConfigLabel::from_flat(code));
    CHECK(p.label.flat_code() == code);
    distinct.insert(&p);
  }
  CHECK(distinct.size() == 50);
  CHECK_THROWS_AS(kcnet::KnownConfigLabel::from_flat(50), std::invalid_argument);
  CHECK_THROWS_AS(kcnet::KnownConfigLabel::from_flat(-1), std::invalid_argument);
}

TEST_CASE("lint_library reports the shipped catalog clean") {
  const plans::LintReport rep = plans::lint_library(kPlansDir);
  CHECK(rep.ok());
  CHECK(rep.plan_count == 50);
  CHECK(rep.mean_commands >= 14.0);
  CHECK(rep.mean_commands <= 22.0);
}
