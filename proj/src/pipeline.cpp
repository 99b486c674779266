#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>
#include <optional>
#include <stdexcept>
#include <utility>

#include <json.hpp>

#include "kcflat/errors.hpp"
#include "kcflat/grasp.hpp"
#include "kcflat/pipeline.hpp"
#include "kcflat/render.hpp"
#include "kcflat/rng.hpp"

namespace kcflat::pipeline {

using nlohmann::json;

Metrics compute_metrics(long s_start, long s_ending, long s_goal, double success_threshold) {
  if (s_goal <= 0) throw std::invalid_argument("goal area must be positive");
  Metrics m;
  m.starting_state = double(100 * s_start) / double(s_goal);
  m.final_state = double(100 * s_ending) / double(s_goal);
  m.success = m.final_state >= success_threshold;
  return m;
}

std::string FlattenReport::to_json() const {
  auto label_json = [](const kcnet::KnownConfigLabel &l) {
    return json{{"shape", cloth::shape_name(l.shape)},
                {"grasp_index", l.grasp_index},
                {"flat_code", l.flat_code()}};
  };
  json j;
  j["schema_version"] = 1;
  j["seed"] = seed;
  j["starting_state"] = starting_state;
  j["final_state"] = final_state;
  j["areas"] = {{"start", s_start}, {"ending", s_ending}, {"goal", s_goal}};
  j["times"] = {{"shape_prediction", times.shape_prediction},
                {"grasp1", times.grasp1},
                {"grasp2", times.grasp2},
                {"flatten", times.flatten},
                {"total", times.total()}};
  j["predicted_shape"] = cloth::shape_name(predicted_shape);
  j["true_shape"] = cloth::shape_name(true_shape);
  j["predicted_label"] = label_json(predicted_label);
  j["true_label"] = label_json(true_label);
  j["success"] = success;
  j["failed_stage"] = failed_stage;
  j["error"] = error;
  j["vote_frames"] = vote_frames;
  j["config"] = json::parse(config_json.empty() ? "{}" : config_json, nullptr, false).is_discarded()
                    ? json(config_json)
                    : json::parse(config_json);
  return j.dump(2);
}

Predictors oracle_predictors(cloth::ShapeClass true_shape, const kcnet::KnownConfigLabel &truth) {
  Predictors p;
  p.frame_shape = [true_shape](const render::DepthImage &) { return true_shape; };
  p.kc = [truth](const render::DepthImage &, cloth::ShapeClass) { return truth; };
  return p;
}

Predictors trained_predictors(nn::ModelGraph &shape_model, kcnet::KCNetModel &kc_model) {
  Predictors p;
  p.frame_shape = [&shape_model](const render::DepthImage &img) {
    return shapeid::frame_vote(shape_model, img);
  };
  p.kc = [&kc_model](const render::DepthImage &img, cloth::ShapeClass prior) {
    return kcnet::predict(kc_model, img, prior).label;
  };
  return p;
}

namespace {

constexpr double kArmSpeed = 0.4;  // m/s, gripper travel while holding cloth

// left arm = slot 0, right arm = slot 1
int arm_slot(plans::Arm a) { return a == plans::Arm::left ? 0 : 1; }

// Gripper pins tracked across the three phases. Both grippers start open;
// any pin already present in the incoming state (the lift grasp) belongs to
// the external hand-off and is released at the first close event.
struct ArmRig {
  std::array<int, 2> held{-1, -1};
  std::array<plans::Grip, 2> grip{plans::Grip::open, plans::Grip::open};
  bool handover_done = false;
};

// Lowest-index nearest particle, optionally excluding the one the other
// gripper already holds.
int nearest_particle(const cloth::ClothState &state, const Vec3 &target, int exclude) {
  int best = -1;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (int i = 0; i < int(state.positions.size()); ++i) {
    if (i == exclude) continue;
    const double d2 = (state.positions[std::size_t(i)] - target).norm2();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = i;
    }
  }
  return best;
}

void settle_budget(const cloth::GarmentTemplate &tpl, cloth::ClothState &state, double dt,
                   int max_steps, PhaseLog &log) {
  cloth::HangParams hang;
  hang.dt = dt;
  hang.max_steps = max_steps;
  cloth::SettleResult r = cloth::settle(tpl, std::move(state), hang);
  state = std::move(r.state);
  log.steps += r.steps;
  log.sim_seconds += double(r.steps) * dt;
  log.settled = r.converged;
}

}  // namespace

ExecResult execute_plan_sim(const cloth::GarmentTemplate &tpl, cloth::ClothState state,
                            const plans::ManipulationPlan &bound_plan, double dt) {
  if (dt <= 0) throw std::invalid_argument("dt must be positive");
  for (int ph = 0; ph < plans::kPhaseCount; ++ph) {
    if (bound_plan.phases[std::size_t(ph)].empty())
      throw std::invalid_argument(std::string("plan phase ") + plans::kPhaseNames[std::size_t(ph)] +
                                  " is empty");
  }

  ExecResult out;
  ArmRig rig;
  for (int ph = 0; ph < plans::kPhaseCount; ++ph) {
    PhaseLog log;
    log.phase = plans::kPhaseNames[std::size_t(ph)];
    try {
      for (const plans::GripperCommand &c : bound_plan.phases[std::size_t(ph)]) {
        const int a = arm_slot(c.active_arm);
        const Vec3 &target = c.active_pos();
        const bool close_event =
            c.gripper_action == plans::Grip::close && rig.grip[std::size_t(a)] == plans::Grip::open;
        const bool open_event =
            c.gripper_action == plans::Grip::open && rig.grip[std::size_t(a)] == plans::Grip::close;

        if (open_event) {
          // release before the arm moves away
          if (rig.held[std::size_t(a)] >= 0) {
            state.pinned.erase(rig.held[std::size_t(a)]);
            rig.held[std::size_t(a)] = -1;
          }
          rig.grip[std::size_t(a)] = plans::Grip::open;
          continue;
        }

        if (close_event) {
          // the arm travels open (no cloth contact), then closes on the
          // nearest particle at its current location - never teleports cloth
          const int other = rig.held[std::size_t(1 - a)];
          const int p = nearest_particle(state, target, other);
          if (p < 0) throw std::invalid_argument("no particle available to grasp");
          state.pinned[p] = state.positions[std::size_t(p)];
          state.velocities[std::size_t(p)] = Vec3{0, 0, 0};
          rig.held[std::size_t(a)] = p;
          rig.grip[std::size_t(a)] = plans::Grip::close;
          if (!rig.handover_done) {
            // the hand that lifted the garment lets go once the first
            // in-plan grasp is secured
            for (auto it = state.pinned.begin(); it != state.pinned.end();) {
              if (it->first != rig.held[0] && it->first != rig.held[1])
                it = state.pinned.erase(it);
              else
                ++it;
            }
            rig.handover_done = true;
          }
          continue;
        }

        // stay-state command: a waypoint move for whatever the arm holds
        if (c.gripper_action == plans::Grip::close && rig.held[std::size_t(a)] >= 0) {
          const int pin = rig.held[std::size_t(a)];
          const Vec3 from = state.pinned.at(pin);
          const double dist = (target - from).norm();
          if (dist <= 0) continue;
          const double duration = std::max(dist / kArmSpeed, dt);
          cloth::move_pin(tpl, state, pin, target, duration, dt);
          const long steps = std::lround(duration / dt);
          log.steps += int(steps);
          log.sim_seconds += double(steps) * dt;
        }
        // open stay-state commands are free-space approach moves
      }
      // let the cloth stabilise before the next phase (or the measurement)
      settle_budget(tpl, state, dt, ph == plans::kPhaseCount - 1 ? 15000 : 5000, log);
    } catch (const DivergenceError &e) {
      throw DivergenceError(std::string(plans::kPhaseNames[std::size_t(ph)]) + " diverged: " +
                                e.what(),
                            e.step_index);
    }
    out.logs.push_back(std::move(log));
  }
  out.state = std::move(state);
  return out;
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const cloth::GarmentTemplate &find_template(const std::vector<cloth::GarmentTemplate> &templates,
                                            cloth::ShapeClass shape, int instance) {
  for (const cloth::GarmentTemplate &t : templates) {
    if (t.shape == shape && t.instance_id == instance) return t;
  }
  throw std::invalid_argument(std::string("no template for ") + cloth::shape_name(shape) +
                              " instance " + std::to_string(instance));
}

}  // namespace

FlattenReport run_flatten(const std::vector<cloth::GarmentTemplate> &templates,
                          const plans::PlanLibrary &library,
                          const std::function<Predictors(const kcnet::KnownConfigLabel &)> &make_predictors,
                          std::uint64_t seed, const RunConfig &cfg) {
  FlattenReport rep;
  rep.seed = seed;
  rep.config_json = cfg.config_json;

  // scenario drawn from the seed
  const int shape_code = int(seed % std::uint64_t(cloth::kShapeCount));
  const int instance = int((seed / std::uint64_t(cloth::kShapeCount)) % 4u);
  Rng grng(mix_seed(seed, 0x5Cu));
  const int grasp = int(grng.uniform_index(cloth::kGraspPointsPerShape));
  rep.true_shape = cloth::shape_from_code(shape_code);
  rep.true_label = kcnet::KnownConfigLabel{rep.true_shape, grasp};

  const cloth::GarmentTemplate &tpl = find_template(templates, rep.true_shape, instance);
  const render::OrthoCamera top = render::top_camera();
  rep.s_goal = render::footprint_mask(tpl, cloth::rest_state(tpl), top).area_px;

  cloth::ClothState current = cloth::crumple(tpl, seed);
  rep.s_start = render::footprint_mask(tpl, current, top).area_px;

  const Predictors preds = make_predictors(rep.true_label);
  std::string stage = "shape_prediction";
  bool executed = false;
  try {
    // --- shape prediction: vote over frames taken during the lift
    auto t0 = std::chrono::steady_clock::now();
    const std::vector<render::DepthImage> frames =
        shapeid::lift_frames(tpl, grasp, seed, cfg.max_vote_frames);
    std::size_t cursor = 0;
    shapeid::FrameSource source = [&]() -> std::optional<render::DepthImage> {
      if (cursor < frames.size()) return frames[cursor++];
      return std::nullopt;
    };
    const shapeid::ShapePrediction sp =
        shapeid::predict_shape(preds.frame_shape, source, cfg.max_vote_frames);
    rep.vote_frames = sp.frames_consumed;
    if (!sp.shape) throw std::runtime_error("shape voting exhausted the frame budget undecided");
    rep.predicted_shape = *sp.shape;
    current = dataset::known_config_state(tpl, grasp, seed, dataset::kDefaultAnchor);
    rep.times.shape_prediction = seconds_since(t0);

    // --- grasp point 1: recognise the configuration, fine-tune the first point
    stage = "grasp1";
    t0 = std::chrono::steady_clock::now();
    const render::OrthoCamera front = render::front_camera();
    const render::DepthImage view = render::render_depth(tpl, current, front);
    rep.predicted_label = preds.kc(view, rep.predicted_shape);
    const plans::ManipulationPlan &plan = plans::select_plan(library, rep.predicted_label);

    render::PointCloud cloud = grasp::segment_garment(render::depth_to_cloud(view), {});
    if (cloud.points.empty()) {
      // widened depth band retry before giving up
      cloud = grasp::segment_garment(render::depth_to_cloud(view), {0.5, 9.5});
      if (cloud.points.empty()) throw NoGarmentVisibleError("no garment points in the depth band");
    }
    const grasp::KdTree index(cloud.points);
    const auto tune_world = [&](int slot) {
      const Vec3 pre_world = plan.command(slot).active_pos();
      const grasp::GraspPoint pre{front.to_camera(pre_world), grasp::GraspSource::pre_designed};
      const grasp::GraspPoint tuned = grasp::fine_tune(pre, index, cloud.points);
      return front.to_world(tuned.position);
    };
    const Vec3 first = tune_world(plan.grasp_slot_first);
    rep.times.grasp1 = seconds_since(t0);

    // --- grasp point 2
    stage = "grasp2";
    t0 = std::chrono::steady_clock::now();
    const Vec3 second = tune_world(plan.grasp_slot_second);
    rep.times.grasp2 = seconds_since(t0);

    // --- flattening
    stage = "flatten";
    t0 = std::chrono::steady_clock::now();
    const plans::ManipulationPlan bound = plans::bind_grasps(plan, first, second);
    ExecResult exec = execute_plan_sim(tpl, current, bound, cfg.dt);
    current = std::move(exec.state);
    executed = true;
    rep.times.flatten = seconds_since(t0);
  } catch (const std::exception &e) {
    rep.failed_stage = stage;
    rep.error = e.what();
  }

  if (!executed) {
    // recovery: drop whatever is held and let the garment come to rest so
    // the final footprint is still measurable
    try {
      current.pinned.clear();
      cloth::HangParams hang;
      hang.dt = cfg.dt;
      hang.max_steps = 15000;
      current = std::move(cloth::settle(tpl, std::move(current), hang).state);
      rep.s_ending = render::footprint_mask(tpl, current, top).area_px;
    } catch (const std::exception &) {
      rep.s_ending = 0;
    }
  } else {
    rep.s_ending = render::footprint_mask(tpl, current, top).area_px;
  }

  const Metrics m = compute_metrics(rep.s_start, rep.s_ending, rep.s_goal, cfg.success_threshold);
  rep.starting_state = m.starting_state;
  rep.final_state = m.final_state;
  rep.success = m.success && rep.failed_stage.empty();
  return rep;
}

LoocvReport loocv_run(const dataset::DatasetManifest &manifest, const kcnet::TrainConfig &cfg,
                      bool with_prior,
                      const std::function<void(int, const kcnet::EpochStat &)> &on_epoch,
                      const std::string &checkpoint_dir, bool hard_mask) {
  const std::vector<kcnet::LabeledImage> all = dataset::load_samples(manifest);
  std::array<int, 4> support{};
  for (const kcnet::LabeledImage &s : all) {
    if (s.instance_id < 0 || s.instance_id >= 4)
      throw std::invalid_argument("instance_id outside 0..3");
    support[std::size_t(s.instance_id)] += 1;
  }
  for (int i = 0; i < 4; ++i) {
    if (support[std::size_t(i)] == 0)
      throw std::invalid_argument("LOOCV needs samples from all four instances; instance " +
                                  std::to_string(i) + " is missing");
  }
  if (!checkpoint_dir.empty()) std::filesystem::create_directories(checkpoint_dir);

  LoocvReport rep;
  double acc_sum = 0;
  for (int fold = 0; fold < 4; ++fold) {
    std::vector<kcnet::LabeledImage> train, test;
    for (const kcnet::LabeledImage &s : all) {
      (s.instance_id == fold ? test : train).push_back(s);
    }
    const std::uint64_t fold_seed = mix_seed(cfg.seed, std::uint64_t(fold), 0xF01Du);
    kcnet::KCNetModel model = kcnet::build_kcnet(with_prior, fold_seed);
    kcnet::TrainConfig fold_cfg = cfg;
    fold_cfg.seed = fold_seed;

    FoldResult fr;
    fr.fold = fold;
    std::function<void(const kcnet::EpochStat &)> hook;
    if (on_epoch) hook = [&, fold](const kcnet::EpochStat &st) { on_epoch(fold, st); };
    fr.trace = kcnet::train(model, train, fold_cfg, hook);
    fr.eval = kcnet::evaluate(model, test, hard_mask);
    acc_sum += fr.eval.overall_accuracy;

    if (!checkpoint_dir.empty()) {
      const json meta = {{"fold", fold},
                         {"with_prior", with_prior},
                         {"seed", cfg.seed},
                         {"held_out_instance", fold}};
      kcnet::save_kcnet(checkpoint_dir + "/kcnet_fold" + std::to_string(fold) + ".kcn", model,
                        meta.dump());
    }
    rep.folds.push_back(std::move(fr));
  }
  rep.mean_accuracy = acc_sum / 4.0;
  return rep;
}

}  // namespace kcflat::pipeline
