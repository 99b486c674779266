#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "kcflat/cloth.hpp"
#include "kcflat/dataset.hpp"
#include "kcflat/kcnet.hpp"
#include "kcflat/plans.hpp"
#include "kcflat/shapeid.hpp"

namespace kcflat::pipeline {

struct PhaseTimes {
  double shape_prediction = 0, grasp1 = 0, grasp2 = 0, flatten = 0;
  double total() const { return shape_prediction + grasp1 + grasp2 + flatten; }
};

struct FlattenReport {
  double starting_state = 0, final_state = 0;  // percent of goal area
  long s_start = 0, s_ending = 0, s_goal = 0;  // pixel areas
  PhaseTimes times;                            // wall-clock seconds
  cloth::ShapeClass predicted_shape{}, true_shape{};
  kcnet::KnownConfigLabel predicted_label{}, true_label{};
  bool success = false;
  std::string failed_stage;  // empty when every stage completed
  std::string error;
  int vote_frames = 0;
  std::uint64_t seed = 0;
  std::string config_json = "{}";  // the RunConfig that produced this run

  std::string to_json() const;
};

struct Metrics {
  double starting_state = 0, final_state = 0;
  bool success = false;
};

// Eqs.-style ratios: percent = 100*area/goal with the numerator formed in
// integer arithmetic before the division. Throws std::invalid_argument on
// a non-positive goal area.
Metrics compute_metrics(long s_start, long s_ending, long s_goal, double success_threshold);

// Perception stand-ins. Oracle predictors return the ground truth of the
// running scenario (upper bound isolating execution from perception);
// trained predictors wrap model checkpoints.
struct Predictors {
  shapeid::FrameClassifier frame_shape;
  std::function<kcnet::KnownConfigLabel(const render::DepthImage &, cloth::ShapeClass)> kc;
};

Predictors oracle_predictors(cloth::ShapeClass true_shape, const kcnet::KnownConfigLabel &truth);
Predictors trained_predictors(nn::ModelGraph &shape_model, kcnet::KCNetModel &kc_model);

struct RunConfig {
  double resolution = 12.0;
  double size_jitter = 0.1;
  double success_threshold = 70.0;  // percent; labeled assumption
  int max_vote_frames = 60;
  double dt = 1e-3;
  std::string config_json = "{}";
};

struct PhaseLog {
  std::string phase;
  double sim_seconds = 0;
  int steps = 0;
  bool settled = false;
};

struct ExecResult {
  cloth::ClothState state;
  std::vector<PhaseLog> logs;
};

// Simulated three-phase execution by pin control: phase 1 pins the first
// grasp, phase 2 adds the second, phase 3 walks both pins through the
// stretch-and-lay-down waypoints and releases. Throws DivergenceError
// naming the phase on integrator blow-up.
ExecResult execute_plan_sim(const cloth::GarmentTemplate &tpl, cloth::ClothState state,
                            const plans::ManipulationPlan &bound_plan, double dt = 1e-3);

// One end-to-end run: scenario drawn from the seed (template, true grasp,
// crumple), lift + voting, KC recognition, plan selection, fine-tuning,
// execution, metrics. Stage failures are reported, never thrown.
FlattenReport run_flatten(const std::vector<cloth::GarmentTemplate> &templates,
                          const plans::PlanLibrary &library,
                          const std::function<Predictors(const kcnet::KnownConfigLabel &)> &make_predictors,
                          std::uint64_t seed, const RunConfig &cfg);

struct FoldResult {
  int fold = 0;
  kcnet::EvalReport eval;
  std::vector<kcnet::EpochStat> trace;
};

struct LoocvReport {
  std::vector<FoldResult> folds;
  double mean_accuracy = 0;
};

// Trains and evaluates one KCNet per leave-one-instance-out fold.
// Requires all four instances present in the manifest. When
// `checkpoint_dir` is nonempty, each fold's model is saved there as
// kcnet_fold<k>.kcn.
LoocvReport loocv_run(const dataset::DatasetManifest &manifest, const kcnet::TrainConfig &cfg,
                      bool with_prior,
                      const std::function<void(int, const kcnet::EpochStat &)> &on_epoch = {},
                      const std::string &checkpoint_dir = "", bool hard_mask = false);

}  // namespace kcflat::pipeline
