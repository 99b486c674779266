#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "kcflat/cloth.hpp"
#include "kcflat/kcnet.hpp"
#include "kcflat/render.hpp"

namespace kcflat::shapeid {

// Cumulative vote tally for the 20-frame / 80% decision rule. The
// threshold is held as the exact rational num/den so the boundary case
// (16 of 20) is decided by integer arithmetic, not floating point.
struct VotingState {
  int frames_seen = 0;
  std::array<int, cloth::kShapeCount> votes{};
  int min_frames = 20;
  int threshold_num = 4, threshold_den = 5;  // 0.80, inclusive

  int max_votes() const;
};

// Adds one vote; returns the decided shape exactly when
// frames_seen >= min_frames and max_votes/frames_seen >= threshold.
std::optional<cloth::ShapeClass> ingest(VotingState &state, cloth::ShapeClass vote);

using FrameClassifier = std::function<cloth::ShapeClass(const render::DepthImage &)>;
// Pull-based frame stream; empty optional = stream exhausted.
using FrameSource = std::function<std::optional<render::DepthImage>()>;

struct ShapePrediction {
  std::optional<cloth::ShapeClass> shape;  // empty = undecided
  int frames_consumed = 0;
  VotingState state;
};

// First decision wins; stops pulling frames immediately after it.
ShapePrediction predict_shape(const FrameClassifier &classifier, const FrameSource &frames,
                              int max_frames);

// 5-way GarNet surrogate: KCNet-S trunk scaled down plus a linear head.
nn::ModelGraph build_shape_model(std::uint64_t seed);
cloth::ShapeClass frame_vote(nn::ModelGraph &model, const render::DepthImage &img);

// Frames rendered at equal time intervals while the pin is lifted from the
// crumpled state on the table to the hanging anchor (then settling), as
// seen by the front camera. Used both to synthesize surrogate training
// data and as the pipeline's perception stream.
std::vector<render::DepthImage> lift_frames(const cloth::GarmentTemplate &tpl, int grasp_index,
                                            std::uint64_t seed, int n_frames);

}  // namespace kcflat::shapeid
