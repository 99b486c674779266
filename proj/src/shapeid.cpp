#include <algorithm>
#include <cstdint>
#include <stdexcept>

#include "kcflat/dataset.hpp"
#include "kcflat/shapeid.hpp"

namespace kcflat::shapeid {

int VotingState::max_votes() const {
  int m = 0;
  for (int v : votes) m = std::max(m, v);
  return m;
}

std::optional<cloth::ShapeClass> ingest(VotingState &state, cloth::ShapeClass vote) {
  state.votes[std::size_t(int(vote))] += 1;
  state.frames_seen += 1;
  if (state.frames_seen < state.min_frames) return std::nullopt;
  // max_votes/frames >= num/den, evaluated in integers (inclusive boundary)
  if (std::int64_t(state.threshold_den) * state.max_votes() >=
      std::int64_t(state.threshold_num) * state.frames_seen) {
    int best = 0;
    for (int s = 1; s < cloth::kShapeCount; ++s)
      if (state.votes[std::size_t(s)] > state.votes[std::size_t(best)]) best = s;
    return cloth::ShapeClass(best);
  }
  return std::nullopt;
}

ShapePrediction predict_shape(const FrameClassifier &classifier, const FrameSource &frames,
                              int max_frames) {
  if (!classifier || !frames) throw std::invalid_argument("classifier and frames required");
  ShapePrediction pred;
  if (max_frames < pred.state.min_frames)
    throw std::invalid_argument("max_frames below the minimum frame count");
  while (pred.frames_consumed < max_frames) {
    std::optional<render::DepthImage> img = frames();
    if (!img) break;  // stream exhausted
    ++pred.frames_consumed;
    if (auto decided = ingest(pred.state, classifier(*img))) {
      pred.shape = decided;
      break;  // first decision wins; pull nothing further
    }
  }
  return pred;
}

nn::ModelGraph build_shape_model(std::uint64_t seed) {
  nn::GraphBuilder b(seed);
  int t = b.input({1, kcnet::kInputSize, kcnet::kInputSize});
  t = b.relu(b.conv2d(t, 1, 8, 3, 2, 1));  // 32x32
  t = b.residual_block(t, 8, 16, 2);       // 16x16
  t = b.residual_block(t, 16, 16, 2);      // 8x8
  t = b.gap(t);
  t = b.log_softmax(b.linear(t, 16, cloth::kShapeCount));
  return b.finish(t);
}

cloth::ShapeClass frame_vote(nn::ModelGraph &model, const render::DepthImage &img) {
  const nn::Tensor sample = kcnet::depth_to_input(img);
  nn::Tensor x({1, 1, kcnet::kInputSize, kcnet::kInputSize});
  x.data = sample.data;
  const nn::Tensor &lp = nn::forward(model, {x});
  int best = 0;
  for (int c = 1; c < cloth::kShapeCount; ++c)
    if (lp.data[std::size_t(c)] > lp.data[std::size_t(best)]) best = c;
  return cloth::ShapeClass(best);
}

std::vector<render::DepthImage> lift_frames(const cloth::GarmentTemplate &tpl, int grasp_index,
                                            std::uint64_t seed, int n_frames) {
  if (n_frames < 1) throw std::invalid_argument("n_frames must be >= 1");
  std::vector<render::DepthImage> frames;
  frames.reserve(std::size_t(n_frames));
  const render::OrthoCamera cam = render::front_camera();

  cloth::ClothState state = cloth::crumple(tpl, seed);
  state = dataset::lift_to_anchor(
      tpl, std::move(state), grasp_index, dataset::kDefaultAnchor,
      [&](const cloth::ClothState &s) {
        if (int(frames.size()) < n_frames) frames.push_back(render::render_depth(tpl, s, cam));
      });
  // garment settled before the stream filled: the camera keeps exposing the
  // final hanging pose
  while (int(frames.size()) < n_frames)
    frames.push_back(render::render_depth(tpl, state, cam));
  return frames;
}

}  // namespace kcflat::shapeid
