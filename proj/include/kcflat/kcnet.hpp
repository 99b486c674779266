#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "kcflat/cloth.hpp"
#include "kcflat/nn.hpp"
#include "kcflat/render.hpp"

namespace kcflat::kcnet {

constexpr int kClassCount = 50;  // 5 shapes x 10 grasp points
constexpr int kInputSize = 64;

// (shape, grasp_index) <-> flat code bijection: flat = 10*shape + grasp.
struct KnownConfigLabel {
  cloth::ShapeClass shape = cloth::ShapeClass::towel;
  int grasp_index = 0;

  int flat_code() const { return 10 * int(shape) + grasp_index; }
  static KnownConfigLabel from_flat(int code);
  bool operator==(const KnownConfigLabel &o) const = default;
};

// Shape-conditioned known-configuration classifier: image trunk to a 32-d
// feature, one-hot shape embedding to 16-d, concatenated into a 48->64->50
// head ending in log-softmax. The without-prior variant drops the embedding
// branch (head input 32-d).
struct KCNetModel {
  nn::ModelGraph graph;
  bool with_prior = true;
};

KCNetModel build_kcnet(bool with_prior, std::uint64_t seed);

// 256x256 (or any square multiple of 64) depth image -> 1x64x64 input
// tensor. Downsampling is block averaging with the background sentinel
// treated as depth 0 and re-thresholded afterwards; values are then mapped
// to height-above-floor units: x = (2.5 - depth)/2.5 on foreground, 0 on
// background. Throws std::invalid_argument for non-square or non-divisible
// sizes.
nn::Tensor depth_to_input(const render::DepthImage &img);
nn::Tensor one_hot_shape(cloth::ShapeClass s);

struct Prediction {
  nn::Tensor log_probs;  // [1,50]
  KnownConfigLabel label;
  double log_prob = 0;
};

// `hard_mask` restricts the argmax to the prior shape's ten codes; the
// log-probabilities themselves are never masked. Off by default: the prior
// normally enters only through the embedding.
Prediction predict(KCNetModel &model, const render::DepthImage &img,
                   cloth::ShapeClass shape_prior, bool hard_mask = false);

// One training/evaluation sample: a prepared input tensor plus its label
// and the garment instance it came from.
struct LabeledImage {
  nn::Tensor input;  // [1,H,W]
  int label = 0;     // flat code (or shape code for the 5-way classifier)
  int instance_id = 0;
};

struct TrainConfig {
  double lr = 1e-3;
  int epochs = 30;
  int batch = 64;
  int step_epochs = 8;
  double decay = 0.1;
  std::uint64_t seed = 1;
};

struct EpochStat {
  int epoch = 0;
  double lr = 0, nll = 0, accuracy = 0;
};

// Generic classifier trainer shared by KCNet (50-way, optional one-hot
// prior input derived from the label) and the 5-way shape surrogate.
// Throws std::invalid_argument on an empty train set or fewer than two
// classes, DivergenceError (with the epoch) on NaN loss.
std::vector<EpochStat> train_classifier(nn::ModelGraph &graph, std::vector<LabeledImage> &train,
                                        int n_classes, bool prior_input, const TrainConfig &cfg,
                                        const std::function<void(const EpochStat &)> &on_epoch = {});

std::vector<EpochStat> train(KCNetModel &model, std::vector<LabeledImage> &train,
                             const TrainConfig &cfg,
                             const std::function<void(const EpochStat &)> &on_epoch = {});

struct EvalReport {
  std::vector<std::vector<int>> confusion;  // [true][predicted]
  std::array<double, cloth::kShapeCount> per_shape_accuracy{};
  std::array<int, cloth::kShapeCount> per_shape_support{};
  double overall_accuracy = 0;
  int total = 0;
};

// `hard_mask` scores argmax within the true shape's ten codes (the same
// prior the embedding saw); its effect is reported, never asserted.
EvalReport evaluate(KCNetModel &model, const std::vector<LabeledImage> &test,
                    bool hard_mask = false);

struct AblationFold {
  int fold = 0;
  double with_prior_acc = 0, without_prior_acc = 0;
  std::array<double, cloth::kShapeCount> with_prior_shape{}, without_prior_shape{};
};

struct AblationReport {
  std::vector<AblationFold> folds;
  double with_prior_mean = 0, without_prior_mean = 0;
  double paper_with_prior = 92.0, paper_without_prior = 89.0;  // depth rows, for side-by-side
};

// Checkpoint helpers (nn format plus a KCNet manifest block).
void save_kcnet(const std::string &path, const KCNetModel &model, const std::string &config_json);
KCNetModel load_kcnet(const std::string &path);

}  // namespace kcflat::kcnet
