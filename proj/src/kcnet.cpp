#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "kcflat/checkpoint.hpp"
#include "kcflat/kcnet.hpp"

namespace kcflat::kcnet {

using nlohmann::json;

KnownConfigLabel KnownConfigLabel::from_flat(int code) {
  if (code < 0 || code >= kClassCount)
    throw std::invalid_argument("flat label code must be in [0,50)");
  return {cloth::ShapeClass(code / cloth::kGraspPointsPerShape),
          code % cloth::kGraspPointsPerShape};
}

KCNetModel build_kcnet(bool with_prior, std::uint64_t seed) {
  nn::GraphBuilder b(seed);
  int t = b.input({1, kInputSize, kInputSize});
  t = b.relu(b.conv2d(t, 1, 8, 3, 1, 1));
  t = b.residual_block(t, 8, 16, 2);   // 32x32
  t = b.residual_block(t, 16, 32, 2);  // 16x16
  t = b.residual_block(t, 32, 32, 2);  // 8x8
  t = b.gap(t);                        // [B,32]
  int head_in = 32;
  if (with_prior) {
    const int prior = b.input({cloth::kShapeCount});
    const int embed = b.linear(prior, cloth::kShapeCount, 16);
    t = b.concat(t, embed);
    head_in = 48;
  }
  t = b.relu(b.linear(t, head_in, 64));
  t = b.log_softmax(b.linear(t, 64, kClassCount));
  return {b.finish(t), with_prior};
}

nn::Tensor depth_to_input(const render::DepthImage &img) {
  if (img.width != img.height) throw std::invalid_argument("depth image must be square");
  if (img.width < kInputSize || img.width % kInputSize != 0)
    throw std::invalid_argument("depth image side must be a multiple of 64");
  const int f = img.width / kInputSize;
  nn::Tensor t({1, kInputSize, kInputSize});
  for (int r = 0; r < kInputSize; ++r) {
    for (int c = 0; c < kInputSize; ++c) {
      double acc = 0;
      for (int dr = 0; dr < f; ++dr)
        for (int dc = 0; dc < f; ++dc) acc += img.at(r * f + dr, c * f + dc);
      const double avg = acc / (double(f) * f);  // sentinel contributes 0
      double v = 0.0;
      if (avg > 0) v = std::max((2.5 - avg) / 2.5, 1e-3);  // height-above-floor units
      t.data[std::size_t(r) * kInputSize + c] = v;
    }
  }
  return t;
}

nn::Tensor one_hot_shape(cloth::ShapeClass s) {
  nn::Tensor t({cloth::kShapeCount});
  t.data[std::size_t(int(s))] = 1.0;
  return t;
}

namespace {

// argmax over [lo, hi) within a row; ties go to the lowest code
int argmax_row_span(const nn::Tensor &t, int row, int lo, int hi) {
  const int C = t.dim(1);
  int best = lo;
  for (int c = lo + 1; c < hi; ++c)
    if (t.data[std::size_t(row) * C + c] > t.data[std::size_t(row) * C + best]) best = c;
  return best;
}

int argmax_row(const nn::Tensor &t, int row) { return argmax_row_span(t, row, 0, t.dim(1)); }

struct Batch {
  nn::Tensor x, prior;
  std::vector<int> targets;
};

Batch gather(const std::vector<LabeledImage> &samples, const std::vector<int> &order, int from,
             int to, bool prior_input) {
  const int b = to - from;
  const auto &shape = samples[std::size_t(order[std::size_t(from)])].input.shape;
  Batch out;
  out.x = nn::Tensor({b, shape[0], shape[1], shape[2]});
  if (prior_input) out.prior = nn::Tensor({b, cloth::kShapeCount});
  const std::size_t per = samples[std::size_t(order[std::size_t(from)])].input.data.size();
  for (int i = 0; i < b; ++i) {
    const LabeledImage &s = samples[std::size_t(order[std::size_t(from + i)])];
    if (s.input.data.size() != per) throw ShapeError("inconsistent sample shapes");
    std::copy_n(s.input.data.data(), per, out.x.data.data() + std::size_t(i) * per);
    if (prior_input)
      out.prior.data[std::size_t(i) * cloth::kShapeCount +
                     s.label / cloth::kGraspPointsPerShape] = 1.0;
    out.targets.push_back(s.label);
  }
  return out;
}

}  // namespace

Prediction predict(KCNetModel &model, const render::DepthImage &img,
                   cloth::ShapeClass shape_prior, bool hard_mask) {
  const nn::Tensor sample = depth_to_input(img);
  nn::Tensor x({1, 1, kInputSize, kInputSize});
  x.data = sample.data;
  std::vector<nn::Tensor> inputs;
  inputs.push_back(std::move(x));
  if (model.with_prior) {
    nn::Tensor p({1, cloth::kShapeCount});
    p.data[std::size_t(int(shape_prior))] = 1.0;
    inputs.push_back(std::move(p));
  }
  const nn::Tensor &lp = nn::forward(model.graph, inputs);
  Prediction pr;
  pr.log_probs = lp;
  const int lo = hard_mask ? int(shape_prior) * cloth::kGraspPointsPerShape : 0;
  const int hi = hard_mask ? lo + cloth::kGraspPointsPerShape : kClassCount;
  const int code = argmax_row_span(lp, 0, lo, hi);
  pr.label = KnownConfigLabel::from_flat(code);
  pr.log_prob = lp.data[std::size_t(code)];
  return pr;
}

std::vector<EpochStat> train_classifier(nn::ModelGraph &graph, std::vector<LabeledImage> &train,
                                        int n_classes, bool prior_input, const TrainConfig &cfg,
                                        const std::function<void(const EpochStat &)> &on_epoch) {
  if (train.empty()) throw std::invalid_argument("empty training set");
  std::set<int> classes;
  for (const LabeledImage &s : train) {
    if (s.label < 0 || s.label >= n_classes)
      throw std::invalid_argument("label out of range for classifier");
    classes.insert(s.label);
  }
  if (classes.size() < 2) throw std::invalid_argument("need at least two classes to train");
  if (prior_input && n_classes != kClassCount)
    throw std::invalid_argument("prior input requires the 50-way classifier");
  if (cfg.epochs < 1 || cfg.batch < 1) throw std::invalid_argument("bad train config");

  nn::AdamState adam = nn::make_adam(graph, cfg.lr);
  adam.step_epochs = cfg.step_epochs;
  adam.decay = cfg.decay;

  std::vector<int> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = int(i);

  std::vector<EpochStat> stats;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(mix_seed(cfg.seed, std::uint64_t(epoch), 0x7261u));
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = std::size_t(rng.uniform_index(i));
      std::swap(order[i - 1], order[j]);
    }

    double loss_sum = 0;
    long correct = 0;
    for (int from = 0; from < int(train.size()); from += cfg.batch) {
      const int to = std::min(from + cfg.batch, int(train.size()));
      Batch batch = gather(train, order, from, to, prior_input);
      std::vector<nn::Tensor> inputs;
      inputs.push_back(std::move(batch.x));
      if (prior_input) inputs.push_back(std::move(batch.prior));
      const nn::Tensor &lp = nn::forward(graph, inputs);
      const nn::LossResult loss = nn::nll_loss(lp, batch.targets);
      if (!std::isfinite(loss.value)) throw DivergenceError("training loss is non-finite", epoch);
      loss_sum += loss.value * (to - from);
      for (int i = 0; i < to - from; ++i)
        if (argmax_row(lp, i) == batch.targets[std::size_t(i)]) ++correct;
      nn::backward(graph, loss.grad);
      nn::adam_step(adam, graph, epoch);
    }

    EpochStat st;
    st.epoch = epoch;
    st.lr = nn::scheduled_lr(adam, epoch);
    st.nll = loss_sum / double(train.size());
    st.accuracy = double(correct) / double(train.size());
    stats.push_back(st);
    if (on_epoch) on_epoch(st);
  }
  return stats;
}

std::vector<EpochStat> train(KCNetModel &model, std::vector<LabeledImage> &train,
                             const TrainConfig &cfg,
                             const std::function<void(const EpochStat &)> &on_epoch) {
  return train_classifier(model.graph, train, kClassCount, model.with_prior, cfg, on_epoch);
}

EvalReport evaluate(KCNetModel &model, const std::vector<LabeledImage> &test, bool hard_mask) {
  EvalReport rep;
  rep.confusion.assign(kClassCount, std::vector<int>(kClassCount, 0));
  if (test.empty()) return rep;

  std::vector<int> order(test.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = int(i);

  std::array<int, cloth::kShapeCount> shape_correct{};
  long correct = 0;
  const int bs = 64;
  for (int from = 0; from < int(test.size()); from += bs) {
    const int to = std::min(from + bs, int(test.size()));
    Batch batch = gather(test, order, from, to, model.with_prior);
    std::vector<nn::Tensor> inputs;
    inputs.push_back(std::move(batch.x));
    if (model.with_prior) inputs.push_back(std::move(batch.prior));
    const nn::Tensor &lp = nn::forward(model.graph, inputs);
    for (int i = 0; i < to - from; ++i) {
      const int truth = batch.targets[std::size_t(i)];
      // the mask uses the same prior the embedding saw: the true shape
      const int lo = hard_mask ? (truth / cloth::kGraspPointsPerShape) * cloth::kGraspPointsPerShape
                               : 0;
      const int hi = hard_mask ? lo + cloth::kGraspPointsPerShape : kClassCount;
      const int pred = argmax_row_span(lp, i, lo, hi);
      rep.confusion[std::size_t(truth)][std::size_t(pred)] += 1;
      const int shape = truth / cloth::kGraspPointsPerShape;
      rep.per_shape_support[std::size_t(shape)] += 1;
      if (pred == truth) {
        ++correct;
        shape_correct[std::size_t(shape)] += 1;
      }
    }
  }
  rep.total = int(test.size());
  rep.overall_accuracy = double(correct) / double(test.size());
  for (int s = 0; s < cloth::kShapeCount; ++s) {
    rep.per_shape_accuracy[std::size_t(s)] =
        rep.per_shape_support[std::size_t(s)] == 0
            ? 0.0
            : double(shape_correct[std::size_t(s)]) / rep.per_shape_support[std::size_t(s)];
  }
  return rep;
}

void save_kcnet(const std::string &path, const KCNetModel &model,
                const std::string &config_json) {
  json meta;
  meta["kind"] = "kcnet";
  meta["with_prior"] = model.with_prior;
  meta["config"] = config_json.empty() ? json::object() : json::parse(config_json);
  nn::save_checkpoint(path, model.graph, meta.dump());
}

KCNetModel load_kcnet(const std::string &path) {
  nn::LoadedCheckpoint ck = nn::load_checkpoint(path);
  const json meta = json::parse(ck.meta_json);
  if (meta.value("kind", "") != "kcnet")
    throw std::runtime_error("checkpoint is not a known-configuration classifier: " + path);
  return {std::move(ck.graph), meta.at("with_prior").get<bool>()};
}

}  // namespace kcflat::kcnet
