#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kcflat/errors.hpp"
#include "kcflat/rng.hpp"

namespace kcflat::nn {

// Dense n-d array in double precision with an optional same-shape gradient
// slot. Layout is contiguous row-major (last dimension fastest).
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until ensure_grad()

  Tensor() = default;
  explicit Tensor(std::vector<int> s);

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

  long numel() const;
  int dim(int i) const { return shape[std::size_t(i)]; }
  int ndim() const { return int(shape.size()); }
  void ensure_grad();
  void zero_grad();
  bool same_shape(const Tensor &o) const { return shape == o.shape; }
};

enum class OpKind { input, conv2d, relu, add, gap, linear, concat, log_softmax };

const char *op_name(OpKind k);

struct ConvSpec {
  int kernel = 3, stride = 1, pad = 1;
};

struct Node {
  OpKind kind = OpKind::input;
  int a = -1, b = -1;        // operand node ids
  int weight = -1, bias = -1;  // param ids (conv2d / linear)
  ConvSpec conv{};
  std::vector<int> in_shape;  // per-sample shape for input nodes
};

// Static single-assignment operator list. Nodes are stored in topological
// order; `acts` holds the last forward pass's activations (single-threaded
// execution contract).
struct ModelGraph {
  std::vector<Node> nodes;
  std::vector<Tensor> params;
  std::vector<int> input_nodes;
  int output_node = -1;

  std::vector<Tensor> acts;       // forward activations, one per node
  std::vector<Tensor> act_grads;  // backward scratch

  long param_count() const;
};

// Builder with Kaiming-uniform (fan-in) weight init and zero biases.
struct GraphBuilder {
  ModelGraph g;
  Rng rng;

  explicit GraphBuilder(std::uint64_t seed) : rng(seed) {}

  int input(std::vector<int> per_sample_shape);
  int conv2d(int x, int in_ch, int out_ch, int kernel, int stride, int pad);
  int relu(int x);
  int add(int a, int b);
  int gap(int x);
  int linear(int x, int in_dim, int out_dim);
  int concat(int a, int b);
  int log_softmax(int x);
  // stride-2-capable residual block: conv3x3(s) + relu + conv3x3(1), with a
  // 1x1 shortcut conv whenever channels or stride change, then add + relu.
  int residual_block(int x, int in_ch, int out_ch, int stride);
  ModelGraph finish(int output);
};

// Forward pass over a batch: each input tensor carries a leading batch
// dimension prepended to the node's per-sample shape. Returns the output
// node's activation. Throws ShapeError naming the operator index on
// mismatch.
const Tensor &forward(ModelGraph &g, const std::vector<Tensor> &inputs);

// Reverse-mode accumulation from d(loss)/d(output). Populates every
// parameter's grad (zero for parameters unused by the graph). Throws
// std::logic_error if called before forward.
void backward(ModelGraph &g, const Tensor &output_grad);

struct LossResult {
  double value = 0;
  Tensor grad;  // d(loss)/d(log_probs)
};

// Mean negative log-likelihood of B×C log-probabilities at the target
// class indices: -(1/B)·Σ log_probs[b, target_b].
LossResult nll_loss(const Tensor &log_probs, const std::vector<int> &targets);

struct AdamState {
  std::vector<Tensor> m, v;
  long step = 0;
  double base_lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int step_epochs = 8;
  double decay = 0.1;
};

AdamState make_adam(const ModelGraph &g, double base_lr = 1e-3);
double scheduled_lr(const AdamState &s, int epoch);
// Standard bias-corrected Adam update at the scheduled learning rate.
void adam_step(AdamState &s, ModelGraph &g, int epoch);
void zero_param_grads(ModelGraph &g);

}  // namespace kcflat::nn
