#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "kcflat/kernels.hpp"
#include "kcflat/nn.hpp"

namespace kcflat::nn {

Tensor::Tensor(std::vector<int> s) : shape(std::move(s)) {
  long n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("tensor dims must be positive");
    n *= d;
  }
  data.assign(std::size_t(n), 0.0);
}

long Tensor::numel() const { return long(data.size()); }

void Tensor::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() { grad.assign(data.size(), 0.0); }

const char *op_name(OpKind k) {
  switch (k) {
    case OpKind::input: return "input";
    case OpKind::conv2d: return "conv2d";
    case OpKind::relu: return "relu";
    case OpKind::add: return "add";
    case OpKind::gap: return "gap";
    case OpKind::linear: return "linear";
    case OpKind::concat: return "concat";
    case OpKind::log_softmax: return "log_softmax";
  }
  return "?";
}

long ModelGraph::param_count() const {
  long n = 0;
  for (const Tensor &p : params) n += p.numel();
  return n;
}

namespace {

int push_node(ModelGraph &g, Node n) {
  g.nodes.push_back(std::move(n));
  return int(g.nodes.size()) - 1;
}

Tensor kaiming_uniform(Rng &rng, std::vector<int> shape, int fan_in) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(6.0 / fan_in);
  for (double &v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

int GraphBuilder::input(std::vector<int> per_sample_shape) {
  Node n;
  n.kind = OpKind::input;
  n.in_shape = std::move(per_sample_shape);
  const int id = push_node(g, std::move(n));
  g.input_nodes.push_back(id);
  return id;
}

int GraphBuilder::conv2d(int x, int in_ch, int out_ch, int kernel, int stride, int pad) {
  Node n;
  n.kind = OpKind::conv2d;
  n.a = x;
  n.conv = {kernel, stride, pad};
  n.weight = int(g.params.size());
  g.params.push_back(kaiming_uniform(rng, {out_ch, in_ch, kernel, kernel},
                                     in_ch * kernel * kernel));
  n.bias = int(g.params.size());
  g.params.emplace_back(std::vector<int>{out_ch});
  return push_node(g, std::move(n));
}

int GraphBuilder::relu(int x) {
  Node n;
  n.kind = OpKind::relu;
  n.a = x;
  return push_node(g, std::move(n));
}

int GraphBuilder::add(int a, int b) {
  Node n;
  n.kind = OpKind::add;
  n.a = a;
  n.b = b;
  return push_node(g, std::move(n));
}

int GraphBuilder::gap(int x) {
  Node n;
  n.kind = OpKind::gap;
  n.a = x;
  return push_node(g, std::move(n));
}

int GraphBuilder::linear(int x, int in_dim, int out_dim) {
  Node n;
  n.kind = OpKind::linear;
  n.a = x;
  n.weight = int(g.params.size());
  g.params.push_back(kaiming_uniform(rng, {out_dim, in_dim}, in_dim));
  n.bias = int(g.params.size());
  g.params.emplace_back(std::vector<int>{out_dim});
  return push_node(g, std::move(n));
}

int GraphBuilder::concat(int a, int b) {
  Node n;
  n.kind = OpKind::concat;
  n.a = a;
  n.b = b;
  return push_node(g, std::move(n));
}

int GraphBuilder::log_softmax(int x) {
  Node n;
  n.kind = OpKind::log_softmax;
  n.a = x;
  return push_node(g, std::move(n));
}

int GraphBuilder::residual_block(int x, int in_ch, int out_ch, int stride) {
  int t = conv2d(x, in_ch, out_ch, 3, stride, 1);
  t = relu(t);
  t = conv2d(t, out_ch, out_ch, 3, 1, 1);
  int shortcut = x;
  if (stride != 1 || in_ch != out_ch) shortcut = conv2d(x, in_ch, out_ch, 1, stride, 0);
  return relu(add(t, shortcut));
}

ModelGraph GraphBuilder::finish(int output) {
  if (output < 0 || output >= int(g.nodes.size()))
    throw std::invalid_argument("bad output node");
  g.output_node = output;
  return std::move(g);
}

const Tensor &forward(ModelGraph &g, const std::vector<Tensor> &inputs) {
  if (inputs.size() != g.input_nodes.size())
    throw ShapeError("wrong number of input tensors");
  if (g.output_node < 0) throw std::logic_error("graph has no output node");

  g.acts.assign(g.nodes.size(), Tensor{});
  int batch = -1;
  std::size_t next_input = 0;

  for (int id = 0; id < int(g.nodes.size()); ++id) {
    const Node &n = g.nodes[std::size_t(id)];
    Tensor &out = g.acts[std::size_t(id)];
    switch (n.kind) {
      case OpKind::input: {
        const Tensor &in = inputs[next_input++];
        std::vector<int> want = n.in_shape;
        want.insert(want.begin(), in.ndim() > 0 ? in.dim(0) : 0);
        if (in.shape != want) throw ShapeError("input shape mismatch", id);
        if (batch < 0) batch = in.dim(0);
        if (in.dim(0) != batch) throw ShapeError("inconsistent batch size", id);
        out = in;
        break;
      }
      case OpKind::conv2d: {
        const Tensor &x = g.acts[std::size_t(n.a)];
        try {
          kernels::conv2d_forward(x, g.params[std::size_t(n.weight)],
                                  g.params[std::size_t(n.bias)], n.conv, out);
        } catch (const ShapeError &e) {
          throw ShapeError(e.what(), id);
        }
        break;
      }
      case OpKind::relu: {
        const Tensor &x = g.acts[std::size_t(n.a)];
        out = Tensor(x.shape);
        for (std::size_t i = 0; i < x.data.size(); ++i)
          out.data[i] = x.data[i] > 0 ? x.data[i] : 0.0;
        break;
      }
      case OpKind::add: {
        const Tensor &a = g.acts[std::size_t(n.a)], &b = g.acts[std::size_t(n.b)];
        if (!a.same_shape(b)) throw ShapeError("add operand shape mismatch", id);
        out = Tensor(a.shape);
        for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] + b.data[i];
        break;
      }
      case OpKind::gap: {
        const Tensor &x = g.acts[std::size_t(n.a)];
        if (x.ndim() != 4) throw ShapeError("gap input must be [B,C,H,W]", id);
        const int B = x.dim(0), C = x.dim(1);
        const long plane = long(x.dim(2)) * x.dim(3);
        out = Tensor({B, C});
        for (int bi = 0; bi < B; ++bi) {
          for (int c = 0; c < C; ++c) {
            const double *src = x.data.data() + (std::size_t(bi) * C + c) * plane;
            double acc = 0;
            for (long i = 0; i < plane; ++i) acc += src[i];
            out.data[std::size_t(bi) * C + c] = acc / double(plane);
          }
        }
        break;
      }
      case OpKind::linear: {
        const Tensor &x = g.acts[std::size_t(n.a)];
        try {
          kernels::linear_forward(x, g.params[std::size_t(n.weight)],
                                  g.params[std::size_t(n.bias)], out);
        } catch (const ShapeError &e) {
          throw ShapeError(e.what(), id);
        }
        break;
      }
      case OpKind::concat: {
        const Tensor &a = g.acts[std::size_t(n.a)], &b = g.acts[std::size_t(n.b)];
        if (a.ndim() != 2 || b.ndim() != 2 || a.dim(0) != b.dim(0))
          throw ShapeError("concat needs [B,n] operands with equal batch", id);
        const int B = a.dim(0), na = a.dim(1), nb = b.dim(1);
        out = Tensor({B, na + nb});
        for (int bi = 0; bi < B; ++bi) {
          std::copy_n(a.data.data() + std::size_t(bi) * na, na,
                      out.data.data() + std::size_t(bi) * (na + nb));
          std::copy_n(b.data.data() + std::size_t(bi) * nb, nb,
                      out.data.data() + std::size_t(bi) * (na + nb) + na);
        }
        break;
      }
      case OpKind::log_softmax: {
        const Tensor &x = g.acts[std::size_t(n.a)];
        if (x.ndim() != 2) throw ShapeError("log_softmax input must be [B,C]", id);
        const int B = x.dim(0), C = x.dim(1);
        out = Tensor({B, C});
        for (int bi = 0; bi < B; ++bi) {
          const double *row = x.data.data() + std::size_t(bi) * C;
          double m = row[0];
          for (int c = 1; c < C; ++c) m = std::max(m, row[c]);
          double lse = 0;
          for (int c = 0; c < C; ++c) lse += std::exp(row[c] - m);
          lse = m + std::log(lse);
          double *dst = out.data.data() + std::size_t(bi) * C;
          for (int c = 0; c < C; ++c) dst[c] = row[c] - lse;
        }
        break;
      }
    }
  }
  return g.acts[std::size_t(g.output_node)];
}

void backward(ModelGraph &g, const Tensor &output_grad) {
  if (g.acts.size() != g.nodes.size() || g.output_node < 0 ||
      g.acts[std::size_t(g.output_node)].data.empty())
    throw std::logic_error("backward called before forward");
  if (!output_grad.same_shape(g.acts[std::size_t(g.output_node)]))
    throw ShapeError("output_grad shape mismatch", g.output_node);

  for (Tensor &p : g.params) {
    p.ensure_grad();
    p.zero_grad();
  }
  g.act_grads.assign(g.nodes.size(), Tensor{});
  auto grad_of = [&](int id) -> Tensor & {
    Tensor &t = g.act_grads[std::size_t(id)];
    if (t.data.empty()) t = Tensor(g.acts[std::size_t(id)].shape);
    return t;
  };
  grad_of(g.output_node) = output_grad;

  for (int id = int(g.nodes.size()) - 1; id >= 0; --id) {
    const Node &n = g.nodes[std::size_t(id)];
    const Tensor &gy = g.act_grads[std::size_t(id)];
    if (gy.data.empty()) continue;  // node does not feed the output

    switch (n.kind) {
      case OpKind::input:
        break;
      case OpKind::conv2d: {
        Tensor dx;
        std::vector<double> dw, db;
        kernels::conv2d_backward(g.acts[std::size_t(n.a)], g.params[std::size_t(n.weight)],
                                 n.conv, gy, dx, dw, db);
        Tensor &ga = grad_of(n.a);
        for (std::size_t i = 0; i < dx.data.size(); ++i) ga.data[i] += dx.data[i];
        Tensor &w = g.params[std::size_t(n.weight)];
        for (std::size_t i = 0; i < dw.size(); ++i) w.grad[i] += dw[i];
        Tensor &b = g.params[std::size_t(n.bias)];
        for (std::size_t i = 0; i < db.size(); ++i) b.grad[i] += db[i];
        break;
      }
      case OpKind::relu: {
        const Tensor &x = g.acts[std::size_t(n.a)];
        Tensor &ga = grad_of(n.a);
        for (std::size_t i = 0; i < x.data.size(); ++i)
          if (x.data[i] > 0) ga.data[i] += gy.data[i];
        break;
      }
      case OpKind::add: {
        Tensor &ga = grad_of(n.a);
        for (std::size_t i = 0; i < gy.data.size(); ++i) ga.data[i] += gy.data[i];
        Tensor &gb = grad_of(n.b);
        for (std::size_t i = 0; i < gy.data.size(); ++i) gb.data[i] += gy.data[i];
        break;
      }
      case OpKind::gap: {
        const Tensor &x = g.acts[std::size_t(n.a)];
        const int B = x.dim(0), C = x.dim(1);
        const long plane = long(x.dim(2)) * x.dim(3);
        Tensor &ga = grad_of(n.a);
        for (int bi = 0; bi < B; ++bi) {
          for (int c = 0; c < C; ++c) {
            const double v = gy.data[std::size_t(bi) * C + c] / double(plane);
            double *dst = ga.data.data() + (std::size_t(bi) * C + c) * plane;
            for (long i = 0; i < plane; ++i) dst[i] += v;
          }
        }
        break;
      }
      case OpKind::linear: {
        Tensor dx;
        std::vector<double> dw, db;
        kernels::linear_backward(g.acts[std::size_t(n.a)], g.params[std::size_t(n.weight)], gy,
                                 dx, dw, db);
        Tensor &ga = grad_of(n.a);
        for (std::size_t i = 0; i < dx.data.size(); ++i) ga.data[i] += dx.data[i];
        Tensor &w = g.params[std::size_t(n.weight)];
        for (std::size_t i = 0; i < dw.size(); ++i) w.grad[i] += dw[i];
        Tensor &b = g.params[std::size_t(n.bias)];
        for (std::size_t i = 0; i < db.size(); ++i) b.grad[i] += db[i];
        break;
      }
      case OpKind::concat: {
        const Tensor &a = g.acts[std::size_t(n.a)], &b = g.acts[std::size_t(n.b)];
        const int B = a.dim(0), na = a.dim(1), nb = b.dim(1);
        Tensor &ga = grad_of(n.a);
        Tensor &gb = grad_of(n.b);
        for (int bi = 0; bi < B; ++bi) {
          for (int i = 0; i < na; ++i)
            ga.data[std::size_t(bi) * na + i] += gy.data[std::size_t(bi) * (na + nb) + i];
          for (int i = 0; i < nb; ++i)
            gb.data[std::size_t(bi) * nb + i] += gy.data[std::size_t(bi) * (na + nb) + na + i];
        }
        break;
      }
      case OpKind::log_softmax: {
        const Tensor &y = g.acts[std::size_t(id)];
        const int B = y.dim(0), C = y.dim(1);
        Tensor &ga = grad_of(n.a);
        for (int bi = 0; bi < B; ++bi) {
          const double *gr = gy.data.data() + std::size_t(bi) * C;
          const double *yr = y.data.data() + std::size_t(bi) * C;
          double sum = 0;
          for (int c = 0; c < C; ++c) sum += gr[c];
          double *dst = ga.data.data() + std::size_t(bi) * C;
          for (int c = 0; c < C; ++c) dst[c] += gr[c] - std::exp(yr[c]) * sum;
        }
        break;
      }
    }
  }
}

LossResult nll_loss(const Tensor &log_probs, const std::vector<int> &targets) {
  if (log_probs.ndim() != 2) throw ShapeError("nll_loss expects [B,C] log-probabilities");
  const int B = log_probs.dim(0), C = log_probs.dim(1);
  if (int(targets.size()) != B) throw std::invalid_argument("target count != batch size");
  LossResult r;
  r.grad = Tensor(log_probs.shape);
  double acc = 0;
  for (int b = 0; b < B; ++b) {
    const int t = targets[std::size_t(b)];
    if (t < 0 || t >= C) throw std::invalid_argument("target class out of range");
    acc -= log_probs.data[std::size_t(b) * C + t];
    r.grad.data[std::size_t(b) * C + t] = -1.0 / B;
  }
  r.value = acc / B;
  return r;
}

AdamState make_adam(const ModelGraph &g, double base_lr) {
  AdamState s;
  s.base_lr = base_lr;
  for (const Tensor &p : g.params) {
    s.m.emplace_back(p.shape);
    s.v.emplace_back(p.shape);
  }
  return s;
}

double scheduled_lr(const AdamState &s, int epoch) {
  return s.base_lr * std::pow(s.decay, epoch / s.step_epochs);
}

void adam_step(AdamState &s, ModelGraph &g, int epoch) {
  if (s.m.size() != g.params.size()) throw std::invalid_argument("adam state size mismatch");
  const double lr = scheduled_lr(s, epoch);
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, double(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, double(s.step));
  for (std::size_t pi = 0; pi < g.params.size(); ++pi) {
    Tensor &p = g.params[pi];
    if (p.grad.size() != p.data.size()) continue;  // never touched by backward
    double *m = s.m[pi].data.data(), *v = s.v[pi].data.data();
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      const double gr = p.grad[i];
      m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * gr;
      v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * gr * gr;
      const double mh = m[i] / c1, vh = v[i] / c2;
      p.data[i] -= lr * mh / (std::sqrt(vh) + s.eps);
    }
  }
}

void zero_param_grads(ModelGraph &g) {
  for (Tensor &p : g.params) {
    p.ensure_grad();
    p.zero_grad();
  }
}

}  // namespace kcflat::nn
