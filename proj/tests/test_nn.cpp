#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "kcflat/errors.hpp"
#include "kcflat/kcnet.hpp"
#include "kcflat/kernels.hpp"
#include "kcflat/nn.hpp"
#include "kcflat/rng.hpp"

using namespace kcflat;
using nn::Tensor;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng &rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double &v : t.data) v = rng.uniform(-scale, scale);
  return t;
}

// Central finite difference of a scalar functional against one parameter.
double fd_grad(const std::function<double()> &f, double &param, double h = 1e-5) {
  const double keep = param;
  param = keep + h;
  const double hi = f();
  param = keep - h;
  const double lo = f();
  param = keep;
  return (hi - lo) / (2.0 * h);
}

double rel_err(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / denom;
}

}  // namespace

TEST_CASE("tensor shape bookkeeping") {
  Tensor t({2, 3, 4});
  CHECK(t.numel() == 24);
  CHECK(t.ndim() == 3);
  CHECK(t.dim(1) == 3);
  CHECK(t.grad.empty());
  t.ensure_grad();
  CHECK(t.grad.size() == 24);
  t.grad[5] = 1.0;
  t.zero_grad();
  CHECK(t.grad[5] == 0.0);
}

TEST_CASE("identity convolution reproduces its input") {
  nn::GraphBuilder b(1);
  const int x = b.input({1, 3, 3});
  const int y = b.conv2d(x, 1, 1, 3, 1, 1);
  nn::ModelGraph g = b.finish(y);

  // delta kernel: 1 at the center tap, zero elsewhere, zero bias
  Tensor &w = g.params[std::size_t(g.nodes[std::size_t(y)].weight)];
  std::fill(w.data.begin(), w.data.end(), 0.0);
  w.data[4] = 1.0;
  Tensor &bias = g.params[std::size_t(g.nodes[std::size_t(y)].bias)];
  std::fill(bias.data.begin(), bias.data.end(), 0.0);

  Rng rng(3);
  Tensor in = random_tensor({2, 1, 3, 3}, rng);
  const Tensor &out = nn::forward(g, {in});
  REQUIRE(out.shape == in.shape);
  for (std::size_t i = 0; i < in.data.size(); ++i) CHECK(out.data[i] == doctest::Approx(in.data[i]).epsilon(1e-12));
}

TEST_CASE("hand-computed 2x2 kernel convolution on a 3x3 image") {
  nn::GraphBuilder b(1);
  const int x = b.input({1, 3, 3});
  const int y = b.conv2d(x, 1, 1, 2, 1, 0);
  nn::ModelGraph g = b.finish(y);

  Tensor &w = g.params[std::size_t(g.nodes[std::size_t(y)].weight)];
  w.data = {1.0, 2.0, 3.0, 4.0};  // [ky][kx] row-major
  g.params[std::size_t(g.nodes[std::size_t(y)].bias)].data = {0.5};

  Tensor in({1, 1, 3, 3});
  in.data = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  const Tensor &out = nn::forward(g, {in});
  REQUIRE(out.shape == std::vector<int>{1, 1, 2, 2});
  // out[oy][ox] = 0.5 + 1*in[oy][ox] + 2*in[oy][ox+1] + 3*in[oy+1][ox] + 4*in[oy+1][ox+1]
  CHECK(out.data[0] == doctest::Approx(0.5 + 1 * 1 + 2 * 2 + 3 * 4 + 4 * 5));
  CHECK(out.data[1] == doctest::Approx(0.5 + 1 * 2 + 2 * 3 + 3 * 5 + 4 * 6));
  CHECK(out.data[2] == doctest::Approx(0.5 + 1 * 4 + 2 * 5 + 3 * 7 + 4 * 8));
  CHECK(out.data[3] == doctest::Approx(0.5 + 1 * 5 + 2 * 6 + 3 * 8 + 4 * 9));
}

TEST_CASE("log-softmax of zeros is -ln C; rows exp-sum to one; shift invariant") {
  const int C = 7;
  nn::GraphBuilder b(1);
  const int x = b.input({C});
  nn::ModelGraph g = b.finish(b.log_softmax(x));

  Tensor zeros({3, C});
  const Tensor out = nn::forward(g, {zeros});
  for (double v : out.data) CHECK(v == doctest::Approx(-std::log(double(C))).epsilon(1e-12));

  Rng rng(11);
  Tensor logits = random_tensor({4, C}, rng, 3.0);
  const Tensor base = nn::forward(g, {logits});
  for (int r = 0; r < 4; ++r) {
    double s = 0;
    for (int c = 0; c < C; ++c) s += std::exp(base.data[std::size_t(r * C + c)]);
    CHECK(std::abs(s - 1.0) < 1e-9);
  }

  Tensor shifted = logits;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < C; ++c) shifted.data[std::size_t(r * C + c)] += 100.0 + r;
  const Tensor out2 = nn::forward(g, {shifted});
  for (std::size_t i = 0; i < base.data.size(); ++i)
    CHECK(std::abs(out2.data[i] - base.data[i]) < 1e-9);
}

TEST_CASE("nll loss values and errors") {
  SUBCASE("uniform over 50 classes is ln 50") {
    Tensor lp({2, 50});
    std::fill(lp.data.begin(), lp.data.end(), -std::log(50.0));
    const nn::LossResult r = nn::nll_loss(lp, {7, 31});
    CHECK(std::abs(r.value - std::log(50.0)) < 1e-12);
  }
  SUBCASE("perfect row contributes zero") {
    Tensor lp({1, 3});
    lp.data = {0.0, -1e30, -1e30};
    CHECK(nn::nll_loss(lp, {0}).value == 0.0);
  }
  SUBCASE("random 4x5 matches direct summation") {
    Rng rng(5);
    Tensor lp = random_tensor({4, 5}, rng, 2.0);
    const std::vector<int> targets = {3, 0, 4, 1};
    double direct = 0;
    for (int b = 0; b < 4; ++b) direct -= lp.data[std::size_t(b * 5 + targets[std::size_t(b)])];
    direct /= 4.0;
    CHECK(std::abs(nn::nll_loss(lp, targets).value - direct) < 1e-12);
  }
  SUBCASE("out-of-range target throws") {
    Tensor lp({1, 5});
    CHECK_THROWS_AS(nn::nll_loss(lp, {5}), std::invalid_argument);
    CHECK_THROWS_AS(nn::nll_loss(lp, {-1}), std::invalid_argument);
  }
  SUBCASE("loss gradient is -1/B at each target") {
    Tensor lp({2, 3});
    const nn::LossResult r = nn::nll_loss(lp, {1, 2});
    CHECK(r.grad.data[1] == doctest::Approx(-0.5));
    CHECK(r.grad.data[5] == doctest::Approx(-0.5));
    CHECK(r.grad.data[0] == 0.0);
  }
}

TEST_CASE("linear layer gradient is the input, broadcast per row") {
  nn::GraphBuilder b(1);
  const int x = b.input({3});
  const int y = b.linear(x, 3, 2);
  nn::ModelGraph g = b.finish(y);

  Tensor in({2, 3});
  in.data = {1, 2, 3, 4, 5, 6};
  const Tensor &out = nn::forward(g, {in});
  Tensor ones(out.shape);
  std::fill(ones.data.begin(), ones.data.end(), 1.0);
  nn::backward(g, ones);

  // loss = sum(y) so dL/dW[o][i] = sum_b x[b][i]
  const Tensor &w = g.params[std::size_t(g.nodes[std::size_t(y)].weight)];
  for (int o = 0; o < 2; ++o)
    for (int i = 0; i < 3; ++i)
      CHECK(w.grad[std::size_t(o * 3 + i)] ==
            doctest::Approx(in.data[std::size_t(i)] + in.data[std::size_t(3 + i)]));
  const Tensor &bias = g.params[std::size_t(g.nodes[std::size_t(y)].bias)];
  CHECK(bias.grad[0] == doctest::Approx(2.0));
}

TEST_CASE("near-perfect prediction leaves near-zero parameter gradients") {
  nn::GraphBuilder b(1);
  const int x = b.input({1});
  const int y = b.linear(x, 1, 3);
  nn::ModelGraph g = b.finish(b.log_softmax(y));

  Tensor &w = g.params[std::size_t(g.nodes[std::size_t(y)].weight)];
  w.data = {40.0, 0.0, 0.0};
  Tensor in({1, 1});
  in.data = {1.0};

  const Tensor &lp = nn::forward(g, {in});
  const nn::LossResult loss = nn::nll_loss(lp, {0});
  CHECK(loss.value < 1e-8);
  nn::backward(g, loss.grad);
  for (const Tensor &p : g.params)
    for (double gval : p.grad) CHECK(std::abs(gval) < 1e-8);
}

TEST_CASE("backward before forward is a state error") {
  nn::GraphBuilder b(1);
  const int x = b.input({2});
  nn::ModelGraph g = b.finish(b.linear(x, 2, 2));
  Tensor grad({1, 2});
  CHECK_THROWS_AS(nn::backward(g, grad), std::logic_error);
}

TEST_CASE("shape mismatch names the operator") {
  nn::GraphBuilder b(1);
  const int x = b.input({1, 4, 4});
  nn::ModelGraph g = b.finish(b.conv2d(x, 1, 2, 3, 1, 1));
  Tensor bad({2, 1, 5, 5});
  CHECK_THROWS_AS(nn::forward(g, {bad}), ShapeError);
}

TEST_CASE("finite differences confirm composite graph gradients") {
  // conv -> relu -> gap -> linear -> log_softmax, random parameters
  nn::GraphBuilder b(17);
  const int x = b.input({2, 5, 5});
  const int c = b.conv2d(x, 2, 3, 3, 1, 1);
  const int r = b.relu(c);
  const int gp = b.gap(r);
  const int fc = b.linear(gp, 3, 4);
  nn::ModelGraph g = b.finish(b.log_softmax(fc));

  Rng rng(99);
  Tensor in = random_tensor({2, 2, 5, 5}, rng);
  const std::vector<int> targets = {1, 3};
  auto loss_value = [&]() {
    const Tensor &lp = nn::forward(g, {in});
    return nn::nll_loss(lp, targets).value;
  };

  const Tensor &lp = nn::forward(g, {in});
  const nn::LossResult loss = nn::nll_loss(lp, targets);
  nn::backward(g, loss.grad);

  int checked = 0;
  for (Tensor &p : g.params) {
    for (std::size_t i = 0; i < p.data.size(); i += 3) {  // sparse sample
      const double analytic = p.grad[i];
      const double numeric = fd_grad(loss_value, p.data[i]);
      CHECK(rel_err(analytic, numeric) < 1e-4);
      ++checked;
    }
  }
  CHECK(checked >= 20);
}

TEST_CASE("adam learning-rate schedule matches the step decay") {
  nn::GraphBuilder b(1);
  const int x = b.input({2});
  nn::ModelGraph g = b.finish(b.linear(x, 2, 2));
  nn::AdamState s = nn::make_adam(g, 1e-3);
  CHECK(nn::scheduled_lr(s, 0) == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(nn::scheduled_lr(s, 7) == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(nn::scheduled_lr(s, 8) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(nn::scheduled_lr(s, 16) == doctest::Approx(1e-5).epsilon(1e-12));
  CHECK(nn::scheduled_lr(s, 24) == doctest::Approx(1e-6).epsilon(1e-12));
}

TEST_CASE("adam with zero gradients leaves parameters unchanged") {
  nn::GraphBuilder b(2);
  const int x = b.input({2});
  nn::ModelGraph g = b.finish(b.linear(x, 2, 2));
  for (Tensor &p : g.params) p.ensure_grad();
  const std::vector<Tensor> before = g.params;
  nn::AdamState s = nn::make_adam(g);
  nn::adam_step(s, g, 0);
  nn::adam_step(s, g, 0);
  for (std::size_t i = 0; i < g.params.size(); ++i)
    for (std::size_t j = 0; j < g.params[i].data.size(); ++j)
      CHECK(g.params[i].data[j] == before[i].data[j]);
}

TEST_CASE("adam scalar recurrence matches a hand-rolled update") {
  nn::GraphBuilder b(1);
  const int x = b.input({1});
  nn::ModelGraph g = b.finish(b.linear(x, 1, 1));
  // param 0 is the 1x1 weight; fix it and feed constant grad 1
  Tensor &w = g.params[0];
  w.data[0] = 0.5;
  g.params[1].data[0] = 0.0;
  for (Tensor &p : g.params) p.ensure_grad();

  nn::AdamState s = nn::make_adam(g, 1e-3);

  double m = 0, v = 0, param = 0.5;
  for (int step = 1; step <= 3; ++step) {
    w.zero_grad();
    g.params[1].zero_grad();
    w.grad[0] = 1.0;
    nn::adam_step(s, g, 0);

    const double grad = 1.0;
    m = 0.9 * m + 0.1 * grad;
    v = 0.999 * v + 0.001 * grad * grad;
    const double mh = m / (1.0 - std::pow(0.9, step));
    const double vh = v / (1.0 - std::pow(0.999, step));
    param -= 1e-3 * mh / (std::sqrt(vh) + 1e-8);
    CHECK(w.data[0] == doctest::Approx(param).epsilon(1e-12));
  }
}

TEST_CASE("production kernels match the serial reference") {
  Rng rng(23);
  struct Case {
    int batch, in_ch, in_h, in_w, out_ch, kernel, stride, pad;
  };
  const Case cases[] = {
      {2, 1, 8, 8, 4, 3, 1, 1}, {1, 3, 7, 5, 2, 3, 2, 1}, {3, 2, 6, 6, 2, 1, 1, 0},
      {2, 4, 9, 9, 8, 3, 2, 1},
  };
  for (const Case &c : cases) {
    Tensor x = random_tensor({c.batch, c.in_ch, c.in_h, c.in_w}, rng);
    Tensor w = random_tensor({c.out_ch, c.in_ch, c.kernel, c.kernel}, rng);
    Tensor bias = random_tensor({c.out_ch}, rng);
    const nn::ConvSpec spec{c.kernel, c.stride, c.pad};

    Tensor y_fast, y_ref;
    nn::kernels::conv2d_forward(x, w, bias, spec, y_fast);
    nn::refk::conv2d_forward(x, w, bias, spec, y_ref);
    REQUIRE(y_fast.shape == y_ref.shape);
    for (std::size_t i = 0; i < y_ref.data.size(); ++i)
      CHECK(std::abs(y_fast.data[i] - y_ref.data[i]) < 1e-12);

    Tensor dy = random_tensor(y_ref.shape, rng);
    Tensor dx_fast, dx_ref;
    std::vector<double> dw_fast, db_fast, dw_ref, db_ref;
    dw_fast.assign(w.data.size(), 0.0);
    db_fast.assign(bias.data.size(), 0.0);
    dw_ref.assign(w.data.size(), 0.0);
    db_ref.assign(bias.data.size(), 0.0);
    nn::kernels::conv2d_backward(x, w, spec, dy, dx_fast, dw_fast, db_fast);
    nn::refk::conv2d_backward(x, w, spec, dy, dx_ref, dw_ref, db_ref);
    for (std::size_t i = 0; i < dx_ref.data.size(); ++i)
      CHECK(std::abs(dx_fast.data[i] - dx_ref.data[i]) < 1e-12);
    for (std::size_t i = 0; i < dw_ref.size(); ++i)
      CHECK(std::abs(dw_fast[i] - dw_ref[i]) < 1e-12);
    for (std::size_t i = 0; i < db_ref.size(); ++i)
      CHECK(std::abs(db_fast[i] - db_ref[i]) < 1e-12);
  }

  // linear pair as well
  Tensor x = random_tensor({4, 6}, rng);
  Tensor w = random_tensor({3, 6}, rng);
  Tensor bias = random_tensor({3}, rng);
  Tensor y_fast, y_ref;
  nn::kernels::linear_forward(x, w, bias, y_fast);
  nn::refk::linear_forward(x, w, bias, y_ref);
  for (std::size_t i = 0; i < y_ref.data.size(); ++i)
    CHECK(std::abs(y_fast.data[i] - y_ref.data[i]) < 1e-12);
}

TEST_CASE("training is deterministic per seed") {
  auto make_data = []() {
    std::vector<kcnet::LabeledImage> data;
    Rng rng(7);
    for (int i = 0; i < 8; ++i) {
      kcnet::LabeledImage s;
      s.input = Tensor({1, 8, 8});
      const double base = (i % 2 == 0) ? 0.2 : 0.8;
      for (double &v : s.input.data) v = base + 0.05 * rng.uniform();
      s.label = i % 2;
      data.push_back(std::move(s));
    }
    return data;
  };
  auto build = []() {
    nn::GraphBuilder b(42);
    const int x = b.input({1, 8, 8});
    const int c = b.conv2d(x, 1, 2, 3, 2, 1);
    const int r = b.relu(c);
    const int gp = b.gap(r);
    return b.finish(b.log_softmax(b.linear(gp, 2, 2)));
  };

  kcnet::TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch = 4;
  cfg.seed = 9;

  nn::ModelGraph g1 = build(), g2 = build();
  auto d1 = make_data(), d2 = make_data();
  const auto t1 = kcnet::train_classifier(g1, d1, 2, false, cfg);
  const auto t2 = kcnet::train_classifier(g2, d2, 2, false, cfg);
  REQUIRE(t1.size() == 3);
  for (std::size_t e = 0; e < t1.size(); ++e) CHECK(t1[e].nll == t2[e].nll);
  for (std::size_t i = 0; i < g1.params.size(); ++i)
    for (std::size_t j = 0; j < g1.params[i].data.size(); ++j)
      CHECK(g1.params[i].data[j] == g2.params[i].data[j]);
}

TEST_CASE("separable two-class toy set trains to a tenth of the initial loss") {
  std::vector<kcnet::LabeledImage> data;
  Rng rng(13);
  for (int i = 0; i < 16; ++i) {
    kcnet::LabeledImage s;
    s.input = Tensor({1, 8, 8});
    const double base = (i % 2 == 0) ? 0.0 : 1.0;
    for (double &v : s.input.data) v = base + 0.02 * rng.uniform();
    s.label = i % 2;
    data.push_back(std::move(s));
  }

  nn::GraphBuilder b(3);
  const int x = b.input({1, 8, 8});
  const int c = b.conv2d(x, 1, 4, 3, 2, 1);
  const int r = b.relu(c);
  const int gp = b.gap(r);
  nn::ModelGraph g = b.finish(b.log_softmax(b.linear(gp, 4, 2)));

  kcnet::TrainConfig cfg;
  cfg.epochs = 30;
  cfg.batch = 2;   // 8 steps per epoch
  cfg.lr = 0.05;   // the margin has to grow a long way in 240 steps
  const auto trace = kcnet::train_classifier(g, data, 2, false, cfg);
  REQUIRE(trace.size() == 30);
  CHECK(trace.back().nll < 0.1 * trace.front().nll);
  CHECK(trace.back().accuracy == doctest::Approx(1.0));
}
