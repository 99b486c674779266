// Times the production conv/linear kernels (batch im2col + GEMM, OpenMP
// data movement) against the serial loop-nest reference on KCNet-sized
// problems, and checks they agree while at it.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "kcflat/kernels.hpp"
#include "kcflat/rng.hpp"

using namespace kcflat;

namespace {

nn::Tensor random_tensor(std::vector<int> shape, Rng &rng) {
  nn::Tensor t(std::move(shape));
  for (double &v : t.data) v = rng.uniform(-1.0, 1.0);
  return t;
}

double time_ms(const std::function<void()> &fn, int reps) {
  fn();  // warm-up
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return s * 1000.0 / double(reps);
}

double max_rel_diff(const std::vector<double> &a, const std::vector<double> &b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({1.0, std::abs(a[i]), std::abs(b[i])});
    m = std::max(m, std::abs(a[i] - b[i]) / scale);
  }
  return m;
}

struct ConvCase {
  const char *name;
  int batch, in_ch, size, out_ch, stride;
};

}  // namespace

int main() {
  Rng rng(42);
  const ConvCase cases[] = {
      {"conv 1->8   64x64 s1", 16, 1, 64, 8, 1},
      {"conv 8->16  64x64 s2", 16, 8, 64, 16, 2},
      {"conv 16->32 32x32 s2", 16, 16, 32, 32, 2},
      {"conv 32->32 16x16 s2", 16, 32, 16, 32, 2},
  };

  std::printf("%-24s %12s %12s %9s %12s\n", "case", "ref ms", "prod ms", "speedup", "max rel diff");
  for (const ConvCase &c : cases) {
    const nn::ConvSpec spec{3, c.stride, 1};
    nn::Tensor x = random_tensor({c.batch, c.in_ch, c.size, c.size}, rng);
    nn::Tensor w = random_tensor({c.out_ch, c.in_ch, 3, 3}, rng);
    nn::Tensor b = random_tensor({c.out_ch}, rng);
    const nn::ConvDims d = nn::conv_dims(x, w, spec);
    nn::Tensor y_ref({d.batch, d.out_ch, d.out_h, d.out_w});
    nn::Tensor y_prod = y_ref;
    nn::Tensor dy = random_tensor({d.batch, d.out_ch, d.out_h, d.out_w}, rng);
    nn::Tensor dx_ref = x, dx_prod = x;
    std::vector<double> dw_ref(w.data.size()), db_ref(b.data.size());
    std::vector<double> dw_prod(w.data.size()), db_prod(b.data.size());

    const double fwd_ref = time_ms([&] { nn::refk::conv2d_forward(x, w, b, spec, y_ref); }, 3);
    const double fwd_prod = time_ms([&] { nn::kernels::conv2d_forward(x, w, b, spec, y_prod); }, 3);
    const double bwd_ref = time_ms(
        [&] {
          std::fill(dw_ref.begin(), dw_ref.end(), 0.0);
          std::fill(db_ref.begin(), db_ref.end(), 0.0);
          nn::refk::conv2d_backward(x, w, spec, dy, dx_ref, dw_ref, db_ref);
        },
        3);
    const double bwd_prod = time_ms(
        [&] {
          std::fill(dw_prod.begin(), dw_prod.end(), 0.0);
          std::fill(db_prod.begin(), db_prod.end(), 0.0);
          nn::kernels::conv2d_backward(x, w, spec, dy, dx_prod, dw_prod, db_prod);
        },
        3);

    double diff = max_rel_diff(y_ref.data, y_prod.data);
    diff = std::max(diff, max_rel_diff(dx_ref.data, dx_prod.data));
    diff = std::max(diff, max_rel_diff(dw_ref, dw_prod));
    diff = std::max(diff, max_rel_diff(db_ref, db_prod));

    std::printf("%-24s %9.3f fw %9.3f fw %8.2fx %12.3e\n", c.name, fwd_ref, fwd_prod,
                fwd_ref / fwd_prod, diff);
    std::printf("%-24s %9.3f bw %9.3f bw %8.2fx\n", "", bwd_ref, bwd_prod, bwd_ref / bwd_prod);
  }

  {
    nn::Tensor x = random_tensor({64, 48}, rng);
    nn::Tensor w = random_tensor({64, 48}, rng);
    nn::Tensor b = random_tensor({64}, rng);
    nn::Tensor y_ref({64, 64}), y_prod({64, 64});
    nn::Tensor dy = random_tensor({64, 64}, rng);
    nn::Tensor dx_ref = x, dx_prod = x;
    std::vector<double> dw_ref(w.data.size()), db_ref(b.data.size());
    std::vector<double> dw_prod(w.data.size()), db_prod(b.data.size());

    const double fwd_ref = time_ms([&] { nn::refk::linear_forward(x, w, b, y_ref); }, 50);
    const double fwd_prod = time_ms([&] { nn::kernels::linear_forward(x, w, b, y_prod); }, 50);
    const double bwd_ref = time_ms(
        [&] {
          std::fill(dw_ref.begin(), dw_ref.end(), 0.0);
          std::fill(db_ref.begin(), db_ref.end(), 0.0);
          nn::refk::linear_backward(x, w, dy, dx_ref, dw_ref, db_ref);
        },
        50);
    const double bwd_prod = time_ms(
        [&] {
          std::fill(dw_prod.begin(), dw_prod.end(), 0.0);
          std::fill(db_prod.begin(), db_prod.end(), 0.0);
          nn::kernels::linear_backward(x, w, dy, dx_prod, dw_prod, db_prod);
        },
        50);

    double diff = max_rel_diff(y_ref.data, y_prod.data);
    diff = std::max(diff, max_rel_diff(dx_ref.data, dx_prod.data));
    diff = std::max(diff, max_rel_diff(dw_ref, dw_prod));
    diff = std::max(diff, max_rel_diff(db_ref, db_prod));
    std::printf("%-24s %9.3f fw %9.3f fw %8.2fx %12.3e\n", "linear 48->64 b64", fwd_ref, fwd_prod,
                fwd_ref / fwd_prod, diff);
    std::printf("%-24s %9.3f bw %9.3f bw %8.2fx\n", "", bwd_ref, bwd_prod, bwd_ref / bwd_prod);
  }
  return 0;
}
