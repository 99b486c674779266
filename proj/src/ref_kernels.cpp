#include "kcflat/errors.hpp"
#include "kcflat/kernels.hpp"

namespace kcflat::nn {

ConvDims conv_dims(const Tensor &x, const Tensor &w, const ConvSpec &spec) {
  if (x.ndim() != 4) throw ShapeError("conv input must be [B,C,H,W]");
  if (w.ndim() != 4) throw ShapeError("conv weight must be [OC,IC,KH,KW]");
  if (w.dim(2) != spec.kernel || w.dim(3) != spec.kernel)
    throw ShapeError("conv weight kernel size mismatch");
  if (w.dim(1) != x.dim(1)) throw ShapeError("conv channel mismatch");
  if (spec.stride < 1 || spec.pad < 0 || spec.kernel < 1)
    throw ShapeError("bad conv spec");
  ConvDims d;
  d.batch = x.dim(0);
  d.in_ch = x.dim(1);
  d.in_h = x.dim(2);
  d.in_w = x.dim(3);
  d.out_ch = w.dim(0);
  d.out_h = (d.in_h + 2 * spec.pad - spec.kernel) / spec.stride + 1;
  d.out_w = (d.in_w + 2 * spec.pad - spec.kernel) / spec.stride + 1;
  if (d.out_h < 1 || d.out_w < 1) throw ShapeError("conv output would be empty");
  return d;
}

namespace refk {

void conv2d_forward(const Tensor &x, const Tensor &w, const Tensor &b, const ConvSpec &spec,
                    Tensor &y) {
  const ConvDims d = conv_dims(x, w, spec);
  y = Tensor({d.batch, d.out_ch, d.out_h, d.out_w});
  const int k = spec.kernel;
  for (int n = 0; n < d.batch; ++n) {
    for (int oc = 0; oc < d.out_ch; ++oc) {
      for (int oy = 0; oy < d.out_h; ++oy) {
        for (int ox = 0; ox < d.out_w; ++ox) {
          double acc = b.data[std::size_t(oc)];
          for (int ic = 0; ic < d.in_ch; ++ic) {
            for (int ky = 0; ky < k; ++ky) {
              const int iy = oy * spec.stride - spec.pad + ky;
              if (iy < 0 || iy >= d.in_h) continue;
              for (int kx = 0; kx < k; ++kx) {
                const int ix = ox * spec.stride - spec.pad + kx;
                if (ix < 0 || ix >= d.in_w) continue;
                acc += x.data[((std::size_t(n) * d.in_ch + ic) * d.in_h + iy) * d.in_w + ix] *
                       w.data[((std::size_t(oc) * d.in_ch + ic) * k + ky) * k + kx];
              }
            }
          }
          y.data[((std::size_t(n) * d.out_ch + oc) * d.out_h + oy) * d.out_w + ox] = acc;
        }
      }
    }
  }
}

void conv2d_backward(const Tensor &x, const Tensor &w, const ConvSpec &spec, const Tensor &dy,
                     Tensor &dx, std::vector<double> &dw, std::vector<double> &db) {
  const ConvDims d = conv_dims(x, w, spec);
  dx = Tensor({d.batch, d.in_ch, d.in_h, d.in_w});
  dw.assign(std::size_t(w.numel()), 0.0);
  db.assign(std::size_t(d.out_ch), 0.0);
  const int k = spec.kernel;
  for (int n = 0; n < d.batch; ++n) {
    for (int oc = 0; oc < d.out_ch; ++oc) {
      for (int oy = 0; oy < d.out_h; ++oy) {
        for (int ox = 0; ox < d.out_w; ++ox) {
          const double g =
              dy.data[((std::size_t(n) * d.out_ch + oc) * d.out_h + oy) * d.out_w + ox];
          db[std::size_t(oc)] += g;
          for (int ic = 0; ic < d.in_ch; ++ic) {
            for (int ky = 0; ky < k; ++ky) {
              const int iy = oy * spec.stride - spec.pad + ky;
              if (iy < 0 || iy >= d.in_h) continue;
              for (int kx = 0; kx < k; ++kx) {
                const int ix = ox * spec.stride - spec.pad + kx;
                if (ix < 0 || ix >= d.in_w) continue;
                const std::size_t xi =
                    ((std::size_t(n) * d.in_ch + ic) * d.in_h + iy) * d.in_w + ix;
                const std::size_t wi = ((std::size_t(oc) * d.in_ch + ic) * k + ky) * k + kx;
                dw[wi] += g * x.data[xi];
                dx.data[xi] += g * w.data[wi];
              }
            }
          }
        }
      }
    }
  }
}

void linear_forward(const Tensor &x, const Tensor &w, const Tensor &b, Tensor &y) {
  if (x.ndim() != 2 || w.ndim() != 2 || x.dim(1) != w.dim(1))
    throw ShapeError("linear shape mismatch");
  const int batch = x.dim(0), in = x.dim(1), out = w.dim(0);
  y = Tensor({batch, out});
  for (int n = 0; n < batch; ++n) {
    for (int o = 0; o < out; ++o) {
      double acc = b.data[std::size_t(o)];
      for (int i = 0; i < in; ++i)
        acc += x.data[std::size_t(n) * in + i] * w.data[std::size_t(o) * in + i];
      y.data[std::size_t(n) * out + o] = acc;
    }
  }
}

void linear_backward(const Tensor &x, const Tensor &w, const Tensor &dy, Tensor &dx,
                     std::vector<double> &dw, std::vector<double> &db) {
  const int batch = x.dim(0), in = x.dim(1), out = w.dim(0);
  dx = Tensor({batch, in});
  dw.assign(std::size_t(w.numel()), 0.0);
  db.assign(std::size_t(out), 0.0);
  for (int n = 0; n < batch; ++n) {
    for (int o = 0; o < out; ++o) {
      const double g = dy.data[std::size_t(n) * out + o];
      db[std::size_t(o)] += g;
      for (int i = 0; i < in; ++i) {
        dw[std::size_t(o) * in + i] += g * x.data[std::size_t(n) * in + i];
        dx.data[std::size_t(n) * in + i] += g * w.data[std::size_t(o) * in + i];
      }
    }
  }
}

}  // namespace refk
}  // namespace kcflat::nn
