#include <Eigen/Core>

#include "kcflat/errors.hpp"
#include "kcflat/kernels.hpp"

namespace kcflat::nn::kernels {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ColMat = Eigen::MatrixXd;

// cols(row = (ic*k+ky)*k+kx, col = n*OH*OW + oy*OW + ox) = padded x value.
// Filling is parallel over batch items; every write lands in that item's
// own column range.
void im2col(const Tensor &x, const ConvSpec &spec, const ConvDims &d, ColMat &cols) {
  const int k = spec.kernel;
  const int patch = d.in_ch * k * k;
  const long cols_per_item = long(d.out_h) * d.out_w;
  cols.resize(patch, cols_per_item * d.batch);
#pragma omp parallel for schedule(static)
  for (int n = 0; n < d.batch; ++n) {
    const double *xn = x.data.data() + std::size_t(n) * d.in_ch * d.in_h * d.in_w;
    for (int ic = 0; ic < d.in_ch; ++ic) {
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const int row = (ic * k + ky) * k + kx;
          for (int oy = 0; oy < d.out_h; ++oy) {
            const int iy = oy * spec.stride - spec.pad + ky;
            double *out = cols.data() +
                          (n * cols_per_item + long(oy) * d.out_w) * patch + row;
            if (iy < 0 || iy >= d.in_h) {
              for (int ox = 0; ox < d.out_w; ++ox) out[std::size_t(ox) * patch] = 0.0;
              continue;
            }
            const double *xrow = xn + (std::size_t(ic) * d.in_h + iy) * d.in_w;
            for (int ox = 0; ox < d.out_w; ++ox) {
              const int ix = ox * spec.stride - spec.pad + kx;
              out[std::size_t(ox) * patch] =
                  (ix < 0 || ix >= d.in_w) ? 0.0 : xrow[ix];
            }
          }
        }
      }
    }
  }
}

void col2im_add(const ColMat &cols, const ConvSpec &spec, const ConvDims &d, Tensor &dx) {
  const int k = spec.kernel;
  const int patch = d.in_ch * k * k;
  const long cols_per_item = long(d.out_h) * d.out_w;
#pragma omp parallel for schedule(static)
  for (int n = 0; n < d.batch; ++n) {
    double *xn = dx.data.data() + std::size_t(n) * d.in_ch * d.in_h * d.in_w;
    for (int ic = 0; ic < d.in_ch; ++ic) {
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const int row = (ic * k + ky) * k + kx;
          for (int oy = 0; oy < d.out_h; ++oy) {
            const int iy = oy * spec.stride - spec.pad + ky;
            if (iy < 0 || iy >= d.in_h) continue;
            const double *src = cols.data() +
                                (n * cols_per_item + long(oy) * d.out_w) * patch + row;
            double *xrow = xn + (std::size_t(ic) * d.in_h + iy) * d.in_w;
            for (int ox = 0; ox < d.out_w; ++ox) {
              const int ix = ox * spec.stride - spec.pad + kx;
              if (ix >= 0 && ix < d.in_w) xrow[ix] += src[std::size_t(ox) * patch];
            }
          }
        }
      }
    }
  }
}

}  // namespace

void conv2d_forward(const Tensor &x, const Tensor &w, const Tensor &b, const ConvSpec &spec,
                    Tensor &y) {
  const ConvDims d = conv_dims(x, w, spec);
  const int patch = d.in_ch * spec.kernel * spec.kernel;
  const long n_cols = long(d.batch) * d.out_h * d.out_w;

  ColMat cols;
  im2col(x, spec, d, cols);
  Eigen::Map<const RowMat> wm(w.data.data(), d.out_ch, patch);

  y = Tensor({d.batch, d.out_ch, d.out_h, d.out_w});
  ColMat ym = wm * cols;  // out_ch x n_cols

  const long plane = long(d.out_h) * d.out_w;
#pragma omp parallel for schedule(static)
  for (int n = 0; n < d.batch; ++n) {
    for (int oc = 0; oc < d.out_ch; ++oc) {
      const double bias = b.data[std::size_t(oc)];
      double *dst = y.data.data() + (std::size_t(n) * d.out_ch + oc) * plane;
      for (long i = 0; i < plane; ++i) dst[i] = ym(oc, n * plane + i) + bias;
    }
  }
  (void)n_cols;
}

void conv2d_backward(const Tensor &x, const Tensor &w, const ConvSpec &spec, const Tensor &dy,
                     Tensor &dx, std::vector<double> &dw, std::vector<double> &db) {
  const ConvDims d = conv_dims(x, w, spec);
  const int patch = d.in_ch * spec.kernel * spec.kernel;
  const long plane = long(d.out_h) * d.out_w;
  const long n_cols = long(d.batch) * plane;

  ColMat dym(d.out_ch, n_cols);
#pragma omp parallel for schedule(static)
  for (int n = 0; n < d.batch; ++n) {
    for (int oc = 0; oc < d.out_ch; ++oc) {
      const double *src = dy.data.data() + (std::size_t(n) * d.out_ch + oc) * plane;
      for (long i = 0; i < plane; ++i) dym(oc, n * plane + i) = src[i];
    }
  }

  ColMat cols;
  im2col(x, spec, d, cols);

  RowMat dwm = dym * cols.transpose();  // out_ch x patch, single fixed-order GEMM
  dw.assign(std::size_t(w.numel()), 0.0);
  Eigen::Map<RowMat>(dw.data(), d.out_ch, patch) = dwm;

  db.assign(std::size_t(d.out_ch), 0.0);
  for (int oc = 0; oc < d.out_ch; ++oc) db[std::size_t(oc)] = dym.row(oc).sum();

  ColMat dcols = Eigen::Map<const RowMat>(w.data.data(), d.out_ch, patch).transpose() * dym;
  dx = Tensor({d.batch, d.in_ch, d.in_h, d.in_w});
  col2im_add(dcols, spec, d, dx);
}

void linear_forward(const Tensor &x, const Tensor &w, const Tensor &b, Tensor &y) {
  if (x.ndim() != 2 || w.ndim() != 2 || x.dim(1) != w.dim(1))
    throw ShapeError("linear shape mismatch");
  const int batch = x.dim(0), in = x.dim(1), out = w.dim(0);
  y = Tensor({batch, out});
  Eigen::Map<const RowMat> xm(x.data.data(), batch, in);
  Eigen::Map<const RowMat> wm(w.data.data(), out, in);
  Eigen::Map<const Eigen::VectorXd> bm(b.data.data(), out);
  Eigen::Map<RowMat> ym(y.data.data(), batch, out);
  ym.noalias() = xm * wm.transpose();
  ym.rowwise() += bm.transpose();
}

void linear_backward(const Tensor &x, const Tensor &w, const Tensor &dy, Tensor &dx,
                     std::vector<double> &dw, std::vector<double> &db) {
  const int batch = x.dim(0), in = x.dim(1), out = w.dim(0);
  dx = Tensor({batch, in});
  dw.assign(std::size_t(w.numel()), 0.0);
  db.assign(std::size_t(out), 0.0);
  Eigen::Map<const RowMat> xm(x.data.data(), batch, in);
  Eigen::Map<const RowMat> wm(w.data.data(), out, in);
  Eigen::Map<const RowMat> dym(dy.data.data(), batch, out);
  Eigen::Map<RowMat>(dx.data.data(), batch, in).noalias() = dym * wm;
  Eigen::Map<RowMat>(dw.data(), out, in).noalias() = dym.transpose() * xm;
  Eigen::Map<Eigen::VectorXd>(db.data(), out) = dym.colwise().sum().transpose();
}

}  // namespace kcflat::nn::kernels
