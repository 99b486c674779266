#pragma once

#include "kcflat/nn.hpp"

// Numeric kernels behind the autograd ops. `kernels` is the production
// path: batch-wide im2col + GEMM convolutions. OpenMP fans out over batch
// items only for the im2col/col2im data movement (disjoint writes); the
// GEMM reductions themselves run in one fixed order, so results do not
// depend on the thread count. `refk` is a plain serial loop-nest reference
// used by the equivalence tests and the benchmark.
namespace kcflat::nn {

struct ConvDims {
  int batch, in_ch, in_h, in_w, out_ch, out_h, out_w;
};

ConvDims conv_dims(const Tensor &x, const Tensor &w, const ConvSpec &spec);

namespace kernels {

void conv2d_forward(const Tensor &x, const Tensor &w, const Tensor &b, const ConvSpec &spec,
                    Tensor &y);
void conv2d_backward(const Tensor &x, const Tensor &w, const ConvSpec &spec, const Tensor &dy,
                     Tensor &dx, std::vector<double> &dw, std::vector<double> &db);
void linear_forward(const Tensor &x, const Tensor &w, const Tensor &b, Tensor &y);
void linear_backward(const Tensor &x, const Tensor &w, const Tensor &dy, Tensor &dx,
                     std::vector<double> &dw, std::vector<double> &db);

}  // namespace kernels

namespace refk {

void conv2d_forward(const Tensor &x, const Tensor &w, const Tensor &b, const ConvSpec &spec,
                    Tensor &y);
void conv2d_backward(const Tensor &x, const Tensor &w, const ConvSpec &spec, const Tensor &dy,
                     Tensor &dx, std::vector<double> &dw, std::vector<double> &db);
void linear_forward(const Tensor &x, const Tensor &w, const Tensor &b, Tensor &y);
void linear_backward(const Tensor &x, const Tensor &w, const Tensor &dy, Tensor &dx,
                     std::vector<double> &dw, std::vector<double> &db);

}  // namespace refk

}  // namespace kcflat::nn
