#pragma once

#include <vector>

#include "d24fad/tensor.hpp"

namespace d24fad::kernels {

// 2-D convolution on a single item, x (Cin,H,W) * w (Cout,Cin,kh,kw) + b (Cout).
// Padding is symmetric zero padding.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
Tensor conv2d_grad_input(const Tensor& gout, const Tensor& w, int stride, int pad, int in_h, int in_w);
Tensor conv2d_grad_weight(const Tensor& gout, const Tensor& x, int stride, int pad, int kh, int kw);
Tensor conv2d_grad_bias(const Tensor& gout);

// Max pooling; `argmax` receives the flat input index of each output element.
Tensor maxpool2d(const Tensor& x, int k, int stride, int pad, std::vector<int64_t>* argmax);

// Nearest-neighbour integer-factor upsampling.
Tensor upsample_nearest(const Tensor& x, int factor);
Tensor upsample_nearest_grad(const Tensor& gout, int factor);

// Bilinear resize of a (C,H,W) map (align_corners = false). Forward only —
// used for anomaly-map aggregation and image preprocessing, never trained through.
Tensor resize_bilinear(const Tensor& x, int out_h, int out_w);

}  // namespace d24fad::kernels
