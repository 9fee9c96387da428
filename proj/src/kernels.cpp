#include "d24fad/kernels.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace d24fad::kernels {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

int out_extent(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

// im2col: (Cin*kh*kw) x (Ho*Wo), column-per-output-location.
MatRM im2col(const Tensor& x, int kh, int kw, int stride, int pad, int ho, int wo) {
    const int c_in = x.dim(0), h = x.dim(1), w = x.dim(2);
    MatRM cols(static_cast<Eigen::Index>(c_in) * kh * kw, static_cast<Eigen::Index>(ho) * wo);
    cols.setZero();
    for (int c = 0; c < c_in; ++c) {
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                const Eigen::Index row = (static_cast<Eigen::Index>(c) * kh + ky) * kw + kx;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) continue;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        if (ix < 0 || ix >= w) continue;
                        cols(row, static_cast<Eigen::Index>(oy) * wo + ox) = x.at(c, iy, ix);
                    }
                }
            }
        }
    }
    return cols;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
    if (x.ndim() != 3 || w.ndim() != 4) throw ShapeError("conv2d: expected x(C,H,W), w(Co,Ci,kh,kw)");
    if (x.dim(0) != w.dim(1))
        throw ShapeError("conv2d: input channels " + std::to_string(x.dim(0)) + " != kernel channels " +
                         std::to_string(w.dim(1)));
    const int c_out = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int ho = out_extent(x.dim(1), kh, stride, pad);
    const int wo = out_extent(x.dim(2), kw, stride, pad);
    if (ho < 1 || wo < 1) throw ShapeError("conv2d: output would be empty");

    MatRM cols = im2col(x, kh, kw, stride, pad, ho, wo);
    Eigen::Map<const MatRM> wm(w.data(), c_out, static_cast<Eigen::Index>(w.dim(1)) * kh * kw);

    Tensor out({c_out, ho, wo});
    Eigen::Map<MatRM> om(out.data(), c_out, static_cast<Eigen::Index>(ho) * wo);
    om.noalias() = wm * cols;
    if (!b.empty()) {
        if (b.numel() != c_out) throw ShapeError("conv2d: bias size mismatch");
        for (int c = 0; c < c_out; ++c) om.row(c).array() += b[c];
    }
    return out;
}

Tensor conv2d_grad_input(const Tensor& gout, const Tensor& w, int stride, int pad, int in_h, int in_w) {
    const int c_out = w.dim(0), c_in = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    const int ho = gout.dim(1), wo = gout.dim(2);
    // cols_grad = W^T * gout, then col2im scatter-add.
    Eigen::Map<const MatRM> wm(w.data(), c_out, static_cast<Eigen::Index>(c_in) * kh * kw);
    Eigen::Map<const MatRM> gm(gout.data(), c_out, static_cast<Eigen::Index>(ho) * wo);
    MatRM cols = wm.transpose() * gm;

    Tensor gx({c_in, in_h, in_w});
    for (int c = 0; c < c_in; ++c) {
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                const Eigen::Index row = (static_cast<Eigen::Index>(c) * kh + ky) * kw + kx;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= in_h) continue;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        if (ix < 0 || ix >= in_w) continue;
                        gx.at(c, iy, ix) += cols(row, static_cast<Eigen::Index>(oy) * wo + ox);
                    }
                }
            }
        }
    }
    return gx;
}

Tensor conv2d_grad_weight(const Tensor& gout, const Tensor& x, int stride, int pad, int kh, int kw) {
    const int c_out = gout.dim(0), ho = gout.dim(1), wo = gout.dim(2);
    const int c_in = x.dim(0);
    MatRM cols = im2col(x, kh, kw, stride, pad, ho, wo);
    Eigen::Map<const MatRM> gm(gout.data(), c_out, static_cast<Eigen::Index>(ho) * wo);
    Tensor gw({c_out, c_in, kh, kw});
    Eigen::Map<MatRM> gwm(gw.data(), c_out, static_cast<Eigen::Index>(c_in) * kh * kw);
    gwm.noalias() = gm * cols.transpose();
    return gw;
}

Tensor conv2d_grad_bias(const Tensor& gout) {
    const int c_out = gout.dim(0);
    Tensor gb({c_out});
    const int64_t hw = static_cast<int64_t>(gout.dim(1)) * gout.dim(2);
    for (int c = 0; c < c_out; ++c) {
        double s = 0.0;
        const double* p = gout.data() + c * hw;
        for (int64_t i = 0; i < hw; ++i) s += p[i];
        gb[c] = s;
    }
    return gb;
}

Tensor maxpool2d(const Tensor& x, int k, int stride, int pad, std::vector<int64_t>* argmax) {
    const int c_n = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int ho = out_extent(h, k, stride, pad);
    const int wo = out_extent(w, k, stride, pad);
    Tensor out({c_n, ho, wo});
    if (argmax) argmax->assign(static_cast<size_t>(out.numel()), -1);
    int64_t oi = 0;
    for (int c = 0; c < c_n; ++c) {
        for (int oy = 0; oy < ho; ++oy) {
            for (int ox = 0; ox < wo; ++ox, ++oi) {
                double best = -std::numeric_limits<double>::infinity();
                int64_t best_idx = -1;
                for (int ky = 0; ky < k; ++ky) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < k; ++kx) {
                        const int ix = ox * stride + kx - pad;
                        if (ix < 0 || ix >= w) continue;
                        const double v = x.at(c, iy, ix);
                        if (v > best) {
                            best = v;
                            best_idx = (static_cast<int64_t>(c) * h + iy) * w + ix;
                        }
                    }
                }
                out[oi] = best_idx >= 0 ? best : 0.0;
                if (argmax) (*argmax)[static_cast<size_t>(oi)] = best_idx;
            }
        }
    }
    return out;
}

Tensor upsample_nearest(const Tensor& x, int factor) {
    const int c_n = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor out({c_n, h * factor, w * factor});
    for (int c = 0; c < c_n; ++c)
        for (int y = 0; y < h * factor; ++y)
            for (int xx = 0; xx < w * factor; ++xx) out.at(c, y, xx) = x.at(c, y / factor, xx / factor);
    return out;
}

Tensor upsample_nearest_grad(const Tensor& gout, int factor) {
    const int c_n = gout.dim(0), ho = gout.dim(1), wo = gout.dim(2);
    Tensor gx({c_n, ho / factor, wo / factor});
    for (int c = 0; c < c_n; ++c)
        for (int y = 0; y < ho; ++y)
            for (int xx = 0; xx < wo; ++xx) gx.at(c, y / factor, xx / factor) += gout.at(c, y, xx);
    return gx;
}

Tensor resize_bilinear(const Tensor& x, int out_h, int out_w) {
    const int c_n = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (h == out_h && w == out_w) return x;
    Tensor out({c_n, out_h, out_w});
    const double sy = static_cast<double>(h) / out_h;
    const double sx = static_cast<double>(w) / out_w;
    for (int oy = 0; oy < out_h; ++oy) {
        double fy = (oy + 0.5) * sy - 0.5;
        fy = std::max(0.0, std::min(fy, static_cast<double>(h - 1)));
        const int y0 = static_cast<int>(std::floor(fy));
        const int y1 = std::min(y0 + 1, h - 1);
        const double wy = fy - y0;
        for (int ox = 0; ox < out_w; ++ox) {
            double fx = (ox + 0.5) * sx - 0.5;
            fx = std::max(0.0, std::min(fx, static_cast<double>(w - 1)));
            const int x0 = static_cast<int>(std::floor(fx));
            const int x1 = std::min(x0 + 1, w - 1);
            const double wx = fx - x0;
            for (int c = 0; c < c_n; ++c) {
                const double top = x.at(c, y0, x0) * (1.0 - wx) + x.at(c, y0, x1) * wx;
                const double bot = x.at(c, y1, x0) * (1.0 - wx) + x.at(c, y1, x1) * wx;
                out.at(c, oy, ox) = top * (1.0 - wy) + bot * wy;
            }
        }
    }
    return out;
}

}  // namespace d24fad::kernels
