#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "d24fad/tensor.hpp"

namespace d24fad::ad {

// Tape-based reverse-mode autodiff. Nodes are heap-allocated and owned by
// shared_ptr handles (Var); a graph is whatever is reachable from the loss
// node and is freed when the last handle drops. Ops on constants record no
// backward closure, so a frozen-teacher forward pays no tape cost and the
// teacher-side stop-gradient of the distillation loss is structural.
struct Node {
    Tensor value;
    Tensor grad;  // allocated on first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    void accum_grad_init() {
        if (grad.numel() != value.numel()) grad = Tensor(value.shape());
    }
};

using Var = std::shared_ptr<Node>;

Var constant(Tensor v);
Var leaf(Tensor v);  // requires_grad = true

inline const Tensor& val(const Var& v) { return v->value; }
inline double scalar_of(const Var& v) { return v->value[0]; }

// Runs reverse accumulation from a scalar root (seeds d(root)/d(root)=1).
void backward(const Var& root);

// ---- primitive ops -------------------------------------------------------

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double c);
Var neg(const Var& a);

// scalar Var (numel 1) broadcast-multiplied over a tensor Var
Var smul(const Var& s, const Var& a);

Var sum_all(const Var& a);                 // -> scalar
Var sum_channels(const Var& a);            // (C,H,W) -> (H,W)
Var sqrt_(const Var& a);                   // elementwise; d/dx = 0 where value == 0
Var exp_(const Var& a);
Var relu(const Var& a);
Var clamp(const Var& a, double lo, double hi);
Var dot(const Var& a, const Var& b);       // flattened inner product -> scalar
Var softmax1d(const Var& a);               // (K) -> (K), max-stabilized
Var stack_scalars(const std::vector<Var>& xs);  // K scalars -> (K)
Var pick(const Var& v, int64_t i);              // element of a 1-D tensor -> scalar

// detached copy of a value (constant; cuts the tape)
inline Var detach(const Var& v) { return constant(v->value); }

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var maxpool2d(const Var& x, int k, int stride, int pad);
Var upsample_nearest(const Var& x, int factor);

// per-channel affine y[c,:,:] = x[c,:,:] * s[c] + t[c]
Var channel_affine(const Var& x, const Var& s, const Var& t);

}  // namespace d24fad::ad
