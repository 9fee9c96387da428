#include "d24fad/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "d24fad/kernels.hpp"

namespace d24fad::ad {

Var constant(Tensor v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->requires_grad = false;
    return n;
}

Var leaf(Tensor v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->requires_grad = true;
    return n;
}

namespace {

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> bwd) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    bool rg = false;
    for (const auto& p : parents) rg = rg || p->requires_grad;
    n->requires_grad = rg;
    if (rg) {
        n->parents = std::move(parents);
        n->backward_fn = std::move(bwd);
    }
    return n;
}

void accum(const Var& p, const Tensor& g) {
    if (!p->requires_grad) return;
    p->accum_grad_init();
    double* dst = p->grad.data();
    const double* src = g.data();
    const int64_t n = g.numel();
    for (int64_t i = 0; i < n; ++i) dst[i] += src[i];
}

}  // namespace

void backward(const Var& root) {
    if (root->value.numel() != 1) throw ShapeError("backward: root must be scalar");
    if (!root->requires_grad) return;

    // iterative post-order over the subgraph that requires grad
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->accum_grad_init();
    root->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && n->grad.numel() == n->value.numel()) n->backward_fn(*n);
    }
}

// ---- elementwise ----------------------------------------------------------

Var add(const Var& a, const Var& b) {
    require_same_shape(a->value, b->value, "add");
    Tensor out = a->value;
    const double* pb = b->value.data();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += pb[i];
    return make_op(std::move(out), {a, b}, [a, b](Node& n) {
        accum(a, n.grad);
        accum(b, n.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a->value, b->value, "sub");
    Tensor out = a->value;
    const double* pb = b->value.data();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] -= pb[i];
    return make_op(std::move(out), {a, b}, [a, b](Node& n) {
        accum(a, n.grad);
        if (b->requires_grad) {
            Tensor g = n.grad;
            for (int64_t i = 0; i < g.numel(); ++i) g[i] = -g[i];
            accum(b, g);
        }
    });
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a->value, b->value, "mul");
    Tensor out = a->value;
    const double* pb = b->value.data();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= pb[i];
    return make_op(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) {
            Tensor g = n.grad;
            const double* pb2 = b->value.data();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] *= pb2[i];
            accum(a, g);
        }
        if (b->requires_grad) {
            Tensor g = n.grad;
            const double* pa = a->value.data();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] *= pa[i];
            accum(b, g);
        }
    });
}

Var div(const Var& a, const Var& b) {
    require_same_shape(a->value, b->value, "div");
    Tensor out = a->value;
    const double* pb = b->value.data();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] /= pb[i];
    return make_op(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) {
            Tensor g = n.grad;
            const double* pb2 = b->value.data();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] /= pb2[i];
            accum(a, g);
        }
        if (b->requires_grad) {
            Tensor g = n.grad;
            const double* pa = a->value.data();
            const double* pb2 = b->value.data();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] *= -pa[i] / (pb2[i] * pb2[i]);
            accum(b, g);
        }
    });
}

Var scale(const Var& a, double s) {
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= s;
    return make_op(std::move(out), {a}, [a, s](Node& n) {
        Tensor g = n.grad;
        for (int64_t i = 0; i < g.numel(); ++i) g[i] *= s;
        accum(a, g);
    });
}

Var add_scalar(const Var& a, double c) {
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += c;
    return make_op(std::move(out), {a}, [a](Node& n) { accum(a, n.grad); });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var smul(const Var& s, const Var& a) {
    if (s->value.numel() != 1) throw ShapeError("smul: first operand must be scalar");
    const double sv = s->value[0];
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= sv;
    return make_op(std::move(out), {s, a}, [s, a, sv](Node& n) {
        if (s->requires_grad) {
            double acc = 0.0;
            const double* pa = a->value.data();
            const double* pg = n.grad.data();
            for (int64_t i = 0; i < n.grad.numel(); ++i) acc += pa[i] * pg[i];
            Tensor g = Tensor::scalar(acc);
            if (s->value.ndim() != 0) g = Tensor(s->value.shape(), {acc});
            accum(s, g);
        }
        if (a->requires_grad) {
            Tensor g = n.grad;
            for (int64_t i = 0; i < g.numel(); ++i) g[i] *= sv;
            accum(a, g);
        }
    });
}

// ---- reductions -----------------------------------------------------------

Var sum_all(const Var& a) {
    double s = 0.0;
    for (int64_t i = 0; i < a->value.numel(); ++i) s += a->value[i];
    return make_op(Tensor::scalar(s), {a}, [a](Node& n) {
        const double g = n.grad[0];
        Tensor ga = Tensor::full(a->value.shape(), g);
        accum(a, ga);
    });
}

Var sum_channels(const Var& a) {
    if (a->value.ndim() != 3) throw ShapeError("sum_channels: expected (C,H,W)");
    const int c_n = a->value.dim(0), h = a->value.dim(1), w = a->value.dim(2);
    Tensor out({h, w});
    const int64_t hw = static_cast<int64_t>(h) * w;
    for (int c = 0; c < c_n; ++c) {
        const double* p = a->value.data() + c * hw;
        for (int64_t i = 0; i < hw; ++i) out[i] += p[i];
    }
    return make_op(std::move(out), {a}, [a, c_n, hw](Node& n) {
        Tensor g(a->value.shape());
        for (int c = 0; c < c_n; ++c) {
            double* p = g.data() + c * hw;
            const double* pg = n.grad.data();
            for (int64_t i = 0; i < hw; ++i) p[i] = pg[i];
        }
        accum(a, g);
    });
}

// ---- nonlinear elementwise -------------------------------------------------

Var sqrt_(const Var& a) {
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::sqrt(out[i]);
    Tensor saved = out;
    return make_op(std::move(out), {a}, [a, saved](Node& n) {
        Tensor g = n.grad;
        for (int64_t i = 0; i < g.numel(); ++i) g[i] = saved[i] > 0.0 ? g[i] * 0.5 / saved[i] : 0.0;
        accum(a, g);
    });
}

Var exp_(const Var& a) {
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::exp(out[i]);
    Tensor saved = out;
    return make_op(std::move(out), {a}, [a, saved](Node& n) {
        Tensor g = n.grad;
        for (int64_t i = 0; i < g.numel(); ++i) g[i] *= saved[i];
        accum(a, g);
    });
}

Var relu(const Var& a) {
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
    return make_op(std::move(out), {a}, [a](Node& n) {
        Tensor g = n.grad;
        const double* pa = a->value.data();
        for (int64_t i = 0; i < g.numel(); ++i)
            if (pa[i] <= 0.0) g[i] = 0.0;
        accum(a, g);
    });
}

Var clamp(const Var& a, double lo, double hi) {
    Tensor out = a->value;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::min(hi, std::max(lo, out[i]));
    return make_op(std::move(out), {a}, [a, lo, hi](Node& n) {
        Tensor g = n.grad;
        const double* pa = a->value.data();
        for (int64_t i = 0; i < g.numel(); ++i)
            if (pa[i] < lo || pa[i] > hi) g[i] = 0.0;
        accum(a, g);
    });
}

Var dot(const Var& a, const Var& b) {
    if (a->value.numel() != b->value.numel()) throw ShapeError("dot: element counts differ");
    double s = 0.0;
    const double* pa = a->value.data();
    const double* pb = b->value.data();
    for (int64_t i = 0; i < a->value.numel(); ++i) s += pa[i] * pb[i];
    return make_op(Tensor::scalar(s), {a, b}, [a, b](Node& n) {
        const double g = n.grad[0];
        if (a->requires_grad) {
            Tensor ga(a->value.shape());
            const double* pb2 = b->value.data();
            for (int64_t i = 0; i < ga.numel(); ++i) ga[i] = g * pb2[i];
            accum(a, ga);
        }
        if (b->requires_grad) {
            Tensor gb(b->value.shape());
            const double* pa2 = a->value.data();
            for (int64_t i = 0; i < gb.numel(); ++i) gb[i] = g * pa2[i];
            accum(b, gb);
        }
    });
}

Var softmax1d(const Var& a) {
    if (a->value.ndim() != 1) throw ShapeError("softmax1d: expected 1-D logits");
    Tensor out = a->value;
    double mx = out[0];
    for (int64_t i = 1; i < out.numel(); ++i) mx = std::max(mx, out[i]);
    double z = 0.0;
    for (int64_t i = 0; i < out.numel(); ++i) {
        out[i] = std::exp(out[i] - mx);
        z += out[i];
    }
    for (int64_t i = 0; i < out.numel(); ++i) out[i] /= z;
    Tensor saved = out;
    return make_op(std::move(out), {a}, [a, saved](Node& n) {
        // dL/dx_j = y_j * (g_j - sum_k g_k y_k)
        double inner = 0.0;
        for (int64_t i = 0; i < saved.numel(); ++i) inner += n.grad[i] * saved[i];
        Tensor g(a->value.shape());
        for (int64_t i = 0; i < g.numel(); ++i) g[i] = saved[i] * (n.grad[i] - inner);
        accum(a, g);
    });
}

Var stack_scalars(const std::vector<Var>& xs) {
    if (xs.empty()) throw ShapeError("stack_scalars: empty input");
    Tensor out({static_cast<int>(xs.size())});
    for (size_t i = 0; i < xs.size(); ++i) {
        if (xs[i]->value.numel() != 1) throw ShapeError("stack_scalars: non-scalar element");
        out[static_cast<int64_t>(i)] = xs[i]->value[0];
    }
    std::vector<Var> parents(xs.begin(), xs.end());
    return make_op(std::move(out), std::move(parents), [xs](Node& n) {
        for (size_t i = 0; i < xs.size(); ++i) {
            if (!xs[i]->requires_grad) continue;
            Tensor g(xs[i]->value.shape());
            g[0] = n.grad[static_cast<int64_t>(i)];
            accum(xs[i], g);
        }
    });
}

Var pick(const Var& v, int64_t i) {
    if (i < 0 || i >= v->value.numel()) throw ShapeError("pick: index out of range");
    return make_op(Tensor::scalar(v->value[i]), {v}, [v, i](Node& n) {
        Tensor g(v->value.shape());
        g[i] = n.grad[0];
        accum(v, g);
    });
}

// ---- structured ops ---------------------------------------------------------

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    Tensor out = kernels::conv2d(x->value, w->value, b ? b->value : Tensor(), stride, pad);
    std::vector<Var> parents = {x, w};
    if (b) parents.push_back(b);
    const int in_h = x->value.dim(1), in_w = x->value.dim(2);
    const int kh = w->value.dim(2), kw = w->value.dim(3);
    return make_op(std::move(out), std::move(parents), [x, w, b, stride, pad, in_h, in_w, kh, kw](Node& n) {
        if (x->requires_grad) accum(x, kernels::conv2d_grad_input(n.grad, w->value, stride, pad, in_h, in_w));
        if (w->requires_grad) accum(w, kernels::conv2d_grad_weight(n.grad, x->value, stride, pad, kh, kw));
        if (b && b->requires_grad) accum(b, kernels::conv2d_grad_bias(n.grad));
    });
}

Var maxpool2d(const Var& x, int k, int stride, int pad) {
    auto argmax = std::make_shared<std::vector<int64_t>>();
    Tensor out = kernels::maxpool2d(x->value, k, stride, pad, argmax.get());
    return make_op(std::move(out), {x}, [x, argmax](Node& n) {
        Tensor g(x->value.shape());
        for (size_t i = 0; i < argmax->size(); ++i) {
            const int64_t src = (*argmax)[i];
            if (src >= 0) g[src] += n.grad[static_cast<int64_t>(i)];
        }
        accum(x, g);
    });
}

Var upsample_nearest(const Var& x, int factor) {
    Tensor out = kernels::upsample_nearest(x->value, factor);
    return make_op(std::move(out), {x}, [x, factor](Node& n) {
        accum(x, kernels::upsample_nearest_grad(n.grad, factor));
    });
}

Var channel_affine(const Var& x, const Var& s, const Var& t) {
    if (x->value.ndim() != 3) throw ShapeError("channel_affine: expected (C,H,W)");
    const int c_n = x->value.dim(0);
    if (s->value.numel() != c_n || t->value.numel() != c_n)
        throw ShapeError("channel_affine: scale/shift size mismatch");
    const int64_t hw = static_cast<int64_t>(x->value.dim(1)) * x->value.dim(2);
    Tensor out = x->value;
    for (int c = 0; c < c_n; ++c) {
        double* p = out.data() + c * hw;
        const double sc = s->value[c], tc = t->value[c];
        for (int64_t i = 0; i < hw; ++i) p[i] = p[i] * sc + tc;
    }
    return make_op(std::move(out), {x, s, t}, [x, s, t, c_n, hw](Node& n) {
        if (x->requires_grad) {
            Tensor g = n.grad;
            for (int c = 0; c < c_n; ++c) {
                double* p = g.data() + c * hw;
                const double sc = s->value[c];
                for (int64_t i = 0; i < hw; ++i) p[i] *= sc;
            }
            accum(x, g);
        }
        if (s->requires_grad || t->requires_grad) {
            Tensor gs({c_n}), gt({c_n});
            for (int c = 0; c < c_n; ++c) {
                const double* pg = n.grad.data() + c * hw;
                const double* px = x->value.data() + c * hw;
                double as = 0.0, at = 0.0;
                for (int64_t i = 0; i < hw; ++i) {
                    as += pg[i] * px[i];
                    at += pg[i];
                }
                gs[c] = as;
                gt[c] = at;
            }
            if (s->requires_grad) accum(s, gs);
            if (t->requires_grad) accum(t, gt);
        }
    });
}

}  // namespace d24fad::ad
