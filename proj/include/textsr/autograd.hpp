#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "textsr/tensor.hpp"

namespace textsr {

// Reverse-mode autodiff on a dynamically built graph. Nodes are created in
// topological order (monotone ids), so backward just walks ids descending.
template <typename T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    int64_t id = 0;
    std::vector<std::shared_ptr<Node<T>>> parents;
    std::function<void(Node<T>&)> backward_fn;

    Tensor<T>& grad_buf() {
        if (grad.numel() == 0) grad = Tensor<T>::zeros(value.shape());
        return grad;
    }
};

template <typename T>
class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

    static Var leaf(Tensor<T> v, bool requires_grad = false) {
        auto n = std::make_shared<Node<T>>();
        n->value = std::move(v);
        n->requires_grad = requires_grad;
        n->id = next_id();
        return Var(std::move(n));
    }

    bool defined() const { return node_ != nullptr; }
    Tensor<T>& value() { return node_->value; }
    const Tensor<T>& value() const { return node_->value; }
    Tensor<T>& grad() { return node_->grad_buf(); }
    bool has_grad() const { return node_->grad.numel() != 0; }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    void zero_grad() {
        if (node_ && node_->grad.numel()) node_->grad.fill(T(0));
    }

    std::shared_ptr<Node<T>> node_ptr() const { return node_; }
    Node<T>* raw() const { return node_.get(); }

    static int64_t next_id() {
        static int64_t counter = 0;
        return ++counter;
    }

private:
    std::shared_ptr<Node<T>> node_;
};

// graph recording switch (off during inference/validation)
inline bool& grad_enabled() {
    static thread_local bool on = true;
    return on;
}

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_enabled()) { grad_enabled() = false; }
    ~NoGradGuard() { grad_enabled() = prev; }
};

template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> parents,
               std::function<void(Node<T>&)> backward_fn) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    bool rg = false;
    if (grad_enabled())
        for (const auto& p : parents) rg = rg || p.requires_grad();
    n->requires_grad = rg;
    if (rg) {
        n->parents.reserve(parents.size());
        for (auto& p : parents) n->parents.push_back(p.node_ptr());
        n->backward_fn = std::move(backward_fn);
    }
    n->id = Var<T>::next_id();
    return Var<T>(std::move(n));
}

template <typename T>
void backward(const Var<T>& loss) {
    TEXTSR_CHECK(loss.defined() && loss.value().numel() == 1, "backward expects a scalar loss");
    if (!loss.requires_grad()) return;

    // collect reachable grad-requiring nodes
    std::vector<std::shared_ptr<Node<T>>> nodes;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::shared_ptr<Node<T>>> stack{loss.node_ptr()};
    seen.insert(loss.raw());
    while (!stack.empty()) {
        auto n = stack.back();
        stack.pop_back();
        nodes.push_back(n);
        for (auto& p : n->parents) {
            if (p->requires_grad && !seen.count(p.get())) {
                seen.insert(p.get());
                stack.push_back(p);
            }
        }
    }
    std::sort(nodes.begin(), nodes.end(),
              [](const auto& a, const auto& b) { return a->id > b->id; });

    loss.node_ptr()->grad_buf().fill(T(1));
    for (auto& n : nodes) {
        if (n->backward_fn && n->grad.numel()) n->backward_fn(*n);
    }
}

// ---- helpers used by op backward closures ----

template <typename T>
inline void accum_into(Node<T>* p, const Tensor<T>& g) {
    if (!p->requires_grad) return;
    Tensor<T>& dst = p->grad_buf();
    const T* s = g.data();
    T* d = dst.data();
    for (int64_t i = 0, n = g.numel(); i < n; ++i) d[i] += s[i];
}

// ---- elementwise ops ----

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    TEXTSR_CHECK(a.value().same_shape(b.value()),
                 "add shape mismatch " << a.value().shape_str() << " vs " << b.value().shape_str());
    Tensor<T> out = a.value();
    const T* pb = b.value().data();
    T* po = out.data();
    for (int64_t i = 0; i < out.numel(); ++i) po[i] += pb[i];
    Node<T>*pa = a.raw(), *pn = b.raw();
    return make_op<T>(std::move(out), {a, b}, [pa, pn](Node<T>& self) {
        accum_into(pa, self.grad);
        accum_into(pn, self.grad);
    });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    TEXTSR_CHECK(a.value().same_shape(b.value()), "sub shape mismatch");
    Tensor<T> out = a.value();
    const T* pb = b.value().data();
    T* po = out.data();
    for (int64_t i = 0; i < out.numel(); ++i) po[i] -= pb[i];
    Node<T>*pa = a.raw(), *pn = b.raw();
    return make_op<T>(std::move(out), {a, b}, [pa, pn](Node<T>& self) {
        accum_into(pa, self.grad);
        if (pn->requires_grad) {
            Tensor<T>& dst = pn->grad_buf();
            for (int64_t i = 0; i < self.grad.numel(); ++i) dst[i] -= self.grad[i];
        }
    });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
    TEXTSR_CHECK(a.value().same_shape(b.value()), "mul shape mismatch");
    Tensor<T> out = a.value();
    const T* pb = b.value().data();
    T* po = out.data();
    for (int64_t i = 0; i < out.numel(); ++i) po[i] *= pb[i];
    Node<T>*pa = a.raw(), *pn = b.raw();
    Tensor<T> av = a.value(), bv = b.value();
    return make_op<T>(std::move(out), {a, b}, [pa, pn, av, bv](Node<T>& self) {
        if (pa->requires_grad) {
            Tensor<T>& dst = pa->grad_buf();
            for (int64_t i = 0; i < self.grad.numel(); ++i) dst[i] += self.grad[i] * bv[i];
        }
        if (pn->requires_grad) {
            Tensor<T>& dst = pn->grad_buf();
            for (int64_t i = 0; i < self.grad.numel(); ++i) dst[i] += self.grad[i] * av[i];
        }
    });
}

template <typename T>
Var<T> divide(const Var<T>& a, const Var<T>& b) {
    TEXTSR_CHECK(a.value().same_shape(b.value()), "div shape mismatch");
    Tensor<T> out = a.value();
    const T* pb = b.value().data();
    T* po = out.data();
    for (int64_t i = 0; i < out.numel(); ++i) po[i] /= pb[i];
    Node<T>*pa = a.raw(), *pn = b.raw();
    Tensor<T> av = a.value(), bv = b.value();
    return make_op<T>(std::move(out), {a, b}, [pa, pn, av, bv](Node<T>& self) {
        if (pa->requires_grad) {
            Tensor<T>& dst = pa->grad_buf();
            for (int64_t i = 0; i < self.grad.numel(); ++i) dst[i] += self.grad[i] / bv[i];
        }
        if (pn->requires_grad) {
            Tensor<T>& dst = pn->grad_buf();
            for (int64_t i = 0; i < self.grad.numel(); ++i)
                dst[i] -= self.grad[i] * av[i] / (bv[i] * bv[i]);
        }
    });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T c) {
    Tensor<T> out = a.value();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += c;
    Node<T>* pa = a.raw();
    return make_op<T>(std::move(out), {a},
                      [pa](Node<T>& self) { accum_into(pa, self.grad); });
}

template <typename T>
Var<T> mul_scalar(const Var<T>& a, T c) {
    Tensor<T> out = a.value();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= c;
    Node<T>* pa = a.raw();
    return make_op<T>(std::move(out), {a}, [pa, c](Node<T>& self) {
        if (!pa->requires_grad) return;
        Tensor<T>& dst = pa->grad_buf();
        for (int64_t i = 0; i < self.grad.numel(); ++i) dst[i] += self.grad[i] * c;
    });
}

template <typename T>
Var<T> neg(const Var<T>& a) { return mul_scalar(a, T(-1)); }

template <typename T, typename FwdFn, typename GradFn>
Var<T> unary_op(const Var<T>& a, FwdFn f, GradFn dfdx_from_xy) {
    Tensor<T> out = a.value();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = f(out[i]);
    Node<T>* pa = a.raw();
    Tensor<T> x = a.value(), y = out;
    return make_op<T>(std::move(out), {a}, [pa, x, y, dfdx_from_xy](Node<T>& self) {
        if (!pa->requires_grad) return;
        Tensor<T>& dst = pa->grad_buf();
        for (int64_t i = 0; i < self.grad.numel(); ++i)
            dst[i] += self.grad[i] * dfdx_from_xy(x[i], y[i]);
    });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
    return unary_op(a, [](T x) { return x > T(0) ? x : T(0); },
                    [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& a, T slope = T(0.2)) {
    return unary_op(a, [slope](T x) { return x > T(0) ? x : slope * x; },
                    [slope](T x, T) { return x > T(0) ? T(1) : slope; });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
    return unary_op(a, [](T x) { return T(1) / (T(1) + std::exp(-x)); },
                    [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> tanh_op(const Var<T>& a) {
    return unary_op(a, [](T x) { return std::tanh(x); },
                    [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> exp_op(const Var<T>& a) {
    return unary_op(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> log_op(const Var<T>& a) {
    return unary_op(a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <typename T>
Var<T> sqrt_op(const Var<T>& a) {
    return unary_op(a, [](T x) { return std::sqrt(x); },
                    [](T, T y) { return T(0.5) / y; });
}

template <typename T>
Var<T> rsqrt_op(const Var<T>& a) {
    return unary_op(a, [](T x) { return T(1) / std::sqrt(x); },
                    [](T, T y) { return T(-0.5) * y * y * y; });
}

template <typename T>
Var<T> square(const Var<T>& a) {
    return unary_op(a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <typename T>
Var<T> abs_op(const Var<T>& a) {
    return unary_op(a, [](T x) { return std::abs(x); },
                    [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

// grad goes to the winning side; ties favor a
template <typename T>
Var<T> maximum(const Var<T>& a, const Var<T>& b) {
    TEXTSR_CHECK(a.value().same_shape(b.value()), "maximum shape mismatch");
    Tensor<T> out = a.value();
    const T* pb = b.value().data();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = out[i] >= pb[i] ? out[i] : pb[i];
    Node<T>*pa = a.raw(), *pn = b.raw();
    Tensor<T> av = a.value(), bv = b.value();
    return make_op<T>(std::move(out), {a, b}, [pa, pn, av, bv](Node<T>& self) {
        for (int64_t i = 0; i < self.grad.numel(); ++i) {
            if (av[i] >= bv[i]) {
                if (pa->requires_grad) pa->grad_buf()[i] += self.grad[i];
            } else if (pn->requires_grad) {
                pn->grad_buf()[i] += self.grad[i];
            }
        }
    });
}

template <typename T>
Var<T> minimum(const Var<T>& a, const Var<T>& b) {
    TEXTSR_CHECK(a.value().same_shape(b.value()), "minimum shape mismatch");
    Tensor<T> out = a.value();
    const T* pb = b.value().data();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = out[i] <= pb[i] ? out[i] : pb[i];
    Node<T>*pa = a.raw(), *pn = b.raw();
    Tensor<T> av = a.value(), bv = b.value();
    return make_op<T>(std::move(out), {a, b}, [pa, pn, av, bv](Node<T>& self) {
        for (int64_t i = 0; i < self.grad.numel(); ++i) {
            if (av[i] <= bv[i]) {
                if (pa->requires_grad) pa->grad_buf()[i] += self.grad[i];
            } else if (pn->requires_grad) {
                pn->grad_buf()[i] += self.grad[i];
            }
        }
    });
}

// ---- reductions ----

template <typename T>
Var<T> sum_all(const Var<T>& a) {
    T s = T(0);
    for (int64_t i = 0; i < a.value().numel(); ++i) s += a.value()[i];
    Node<T>* pa = a.raw();
    return make_op<T>(Tensor<T>::scalar(s), {a}, [pa](Node<T>& self) {
        if (!pa->requires_grad) return;
        Tensor<T>& dst = pa->grad_buf();
        const T g = self.grad[0];
        for (int64_t i = 0; i < dst.numel(); ++i) dst[i] += g;
    });
}

template <typename T>
Var<T> mean_all(const Var<T>& a) {
    return mul_scalar(sum_all(a), T(1) / T(a.value().numel()));
}

template <typename T>
Var<T> add_n(const std::vector<Var<T>>& xs) {
    TEXTSR_CHECK(!xs.empty(), "add_n on empty list");
    Tensor<T> out = xs[0].value();
    for (size_t k = 1; k < xs.size(); ++k) {
        TEXTSR_CHECK(out.same_shape(xs[k].value()), "add_n shape mismatch");
        for (int64_t i = 0; i < out.numel(); ++i) out[i] += xs[k].value()[i];
    }
    std::vector<Node<T>*> ps;
    for (auto& x : xs) ps.push_back(x.raw());
    return make_op<T>(std::move(out), xs, [ps](Node<T>& self) {
        for (Node<T>* p : ps) accum_into(p, self.grad);
    });
}

// ---- shape ops ----

template <typename T>
Var<T> reshape(const Var<T>& a, std::vector<int64_t> shape) {
    Tensor<T> out = a.value().reshaped(shape);
    Node<T>* pa = a.raw();
    return make_op<T>(std::move(out), {a}, [pa](Node<T>& self) {
        if (!pa->requires_grad) return;
        Tensor<T>& dst = pa->grad_buf();
        for (int64_t i = 0; i < self.grad.numel(); ++i) dst[i] += self.grad[i];
    });
}

// ---- broadcast ops over NCHW / channels ----

// y[n,c,h,w] = x[n,c,h,w] * s[n,c]
template <typename T>
Var<T> scale_channels(const Var<T>& x, const Var<T>& s) {
    const auto& xv = x.value();
    TEXTSR_CHECK(xv.ndim() == 4 && s.value().ndim() == 2 && s.value().dim(0) == xv.dim(0) &&
                     s.value().dim(1) == xv.dim(1),
                 "scale_channels expects x[N,C,H,W], s[N,C]");
    const int64_t N = xv.dim(0), C = xv.dim(1), HW = xv.dim(2) * xv.dim(3);
    Tensor<T> out = xv;
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            const T sc = s.value().at(n, c);
            T* p = out.data() + (n * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) p[i] *= sc;
        }
    Node<T>*px = x.raw(), *ps = s.raw();
    Tensor<T> xv_c = xv, sv_c = s.value();
    return make_op<T>(std::move(out), {x, s}, [px, ps, xv_c, sv_c, N, C, HW](Node<T>& self) {
        for (int64_t n = 0; n < N; ++n)
            for (int64_t c = 0; c < C; ++c) {
                const T* g = self.grad.data() + (n * C + c) * HW;
                if (px->requires_grad) {
                    T* dx = px->grad_buf().data() + (n * C + c) * HW;
                    const T sc = sv_c.at(n, c);
                    for (int64_t i = 0; i < HW; ++i) dx[i] += g[i] * sc;
                }
                if (ps->requires_grad) {
                    const T* xp = xv_c.data() + (n * C + c) * HW;
                    T acc = T(0);
                    for (int64_t i = 0; i < HW; ++i) acc += g[i] * xp[i];
                    ps->grad_buf().at(n, c) += acc;
                }
            }
    });
}

// y[n,c,h,w] = x[n,c,h,w] + b[n,c]
template <typename T>
Var<T> shift_channels(const Var<T>& x, const Var<T>& b) {
    const auto& xv = x.value();
    TEXTSR_CHECK(xv.ndim() == 4 && b.value().ndim() == 2 && b.value().dim(0) == xv.dim(0) &&
                     b.value().dim(1) == xv.dim(1),
                 "shift_channels expects x[N,C,H,W], b[N,C]");
    const int64_t N = xv.dim(0), C = xv.dim(1), HW = xv.dim(2) * xv.dim(3);
    Tensor<T> out = xv;
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            const T bc = b.value().at(n, c);
            T* p = out.data() + (n * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) p[i] += bc;
        }
    Node<T>*px = x.raw(), *pb = b.raw();
    return make_op<T>(std::move(out), {x, b}, [px, pb, N, C, HW](Node<T>& self) {
        if (px->requires_grad) accum_into(px, self.grad);
        if (pb->requires_grad) {
            for (int64_t n = 0; n < N; ++n)
                for (int64_t c = 0; c < C; ++c) {
                    const T* g = self.grad.data() + (n * C + c) * HW;
                    T acc = T(0);
                    for (int64_t i = 0; i < HW; ++i) acc += g[i];
                    pb->grad_buf().at(n, c) += acc;
                }
        }
    });
}

// per-(n,c) spatial mean -> [N,C]
template <typename T>
Var<T> spatial_mean(const Var<T>& x) {
    const auto& xv = x.value();
    TEXTSR_CHECK(xv.ndim() == 4, "spatial_mean expects NCHW");
    const int64_t N = xv.dim(0), C = xv.dim(1), HW = xv.dim(2) * xv.dim(3);
    Tensor<T> out({N, C});
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            const T* p = xv.data() + (n * C + c) * HW;
            T acc = T(0);
            for (int64_t i = 0; i < HW; ++i) acc += p[i];
            out.at(n, c) = acc / T(HW);
        }
    Node<T>* px = x.raw();
    return make_op<T>(std::move(out), {x}, [px, N, C, HW](Node<T>& self) {
        if (!px->requires_grad) return;
        for (int64_t n = 0; n < N; ++n)
            for (int64_t c = 0; c < C; ++c) {
                const T g = self.grad.at(n, c) / T(HW);
                T* dx = px->grad_buf().data() + (n * C + c) * HW;
                for (int64_t i = 0; i < HW; ++i) dx[i] += g;
            }
    });
}

// y[n,c,h,w] = x + b[c]  (conv bias)
template <typename T>
Var<T> bias_channels(const Var<T>& x, const Var<T>& b) {
    const auto& xv = x.value();
    TEXTSR_CHECK(xv.ndim() == 4 && b.value().ndim() == 1 && b.value().dim(0) == xv.dim(1),
                 "bias_channels expects x[N,C,H,W], b[C]");
    const int64_t N = xv.dim(0), C = xv.dim(1), HW = xv.dim(2) * xv.dim(3);
    Tensor<T> out = xv;
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            const T bc = b.value()[c];
            T* p = out.data() + (n * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) p[i] += bc;
        }
    Node<T>*px = x.raw(), *pb = b.raw();
    return make_op<T>(std::move(out), {x, b}, [px, pb, N, C, HW](Node<T>& self) {
        if (px->requires_grad) accum_into(px, self.grad);
        if (pb->requires_grad) {
            Tensor<T>& db = pb->grad_buf();
            for (int64_t n = 0; n < N; ++n)
                for (int64_t c = 0; c < C; ++c) {
                    const T* g = self.grad.data() + (n * C + c) * HW;
                    T acc = T(0);
                    for (int64_t i = 0; i < HW; ++i) acc += g[i];
                    db[c] += acc;
                }
        }
    });
}

// ---- 3D (single image CHW) channel broadcast, used by the prior transform ----

template <typename T>
Var<T> channel_mean3(const Var<T>& x) {
    const auto& xv = x.value();
    TEXTSR_CHECK(xv.ndim() == 3, "channel_mean3 expects CHW");
    const int64_t C = xv.dim(0), HW = xv.dim(1) * xv.dim(2);
    Tensor<T> out({C});
    for (int64_t c = 0; c < C; ++c) {
        const T* p = xv.data() + c * HW;
        T acc = T(0);
        for (int64_t i = 0; i < HW; ++i) acc += p[i];
        out[c] = acc / T(HW);
    }
    Node<T>* px = x.raw();
    return make_op<T>(std::move(out), {x}, [px, C, HW](Node<T>& self) {
        if (!px->requires_grad) return;
        for (int64_t c = 0; c < C; ++c) {
            const T g = self.grad[c] / T(HW);
            T* dx = px->grad_buf().data() + c * HW;
            for (int64_t i = 0; i < HW; ++i) dx[i] += g;
        }
    });
}

template <typename T>
Var<T> mul_channels3(const Var<T>& x, const Var<T>& s) {
    const auto& xv = x.value();
    TEXTSR_CHECK(xv.ndim() == 3 && s.value().ndim() == 1 && s.value().dim(0) == xv.dim(0),
                 "mul_channels3 expects x[C,H,W], s[C]");
    const int64_t C = xv.dim(0), HW = xv.dim(1) * xv.dim(2);
    Tensor<T> out = xv;
    for (int64_t c = 0; c < C; ++c) {
        const T sc = s.value()[c];
        T* p = out.data() + c * HW;
        for (int64_t i = 0; i < HW; ++i) p[i] *= sc;
    }
    Node<T>*px = x.raw(), *ps = s.raw();
    Tensor<T> xv_c = xv, sv_c = s.value();
    return make_op<T>(std::move(out), {x, s}, [px, ps, xv_c, sv_c, C, HW](Node<T>& self) {
        for (int64_t c = 0; c < C; ++c) {
            const T* g = self.grad.data() + c * HW;
            if (px->requires_grad) {
                T* dx = px->grad_buf().data() + c * HW;
                const T sc = sv_c[c];
                for (int64_t i = 0; i < HW; ++i) dx[i] += g[i] * sc;
            }
            if (ps->requires_grad) {
                const T* xp = xv_c.data() + c * HW;
                T acc = T(0);
                for (int64_t i = 0; i < HW; ++i) acc += g[i] * xp[i];
                ps->grad_buf()[c] += acc;
            }
        }
    });
}

template <typename T>
Var<T> add_channels3(const Var<T>& x, const Var<T>& b) {
    const auto& xv = x.value();
    TEXTSR_CHECK(xv.ndim() == 3 && b.value().ndim() == 1 && b.value().dim(0) == xv.dim(0),
                 "add_channels3 expects x[C,H,W], b[C]");
    const int64_t C = xv.dim(0), HW = xv.dim(1) * xv.dim(2);
    Tensor<T> out = xv;
    for (int64_t c = 0; c < C; ++c) {
        const T bc = b.value()[c];
        T* p = out.data() + c * HW;
        for (int64_t i = 0; i < HW; ++i) p[i] += bc;
    }
    Node<T>*px = x.raw(), *pb = b.raw();
    return make_op<T>(std::move(out), {x, b}, [px, pb, C, HW](Node<T>& self) {
        if (px->requires_grad) accum_into(px, self.grad);
        if (pb->requires_grad) {
            for (int64_t c = 0; c < C; ++c) {
                const T* g = self.grad.data() + c * HW;
                T acc = T(0);
                for (int64_t i = 0; i < HW; ++i) acc += g[i];
                pb->grad_buf()[c] += acc;
            }
        }
    });
}

// ---- 2D row/col broadcast ----

// y[r,d] = x[r,d] + b[d]
template <typename T>
Var<T> add_rowvec(const Var<T>& x, const Var<T>& b) {
    const auto& xv = x.value();
    TEXTSR_CHECK(xv.ndim() == 2 && b.value().ndim() == 1 && b.value().dim(0) == xv.dim(1),
                 "add_rowvec expects x[R,D], b[D]");
    const int64_t R = xv.dim(0), D = xv.dim(1);
    Tensor<T> out = xv;
    for (int64_t r = 0; r < R; ++r)
        for (int64_t d = 0; d < D; ++d) out.at(r, d) += b.value()[d];
    Node<T>*px = x.raw(), *pb = b.raw();
    return make_op<T>(std::move(out), {x, b}, [px, pb, R, D](Node<T>& self) {
        if (px->requires_grad) accum_into(px, self.grad);
        if (pb->requires_grad) {
            Tensor<T>& db = pb->grad_buf();
            for (int64_t r = 0; r < R; ++r)
                for (int64_t d = 0; d < D; ++d) db[d] += self.grad.at(r, d);
        }
    });
}

// y[r,d] = x[r,d] * s[r]  (per-row scale)
template <typename T>
Var<T> mul_rows(const Var<T>& x, const Var<T>& s) {
    const auto& xv = x.value();
    TEXTSR_CHECK(xv.ndim() == 2 && s.value().numel() == xv.dim(0), "mul_rows expects x[R,D], s[R]");
    const int64_t R = xv.dim(0), D = xv.dim(1);
    Tensor<T> out = xv;
    for (int64_t r = 0; r < R; ++r) {
        const T sc = s.value()[r];
        for (int64_t d = 0; d < D; ++d) out.at(r, d) *= sc;
    }
    Node<T>*px = x.raw(), *ps = s.raw();
    Tensor<T> xv_c = xv, sv_c = s.value();
    return make_op<T>(std::move(out), {x, s}, [px, ps, xv_c, sv_c, R, D](Node<T>& self) {
        for (int64_t r = 0; r < R; ++r) {
            if (px->requires_grad) {
                const T sc = sv_c[r];
                for (int64_t d = 0; d < D; ++d) px->grad_buf().at(r, d) += self.grad.at(r, d) * sc;
            }
            if (ps->requires_grad) {
                T acc = T(0);
                for (int64_t d = 0; d < D; ++d) acc += self.grad.at(r, d) * xv_c.at(r, d);
                ps->grad_buf()[r] += acc;
            }
        }
    });
}

// mean over columns per row -> [R]
template <typename T>
Var<T> rows_mean(const Var<T>& x) {
    const auto& xv = x.value();
    TEXTSR_CHECK(xv.ndim() == 2, "rows_mean expects 2D");
    const int64_t R = xv.dim(0), D = xv.dim(1);
    Tensor<T> out({R});
    for (int64_t r = 0; r < R; ++r) {
        T acc = T(0);
        for (int64_t d = 0; d < D; ++d) acc += xv.at(r, d);
        out[r] = acc / T(D);
    }
    Node<T>* px = x.raw();
    return make_op<T>(std::move(out), {x}, [px, R, D](Node<T>& self) {
        if (!px->requires_grad) return;
        for (int64_t r = 0; r < R; ++r) {
            const T g = self.grad[r] / T(D);
            for (int64_t d = 0; d < D; ++d) px->grad_buf().at(r, d) += g;
        }
    });
}

// mean over rows -> [1,D]
template <typename T>
Var<T> cols_mean(const Var<T>& x) {
    const auto& xv = x.value();
    TEXTSR_CHECK(xv.ndim() == 2, "cols_mean expects 2D");
    const int64_t R = xv.dim(0), D = xv.dim(1);
    Tensor<T> out({int64_t(1), D});
    for (int64_t d = 0; d < D; ++d) {
        T acc = T(0);
        for (int64_t r = 0; r < R; ++r) acc += xv.at(r, d);
        out[d] = acc / T(R);
    }
    Node<T>* px = x.raw();
    return make_op<T>(std::move(out), {x}, [px, R, D](Node<T>& self) {
        if (!px->requires_grad) return;
        for (int64_t d = 0; d < D; ++d) {
            const T g = self.grad[d] / T(R);
            for (int64_t r = 0; r < R; ++r) px->grad_buf().at(r, d) += g;
        }
    });
}

template <typename T>
Var<T> operator+(const Var<T>& a, const Var<T>& b) { return add(a, b); }
template <typename T>
Var<T> operator-(const Var<T>& a, const Var<T>& b) { return sub(a, b); }
template <typename T>
Var<T> operator*(const Var<T>& a, const Var<T>& b) { return mul(a, b); }

}  // namespace textsr
