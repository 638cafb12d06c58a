#pragma once

#include <array>

#include "textsr/autograd.hpp"

namespace textsr {

// Normalized (x1,y1,x2,y2) box on the unit square.
struct Box {
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

    double w() const { return x2 - x1; }
    double h() const { return y2 - y1; }
    double cx() const { return 0.5 * (x1 + x2); }
    double cy() const { return 0.5 * (y1 + y2); }
};

inline void check_box(const Box& b) {
    TEXTSR_CHECK(b.x1 >= -1e-9 && b.y1 >= -1e-9 && b.x2 <= 1 + 1e-9 && b.y2 <= 1 + 1e-9,
                 "box outside [0,1]: (" << b.x1 << "," << b.y1 << "," << b.x2 << "," << b.y2 << ")");
    TEXTSR_CHECK(b.x2 - b.x1 > 0 && b.y2 - b.y1 > 0, "degenerate box");
}

namespace detail {

// four bilinear taps around continuous coordinate x (pixel k center at k+0.5),
// clamped to [0, n)
struct Taps {
    int64_t lo, hi;
    double wlo, whi;
};

inline Taps bilinear_taps(double x, int64_t n) {
    const double u = x - 0.5;
    double fl = std::floor(u);
    double f = u - fl;
    int64_t lo = int64_t(fl);
    int64_t hi = lo + 1;
    if (lo < 0) lo = 0;
    if (lo > n - 1) lo = n - 1;
    if (hi < 0) hi = 0;
    if (hi > n - 1) hi = n - 1;
    return {lo, hi, 1.0 - f, f};
}

}  // namespace detail

// Bilinear crop of a normalized box to out_h x out_w. Sampling grid: point j of n
// lies at box_start + (j+0.5)*extent/n (multiplication before division keeps the
// full-image identity case exact). Border handling clamps taps into the map.
template <typename T>
Var<T> roi_align(const Var<T>& x, const Box& box, int64_t out_h, int64_t out_w) {
    const auto& xv = x.value();
    TEXTSR_CHECK(xv.ndim() == 3, "roi_align expects CHW");
    TEXTSR_CHECK(out_h >= 1 && out_w >= 1, "roi_align out size");
    check_box(box);
    const int64_t C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);

    const double x1 = box.x1 * double(W), y1 = box.y1 * double(H);
    const double bw = (box.x2 - box.x1) * double(W), bh = (box.y2 - box.y1) * double(H);

    std::vector<detail::Taps> tx(size_t(out_w)), ty(size_t(out_h));
    for (int64_t j = 0; j < out_w; ++j)
        tx[size_t(j)] = detail::bilinear_taps(x1 + (double(j) + 0.5) * bw / double(out_w), W);
    for (int64_t i = 0; i < out_h; ++i)
        ty[size_t(i)] = detail::bilinear_taps(y1 + (double(i) + 0.5) * bh / double(out_h), H);

    Tensor<T> out({C, out_h, out_w});
    for (int64_t c = 0; c < C; ++c) {
        const T* src = xv.data() + c * H * W;
        T* dst = out.data() + c * out_h * out_w;
        for (int64_t i = 0; i < out_h; ++i) {
            const auto& a = ty[size_t(i)];
            for (int64_t j = 0; j < out_w; ++j) {
                const auto& b = tx[size_t(j)];
                dst[i * out_w + j] = T(a.wlo * b.wlo) * src[a.lo * W + b.lo] +
                                     T(a.wlo * b.whi) * src[a.lo * W + b.hi] +
                                     T(a.whi * b.wlo) * src[a.hi * W + b.lo] +
                                     T(a.whi * b.whi) * src[a.hi * W + b.hi];
            }
        }
    }
    Node<T>* px = x.raw();
    return make_op<T>(std::move(out), {x}, [px, tx, ty, C, H, W, out_h, out_w](Node<T>& self) {
        if (!px->requires_grad) return;
        for (int64_t c = 0; c < C; ++c) {
            T* dx = px->grad_buf().data() + c * H * W;
            const T* g = self.grad.data() + c * out_h * out_w;
            for (int64_t i = 0; i < out_h; ++i) {
                const auto& a = ty[size_t(i)];
                for (int64_t j = 0; j < out_w; ++j) {
                    const auto& b = tx[size_t(j)];
                    const T gv = g[i * out_w + j];
                    dx[a.lo * W + b.lo] += T(a.wlo * b.wlo) * gv;
                    dx[a.lo * W + b.hi] += T(a.wlo * b.whi) * gv;
                    dx[a.hi * W + b.lo] += T(a.whi * b.wlo) * gv;
                    dx[a.hi * W + b.hi] += T(a.whi * b.whi) * gv;
                }
            }
        }
    });
}

// Re-standardize prior features to the content crop's per-channel statistics:
// (p - mu_p) / sqrt(var_p + eps) * sqrt(var_x + eps) + mu_x, population stats.
template <typename T>
Var<T> adain(const Var<T>& prior, const Var<T>& content, T eps = T(1e-5)) {
    TEXTSR_CHECK(prior.value().ndim() == 3 && content.value().ndim() == 3 &&
                     prior.value().dim(0) == content.value().dim(0),
                 "adain expects CHW inputs with equal channel counts");
    Var<T> mu_p = channel_mean3(prior);
    Var<T> var_p = sub(channel_mean3(square(prior)), square(mu_p));
    Var<T> mu_x = channel_mean3(content);
    Var<T> var_x = sub(channel_mean3(square(content)), square(mu_x));
    Var<T> scale = mul(rsqrt_op(add_scalar(var_p, eps)), sqrt_op(add_scalar(var_x, eps)));
    Var<T> centered = add_channels3(prior, neg(mu_p));
    return add_channels3(mul_channels3(centered, scale), mu_x);
}

// Transpose of roi_align sampling: pixels whose centers fall inside the box are
// replaced by the normalized bilinear splat of the crop; everything else keeps
// the base value bit-for-bit. Inside pixels untouched by any splat weight also
// keep the base value.
template <typename T>
Var<T> paste_back(const Var<T>& base, const Var<T>& crop, const Box& box) {
    const auto& bv = base.value();
    const auto& cv = crop.value();
    TEXTSR_CHECK(bv.ndim() == 3 && cv.ndim() == 3 && bv.dim(0) == cv.dim(0),
                 "paste_back expects CHW base/crop with equal channels");
    check_box(box);
    const int64_t C = bv.dim(0), H = bv.dim(1), W = bv.dim(2);
    const int64_t sh = cv.dim(1), sw = cv.dim(2);

    const double x1 = box.x1 * double(W), y1 = box.y1 * double(H);
    const double bw = (box.x2 - box.x1) * double(W), bh = (box.y2 - box.y1) * double(H);

    std::vector<detail::Taps> tx(size_t(sw)), ty(size_t(sh));
    for (int64_t j = 0; j < sw; ++j)
        tx[size_t(j)] = detail::bilinear_taps(x1 + (double(j) + 0.5) * bw / double(sw), W);
    for (int64_t i = 0; i < sh; ++i)
        ty[size_t(i)] = detail::bilinear_taps(y1 + (double(i) + 0.5) * bh / double(sh), H);

    // inside mask and splat denominator are shared across channels
    const int64_t ix1 = int64_t(std::ceil(x1 - 0.5)), iy1 = int64_t(std::ceil(y1 - 0.5));
    const int64_t ix2 = int64_t(std::ceil(box.x2 * double(W) - 0.5));
    const int64_t iy2 = int64_t(std::ceil(box.y2 * double(H) - 0.5));
    auto inside = [ix1, iy1, ix2, iy2](int64_t py, int64_t pxx) {
        return py >= iy1 && py < iy2 && pxx >= ix1 && pxx < ix2;
    };

    std::vector<double> den(size_t(H * W), 0.0);
    for (int64_t i = 0; i < sh; ++i) {
        const auto& a = ty[size_t(i)];
        for (int64_t j = 0; j < sw; ++j) {
            const auto& b = tx[size_t(j)];
            den[size_t(a.lo * W + b.lo)] += a.wlo * b.wlo;
            den[size_t(a.lo * W + b.hi)] += a.wlo * b.whi;
            den[size_t(a.hi * W + b.lo)] += a.whi * b.wlo;
            den[size_t(a.hi * W + b.hi)] += a.whi * b.whi;
        }
    }

    Tensor<T> out = bv;
    std::vector<T> num(size_t(H * W));
    for (int64_t c = 0; c < C; ++c) {
        std::fill(num.begin(), num.end(), T(0));
        const T* cs = cv.data() + c * sh * sw;
        for (int64_t i = 0; i < sh; ++i) {
            const auto& a = ty[size_t(i)];
            for (int64_t j = 0; j < sw; ++j) {
                const auto& b = tx[size_t(j)];
                const T v = cs[i * sw + j];
                num[size_t(a.lo * W + b.lo)] += T(a.wlo * b.wlo) * v;
                num[size_t(a.lo * W + b.hi)] += T(a.wlo * b.whi) * v;
                num[size_t(a.hi * W + b.lo)] += T(a.whi * b.wlo) * v;
                num[size_t(a.hi * W + b.hi)] += T(a.whi * b.whi) * v;
            }
        }
        T* dst = out.data() + c * H * W;
        for (int64_t py = 0; py < H; ++py)
            for (int64_t pxx = 0; pxx < W; ++pxx) {
                const size_t p = size_t(py * W + pxx);
                if (inside(py, pxx) && den[p] > 0.0) dst[p] = num[p] / T(den[p]);
            }
    }

    Node<T>*pb = base.raw(), *pc = crop.raw();
    return make_op<T>(
        std::move(out), {base, crop},
        [pb, pc, tx, ty, den, inside, C, H, W, sh, sw](Node<T>& self) {
            // replaced[p]: crop content wins there, base gradient suppressed
            std::vector<char> replaced(size_t(H * W), 0);
            for (int64_t py = 0; py < H; ++py)
                for (int64_t pxx = 0; pxx < W; ++pxx)
                    replaced[size_t(py * W + pxx)] =
                        inside(py, pxx) && den[size_t(py * W + pxx)] > 0.0;
            if (pb->requires_grad) {
                for (int64_t c = 0; c < C; ++c) {
                    T* dst = pb->grad_buf().data() + c * H * W;
                    const T* g = self.grad.data() + c * H * W;
                    for (int64_t p = 0; p < H * W; ++p)
                        if (!replaced[size_t(p)]) dst[p] += g[p];
                }
            }
            if (pc->requires_grad) {
                for (int64_t c = 0; c < C; ++c) {
                    T* dc = pc->grad_buf().data() + c * sh * sw;
                    const T* g = self.grad.data() + c * H * W;
                    for (int64_t i = 0; i < sh; ++i) {
                        const auto& a = ty[size_t(i)];
                        for (int64_t j = 0; j < sw; ++j) {
                            const auto& b = tx[size_t(j)];
                            T acc = T(0);
                            const std::array<std::pair<int64_t, double>, 4> taps{
                                {{a.lo * W + b.lo, a.wlo * b.wlo},
                                 {a.lo * W + b.hi, a.wlo * b.whi},
                                 {a.hi * W + b.lo, a.whi * b.wlo},
                                 {a.hi * W + b.hi, a.whi * b.whi}}};
                            for (const auto& [p, w] : taps)
                                if (replaced[size_t(p)])
                                    acc += T(w / den[size_t(p)]) * g[p];
                            dc[i * sw + j] += acc;
                        }
                    }
                }
            }
        });
}

}  // namespace textsr
