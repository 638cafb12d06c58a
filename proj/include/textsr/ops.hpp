#pragma once

#include <Eigen/Core>

#include "textsr/autograd.hpp"

namespace textsr {

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using EMap = Eigen::Map<EMat<T>>;
template <typename T>
using ECMap = Eigen::Map<const EMat<T>>;

// ---- dense linear algebra ----

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
    const auto& av = a.value();
    const auto& bv = b.value();
    TEXTSR_CHECK(av.ndim() == 2 && bv.ndim() == 2 && av.dim(1) == bv.dim(0),
                 "matmul shape mismatch " << av.shape_str() << " x " << bv.shape_str());
    const int64_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    Tensor<T> out({m, n});
    EMap<T>(out.data(), m, n) = ECMap<T>(av.data(), m, k) * ECMap<T>(bv.data(), k, n);
    Node<T>*pa = a.raw(), *pb = b.raw();
    Tensor<T> av_c = av, bv_c = bv;
    return make_op<T>(std::move(out), {a, b}, [pa, pb, av_c, bv_c, m, k, n](Node<T>& self) {
        ECMap<T> g(self.grad.data(), m, n);
        if (pa->requires_grad)
            EMap<T>(pa->grad_buf().data(), m, k) += g * ECMap<T>(bv_c.data(), k, n).transpose();
        if (pb->requires_grad)
            EMap<T>(pb->grad_buf().data(), k, n) += ECMap<T>(av_c.data(), m, k).transpose() * g;
    });
}

// y = x W^T + b with x[R,K], W[O,K], b[O]
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
    const auto& xv = x.value();
    const auto& wv = w.value();
    TEXTSR_CHECK(xv.ndim() == 2 && wv.ndim() == 2 && xv.dim(1) == wv.dim(1),
                 "linear shape mismatch x" << xv.shape_str() << " W" << wv.shape_str());
    const int64_t R = xv.dim(0), K = xv.dim(1), O = wv.dim(0);
    Tensor<T> out({R, O});
    EMap<T>(out.data(), R, O) =
        ECMap<T>(xv.data(), R, K) * ECMap<T>(wv.data(), O, K).transpose();
    if (b.defined()) {
        TEXTSR_CHECK(b.value().numel() == O, "linear bias size mismatch");
        for (int64_t r = 0; r < R; ++r)
            for (int64_t o = 0; o < O; ++o) out.at(r, o) += b.value()[o];
    }
    Node<T>*px = x.raw(), *pw = w.raw();
    Node<T>* pb = b.defined() ? b.raw() : nullptr;
    Tensor<T> xv_c = xv, wv_c = wv;
    std::vector<Var<T>> parents{x, w};
    if (b.defined()) parents.push_back(b);
    return make_op<T>(std::move(out), parents, [px, pw, pb, xv_c, wv_c, R, K, O](Node<T>& self) {
        ECMap<T> g(self.grad.data(), R, O);
        if (px->requires_grad)
            EMap<T>(px->grad_buf().data(), R, K) += g * ECMap<T>(wv_c.data(), O, K);
        if (pw->requires_grad)
            EMap<T>(pw->grad_buf().data(), O, K) += g.transpose() * ECMap<T>(xv_c.data(), R, K);
        if (pb && pb->requires_grad) {
            Tensor<T>& db = pb->grad_buf();
            for (int64_t r = 0; r < R; ++r)
                for (int64_t o = 0; o < O; ++o) db[o] += self.grad.at(r, o);
        }
    });
}

template <typename T>
Var<T> linear_nobias(const Var<T>& x, const Var<T>& w) {
    return linear(x, w, Var<T>());
}

template <typename T>
Var<T> transpose2d(const Var<T>& x) {
    const auto& xv = x.value();
    TEXTSR_CHECK(xv.ndim() == 2, "transpose2d expects 2D");
    const int64_t R = xv.dim(0), C = xv.dim(1);
    Tensor<T> out({C, R});
    for (int64_t r = 0; r < R; ++r)
        for (int64_t c = 0; c < C; ++c) out.at(c, r) = xv.at(r, c);
    Node<T>* px = x.raw();
    return make_op<T>(std::move(out), {x}, [px, R, C](Node<T>& self) {
        if (!px->requires_grad) return;
        for (int64_t r = 0; r < R; ++r)
            for (int64_t c = 0; c < C; ++c) px->grad_buf().at(r, c) += self.grad.at(c, r);
    });
}

// ---- im2col convolution ----

template <typename T>
void im2col(const T* img, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw,
            int64_t stride, int64_t pad, int64_t oh, int64_t ow, T* col) {
    // col layout: [C*kh*kw, oh*ow]
    for (int64_t c = 0; c < C; ++c) {
        const T* src = img + c * H * W;
        for (int64_t ki = 0; ki < kh; ++ki) {
            for (int64_t kj = 0; kj < kw; ++kj) {
                T* dst = col + ((c * kh + ki) * kw + kj) * oh * ow;
                for (int64_t y = 0; y < oh; ++y) {
                    const int64_t iy = y * stride + ki - pad;
                    if (iy < 0 || iy >= H) {
                        std::fill(dst + y * ow, dst + (y + 1) * ow, T(0));
                        continue;
                    }
                    for (int64_t xo = 0; xo < ow; ++xo) {
                        const int64_t ix = xo * stride + kj - pad;
                        dst[y * ow + xo] = (ix >= 0 && ix < W) ? src[iy * W + ix] : T(0);
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_accum(const T* col, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw,
                  int64_t stride, int64_t pad, int64_t oh, int64_t ow, T* img) {
    for (int64_t c = 0; c < C; ++c) {
        T* dst = img + c * H * W;
        for (int64_t ki = 0; ki < kh; ++ki) {
            for (int64_t kj = 0; kj < kw; ++kj) {
                const T* src = col + ((c * kh + ki) * kw + kj) * oh * ow;
                for (int64_t y = 0; y < oh; ++y) {
                    const int64_t iy = y * stride + ki - pad;
                    if (iy < 0 || iy >= H) continue;
                    for (int64_t xo = 0; xo < ow; ++xo) {
                        const int64_t ix = xo * stride + kj - pad;
                        if (ix >= 0 && ix < W) dst[iy * W + ix] += src[y * ow + xo];
                    }
                }
            }
        }
    }
}

// x[N,C,H,W], w[O,C,kh,kw], optional b[O]
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int64_t stride = 1,
              int64_t pad = 0) {
    const auto& xv = x.value();
    const auto& wv = w.value();
    TEXTSR_CHECK(xv.ndim() == 4 && wv.ndim() == 4 && xv.dim(1) == wv.dim(1),
                 "conv2d shape mismatch x" << xv.shape_str() << " w" << wv.shape_str());
    const int64_t N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    const int64_t O = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
    const int64_t oh = (H + 2 * pad - kh) / stride + 1;
    const int64_t ow = (W + 2 * pad - kw) / stride + 1;
    TEXTSR_CHECK(oh >= 1 && ow >= 1, "conv2d output would be empty");
    const int64_t K = C * kh * kw;

    Tensor<T> out({N, O, oh, ow});
    std::vector<T> col(size_t(K * oh * ow));
    for (int64_t n = 0; n < N; ++n) {
        im2col(xv.data() + n * C * H * W, C, H, W, kh, kw, stride, pad, oh, ow, col.data());
        EMap<T>(out.data() + n * O * oh * ow, O, oh * ow) =
            ECMap<T>(wv.data(), O, K) * ECMap<T>(col.data(), K, oh * ow);
    }
    if (b.defined()) {
        TEXTSR_CHECK(b.value().numel() == O, "conv2d bias size mismatch");
        for (int64_t n = 0; n < N; ++n)
            for (int64_t o = 0; o < O; ++o) {
                T* p = out.data() + (n * O + o) * oh * ow;
                const T bo = b.value()[o];
                for (int64_t i = 0; i < oh * ow; ++i) p[i] += bo;
            }
    }

    Node<T>*px = x.raw(), *pw = w.raw();
    Node<T>* pb = b.defined() ? b.raw() : nullptr;
    Tensor<T> xv_c = xv, wv_c = wv;
    std::vector<Var<T>> parents{x, w};
    if (b.defined()) parents.push_back(b);
    return make_op<T>(
        std::move(out), parents,
        [px, pw, pb, xv_c, wv_c, N, C, H, W, O, kh, kw, stride, pad, oh, ow, K](Node<T>& self) {
            std::vector<T> col(size_t(K * oh * ow));
            std::vector<T> dcol(size_t(K * oh * ow));
            for (int64_t n = 0; n < N; ++n) {
                ECMap<T> g(self.grad.data() + n * O * oh * ow, O, oh * ow);
                if (pw->requires_grad) {
                    im2col(xv_c.data() + n * C * H * W, C, H, W, kh, kw, stride, pad, oh, ow,
                           col.data());
                    EMap<T>(pw->grad_buf().data(), O, K) +=
                        g * ECMap<T>(col.data(), K, oh * ow).transpose();
                }
                if (px->requires_grad) {
                    EMap<T>(dcol.data(), K, oh * ow) =
                        ECMap<T>(wv_c.data(), O, K).transpose() * g;
                    col2im_accum(dcol.data(), C, H, W, kh, kw, stride, pad, oh, ow,
                                 px->grad_buf().data() + n * C * H * W);
                }
            }
            if (pb && pb->requires_grad) {
                Tensor<T>& db = pb->grad_buf();
                for (int64_t n = 0; n < N; ++n)
                    for (int64_t o = 0; o < O; ++o) {
                        const T* g = self.grad.data() + (n * O + o) * oh * ow;
                        T acc = T(0);
                        for (int64_t i = 0; i < oh * ow; ++i) acc += g[i];
                        db[o] += acc;
                    }
            }
        });
}

// ---- softmax family ----

template <typename T>
Var<T> softmax_rows(const Var<T>& x) {
    const auto& xv = x.value();
    TEXTSR_CHECK(xv.ndim() == 2, "softmax_rows expects 2D");
    const int64_t R = xv.dim(0), D = xv.dim(1);
    Tensor<T> out = xv;
    for (int64_t r = 0; r < R; ++r) {
        T mx = out.at(r, 0);
        for (int64_t d = 1; d < D; ++d) mx = std::max(mx, out.at(r, d));
        T sum = T(0);
        for (int64_t d = 0; d < D; ++d) {
            out.at(r, d) = std::exp(out.at(r, d) - mx);
            sum += out.at(r, d);
        }
        for (int64_t d = 0; d < D; ++d) out.at(r, d) /= sum;
    }
    Node<T>* px = x.raw();
    Tensor<T> y = out;
    return make_op<T>(std::move(out), {x}, [px, y, R, D](Node<T>& self) {
        if (!px->requires_grad) return;
        for (int64_t r = 0; r < R; ++r) {
            T dot = T(0);
            for (int64_t d = 0; d < D; ++d) dot += self.grad.at(r, d) * y.at(r, d);
            for (int64_t d = 0; d < D; ++d)
                px->grad_buf().at(r, d) += y.at(r, d) * (self.grad.at(r, d) - dot);
        }
    });
}

template <typename T>
Var<T> log_softmax_rows(const Var<T>& x) {
    const auto& xv = x.value();
    TEXTSR_CHECK(xv.ndim() == 2, "log_softmax_rows expects 2D");
    const int64_t R = xv.dim(0), D = xv.dim(1);
    Tensor<T> out = xv;
    for (int64_t r = 0; r < R; ++r) {
        T mx = out.at(r, 0);
        for (int64_t d = 1; d < D; ++d) mx = std::max(mx, out.at(r, d));
        T sum = T(0);
        for (int64_t d = 0; d < D; ++d) sum += std::exp(out.at(r, d) - mx);
        const T lse = mx + std::log(sum);
        for (int64_t d = 0; d < D; ++d) out.at(r, d) -= lse;
    }
    Node<T>* px = x.raw();
    Tensor<T> y = out;
    return make_op<T>(std::move(out), {x}, [px, y, R, D](Node<T>& self) {
        if (!px->requires_grad) return;
        for (int64_t r = 0; r < R; ++r) {
            T gsum = T(0);
            for (int64_t d = 0; d < D; ++d) gsum += self.grad.at(r, d);
            for (int64_t d = 0; d < D; ++d)
                px->grad_buf().at(r, d) += self.grad.at(r, d) - std::exp(y.at(r, d)) * gsum;
        }
    });
}

// mean cross-entropy over rows; labels are class indices
template <typename T>
Var<T> cross_entropy(const Var<T>& logits, const std::vector<int>& labels) {
    const auto& xv = logits.value();
    TEXTSR_CHECK(xv.ndim() == 2 && int64_t(labels.size()) == xv.dim(0),
                 "cross_entropy labels/logits mismatch");
    const int64_t R = xv.dim(0), D = xv.dim(1);
    Tensor<T> prob = xv;
    T loss = T(0);
    for (int64_t r = 0; r < R; ++r) {
        T mx = prob.at(r, 0);
        for (int64_t d = 1; d < D; ++d) mx = std::max(mx, prob.at(r, d));
        T sum = T(0);
        for (int64_t d = 0; d < D; ++d) {
            prob.at(r, d) = std::exp(prob.at(r, d) - mx);
            sum += prob.at(r, d);
        }
        for (int64_t d = 0; d < D; ++d) prob.at(r, d) /= sum;
        TEXTSR_CHECK(labels[size_t(r)] >= 0 && labels[size_t(r)] < D, "cross_entropy label range");
        loss -= std::log(std::max(prob.at(r, labels[size_t(r)]), T(1e-30)));
    }
    loss /= T(R);
    Node<T>* px = logits.raw();
    std::vector<int> lab = labels;
    return make_op<T>(Tensor<T>::scalar(loss), {logits}, [px, prob, lab, R, D](Node<T>& self) {
        if (!px->requires_grad) return;
        const T g = self.grad[0] / T(R);
        for (int64_t r = 0; r < R; ++r)
            for (int64_t d = 0; d < D; ++d)
                px->grad_buf().at(r, d) +=
                    g * (prob.at(r, d) - (d == lab[size_t(r)] ? T(1) : T(0)));
    });
}

// ---- layer norm over last dim of 2D ----

template <typename T>
Var<T> layernorm_rows(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                      T eps = T(1e-5)) {
    const auto& xv = x.value();
    TEXTSR_CHECK(xv.ndim() == 2 && gamma.value().numel() == xv.dim(1) &&
                     beta.value().numel() == xv.dim(1),
                 "layernorm_rows shape mismatch");
    const int64_t R = xv.dim(0), D = xv.dim(1);
    Tensor<T> out({R, D});
    Tensor<T> xhat({R, D});
    Tensor<T> istd({R});
    for (int64_t r = 0; r < R; ++r) {
        T mu = T(0);
        for (int64_t d = 0; d < D; ++d) mu += xv.at(r, d);
        mu /= T(D);
        T var = T(0);
        for (int64_t d = 0; d < D; ++d) {
            const T c = xv.at(r, d) - mu;
            var += c * c;
        }
        var /= T(D);
        const T is = T(1) / std::sqrt(var + eps);
        istd[r] = is;
        for (int64_t d = 0; d < D; ++d) {
            xhat.at(r, d) = (xv.at(r, d) - mu) * is;
            out.at(r, d) = xhat.at(r, d) * gamma.value()[d] + beta.value()[d];
        }
    }
    Node<T>*px = x.raw(), *pg = gamma.raw(), *pb = beta.raw();
    Tensor<T> gv = gamma.value();
    return make_op<T>(std::move(out), {x, gamma, beta},
                      [px, pg, pb, xhat, istd, gv, R, D](Node<T>& self) {
                          for (int64_t r = 0; r < R; ++r) {
                              if (pg->requires_grad)
                                  for (int64_t d = 0; d < D; ++d)
                                      pg->grad_buf()[d] += self.grad.at(r, d) * xhat.at(r, d);
                              if (pb->requires_grad)
                                  for (int64_t d = 0; d < D; ++d)
                                      pb->grad_buf()[d] += self.grad.at(r, d);
                              if (px->requires_grad) {
                                  T sum_g = T(0), sum_gx = T(0);
                                  for (int64_t d = 0; d < D; ++d) {
                                      const T gd = self.grad.at(r, d) * gv[d];
                                      sum_g += gd;
                                      sum_gx += gd * xhat.at(r, d);
                                  }
                                  for (int64_t d = 0; d < D; ++d) {
                                      const T gd = self.grad.at(r, d) * gv[d];
                                      px->grad_buf().at(r, d) +=
                                          istd[r] *
                                          (gd - sum_g / T(D) - xhat.at(r, d) * sum_gx / T(D));
                                  }
                              }
                          }
                      });
}

// ---- gather / concat / slice ----

template <typename T>
Var<T> embedding_rows(const Var<T>& table, const std::vector<int>& idx) {
    const auto& tv = table.value();
    TEXTSR_CHECK(tv.ndim() == 2, "embedding_rows expects 2D table");
    const int64_t D = tv.dim(1), B = int64_t(idx.size());
    Tensor<T> out({B, D});
    for (int64_t i = 0; i < B; ++i) {
        TEXTSR_CHECK(idx[size_t(i)] >= 0 && idx[size_t(i)] < tv.dim(0),
                     "embedding index " << idx[size_t(i)] << " out of range [0," << tv.dim(0) << ")");
        std::copy(tv.data() + idx[size_t(i)] * D, tv.data() + (idx[size_t(i)] + 1) * D,
                  out.data() + i * D);
    }
    Node<T>* pt = table.raw();
    std::vector<int> idx_c = idx;
    return make_op<T>(std::move(out), {table}, [pt, idx_c, D, B](Node<T>& self) {
        if (!pt->requires_grad) return;
        for (int64_t i = 0; i < B; ++i) {
            T* dst = pt->grad_buf().data() + idx_c[size_t(i)] * D;
            const T* g = self.grad.data() + i * D;
            for (int64_t d = 0; d < D; ++d) dst[d] += g[d];
        }
    });
}

template <typename T>
Var<T> gather_rows(const Var<T>& x, const std::vector<int>& idx) {
    const auto& xv = x.value();
    TEXTSR_CHECK(xv.ndim() == 2, "gather_rows expects 2D");
    const int64_t D = xv.dim(1), K = int64_t(idx.size());
    Tensor<T> out({K, D});
    for (int64_t i = 0; i < K; ++i) {
        TEXTSR_CHECK(idx[size_t(i)] >= 0 && idx[size_t(i)] < xv.dim(0), "gather_rows index range");
        std::copy(xv.data() + idx[size_t(i)] * D, xv.data() + (idx[size_t(i)] + 1) * D,
                  out.data() + i * D);
    }
    Node<T>* px = x.raw();
    std::vector<int> idx_c = idx;
    return make_op<T>(std::move(out), {x}, [px, idx_c, D, K](Node<T>& self) {
        if (!px->requires_grad) return;
        for (int64_t i = 0; i < K; ++i) {
            T* dst = px->grad_buf().data() + idx_c[size_t(i)] * D;
            const T* g = self.grad.data() + i * D;
            for (int64_t d = 0; d < D; ++d) dst[d] += g[d];
        }
    });
}

template <typename T>
Var<T> slice_cols(const Var<T>& x, int64_t c0, int64_t c1) {
    const auto& xv = x.value();
    TEXTSR_CHECK(xv.ndim() == 2 && 0 <= c0 && c0 < c1 && c1 <= xv.dim(1), "slice_cols range");
    const int64_t R = xv.dim(0), D = xv.dim(1), W = c1 - c0;
    Tensor<T> out({R, W});
    for (int64_t r = 0; r < R; ++r)
        std::copy(xv.data() + r * D + c0, xv.data() + r * D + c1, out.data() + r * W);
    Node<T>* px = x.raw();
    return make_op<T>(std::move(out), {x}, [px, R, D, W, c0](Node<T>& self) {
        if (!px->requires_grad) return;
        for (int64_t r = 0; r < R; ++r)
            for (int64_t c = 0; c < W; ++c)
                px->grad_buf()[r * D + c0 + c] += self.grad[r * W + c];
    });
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& xs) {
    TEXTSR_CHECK(!xs.empty(), "concat_cols empty");
    const int64_t R = xs[0].value().dim(0);
    int64_t D = 0;
    for (auto& x : xs) {
        TEXTSR_CHECK(x.value().ndim() == 2 && x.value().dim(0) == R, "concat_cols shape");
        D += x.value().dim(1);
    }
    Tensor<T> out({R, D});
    int64_t off = 0;
    for (auto& x : xs) {
        const int64_t W = x.value().dim(1);
        for (int64_t r = 0; r < R; ++r)
            std::copy(x.value().data() + r * W, x.value().data() + (r + 1) * W,
                      out.data() + r * D + off);
        off += W;
    }
    std::vector<Node<T>*> ps;
    std::vector<int64_t> widths;
    for (auto& x : xs) {
        ps.push_back(x.raw());
        widths.push_back(x.value().dim(1));
    }
    return make_op<T>(std::move(out), xs, [ps, widths, R, D](Node<T>& self) {
        int64_t off = 0;
        for (size_t i = 0; i < ps.size(); ++i) {
            const int64_t W = widths[i];
            if (ps[i]->requires_grad) {
                for (int64_t r = 0; r < R; ++r)
                    for (int64_t c = 0; c < W; ++c)
                        ps[i]->grad_buf()[r * W + c] += self.grad[r * D + off + c];
            }
            off += W;
        }
    });
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& xs) {
    TEXTSR_CHECK(!xs.empty(), "concat_rows empty");
    const int64_t D = xs[0].value().dim(1);
    int64_t R = 0;
    for (auto& x : xs) {
        TEXTSR_CHECK(x.value().ndim() == 2 && x.value().dim(1) == D, "concat_rows shape");
        R += x.value().dim(0);
    }
    Tensor<T> out({R, D});
    int64_t off = 0;
    for (auto& x : xs) {
        std::copy(x.value().data(), x.value().data() + x.value().numel(), out.data() + off);
        off += x.value().numel();
    }
    std::vector<Node<T>*> ps;
    std::vector<int64_t> sizes;
    for (auto& x : xs) {
        ps.push_back(x.raw());
        sizes.push_back(x.value().numel());
    }
    return make_op<T>(std::move(out), xs, [ps, sizes](Node<T>& self) {
        int64_t off = 0;
        for (size_t i = 0; i < ps.size(); ++i) {
            if (ps[i]->requires_grad) {
                T* dst = ps[i]->grad_buf().data();
                for (int64_t j = 0; j < sizes[i]; ++j) dst[j] += self.grad[off + j];
            }
            off += sizes[i];
        }
    });
}

// channel concat of NCHW tensors with equal N,H,W
template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
    const auto& av = a.value();
    const auto& bv = b.value();
    TEXTSR_CHECK(av.ndim() == 4 && bv.ndim() == 4 && av.dim(0) == bv.dim(0) &&
                     av.dim(2) == bv.dim(2) && av.dim(3) == bv.dim(3),
                 "concat_channels shape mismatch");
    const int64_t N = av.dim(0), Ca = av.dim(1), Cb = bv.dim(1), HW = av.dim(2) * av.dim(3);
    Tensor<T> out({N, Ca + Cb, av.dim(2), av.dim(3)});
    for (int64_t n = 0; n < N; ++n) {
        std::copy(av.data() + n * Ca * HW, av.data() + (n + 1) * Ca * HW,
                  out.data() + n * (Ca + Cb) * HW);
        std::copy(bv.data() + n * Cb * HW, bv.data() + (n + 1) * Cb * HW,
                  out.data() + n * (Ca + Cb) * HW + Ca * HW);
    }
    Node<T>*pa = a.raw(), *pb = b.raw();
    return make_op<T>(std::move(out), {a, b}, [pa, pb, N, Ca, Cb, HW](Node<T>& self) {
        for (int64_t n = 0; n < N; ++n) {
            if (pa->requires_grad) {
                T* dst = pa->grad_buf().data() + n * Ca * HW;
                const T* g = self.grad.data() + n * (Ca + Cb) * HW;
                for (int64_t i = 0; i < Ca * HW; ++i) dst[i] += g[i];
            }
            if (pb->requires_grad) {
                T* dst = pb->grad_buf().data() + n * Cb * HW;
                const T* g = self.grad.data() + n * (Ca + Cb) * HW + Ca * HW;
                for (int64_t i = 0; i < Cb * HW; ++i) dst[i] += g[i];
            }
        }
    });
}

// ---- image batch plumbing ----

template <typename T>
Var<T> select_image(const Var<T>& x, int64_t n) {
    const auto& xv = x.value();
    TEXTSR_CHECK(xv.ndim() == 4 && n >= 0 && n < xv.dim(0), "select_image range");
    const int64_t C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    Tensor<T> out({C, H, W});
    std::copy(xv.data() + n * C * H * W, xv.data() + (n + 1) * C * H * W, out.data());
    Node<T>* px = x.raw();
    return make_op<T>(std::move(out), {x}, [px, n, C, H, W](Node<T>& self) {
        if (!px->requires_grad) return;
        T* dst = px->grad_buf().data() + n * C * H * W;
        for (int64_t i = 0; i < C * H * W; ++i) dst[i] += self.grad[i];
    });
}

template <typename T>
Var<T> stack_images(const std::vector<Var<T>>& xs) {
    TEXTSR_CHECK(!xs.empty(), "stack_images empty");
    const auto sh = xs[0].value().shape();
    TEXTSR_CHECK(sh.size() == 3, "stack_images expects CHW items");
    for (auto& x : xs) TEXTSR_CHECK(x.value().shape() == sh, "stack_images shape mismatch");
    const int64_t sz = xs[0].value().numel();
    Tensor<T> out({int64_t(xs.size()), sh[0], sh[1], sh[2]});
    for (size_t i = 0; i < xs.size(); ++i)
        std::copy(xs[i].value().data(), xs[i].value().data() + sz, out.data() + int64_t(i) * sz);
    std::vector<Node<T>*> ps;
    for (auto& x : xs) ps.push_back(x.raw());
    return make_op<T>(std::move(out), xs, [ps, sz](Node<T>& self) {
        for (size_t i = 0; i < ps.size(); ++i) {
            if (!ps[i]->requires_grad) continue;
            T* dst = ps[i]->grad_buf().data();
            const T* g = self.grad.data() + int64_t(i) * sz;
            for (int64_t j = 0; j < sz; ++j) dst[j] += g[j];
        }
    });
}

// [N,C,H,W] -> [N,C,2H,2W]
template <typename T>
Var<T> upsample_nearest2(const Var<T>& x) {
    const auto& xv = x.value();
    TEXTSR_CHECK(xv.ndim() == 4, "upsample_nearest2 expects NCHW");
    const int64_t N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    Tensor<T> out({N, C, 2 * H, 2 * W});
    for (int64_t nc = 0; nc < N * C; ++nc) {
        const T* src = xv.data() + nc * H * W;
        T* dst = out.data() + nc * 4 * H * W;
        for (int64_t y = 0; y < H; ++y)
            for (int64_t xx = 0; xx < W; ++xx) {
                const T v = src[y * W + xx];
                dst[(2 * y) * 2 * W + 2 * xx] = v;
                dst[(2 * y) * 2 * W + 2 * xx + 1] = v;
                dst[(2 * y + 1) * 2 * W + 2 * xx] = v;
                dst[(2 * y + 1) * 2 * W + 2 * xx + 1] = v;
            }
    }
    Node<T>* px = x.raw();
    return make_op<T>(std::move(out), {x}, [px, N, C, H, W](Node<T>& self) {
        if (!px->requires_grad) return;
        for (int64_t nc = 0; nc < N * C; ++nc) {
            T* dst = px->grad_buf().data() + nc * H * W;
            const T* g = self.grad.data() + nc * 4 * H * W;
            for (int64_t y = 0; y < H; ++y)
                for (int64_t xx = 0; xx < W; ++xx)
                    dst[y * W + xx] += g[(2 * y) * 2 * W + 2 * xx] +
                                       g[(2 * y) * 2 * W + 2 * xx + 1] +
                                       g[(2 * y + 1) * 2 * W + 2 * xx] +
                                       g[(2 * y + 1) * 2 * W + 2 * xx + 1];
        }
    });
}

// collapse the vertical axis by mean: [N,C,H,W] -> [N,C,W]
template <typename T>
Var<T> vertical_mean(const Var<T>& x) {
    const auto& xv = x.value();
    TEXTSR_CHECK(xv.ndim() == 4, "vertical_mean expects NCHW");
    const int64_t N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    Tensor<T> out({N, C, W});
    for (int64_t nc = 0; nc < N * C; ++nc) {
        const T* src = xv.data() + nc * H * W;
        T* dst = out.data() + nc * W;
        for (int64_t xx = 0; xx < W; ++xx) {
            T acc = T(0);
            for (int64_t y = 0; y < H; ++y) acc += src[y * W + xx];
            dst[xx] = acc / T(H);
        }
    }
    Node<T>* px = x.raw();
    return make_op<T>(std::move(out), {x}, [px, N, C, H, W](Node<T>& self) {
        if (!px->requires_grad) return;
        for (int64_t nc = 0; nc < N * C; ++nc) {
            T* dst = px->grad_buf().data() + nc * H * W;
            const T* g = self.grad.data() + nc * W;
            for (int64_t xx = 0; xx < W; ++xx) {
                const T gv = g[xx] / T(H);
                for (int64_t y = 0; y < H; ++y) dst[y * W + xx] += gv;
            }
        }
    });
}

// [N,C,W] -> per-image token matrix [W,C]
template <typename T>
Var<T> tokens_of(const Var<T>& x, int64_t n) {
    const auto& xv = x.value();
    TEXTSR_CHECK(xv.ndim() == 3 && n >= 0 && n < xv.dim(0), "tokens_of range");
    const int64_t C = xv.dim(1), W = xv.dim(2);
    Tensor<T> out({W, C});
    for (int64_t c = 0; c < C; ++c)
        for (int64_t w = 0; w < W; ++w) out.at(w, c) = xv.at(n, c, w);
    Node<T>* px = x.raw();
    return make_op<T>(std::move(out), {x}, [px, n, C, W](Node<T>& self) {
        if (!px->requires_grad) return;
        for (int64_t c = 0; c < C; ++c)
            for (int64_t w = 0; w < W; ++w) px->grad_buf().at(n, c, w) += self.grad.at(w, c);
    });
}

}  // namespace textsr
