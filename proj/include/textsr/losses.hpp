#pragma once

#include <map>
#include <string>

#include "textsr/ops.hpp"
#include "textsr/rng.hpp"

namespace textsr {

// ---- CTC ----

namespace detail {

inline double log_add(double a, double b) {
    if (a < b) std::swap(a, b);
    if (b <= -1e29) return a;
    return a + std::log1p(std::exp(b - a));
}

constexpr double kLogZero = -1e30;

inline bool ctc_allow_skip(const std::vector<int>& ext, int64_t s, int blank) {
    return s >= 2 && ext[size_t(s)] != blank && ext[size_t(s)] != ext[size_t(s - 2)];
}

}  // namespace detail

inline int ctc_min_timesteps(const std::vector<int>& target) {
    int need = int(target.size());
    for (size_t i = 1; i < target.size(); ++i)
        if (target[i] == target[i - 1]) ++need;
    return need;
}

// Forward-algorithm CTC negative log-likelihood. logits: [T, V], blank = V-1.
// Gradient d/dlogits = softmax - state posteriors (standard forward/backward).
template <typename T>
Var<T> ctc_loss(const Var<T>& logits, const std::vector<int>& target) {
    const auto& lv = logits.value();
    TEXTSR_CHECK(lv.ndim() == 2, "ctc_loss expects [T,V] logits");
    const int64_t Tn = lv.dim(0), V = lv.dim(1);
    const int blank = int(V - 1);
    for (int t : target)
        TEXTSR_CHECK(t >= 0 && t < blank, "ctc target symbol out of range");
    TEXTSR_CHECK(int64_t(ctc_min_timesteps(target)) <= Tn,
                 "ctc target infeasible: needs " << ctc_min_timesteps(target)
                                                 << " timesteps, logits have " << Tn);

    // extended label sequence with interleaved blanks
    const int64_t S = 2 * int64_t(target.size()) + 1;
    std::vector<int> ext(size_t(S), blank);
    for (size_t i = 0; i < target.size(); ++i) ext[2 * i + 1] = target[i];

    // log-softmax rows
    std::vector<double> lp(size_t(Tn * V));
    for (int64_t t = 0; t < Tn; ++t) {
        double mx = double(lv.at(t, 0));
        for (int64_t v = 1; v < V; ++v) mx = std::max(mx, double(lv.at(t, v)));
        double sum = 0;
        for (int64_t v = 0; v < V; ++v) sum += std::exp(double(lv.at(t, v)) - mx);
        const double lse = mx + std::log(sum);
        for (int64_t v = 0; v < V; ++v) lp[size_t(t * V + v)] = double(lv.at(t, v)) - lse;
    }

    std::vector<double> alpha(size_t(Tn * S), detail::kLogZero);
    alpha[0] = lp[size_t(blank)];
    if (S > 1) alpha[1] = lp[size_t(ext[1])];
    for (int64_t t = 1; t < Tn; ++t)
        for (int64_t s = 0; s < S; ++s) {
            double a = alpha[size_t((t - 1) * S + s)];
            if (s >= 1) a = detail::log_add(a, alpha[size_t((t - 1) * S + s - 1)]);
            if (detail::ctc_allow_skip(ext, s, blank))
                a = detail::log_add(a, alpha[size_t((t - 1) * S + s - 2)]);
            alpha[size_t(t * S + s)] = a + lp[size_t(t * V + ext[size_t(s)])];
        }

    double log_p = alpha[size_t((Tn - 1) * S + S - 1)];
    if (S > 1) log_p = detail::log_add(log_p, alpha[size_t((Tn - 1) * S + S - 2)]);
    const double loss = -log_p;

    Node<T>* px = logits.raw();
    return make_op<T>(
        Tensor<T>::scalar(T(loss)), {logits},
        [px, lp, alpha, ext, log_p, Tn, V, S, blank](Node<T>& self) {
            if (!px->requires_grad) return;
            // beta excludes the emission at (t,s)
            std::vector<double> beta(size_t(Tn * S), detail::kLogZero);
            beta[size_t((Tn - 1) * S + S - 1)] = 0.0;
            if (S > 1) beta[size_t((Tn - 1) * S + S - 2)] = 0.0;
            for (int64_t t = Tn - 2; t >= 0; --t)
                for (int64_t s = 0; s < S; ++s) {
                    double b = beta[size_t((t + 1) * S + s)] + lp[size_t((t + 1) * V + ext[size_t(s)])];
                    if (s + 1 < S)
                        b = detail::log_add(
                            b, beta[size_t((t + 1) * S + s + 1)] +
                                   lp[size_t((t + 1) * V + ext[size_t(s + 1)])]);
                    if (s + 2 < S && detail::ctc_allow_skip(ext, s + 2, blank))
                        b = detail::log_add(
                            b, beta[size_t((t + 1) * S + s + 2)] +
                                   lp[size_t((t + 1) * V + ext[size_t(s + 2)])]);
                    beta[size_t(t * S + s)] = b;
                }
            const T g = self.grad[0];
            Tensor<T>& dst = px->grad_buf();
            for (int64_t t = 0; t < Tn; ++t) {
                std::vector<double> u(size_t(V), 0.0);
                for (int64_t s = 0; s < S; ++s) {
                    const double post =
                        std::exp(alpha[size_t(t * S + s)] + beta[size_t(t * S + s)] - log_p);
                    u[size_t(ext[size_t(s)])] += post;
                }
                for (int64_t v = 0; v < V; ++v)
                    dst.at(t, v) += g * T(std::exp(lp[size_t(t * V + v)]) - u[size_t(v)]);
            }
        });
}

// ---- box losses ----

// boxes are [N,4] corner format; target is constant
template <typename T>
Var<T> smooth_l1(const Var<T>& pred, const Tensor<T>& target, T beta = T(1)) {
    TEXTSR_CHECK(pred.value().same_shape(target), "smooth_l1 shape mismatch");
    Var<T> tgt = Var<T>::leaf(target);
    Var<T> a = abs_op(sub(pred, tgt));
    Var<T> beta_c = Var<T>::leaf(Tensor<T>::full(target.shape(), beta));
    Var<T> m = minimum(a, beta_c);
    Var<T> quad = mul_scalar(square(m), T(0.5) / beta);
    Var<T> lin = relu(sub(a, beta_c));
    return mean_all(add(quad, lin));
}

template <typename T>
Var<T> giou_loss(const Var<T>& pred, const Tensor<T>& target) {
    const auto& pv = pred.value();
    TEXTSR_CHECK(pv.ndim() == 2 && pv.dim(1) == 4 && pv.same_shape(target),
                 "giou_loss expects [N,4] boxes");
    for (int64_t n = 0; n < pv.dim(0); ++n) {
        TEXTSR_CHECK(pv.at(n, 0) < pv.at(n, 2) && pv.at(n, 1) < pv.at(n, 3),
                     "degenerate predicted box at row " << n);
        TEXTSR_CHECK(target.at(n, 0) < target.at(n, 2) && target.at(n, 1) < target.at(n, 3),
                     "degenerate target box at row " << n);
    }
    Var<T> tgt = Var<T>::leaf(target);
    auto col = [](const Var<T>& b, int64_t c) { return slice_cols(b, c, c + 1); };
    Var<T> px1 = col(pred, 0), py1 = col(pred, 1), px2 = col(pred, 2), py2 = col(pred, 3);
    Var<T> tx1 = col(tgt, 0), ty1 = col(tgt, 1), tx2 = col(tgt, 2), ty2 = col(tgt, 3);

    Var<T> iw = relu(sub(minimum(px2, tx2), maximum(px1, tx1)));
    Var<T> ih = relu(sub(minimum(py2, ty2), maximum(py1, ty1)));
    Var<T> inter = mul(iw, ih);
    Var<T> area_p = mul(sub(px2, px1), sub(py2, py1));
    Var<T> area_t = mul(sub(tx2, tx1), sub(ty2, ty1));
    Var<T> uni = sub(add(area_p, area_t), inter);
    Var<T> ew = sub(maximum(px2, tx2), minimum(px1, tx1));
    Var<T> eh = sub(maximum(py2, ty2), minimum(py1, ty1));
    Var<T> enc = mul(ew, eh);
    Var<T> giou = sub(divide(inter, uni), divide(sub(enc, uni), enc));
    return mean_all(add_scalar(neg(giou), T(1)));
}

// plain IoU of two corner boxes (shared by tests and metrics)
inline double box_iou(double ax1, double ay1, double ax2, double ay2, double bx1, double by1,
                      double bx2, double by2) {
    const double iw = std::max(0.0, std::min(ax2, bx2) - std::max(ax1, bx1));
    const double ih = std::max(0.0, std::min(ay2, by2) - std::max(ay1, by1));
    const double inter = iw * ih;
    const double uni = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter;
    return uni > 0 ? inter / uni : 0.0;
}

// ---- adversarial hinge ----

template <typename T>
Var<T> hinge_d(const Var<T>& d_real, const Var<T>& d_fake) {
    Var<T> lr = mean_all(relu(add_scalar(neg(d_real), T(1))));
    Var<T> lf = mean_all(relu(add_scalar(d_fake, T(1))));
    return add(lr, lf);
}

template <typename T>
Var<T> hinge_g(const Var<T>& d_fake) {
    return neg(mean_all(d_fake));
}

// ---- frozen perceptual feature net ----

// Fixed random 4-stage conv net standing in for a pretrained feature extractor.
// Weights are seed-deterministic and never receive gradients. set_weights()
// accepts externally supplied taps of the same geometry.
template <typename T>
class FeatureExtractor {
public:
    explicit FeatureExtractor(uint64_t seed = 0x5eed, int64_t in_ch = 3) {
        static constexpr int64_t ch[4] = {16, 32, 64, 64};
        Rng rng(hash_combine(seed, 0xfea7));
        int64_t c_in = in_ch;
        for (int i = 0; i < 4; ++i) {
            Tensor<T> w({ch[i], c_in, 3, 3});
            const double scale = std::sqrt(2.0 / double(c_in * 9));
            for (int64_t j = 0; j < w.numel(); ++j) w[j] = T(rng.normal() * scale);
            weights_[i] = Var<T>::leaf(std::move(w));
            biases_[i] = Var<T>::leaf(Tensor<T>::zeros({ch[i]}));
            c_in = ch[i];
        }
    }

    // x: [N,C,H,W] with H,W divisible by 16; returns the four tap activations
    std::vector<Var<T>> forward(const Var<T>& x) const {
        std::vector<Var<T>> taps;
        Var<T> h = x;
        for (int i = 0; i < 4; ++i) {
            h = relu(conv2d(h, weights_[i], biases_[i], /*stride=*/2, /*pad=*/1));
            taps.push_back(h);
        }
        return taps;
    }

    void set_weights(int stage, Tensor<T> w) {
        TEXTSR_CHECK(stage >= 0 && stage < 4 &&
                         w.same_shape(weights_[stage].value()),
                     "FeatureExtractor stage weight shape mismatch");
        weights_[stage].value() = std::move(w);
    }

private:
    Var<T> weights_[4];
    Var<T> biases_[4];
};

// Eq-style reconstruction loss: mean-L1 pixel term plus per-tap normalized
// perceptual terms, each weighted by lambda_per.
template <typename T>
Var<T> rec_loss(const Var<T>& sr, const Tensor<T>& hr, const FeatureExtractor<T>& phi,
                T lambda_per) {
    TEXTSR_CHECK(sr.value().same_shape(hr), "rec_loss dim mismatch "
                                                << sr.value().shape_str() << " vs "
                                                << hr.shape_str());
    Var<T> hr_leaf = Var<T>::leaf(hr);
    Var<T> pixel = mean_all(abs_op(sub(sr, hr_leaf)));
    if (lambda_per == T(0)) return pixel;
    auto taps_sr = phi.forward(sr);
    auto taps_hr = phi.forward(hr_leaf);
    std::vector<Var<T>> terms{pixel};
    for (size_t i = 0; i < taps_sr.size(); ++i)
        terms.push_back(mul_scalar(mean_all(abs_op(sub(taps_sr[i], taps_hr[i]))), lambda_per));
    return add_n(terms);
}

// ---- structure loss ----

template <typename T>
Var<T> structure_loss(const Var<T>& s_sr, const Tensor<T>& s_hr) {
    TEXTSR_CHECK(s_sr.value().same_shape(s_hr), "structure_loss dim mismatch");
    return mean_all(abs_op(sub(s_sr, Var<T>::leaf(s_hr))));
}

// ---- weighted total ----

struct LossWeights {
    double lambda_per = 0.05;  // Eq. (3) trade-off
    // the remaining weights are not published; defaults follow common
    // detection / GAN-restoration practice and live in the config
    double lambda_ctc = 1.0;
    double lambda_box_l1 = 5.0;
    double lambda_box_giou = 2.0;
    double lambda_adv = 0.01;
    double lambda_str = 1.0;
};

template <typename T>
struct LossReport {
    std::map<std::string, double> terms;  // unweighted values
    Var<T> total;
};

// terms: name -> (var, weight). rec enters with weight 1 (lambda_per already applied inside).
template <typename T>
LossReport<T> total_sr_loss(const std::vector<std::tuple<std::string, Var<T>, double>>& terms) {
    LossReport<T> rep;
    std::vector<Var<T>> weighted;
    for (const auto& [name, var, w] : terms) {
        const double v = double(var.value()[0]);
        TEXTSR_CHECK(std::isfinite(v), "non-finite loss term '" << name << "'");
        rep.terms[name] = v;
        if (w != 0.0) weighted.push_back(mul_scalar(var, T(w)));
    }
    TEXTSR_CHECK(!weighted.empty(), "total_sr_loss: all terms have zero weight");
    rep.total = weighted.size() == 1 ? weighted[0] : add_n(weighted);
    return rep;
}

}  // namespace textsr
