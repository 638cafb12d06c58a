#include "textsr/metrics.hpp"

#include <cmath>

namespace textsr {

double psnr(const Image& a, const Image& b) {
    TEXTSR_CHECK(a.same_shape(b), "psnr dim mismatch");
    double mse = 0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        const double d = a[i] - b[i];
        mse += d * d;
    }
    mse /= double(a.numel());
    if (mse < 1e-10) return 100.0;
    return std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& a, const Image& b) {
    TEXTSR_CHECK(a.same_shape(b), "ssim dim mismatch");
    const Image ya = luminance(a), yb = luminance(b);
    const int64_t H = img_h(ya), W = img_w(ya);
    TEXTSR_CHECK(H >= 11 && W >= 11, "ssim needs images of at least 11x11, got " << H << "x" << W);

    double win[11];
    double wsum = 0;
    for (int i = 0; i < 11; ++i) {
        const double d = double(i - 5);
        win[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
        wsum += win[i];
    }
    for (double& w : win) w /= wsum;

    const double C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;

    // separable windowed moments
    auto blur = [&](const Image& src) {
        Image tmp = make_image(1, H, W);
        Image out = make_image(1, H - 10, W - 10);
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x + 10 < W; ++x) {
                double acc = 0;
                for (int i = 0; i < 11; ++i) acc += win[i] * src[y * W + x + i];
                tmp[y * W + x] = acc;
            }
        for (int64_t y = 0; y + 10 < H; ++y)
            for (int64_t x = 0; x + 10 < W; ++x) {
                double acc = 0;
                for (int i = 0; i < 11; ++i) acc += win[i] * tmp[(y + i) * W + x];
                out[y * (W - 10) + x] = acc;
            }
        return out;
    };

    Image aa = make_image(1, H, W), bb = make_image(1, H, W), ab = make_image(1, H, W);
    for (int64_t i = 0; i < H * W; ++i) {
        aa[i] = ya[i] * ya[i];
        bb[i] = yb[i] * yb[i];
        ab[i] = ya[i] * yb[i];
    }
    Image mu_a = blur(ya), mu_b = blur(yb);
    Image m_aa = blur(aa), m_bb = blur(bb), m_ab = blur(ab);

    double total = 0;
    const int64_t n = mu_a.numel();
    for (int64_t i = 0; i < n; ++i) {
        const double ma = mu_a[i], mb = mu_b[i];
        const double va = m_aa[i] - ma * ma;
        const double vb = m_bb[i] - mb * mb;
        const double cov = m_ab[i] - ma * mb;
        total += ((2 * ma * mb + C1) * (2 * cov + C2)) /
                 ((ma * ma + mb * mb + C1) * (va + vb + C2));
    }
    return total / double(n);
}

double seq_accuracy(const std::vector<std::vector<int>>& decoded,
                    const std::vector<std::vector<int>>& gt) {
    TEXTSR_CHECK(decoded.size() == gt.size(), "seq_accuracy length mismatch");
    TEXTSR_CHECK(!decoded.empty(), "seq_accuracy undefined on empty lists");
    int hits = 0;
    for (size_t i = 0; i < decoded.size(); ++i) hits += decoded[i] == gt[i];
    return double(hits) / double(decoded.size());
}

nlohmann::json MetricsReport::to_json() const {
    return {{"psnr_mean", psnr_mean},
            {"ssim_mean", ssim_mean},
            {"seq_accuracy", seq_accuracy},
            {"per_sample", per_sample}};
}

}  // namespace textsr
