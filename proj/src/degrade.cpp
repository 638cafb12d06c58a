#include "textsr/degrade.hpp"

#include <algorithm>
#include <cmath>

namespace textsr {

Image gaussian_blur(const Image& img, int kernel_size, double sigma_x, double sigma_y,
                    double angle) {
    TEXTSR_CHECK(kernel_size % 2 == 1, "blur kernel size must be odd, got " << kernel_size);
    TEXTSR_CHECK(kernel_size >= 3 && kernel_size <= 21, "blur kernel size outside 3..21");
    TEXTSR_CHECK(sigma_x > 0 && sigma_y > 0, "blur sigmas must be positive");
    const int r = kernel_size / 2;
    std::vector<double> k(size_t(kernel_size * kernel_size));
    const double c = std::cos(angle), s = std::sin(angle);
    double sum = 0;
    for (int di = -r; di <= r; ++di)
        for (int dj = -r; dj <= r; ++dj) {
            const double u = c * dj + s * di;
            const double v = -s * dj + c * di;
            const double w =
                std::exp(-0.5 * (u * u / (sigma_x * sigma_x) + v * v / (sigma_y * sigma_y)));
            k[size_t((di + r) * kernel_size + (dj + r))] = w;
            sum += w;
        }
    for (double& w : k) w /= sum;

    const int64_t C = img_c(img), H = img_h(img), W = img_w(img);
    Image out = make_image(C, H, W);
    for (int64_t ch = 0; ch < C; ++ch) {
        const double* src = img.data() + ch * H * W;
        double* dst = out.data() + ch * H * W;
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x) {
                double acc = 0;
                for (int di = -r; di <= r; ++di) {
                    const int64_t yy = std::clamp<int64_t>(y + di, 0, H - 1);
                    for (int dj = -r; dj <= r; ++dj) {
                        const int64_t xx = std::clamp<int64_t>(x + dj, 0, W - 1);
                        acc += k[size_t((di + r) * kernel_size + (dj + r))] * src[yy * W + xx];
                    }
                }
                dst[y * W + x] = acc;
            }
    }
    return out;
}

Tensor<double> gaussian_noise_field(const std::vector<int64_t>& shape, double sigma, Rng& rng) {
    TEXTSR_CHECK(sigma >= 0, "noise sigma must be >= 0");
    Tensor<double> field(shape);
    for (int64_t i = 0; i < field.numel(); ++i) field[i] = sigma * rng.normal();
    return field;
}

Image add_gaussian_noise(const Image& img, double sigma, Rng& rng) {
    Tensor<double> field = gaussian_noise_field(img.shape(), sigma, rng);
    Image out = img;
    for (int64_t i = 0; i < out.numel(); ++i)
        out[i] = std::clamp(out[i] + field[i], 0.0, 1.0);
    return out;
}

namespace {

// JPEG Annex-K luminance quantization table
constexpr int kLumaTable[64] = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

// orthonormal 8x8 DCT-II basis
const double* dct_basis() {
    static double C[64];
    static bool init = [] {
        for (int k = 0; k < 8; ++k) {
            const double a = k == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
            for (int n = 0; n < 8; ++n)
                C[k * 8 + n] = a * std::cos((2 * n + 1) * k * 3.14159265358979323846 / 16.0);
        }
        return true;
    }();
    (void)init;
    return C;
}

}  // namespace

Image dct_compress(const Image& img, int quality) {
    TEXTSR_CHECK(quality >= 1 && quality <= 100, "quality outside 1..100");
    const double scale = quality < 50 ? 5000.0 / quality : 200.0 - 2.0 * quality;
    double table[64];
    for (int i = 0; i < 64; ++i)
        table[i] = std::clamp(std::floor((kLumaTable[i] * scale + 50.0) / 100.0), 1.0, 255.0);

    const int64_t C = img_c(img), H = img_h(img), W = img_w(img);
    const int64_t Hp = (H + 7) / 8 * 8, Wp = (W + 7) / 8 * 8;
    const double* B = dct_basis();

    Image out = make_image(C, H, W);
    double blk[64], tmp[64], coef[64];
    for (int64_t ch = 0; ch < C; ++ch) {
        const double* src = img.data() + ch * H * W;
        double* dst = out.data() + ch * H * W;
        for (int64_t by = 0; by < Hp; by += 8)
            for (int64_t bx = 0; bx < Wp; bx += 8) {
                for (int i = 0; i < 8; ++i)
                    for (int j = 0; j < 8; ++j) {
                        const int64_t y = std::min<int64_t>(by + i, H - 1);
                        const int64_t x = std::min<int64_t>(bx + j, W - 1);
                        blk[i * 8 + j] = src[y * W + x] * 255.0 - 128.0;
                    }
                // coef = B * blk * B^T
                for (int i = 0; i < 8; ++i)
                    for (int j = 0; j < 8; ++j) {
                        double acc = 0;
                        for (int n = 0; n < 8; ++n) acc += B[i * 8 + n] * blk[n * 8 + j];
                        tmp[i * 8 + j] = acc;
                    }
                for (int i = 0; i < 8; ++i)
                    for (int j = 0; j < 8; ++j) {
                        double acc = 0;
                        for (int n = 0; n < 8; ++n) acc += tmp[i * 8 + n] * B[j * 8 + n];
                        coef[i * 8 + j] = acc;
                    }
                for (int i = 0; i < 64; ++i)
                    coef[i] = std::floor(coef[i] / table[i] + 0.5) * table[i];
                // blk = B^T * coef * B
                for (int i = 0; i < 8; ++i)
                    for (int j = 0; j < 8; ++j) {
                        double acc = 0;
                        for (int n = 0; n < 8; ++n) acc += B[n * 8 + i] * coef[n * 8 + j];
                        tmp[i * 8 + j] = acc;
                    }
                for (int i = 0; i < 8; ++i)
                    for (int j = 0; j < 8; ++j) {
                        double acc = 0;
                        for (int n = 0; n < 8; ++n) acc += tmp[i * 8 + n] * B[n * 8 + j];
                        blk[i * 8 + j] = acc;
                    }
                for (int i = 0; i < 8 && by + i < H; ++i)
                    for (int j = 0; j < 8 && bx + j < W; ++j)
                        dst[(by + i) * W + bx + j] =
                            std::clamp((blk[i * 8 + j] + 128.0) / 255.0, 0.0, 1.0);
            }
    }
    return out;
}

Image apply_color_jitter(const Image& img, const std::array<double, 3>& brightness,
                         double contrast) {
    TEXTSR_CHECK(img_c(img) == 3, "color jitter expects RGB");
    const int64_t HW = img_h(img) * img_w(img);
    Image out = img;
    for (int64_t c = 0; c < 3; ++c) {
        double* p = out.data() + c * HW;
        for (int64_t i = 0; i < HW; ++i)
            p[i] = std::clamp((p[i] - 0.5) * contrast + 0.5 + brightness[size_t(c)], 0.0, 1.0);
    }
    return out;
}

// ---- chain ----

nlohmann::json DegradationRecord::to_json() const {
    return {{"scale", scale}, {"seed", seed}, {"hr_ops", hr_ops}, {"lr_ops", lr_ops}};
}

DegradationRecord DegradationRecord::from_json(const nlohmann::json& j) {
    DegradationRecord r;
    r.scale = j.at("scale").get<int>();
    r.seed = j.at("seed").get<uint64_t>();
    r.hr_ops = j.at("hr_ops");
    r.lr_ops = j.at("lr_ops");
    return r;
}

namespace {

Image apply_op(const Image& img, const nlohmann::json& op) {
    const std::string name = op.at("op").get<std::string>();
    if (name == "gaussian_blur") {
        return gaussian_blur(img, op.at("ksize").get<int>(), op.at("sigma_x").get<double>(),
                             op.at("sigma_y").get<double>(), op.at("angle").get<double>());
    }
    if (name == "resize") {
        Image out = image_resize(img, op.at("h").get<int64_t>(), op.at("w").get<int64_t>(),
                                 resize_method_from_string(op.at("method").get<std::string>()));
        clip01(out);
        return out;
    }
    if (name == "gaussian_noise") {
        Rng rng(op.at("seed").get<uint64_t>());
        return add_gaussian_noise(img, op.at("sigma").get<double>(), rng);
    }
    if (name == "dct_compress") {
        return dct_compress(img, op.at("quality").get<int>());
    }
    if (name == "color_jitter") {
        const auto b = op.at("brightness").get<std::vector<double>>();
        return apply_color_jitter(img, {b.at(0), b.at(1), b.at(2)},
                                  op.at("contrast").get<double>());
    }
    throw TensorError("unknown degradation op: " + name);
}

}  // namespace

DegradedPair degrade(const Image& hr, int scale, const DegradeConfig& cfg, Rng& rng,
                     const std::string& hr_ref) {
    TEXTSR_CHECK(scale == 2 || scale == 4, "scale must be 2 or 4");
    const int64_t H = img_h(hr), W = img_w(hr);
    TEXTSR_CHECK(H % scale == 0 && W % scale == 0,
                 "HR dims " << H << "x" << W << " not divisible by scale " << scale);

    DegradationRecord rec;
    rec.scale = scale;
    rec.seed = rng.next_u64();
    Rng chain(rec.seed);

    if (cfg.color_jitter) {
        nlohmann::json op;
        op["op"] = "color_jitter";
        op["brightness"] = {chain.uniform(-cfg.cj_brightness, cfg.cj_brightness),
                            chain.uniform(-cfg.cj_brightness, cfg.cj_brightness),
                            chain.uniform(-cfg.cj_brightness, cfg.cj_brightness)};
        op["contrast"] = 1.0 + chain.uniform(-cfg.cj_contrast, cfg.cj_contrast);
        rec.hr_ops.push_back(op);
    }

    std::vector<nlohmann::json> mid;
    if (cfg.enable_blur) {
        nlohmann::json op;
        op["op"] = "gaussian_blur";
        op["ksize"] = 2 * int(chain.uniform_int(cfg.ksize_min / 2, cfg.ksize_max / 2)) + 1;
        op["sigma_x"] = chain.uniform(cfg.sigma_min, cfg.sigma_max);
        op["sigma_y"] = chain.uniform(cfg.sigma_min, cfg.sigma_max);
        op["angle"] = chain.uniform(0.0, 3.14159265358979);
        mid.push_back(op);
    }
    if (cfg.enable_resize) {
        const double f = chain.uniform(cfg.resize_min, cfg.resize_max);
        static const char* kMethods[3] = {"nearest", "bilinear", "bicubic"};
        nlohmann::json op;
        op["op"] = "resize";
        op["h"] = std::max<int64_t>(8, int64_t(std::floor(double(H) * f + 0.5)));
        op["w"] = std::max<int64_t>(8, int64_t(std::floor(double(W) * f + 0.5)));
        op["method"] = kMethods[chain.uniform_int(0, 2)];
        mid.push_back(op);
    }
    if (cfg.enable_noise) {
        nlohmann::json op;
        op["op"] = "gaussian_noise";
        op["sigma"] = chain.uniform(cfg.noise_min, cfg.noise_max);
        op["seed"] = chain.next_u64();
        mid.push_back(op);
    }
    if (cfg.enable_compress) {
        nlohmann::json op;
        op["op"] = "dct_compress";
        op["quality"] = int(chain.uniform_int(cfg.quality_min, cfg.quality_max));
        mid.push_back(op);
    }

    bool shuffle = false;
    if (cfg.order == "shuffle") shuffle = true;
    else if (cfg.order == "mixed") shuffle = chain.bernoulli(0.5);
    else TEXTSR_CHECK(cfg.order == "fixed", "unknown degrade order: " << cfg.order);
    if (shuffle) {
        for (size_t i = mid.size(); i > 1; --i)
            std::swap(mid[i - 1], mid[size_t(chain.uniform_int(0, int64_t(i) - 1))]);
    }
    for (auto& op : mid) rec.lr_ops.push_back(op);

    {
        nlohmann::json op;
        op["op"] = "resize";
        op["h"] = H / scale;
        op["w"] = W / scale;
        op["method"] = "bicubic";
        rec.lr_ops.push_back(op);
    }

    DegradedPair pair;
    pair.record = rec;
    pair.hr_ref = hr_ref;
    pair.hr_target = replay_hr_target(hr, rec);
    pair.lr = replay(hr, rec);
    return pair;
}

Image replay_hr_target(const Image& hr, const DegradationRecord& record) {
    Image img = hr;
    for (const auto& op : record.hr_ops) img = apply_op(img, op);
    return img;
}

Image replay(const Image& hr, const DegradationRecord& record) {
    Image img = replay_hr_target(hr, record);
    for (const auto& op : record.lr_ops) img = apply_op(img, op);
    clip01(img);
    return img;
}

}  // namespace textsr
