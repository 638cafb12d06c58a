#pragma once

#include <json.hpp>
#include <string>

#include "textsr/image.hpp"
#include "textsr/rng.hpp"

namespace textsr {

struct DegradeConfig {
    bool enable_blur = true;
    bool enable_resize = true;
    bool enable_noise = true;
    bool enable_compress = true;
    bool color_jitter = false;  // applied to HR (target changes too), recorded
    // sampling ranges
    double sigma_min = 0.2, sigma_max = 3.0;
    int ksize_min = 3, ksize_max = 21;
    double noise_min = 0.0, noise_max = 0.1;
    int quality_min = 30, quality_max = 95;
    double resize_min = 0.5, resize_max = 1.5;
    double cj_brightness = 0.08, cj_contrast = 0.15;
    // operator ordering: fixed chain, shuffled chain, or a per-sample coin flip
    std::string order = "mixed";  // fixed | shuffle | mixed
};

// Replayable description of one degradation. hr_ops adjust the ground truth
// (color jitter); lr_ops turn the adjusted HR into the LR input. Operator
// names and parameter keys are a stable external format.
struct DegradationRecord {
    int scale = 2;
    uint64_t seed = 0;
    nlohmann::json hr_ops = nlohmann::json::array();
    nlohmann::json lr_ops = nlohmann::json::array();

    nlohmann::json to_json() const;
    static DegradationRecord from_json(const nlohmann::json& j);
};

struct DegradedPair {
    Image lr;
    Image hr_target;  // HR after hr_ops; equals the input HR when no jitter
    std::string hr_ref;
    DegradationRecord record;
};

// ---- individual operators (pure) ----

// anisotropic rotated Gaussian, kernel normalized to sum 1, replicate borders
Image gaussian_blur(const Image& img, int kernel_size, double sigma_x, double sigma_y,
                    double angle);

// pre-clip noise field, exposed so tests can check its statistics
Tensor<double> gaussian_noise_field(const std::vector<int64_t>& shape, double sigma, Rng& rng);
Image add_gaussian_noise(const Image& img, double sigma, Rng& rng);

// 8x8 block-DCT quantization against the standard luminance table scaled by
// quality (IJG rule), applied per channel; a codec-free JPEG stand-in
Image dct_compress(const Image& img, int quality);

Image apply_color_jitter(const Image& img, const std::array<double, 3>& brightness,
                         double contrast);

// ---- chain ----

DegradedPair degrade(const Image& hr, int scale, const DegradeConfig& cfg, Rng& rng,
                     const std::string& hr_ref = "");

// bit-exact replay of a recorded chain
Image replay(const Image& hr, const DegradationRecord& record);
Image replay_hr_target(const Image& hr, const DegradationRecord& record);

}  // namespace textsr
