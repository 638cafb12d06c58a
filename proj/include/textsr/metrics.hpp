#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "textsr/image.hpp"

namespace textsr {

// 10*log10(1/MSE) over all elements of [0,1] images, capped at 100 dB
double psnr(const Image& a, const Image& b);

// single-scale SSIM on the luminance channel: 11-tap Gaussian window with
// sigma 1.5, K1=0.01, K2=0.03, valid-region mean
double ssim(const Image& a, const Image& b);

// exact sequence match fraction
double seq_accuracy(const std::vector<std::vector<int>>& decoded,
                    const std::vector<std::vector<int>>& gt);

struct MetricsReport {
    double psnr_mean = 0;
    double ssim_mean = 0;
    double seq_accuracy = 0;
    nlohmann::json per_sample = nlohmann::json::array();

    nlohmann::json to_json() const;
};

}  // namespace textsr
