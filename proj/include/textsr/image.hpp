#pragma once

#include <string>

#include "textsr/tensor.hpp"

namespace textsr {

// Images are planar [C,H,W] double tensors with values in [0,1], C in {1,3}.
using Image = Tensor<double>;

inline Image make_image(int64_t c, int64_t h, int64_t w, double fill = 0.0) {
    return Image({c, h, w}, fill);
}
inline int64_t img_c(const Image& im) { return im.dim(0); }
inline int64_t img_h(const Image& im) { return im.dim(1); }
inline int64_t img_w(const Image& im) { return im.dim(2); }

void clip01(Image& im);

enum class ResizeMethod { kNearest, kBilinear, kBicubic };

ResizeMethod resize_method_from_string(const std::string& s);
std::string resize_method_name(ResizeMethod m);

// align_corners=false sampling; bicubic is Catmull-Rom (a=-0.5); values pass
// through unclipped (the degradation chain owns the [0,1] invariant)
Image image_resize(const Image& im, int64_t out_h, int64_t out_w, ResizeMethod method);

// Rec.601 luminance of an RGB image (identity for single-channel)
Image luminance(const Image& im);

// 8-bit PNG round trip; grayscale for C=1, RGB for C=3
void write_png(const std::string& path, const Image& im);
Image read_png(const std::string& path);

// binary mask IO: {0,1} in memory, {0,255} on disk
void write_mask_png(const std::string& path, const Image& mask);
Image read_mask_png(const std::string& path);

// quantize to the 8-bit grid without writing a file
Image quantize8(const Image& im);

}  // namespace textsr
