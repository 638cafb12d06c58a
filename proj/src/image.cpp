#include "textsr/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

namespace textsr {

void clip01(Image& im) {
    for (int64_t i = 0; i < im.numel(); ++i) im[i] = std::clamp(im[i], 0.0, 1.0);
}

ResizeMethod resize_method_from_string(const std::string& s) {
    if (s == "nearest") return ResizeMethod::kNearest;
    if (s == "bilinear") return ResizeMethod::kBilinear;
    if (s == "bicubic") return ResizeMethod::kBicubic;
    throw TensorError("unknown resize method: " + s);
}

std::string resize_method_name(ResizeMethod m) {
    switch (m) {
        case ResizeMethod::kNearest: return "nearest";
        case ResizeMethod::kBilinear: return "bilinear";
        case ResizeMethod::kBicubic: return "bicubic";
    }
    return "?";
}

namespace {

inline int64_t clampi(int64_t v, int64_t lo, int64_t hi) {
    return v < lo ? lo : (v > hi ? hi : v);
}

// Catmull-Rom weights
inline void cubic_weights(double f, double w[4]) {
    const double a = -0.5;
    const double f2 = f * f, f3 = f2 * f;
    w[0] = a * (f3 - 2 * f2 + f);
    w[1] = (a + 2) * f3 - (a + 3) * f2 + 1;
    w[2] = -(a + 2) * f3 + (2 * a + 3) * f2 - a * f;
    w[3] = -a * (f3 - f2);
}

}  // namespace

Image image_resize(const Image& im, int64_t out_h, int64_t out_w, ResizeMethod method) {
    TEXTSR_CHECK(out_h >= 1 && out_w >= 1, "resize output dims must be >= 1");
    const int64_t C = img_c(im), H = img_h(im), W = img_w(im);
    if (out_h == H && out_w == W) {
        // src coordinates land exactly on pixel centers
        return im;
    }
    Image out = make_image(C, out_h, out_w);
    const double sy = double(H) / double(out_h);
    const double sx = double(W) / double(out_w);
    for (int64_t c = 0; c < C; ++c) {
        const double* src = im.data() + c * H * W;
        double* dst = out.data() + c * out_h * out_w;
        for (int64_t y = 0; y < out_h; ++y) {
            const double fy = (double(y) + 0.5) * sy - 0.5;
            for (int64_t x = 0; x < out_w; ++x) {
                const double fx = (double(x) + 0.5) * sx - 0.5;
                double v = 0;
                switch (method) {
                    case ResizeMethod::kNearest: {
                        const int64_t iy = clampi(int64_t(std::floor(fy + 0.5)), 0, H - 1);
                        const int64_t ix = clampi(int64_t(std::floor(fx + 0.5)), 0, W - 1);
                        v = src[iy * W + ix];
                        break;
                    }
                    case ResizeMethod::kBilinear: {
                        const int64_t y0 = int64_t(std::floor(fy));
                        const int64_t x0 = int64_t(std::floor(fx));
                        const double wy = fy - double(y0), wx = fx - double(x0);
                        const int64_t ya = clampi(y0, 0, H - 1), yb = clampi(y0 + 1, 0, H - 1);
                        const int64_t xa = clampi(x0, 0, W - 1), xb = clampi(x0 + 1, 0, W - 1);
                        v = (1 - wy) * ((1 - wx) * src[ya * W + xa] + wx * src[ya * W + xb]) +
                            wy * ((1 - wx) * src[yb * W + xa] + wx * src[yb * W + xb]);
                        break;
                    }
                    case ResizeMethod::kBicubic: {
                        const int64_t y0 = int64_t(std::floor(fy));
                        const int64_t x0 = int64_t(std::floor(fx));
                        double wy[4], wx[4];
                        cubic_weights(fy - double(y0), wy);
                        cubic_weights(fx - double(x0), wx);
                        for (int dy = 0; dy < 4; ++dy) {
                            const int64_t yy = clampi(y0 - 1 + dy, 0, H - 1);
                            double row = 0;
                            for (int dx = 0; dx < 4; ++dx) {
                                const int64_t xx = clampi(x0 - 1 + dx, 0, W - 1);
                                row += wx[dx] * src[yy * W + xx];
                            }
                            v += wy[dy] * row;
                        }
                        break;
                    }
                }
                dst[y * out_w + x] = v;
            }
        }
    }
    return out;
}

Image luminance(const Image& im) {
    if (img_c(im) == 1) return im;
    TEXTSR_CHECK(img_c(im) == 3, "luminance expects 1 or 3 channels");
    const int64_t H = img_h(im), W = img_w(im);
    Image out = make_image(1, H, W);
    const double* r = im.data();
    const double* g = im.data() + H * W;
    const double* b = im.data() + 2 * H * W;
    for (int64_t i = 0; i < H * W; ++i)
        out[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
    return out;
}

Image quantize8(const Image& im) {
    Image out = im;
    for (int64_t i = 0; i < out.numel(); ++i) {
        const double q = std::floor(std::clamp(out[i], 0.0, 1.0) * 255.0 + 0.5);
        out[i] = q / 255.0;
    }
    return out;
}

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};

}  // namespace

void write_png(const std::string& path, const Image& im) {
    const int64_t C = img_c(im), H = img_h(im), W = img_w(im);
    TEXTSR_CHECK(C == 1 || C == 3, "write_png expects 1 or 3 channels");
    std::unique_ptr<FILE, FileCloser> fp(std::fopen(path.c_str(), "wb"));
    TEXTSR_CHECK(fp != nullptr, "cannot open for writing: " << path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    TEXTSR_CHECK(png, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw TensorError("libpng write error: " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, png_uint_32(W), png_uint_32(H), 8,
                 C == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<png_byte> row(size_t(W * C));
    for (int64_t y = 0; y < H; ++y) {
        for (int64_t x = 0; x < W; ++x)
            for (int64_t c = 0; c < C; ++c) {
                const double v = std::clamp(im.at(c, y, x), 0.0, 1.0);
                row[size_t(x * C + c)] = png_byte(std::floor(v * 255.0 + 0.5));
            }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image read_png(const std::string& path) {
    std::unique_ptr<FILE, FileCloser> fp(std::fopen(path.c_str(), "rb"));
    TEXTSR_CHECK(fp != nullptr, "cannot open: " << path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    TEXTSR_CHECK(png, "png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw TensorError("libpng read error: " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    const png_uint_32 W = png_get_image_width(png, info);
    const png_uint_32 H = png_get_image_height(png, info);
    const png_byte color = png_get_color_type(png, info);
    const png_byte depth = png_get_bit_depth(png, info);

    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const int64_t C = (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY) ? 1 : 3;
    Image out = make_image(C, H, W);
    std::vector<png_byte> row(size_t(png_get_rowbytes(png, info)));
    for (int64_t y = 0; y < int64_t(H); ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int64_t x = 0; x < int64_t(W); ++x)
            for (int64_t c = 0; c < C; ++c)
                out.at(c, y, x) = double(row[size_t(x * C + c)]) / 255.0;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

void write_mask_png(const std::string& path, const Image& mask) {
    Image scaled = mask;
    for (int64_t i = 0; i < scaled.numel(); ++i) scaled[i] = scaled[i] > 0.5 ? 1.0 : 0.0;
    write_png(path, scaled);
}

Image read_mask_png(const std::string& path) {
    Image im = read_png(path);
    TEXTSR_CHECK(img_c(im) == 1, "mask png must be grayscale: " << path);
    for (int64_t i = 0; i < im.numel(); ++i) im[i] = im[i] > 0.5 ? 1.0 : 0.0;
    return im;
}

}  // namespace textsr
