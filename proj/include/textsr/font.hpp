#pragma once

#include <array>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "textsr/tensor.hpp"

namespace textsr {

// x' = a x + b y + c ; y' = d x + e y + f
struct Affine {
    double a = 1, b = 0, c = 0, d = 0, e = 1, f = 0;

    std::array<double, 2> apply(double x, double y) const {
        return {a * x + b * y + c, d * x + e * y + f};
    }
    // this transform followed by m
    Affine then(const Affine& m) const {
        return {m.a * a + m.b * d, m.a * b + m.b * e, m.a * c + m.b * f + m.c,
                m.d * a + m.e * d, m.d * b + m.e * e, m.d * c + m.e * f + m.f};
    }
    double scale() const { return std::sqrt(std::abs(a * e - b * d)); }

    static Affine translate(double tx, double ty) { return {1, 0, tx, 0, 1, ty}; }
    static Affine scale_xy(double sx, double sy) { return {sx, 0, 0, 0, sy, 0}; }
};

// Glyph geometry in an em box: x grows right, y grows down, baseline at y=0.8.
// Stroke glyphs carry centerline polylines; outline glyphs carry closed
// contours filled by the non-zero winding rule.
struct GlyphOutline {
    std::vector<std::vector<std::array<double, 2>>> strokes;
    std::vector<std::vector<std::array<double, 2>>> contours;
    double advance = 0.7;

    bool empty() const { return strokes.empty() && contours.empty(); }
};

struct FontError : std::runtime_error {
    explicit FontError(const std::string& m) : std::runtime_error(m) {}
};

// A dataset font: either a seeded parametric variation of the built-in stroke
// glyphs (asset-free) or a TrueType file.
struct FontSource {
    enum class Kind { kProceduralBitmap, kOutlineFontFile };
    int font_id = 0;
    Kind kind = Kind::kProceduralBitmap;
    std::string path;   // outline fonts
    uint64_t seed = 0;  // procedural fonts
};

class Font {
public:
    static std::shared_ptr<Font> procedural(uint64_t seed);
    static std::shared_ptr<Font> load_ttf(const std::string& path);
    static std::shared_ptr<Font> realize(const FontSource& src);

    bool has_glyph(char32_t ch) const;
    // throws FontError naming the character when missing
    const GlyphOutline& glyph(char32_t ch) const;
    double advance(char32_t ch) const;

    // stroke half-width in em units (0 for outline fonts)
    double stroke_width() const { return stroke_width_; }
    bool is_outline() const { return outline_; }
    const std::string& name() const { return name_; }

private:
    friend struct TtfReader;
    std::map<char32_t, GlyphOutline> glyphs_;
    double stroke_width_ = 0.09;
    bool outline_ = false;
    std::string name_;
};

// Accumulates anti-aliased coverage (max blend) of one glyph into canvas[H,W].
// em_to_px maps glyph em coordinates to pixel coordinates.
void rasterize_glyph(const Font& font, char32_t ch, const Affine& em_to_px,
                     Tensor<double>& canvas);

// Tight ink bounds of the transformed glyph in pixel coordinates
struct GlyphBounds {
    double x1, y1, x2, y2;
};
GlyphBounds glyph_bounds(const Font& font, char32_t ch, const Affine& em_to_px);

}  // namespace textsr
