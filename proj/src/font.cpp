#include "textsr/font.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "textsr/rng.hpp"

namespace textsr {

namespace {

using Pt = std::array<double, 2>;
using Poly = std::vector<Pt>;

Poly pts(std::initializer_list<double> xy) {
    Poly p;
    auto it = xy.begin();
    while (it != xy.end()) {
        double x = *it++;
        double y = *it++;
        p.push_back({x, y});
    }
    return p;
}

// y grows down; angle 0 points right, 90 deg points down
Poly arc(double cx, double cy, double rx, double ry, double deg0, double deg1, int n = 14) {
    Poly p;
    for (int i = 0; i <= n; ++i) {
        const double a = (deg0 + (deg1 - deg0) * double(i) / double(n)) * 3.14159265358979 / 180.0;
        p.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
    }
    return p;
}

Poly join(std::initializer_list<Poly> parts) {
    Poly out;
    for (const auto& part : parts)
        for (const auto& q : part) out.push_back(q);
    return out;
}

struct GlyphDef {
    double advance;
    std::vector<Poly> strokes;
};

// Built-in stroke skeletons. Baseline y=0.8, cap top y=0.1, x-height top y=0.35.
std::map<char32_t, GlyphDef> build_base_glyphs() {
    std::map<char32_t, GlyphDef> g;

    g['0'] = {0.66, {arc(.33, .45, .24, .35, 0, 360)}};
    g['1'] = {0.66, {pts({.20, .26, .36, .10, .36, .80})}};
    g['2'] = {0.66, {join({arc(.33, .30, .21, .20, -180, 0), pts({.12, .80, .56, .80})})}};
    g['3'] = {0.66, {arc(.32, .28, .19, .18, -150, 80), arc(.32, .61, .21, .20, -80, 150)}};
    g['4'] = {0.66, {pts({.44, .80, .44, .10, .10, .56, .58, .56})}};
    g['5'] = {0.66, {join({pts({.52, .10, .15, .10, .13, .40}),
                           arc(.32, .57, .21, .23, -140, 140)})}};
    g['6'] = {0.66, {arc(.33, .585, .22, .215, 0, 360), pts({.50, .10, .32, .14, .18, .30, .13, .50})}};
    g['7'] = {0.66, {pts({.10, .10, .56, .10, .26, .80})}};
    g['8'] = {0.66, {arc(.33, .295, .175, .175, 0, 360), arc(.33, .615, .205, .185, 0, 360)}};
    g['9'] = {0.66, {arc(.33, .33, .21, .21, 0, 360), pts({.53, .36, .48, .62, .36, .80})}};

    g['A'] = {0.70, {pts({.08, .80, .33, .10, .58, .80}), pts({.19, .56, .47, .56})}};
    g['B'] = {0.70, {pts({.13, .10, .13, .80}),
                     join({pts({.13, .10, .36, .10}), arc(.36, .275, .17, .175, -90, 90),
                           pts({.13, .45})}),
                     join({pts({.13, .45, .38, .45}), arc(.38, .625, .19, .175, -90, 90),
                           pts({.13, .80})})}};
    g['C'] = {0.70, {arc(.35, .45, .25, .36, -40, -320)}};
    g['D'] = {0.70, {join({pts({.13, .80, .13, .10, .30, .10}), arc(.30, .45, .27, .35, -90, 90),
                           pts({.13, .80})})}};
    g['E'] = {0.70, {pts({.52, .10, .13, .10, .13, .80, .52, .80}), pts({.13, .45, .44, .45})}};
    g['F'] = {0.70, {pts({.52, .10, .13, .10, .13, .80}), pts({.13, .45, .42, .45})}};
    g['G'] = {0.70, {arc(.34, .45, .25, .36, -35, -320), pts({.37, .50, .58, .50, .58, .72})}};
    g['H'] = {0.70, {pts({.12, .10, .12, .80}), pts({.54, .10, .54, .80}),
                     pts({.12, .45, .54, .45})}};
    g['I'] = {0.70, {pts({.33, .10, .33, .80}), pts({.20, .10, .46, .10}),
                     pts({.20, .80, .46, .80})}};
    g['J'] = {0.70, {join({pts({.50, .10, .50, .60}), arc(.32, .60, .18, .20, 0, 130)})}};
    g['K'] = {0.70, {pts({.13, .10, .13, .80}), pts({.54, .10, .14, .50, .54, .80})}};
    g['L'] = {0.70, {pts({.13, .10, .13, .80, .54, .80})}};
    g['M'] = {0.70, {pts({.10, .80, .10, .10, .33, .52, .56, .10, .56, .80})}};
    g['N'] = {0.70, {pts({.11, .80, .11, .10, .55, .80, .55, .10})}};
    g['O'] = {0.70, {arc(.33, .45, .25, .36, 0, 360)}};
    g['P'] = {0.70, {join({pts({.13, .80, .13, .10, .36, .10}), arc(.36, .28, .19, .18, -90, 90),
                           pts({.13, .46})})}};
    g['Q'] = {0.70, {arc(.33, .45, .25, .36, 0, 360), pts({.40, .60, .58, .83})}};
    g['R'] = {0.70, {join({pts({.13, .80, .13, .10, .36, .10}), arc(.36, .28, .19, .18, -90, 90),
                           pts({.13, .46})}),
                     pts({.32, .46, .55, .80})}};
    g['S'] = {0.70, {pts({.52, .20, .42, .11, .24, .10, .14, .20, .15, .32, .26, .41, .40, .46,
                          .50, .55, .52, .67, .42, .78, .22, .80, .12, .70})}};
    g['T'] = {0.70, {pts({.10, .10, .56, .10}), pts({.33, .10, .33, .80})}};
    g['U'] = {0.70, {join({pts({.11, .10}), arc(.33, .58, .22, .22, 180, 0), pts({.55, .10})})}};
    g['V'] = {0.70, {pts({.10, .10, .33, .80, .56, .10})}};
    g['W'] = {0.70, {pts({.08, .10, .19, .80, .33, .34, .47, .80, .58, .10})}};
    g['X'] = {0.70, {pts({.11, .10, .55, .80}), pts({.55, .10, .11, .80})}};
    g['Y'] = {0.70, {pts({.10, .10, .33, .46, .56, .10}), pts({.33, .46, .33, .80})}};
    g['Z'] = {0.70, {pts({.11, .10, .55, .10, .11, .80, .55, .80})}};

    g['a'] = {0.62, {arc(.30, .575, .19, .22, 0, 360), pts({.49, .35, .49, .80})}};
    g['b'] = {0.62, {pts({.13, .10, .13, .80}), arc(.33, .575, .19, .22, 0, 360)}};
    g['c'] = {0.62, {arc(.32, .575, .19, .22, -40, -320)}};
    g['d'] = {0.62, {pts({.51, .10, .51, .80}), arc(.31, .575, .19, .22, 0, 360)}};
    g['e'] = {0.62, {arc(.30, .575, .19, .22, -15, -325), pts({.11, .53, .49, .53})}};
    g['f'] = {0.62, {pts({.44, .16, .36, .10, .27, .13, .24, .25, .24, .80}),
                     pts({.12, .37, .40, .37})}};
    g['g'] = {0.62, {arc(.30, .55, .19, .20, 0, 360),
                     pts({.49, .35, .49, .88, .40, .97, .22, .97, .13, .90})}};
    g['h'] = {0.62, {pts({.13, .10, .13, .80}),
                     pts({.13, .46, .20, .37, .33, .35, .43, .40, .46, .50, .46, .80})}};
    g['i'] = {0.62, {pts({.30, .35, .30, .80}), pts({.30, .17, .30, .21})}};
    g['j'] = {0.62, {pts({.36, .35, .36, .88, .28, .97, .15, .95}), pts({.36, .17, .36, .21})}};
    g['k'] = {0.62, {pts({.13, .10, .13, .80}), pts({.45, .35, .14, .58, .45, .80})}};
    g['l'] = {0.62, {pts({.31, .10, .31, .80})}};
    g['m'] = {0.62, {pts({.10, .80, .10, .35}),
                     pts({.10, .46, .16, .37, .25, .36, .29, .44, .29, .80}),
                     pts({.29, .46, .35, .37, .44, .36, .49, .44, .49, .80})}};
    g['n'] = {0.62, {pts({.13, .80, .13, .35}),
                     pts({.13, .47, .20, .37, .33, .35, .43, .41, .46, .50, .46, .80})}};
    g['o'] = {0.62, {arc(.31, .575, .20, .22, 0, 360)}};
    g['p'] = {0.62, {pts({.13, .35, .13, .97}), arc(.33, .575, .19, .22, 0, 360)}};
    g['q'] = {0.62, {pts({.51, .35, .51, .97}), arc(.31, .575, .19, .22, 0, 360)}};
    g['r'] = {0.62, {pts({.15, .35, .15, .80}), pts({.15, .50, .22, .39, .33, .35, .44, .39})}};
    g['s'] = {0.62, {pts({.45, .41, .35, .35, .22, .36, .16, .44, .21, .53, .33, .56, .43, .61,
                          .45, .70, .38, .78, .24, .80, .14, .74})}};
    g['t'] = {0.62, {pts({.27, .15, .27, .70, .31, .79, .44, .77}), pts({.14, .36, .43, .36})}};
    g['u'] = {0.62, {pts({.12, .35, .12, .66, .17, .77, .30, .80, .41, .73, .45, .62}),
                     pts({.45, .35, .45, .80})}};
    g['v'] = {0.62, {pts({.10, .35, .29, .80, .48, .35})}};
    g['w'] = {0.62, {pts({.07, .35, .17, .80, .29, .44, .41, .80, .51, .35})}};
    g['x'] = {0.62, {pts({.10, .35, .47, .80}), pts({.47, .35, .10, .80})}};
    g['y'] = {0.62, {pts({.10, .35, .30, .80}), pts({.50, .35, .28, .90, .18, .97})}};
    g['z'] = {0.62, {pts({.10, .35, .47, .35, .10, .80, .47, .80})}};

    g['.'] = {0.34, {pts({.17, .75, .17, .80})}};
    g[','] = {0.34, {pts({.19, .73, .17, .80, .11, .90})}};
    g[':'] = {0.34, {pts({.17, .41, .17, .46}), pts({.17, .74, .17, .79})}};
    g[';'] = {0.34, {pts({.17, .41, .17, .46}), pts({.19, .72, .17, .79, .11, .89})}};
    g['!'] = {0.34, {pts({.17, .10, .17, .60}), pts({.17, .75, .17, .80})}};
    g['?'] = {0.56, {pts({.09, .24, .13, .13, .27, .08, .40, .12, .45, .24, .40, .36, .28, .43,
                          .28, .56}),
                     pts({.28, .73, .28, .78})}};
    return g;
}

const std::map<char32_t, GlyphDef>& base_glyphs() {
    static const std::map<char32_t, GlyphDef> g = build_base_glyphs();
    return g;
}

}  // namespace

std::shared_ptr<Font> Font::procedural(uint64_t seed) {
    auto font = std::make_shared<Font>();
    font->outline_ = false;

    double width, slant, xscale;
    switch (seed) {
        case 0: width = 0.085, slant = 0.00, xscale = 1.00; break;   // regular
        case 1: width = 0.145, slant = 0.00, xscale = 1.02; break;   // bold
        case 2: width = 0.085, slant = 0.20, xscale = 0.98; break;   // italic
        case 3: width = 0.070, slant = 0.00, xscale = 0.80; break;   // condensed
        default: {
            Rng rng(hash_combine(0xf047u, seed));
            width = rng.uniform(0.06, 0.15);
            slant = rng.uniform(-0.06, 0.22);
            xscale = rng.uniform(0.78, 1.08);
        }
    }
    font->stroke_width_ = width;
    font->name_ = "procedural-" + std::to_string(seed);

    for (const auto& [ch, def] : base_glyphs()) {
        GlyphOutline out;
        out.advance = def.advance * xscale;
        for (const auto& stroke : def.strokes) {
            Poly p;
            p.reserve(stroke.size());
            for (const auto& q : stroke) {
                // shear about the baseline, then compress horizontally
                const double x = (q[0] + (0.8 - q[1]) * slant) * xscale;
                p.push_back({x, q[1]});
            }
            out.strokes.push_back(std::move(p));
        }
        font->glyphs_[ch] = std::move(out);
    }
    return font;
}

std::shared_ptr<Font> Font::realize(const FontSource& src) {
    if (src.kind == FontSource::Kind::kOutlineFontFile) return load_ttf(src.path);
    return procedural(src.seed);
}

bool Font::has_glyph(char32_t ch) const {
    auto it = glyphs_.find(ch);
    return it != glyphs_.end() && !it->second.empty();
}

const GlyphOutline& Font::glyph(char32_t ch) const {
    auto it = glyphs_.find(ch);
    if (it == glyphs_.end() || it->second.empty())
        throw FontError("font '" + name_ + "' has no glyph for character '" +
                        std::string(1, char(ch)) + "'");
    return it->second;
}

double Font::advance(char32_t ch) const { return glyph(ch).advance; }

// ---- TrueType loading ----

struct TtfReader {
    std::vector<unsigned char> bytes;
    std::map<std::string, std::pair<uint32_t, uint32_t>> tables;  // tag -> (offset,len)
    uint16_t units_per_em = 1000;
    int16_t index_to_loc = 0;
    uint16_t num_glyphs = 0;
    uint16_t num_hmetrics = 0;
    uint32_t glyf_off = 0, loca_off = 0, hmtx_off = 0, cmap_off = 0;

    uint8_t u8(uint32_t o) const { return bytes.at(o); }
    uint16_t u16(uint32_t o) const { return uint16_t(bytes.at(o)) << 8 | bytes.at(o + 1); }
    int16_t s16(uint32_t o) const { return int16_t(u16(o)); }
    uint32_t u32(uint32_t o) const {
        return uint32_t(u16(o)) << 16 | u16(o + 2);
    }

    void load(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw FontError("cannot open font file: " + path);
        bytes.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
        if (bytes.size() < 12) throw FontError("truncated font file: " + path);
        const uint32_t ver = u32(0);
        if (ver != 0x00010000 && ver != 0x74727565)
            throw FontError("unsupported font format (need TrueType): " + path);
        const uint16_t n = u16(4);
        for (uint16_t i = 0; i < n; ++i) {
            const uint32_t rec = 12 + 16u * i;
            std::string tag(reinterpret_cast<const char*>(&bytes[rec]), 4);
            tables[tag] = {u32(rec + 8), u32(rec + 12)};
        }
        auto need = [&](const char* tag) {
            auto it = tables.find(tag);
            if (it == tables.end()) throw FontError(std::string("font missing table ") + tag);
            return it->second.first;
        };
        const uint32_t head = need("head");
        units_per_em = u16(head + 18);
        index_to_loc = s16(head + 50);
        num_glyphs = u16(need("maxp") + 4);
        num_hmetrics = u16(need("hhea") + 34);
        glyf_off = need("glyf");
        loca_off = need("loca");
        hmtx_off = need("hmtx");
        cmap_off = need("cmap");
    }

    uint32_t cmap_lookup(char32_t ch) const {
        const uint16_t n = u16(cmap_off + 2);
        uint32_t sub = 0;
        for (uint16_t i = 0; i < n; ++i) {
            const uint32_t rec = cmap_off + 4 + 8u * i;
            const uint16_t plat = u16(rec), enc = u16(rec + 2);
            if ((plat == 3 && (enc == 1 || enc == 10)) || plat == 0) {
                sub = cmap_off + u32(rec + 4);
                if (u16(sub) == 4) break;
            }
        }
        if (!sub || u16(sub) != 4) throw FontError("no usable cmap format-4 subtable");
        const uint16_t segx2 = u16(sub + 6);
        const uint32_t ends = sub + 14, starts = ends + segx2 + 2, deltas = starts + segx2,
                       ranges = deltas + segx2;
        if (ch > 0xFFFF) return 0;
        for (uint16_t s = 0; s < segx2; s += 2) {
            const uint16_t end = u16(ends + s);
            if (ch <= end) {
                const uint16_t start = u16(starts + s);
                if (ch < start) return 0;
                const uint16_t delta = u16(deltas + s);
                const uint16_t range = u16(ranges + s);
                if (range == 0) return uint16_t(ch + delta);
                const uint32_t gi_off = ranges + s + range + 2u * (ch - start);
                const uint16_t gi = u16(gi_off);
                return gi == 0 ? 0 : uint16_t(gi + delta);
            }
        }
        return 0;
    }

    std::pair<uint32_t, uint32_t> glyph_span(uint32_t gid) const {
        if (index_to_loc == 0) {
            return {glyf_off + 2u * u16(loca_off + 2 * gid),
                    glyf_off + 2u * u16(loca_off + 2 * gid + 2)};
        }
        return {glyf_off + u32(loca_off + 4 * gid), glyf_off + u32(loca_off + 4 * gid + 4)};
    }

    double advance_of(uint32_t gid) const {
        const uint32_t i = gid < num_hmetrics ? gid : num_hmetrics - 1;
        return double(u16(hmtx_off + 4u * i));
    }

    struct RawPt {
        double x, y;
        bool on;
    };

    // contours in font units, y up
    void glyph_contours(uint32_t gid, std::vector<std::vector<RawPt>>& out, int depth) const {
        if (depth > 5) return;
        auto [o, end] = glyph_span(gid);
        if (o >= end) return;  // empty glyph
        const int16_t ncont = s16(o);
        if (ncont >= 0) {
            std::vector<uint16_t> ends(size_t(ncont));
            uint32_t p = o + 10;
            for (int i = 0; i < ncont; ++i, p += 2) ends[size_t(i)] = u16(p);
            const uint16_t npts = ncont ? ends.back() + 1 : 0;
            p += 2 + u16(p);  // skip instructions
            std::vector<uint8_t> flags;
            flags.reserve(npts);
            while (flags.size() < npts) {
                const uint8_t fl = u8(p++);
                flags.push_back(fl);
                if (fl & 8) {
                    uint8_t rep = u8(p++);
                    while (rep--) flags.push_back(fl);
                }
            }
            std::vector<double> xs(npts), ys(npts);
            double v = 0;
            for (uint16_t i = 0; i < npts; ++i) {
                const uint8_t fl = flags[i];
                if (fl & 2) {
                    const uint8_t d = u8(p++);
                    v += (fl & 16) ? d : -double(d);
                } else if (!(fl & 16)) {
                    v += s16(p);
                    p += 2;
                }
                xs[i] = v;
            }
            v = 0;
            for (uint16_t i = 0; i < npts; ++i) {
                const uint8_t fl = flags[i];
                if (fl & 4) {
                    const uint8_t d = u8(p++);
                    v += (fl & 32) ? d : -double(d);
                } else if (!(fl & 32)) {
                    v += s16(p);
                    p += 2;
                }
                ys[i] = v;
            }
            uint16_t first = 0;
            for (int c = 0; c < ncont; ++c) {
                const uint16_t last = ends[size_t(c)];
                std::vector<RawPt> contour;
                for (uint16_t i = first; i <= last; ++i)
                    contour.push_back({xs[i], ys[i], (flags[i] & 1) != 0});
                if (!contour.empty()) out.push_back(std::move(contour));
                first = last + 1;
            }
        } else {
            // composite glyph
            uint32_t p = o + 10;
            bool more = true;
            while (more) {
                const uint16_t fl = u16(p);
                const uint16_t cgid = u16(p + 2);
                p += 4;
                double dx = 0, dy = 0;
                if (fl & 1) {  // words
                    if (fl & 2) {
                        dx = s16(p);
                        dy = s16(p + 2);
                    }
                    p += 4;
                } else {
                    if (fl & 2) {
                        dx = int8_t(u8(p));
                        dy = int8_t(u8(p + 1));
                    }
                    p += 2;
                }
                double m[4] = {1, 0, 0, 1};
                auto f2d = [&](uint32_t q) { return double(s16(q)) / 16384.0; };
                if (fl & 8) {
                    m[0] = m[3] = f2d(p);
                    p += 2;
                } else if (fl & 0x40) {
                    m[0] = f2d(p);
                    m[3] = f2d(p + 2);
                    p += 4;
                } else if (fl & 0x80) {
                    m[0] = f2d(p);
                    m[1] = f2d(p + 2);
                    m[2] = f2d(p + 4);
                    m[3] = f2d(p + 6);
                    p += 8;
                }
                std::vector<std::vector<RawPt>> sub;
                glyph_contours(cgid, sub, depth + 1);
                for (auto& contour : sub) {
                    for (auto& q : contour) {
                        const double x = m[0] * q.x + m[2] * q.y + dx;
                        const double y = m[1] * q.x + m[3] * q.y + dy;
                        q.x = x;
                        q.y = y;
                    }
                    out.push_back(std::move(contour));
                }
                more = (fl & 0x20) != 0;
            }
        }
    }
};

std::shared_ptr<Font> Font::load_ttf(const std::string& path) {
    TtfReader r;
    r.load(path);

    auto font = std::make_shared<Font>();
    font->outline_ = true;
    font->stroke_width_ = 0;
    font->name_ = path;

    const double es = 0.95 / double(r.units_per_em);  // em scale into the glyph box
    const double baseline = 0.8;

    // charset coverage is decided lazily per requested character
    for (char32_t ch = 0x21; ch < 0x7f; ++ch) {
        const uint32_t gid = r.cmap_lookup(ch);
        if (gid == 0) continue;
        std::vector<std::vector<TtfReader::RawPt>> raw;
        r.glyph_contours(gid, raw, 0);
        if (raw.empty()) continue;

        GlyphOutline out;
        out.advance = r.advance_of(gid) * es;
        for (const auto& contour : raw) {
            // normalize start to an on-curve point (synthesize midpoint if needed)
            std::vector<TtfReader::RawPt> c = contour;
            size_t start = c.size();
            for (size_t i = 0; i < c.size(); ++i)
                if (c[i].on) {
                    start = i;
                    break;
                }
            std::vector<TtfReader::RawPt> ring;
            if (start == c.size()) {
                ring.push_back({(c[0].x + c.back().x) / 2, (c[0].y + c.back().y) / 2, true});
                ring.insert(ring.end(), c.begin(), c.end());
            } else {
                ring.insert(ring.end(), c.begin() + long(start), c.end());
                ring.insert(ring.end(), c.begin(), c.begin() + long(start));
            }
            ring.push_back(ring.front());

            std::vector<Pt> poly;
            auto emit = [&](double x, double y) {
                poly.push_back({x * es, baseline - y * es});
            };
            size_t i = 0;
            emit(ring[0].x, ring[0].y);
            while (i + 1 < ring.size()) {
                const auto& next = ring[i + 1];
                if (next.on) {
                    emit(next.x, next.y);
                    ++i;
                    continue;
                }
                // quadratic with control "next"; implicit on-curve midpoints
                TtfReader::RawPt ctrl = next;
                TtfReader::RawPt from = ring[i];
                size_t j = i + 1;
                while (true) {
                    TtfReader::RawPt to;
                    const bool have_next = j + 1 < ring.size();
                    if (have_next && !ring[j + 1].on) {
                        to = {(ctrl.x + ring[j + 1].x) / 2, (ctrl.y + ring[j + 1].y) / 2, true};
                    } else if (have_next) {
                        to = ring[j + 1];
                    } else {
                        to = ring.front();
                    }
                    for (int k = 1; k <= 8; ++k) {
                        const double t = double(k) / 8.0;
                        const double u = 1 - t;
                        emit(u * u * from.x + 2 * u * t * ctrl.x + t * t * to.x,
                             u * u * from.y + 2 * u * t * ctrl.y + t * t * to.y);
                    }
                    from = to;
                    if (!have_next || ring[j + 1].on) {
                        i = j + 1;
                        break;
                    }
                    ctrl = ring[j + 1];
                    j += 1;
                }
            }
            out.contours.push_back(std::move(poly));
        }
        font->glyphs_[ch] = std::move(out);
    }
    if (font->glyphs_.empty()) throw FontError("font has no usable glyphs: " + path);
    return font;
}

// ---- rasterization ----

namespace {

double seg_dist(double px, double py, const Pt& a, const Pt& b) {
    const double vx = b[0] - a[0], vy = b[1] - a[1];
    const double wx = px - a[0], wy = py - a[1];
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0 ? (wx * vx + wy * vy) / len2 : 0;
    t = std::clamp(t, 0.0, 1.0);
    const double dx = px - (a[0] + t * vx), dy = py - (a[1] + t * vy);
    return std::sqrt(dx * dx + dy * dy);
}

void raster_strokes(const GlyphOutline& glyph, const Affine& tf, double radius_px,
                    Tensor<double>& canvas) {
    const int64_t H = canvas.dim(0), W = canvas.dim(1);
    for (const auto& stroke : glyph.strokes) {
        Poly p;
        p.reserve(stroke.size());
        double x1 = 1e30, y1 = 1e30, x2 = -1e30, y2 = -1e30;
        for (const auto& q : stroke) {
            auto t = tf.apply(q[0], q[1]);
            x1 = std::min(x1, t[0]);
            y1 = std::min(y1, t[1]);
            x2 = std::max(x2, t[0]);
            y2 = std::max(y2, t[1]);
            p.push_back({t[0], t[1]});
        }
        const int64_t px1 = std::max<int64_t>(0, int64_t(std::floor(x1 - radius_px - 1)));
        const int64_t py1 = std::max<int64_t>(0, int64_t(std::floor(y1 - radius_px - 1)));
        const int64_t px2 = std::min(W - 1, int64_t(std::ceil(x2 + radius_px + 1)));
        const int64_t py2 = std::min(H - 1, int64_t(std::ceil(y2 + radius_px + 1)));
        for (int64_t y = py1; y <= py2; ++y)
            for (int64_t x = px1; x <= px2; ++x) {
                const double cx = double(x) + 0.5, cy = double(y) + 0.5;
                double d = 1e30;
                for (size_t i = 0; i + 1 < p.size(); ++i)
                    d = std::min(d, seg_dist(cx, cy, p[i], p[i + 1]));
                if (p.size() == 1) d = seg_dist(cx, cy, p[0], p[0]);
                const double cov = std::clamp(0.5 + radius_px - d, 0.0, 1.0);
                if (cov > canvas.at(y, x)) canvas.at(y, x) = cov;
            }
    }
}

void raster_contours(const GlyphOutline& glyph, const Affine& tf, Tensor<double>& canvas) {
    const int64_t H = canvas.dim(0), W = canvas.dim(1);
    std::vector<Poly> polys;
    double y1 = 1e30, y2 = -1e30;
    for (const auto& contour : glyph.contours) {
        Poly p;
        p.reserve(contour.size());
        for (const auto& q : contour) {
            auto t = tf.apply(q[0], q[1]);
            y1 = std::min(y1, t[1]);
            y2 = std::max(y2, t[1]);
            p.push_back({t[0], t[1]});
        }
        if (p.size() >= 3) polys.push_back(std::move(p));
    }
    if (polys.empty()) return;

    const int64_t row1 = std::max<int64_t>(0, int64_t(std::floor(y1)));
    const int64_t row2 = std::min(H - 1, int64_t(std::ceil(y2)));
    const int kSub = 3;
    std::vector<std::pair<double, int>> xs;
    std::vector<double> rowcov(size_t(W));
    for (int64_t row = row1; row <= row2; ++row) {
        std::fill(rowcov.begin(), rowcov.end(), 0.0);
        for (int s = 0; s < kSub; ++s) {
            const double sy = double(row) + (double(s) + 0.5) / double(kSub);
            xs.clear();
            for (const auto& p : polys)
                for (size_t i = 0; i + 1 < p.size(); ++i) {
                    const double ya = p[i][1], yb = p[i + 1][1];
                    if (ya == yb) continue;
                    if ((ya <= sy && sy < yb) || (yb <= sy && sy < ya)) {
                        const double t = (sy - ya) / (yb - ya);
                        xs.emplace_back(p[i][0] + t * (p[i + 1][0] - p[i][0]), ya < yb ? 1 : -1);
                    }
                }
            std::sort(xs.begin(), xs.end());
            int winding = 0;
            for (size_t i = 0; i + 1 <= xs.size(); ++i) {
                winding += xs[i].second;
                if (winding != 0 && i + 1 < xs.size()) {
                    const double xa = std::max(0.0, xs[i].first);
                    const double xb = std::min(double(W), xs[i + 1].first);
                    if (xb <= xa) continue;
                    int64_t pa = int64_t(std::floor(xa)), pb = int64_t(std::ceil(xb)) - 1;
                    for (int64_t px = pa; px <= pb && px < W; ++px) {
                        const double cov = std::min(double(px + 1), xb) - std::max(double(px), xa);
                        if (cov > 0) rowcov[size_t(px)] += cov / double(kSub);
                    }
                }
            }
        }
        for (int64_t px = 0; px < W; ++px) {
            const double cov = std::min(1.0, rowcov[size_t(px)]);
            if (cov > canvas.at(row, px)) canvas.at(row, px) = cov;
        }
    }
}

}  // namespace

void rasterize_glyph(const Font& font, char32_t ch, const Affine& em_to_px,
                     Tensor<double>& canvas) {
    TEXTSR_CHECK(canvas.ndim() == 2, "rasterize_glyph expects a 2D canvas");
    const GlyphOutline& g = font.glyph(ch);
    if (!g.strokes.empty())
        raster_strokes(g, em_to_px, 0.5 * font.stroke_width() * em_to_px.scale(), canvas);
    if (!g.contours.empty()) raster_contours(g, em_to_px, canvas);
}

GlyphBounds glyph_bounds(const Font& font, char32_t ch, const Affine& em_to_px) {
    const GlyphOutline& g = font.glyph(ch);
    double x1 = 1e30, y1 = 1e30, x2 = -1e30, y2 = -1e30;
    auto eat = [&](const Poly& poly) {
        for (const auto& q : poly) {
            auto t = em_to_px.apply(q[0], q[1]);
            x1 = std::min(x1, t[0]);
            y1 = std::min(y1, t[1]);
            x2 = std::max(x2, t[0]);
            y2 = std::max(y2, t[1]);
        }
    };
    for (const auto& s : g.strokes) eat(s);
    for (const auto& c : g.contours) eat(c);
    const double r = g.strokes.empty() ? 0.0 : 0.5 * font.stroke_width() * em_to_px.scale();
    return {x1 - r, y1 - r, x2 + r, y2 + r};
}

}  // namespace textsr
