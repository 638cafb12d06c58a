#include "textsr/textgen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace textsr {

// ---- utf8 ----

std::vector<char32_t> decode_utf8(const std::string& s) {
    std::vector<char32_t> out;
    size_t i = 0;
    while (i < s.size()) {
        const unsigned char c = (unsigned char)s[i];
        char32_t cp = 0;
        int extra = 0;
        if (c < 0x80) {
            cp = c;
        } else if ((c >> 5) == 0x6) {
            cp = c & 0x1f;
            extra = 1;
        } else if ((c >> 4) == 0xe) {
            cp = c & 0x0f;
            extra = 2;
        } else if ((c >> 3) == 0x1e) {
            cp = c & 0x07;
            extra = 3;
        } else {
            throw TensorError("invalid utf-8 byte");
        }
        TEXTSR_CHECK(i + size_t(extra) < s.size(), "truncated utf-8 sequence");
        for (int k = 0; k < extra; ++k) cp = (cp << 6) | (char32_t(s[++i]) & 0x3f);
        out.push_back(cp);
        ++i;
    }
    return out;
}

std::string encode_utf8(const std::vector<char32_t>& cs) {
    std::string out;
    for (char32_t cp : cs) {
        if (cp < 0x80) {
            out += char(cp);
        } else if (cp < 0x800) {
            out += char(0xc0 | (cp >> 6));
            out += char(0x80 | (cp & 0x3f));
        } else if (cp < 0x10000) {
            out += char(0xe0 | (cp >> 12));
            out += char(0x80 | ((cp >> 6) & 0x3f));
            out += char(0x80 | (cp & 0x3f));
        } else {
            out += char(0xf0 | (cp >> 18));
            out += char(0x80 | ((cp >> 12) & 0x3f));
            out += char(0x80 | ((cp >> 6) & 0x3f));
            out += char(0x80 | (cp & 0x3f));
        }
    }
    return out;
}

// ---- Charset ----

Charset::Charset(std::vector<char32_t> chars) : chars_(std::move(chars)) {
    TEXTSR_CHECK(chars_.size() >= 2, "charset needs at least 2 characters");
    std::set<char32_t> seen;
    for (char32_t c : chars_)
        TEXTSR_CHECK(seen.insert(c).second, "duplicate character in charset");
}

Charset Charset::default_charset() {
    std::string s = "0123456789";
    for (char c = 'A'; c <= 'Z'; ++c) s += c;
    for (char c = 'a'; c <= 'z'; ++c) s += c;
    s += ".,:;!?";
    return from_string(s);
}

Charset Charset::from_string(const std::string& utf8) { return Charset(decode_utf8(utf8)); }

Charset Charset::from_file(const std::string& path) {
    std::ifstream f(path);
    TEXTSR_CHECK(f.good(), "cannot open charset file: " << path);
    std::vector<char32_t> chars;
    std::string line;
    while (std::getline(f, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (line.empty()) continue;
        auto cps = decode_utf8(line);
        chars.push_back(cps[0]);
    }
    return Charset(std::move(chars));
}

std::optional<int> Charset::index_of(char32_t ch) const {
    for (size_t i = 0; i < chars_.size(); ++i)
        if (chars_[i] == ch) return int(i);
    return std::nullopt;
}

std::string Charset::to_utf8() const { return encode_utf8(chars_); }

uint64_t Charset::hash() const {
    uint64_t h = 0xc5a1;
    for (char32_t c : chars_) h = hash_combine(h, uint64_t(c));
    return h;
}

// ---- FontSet ----

FontSet FontSet::builtin(int count) {
    TEXTSR_CHECK(count >= 1, "need at least one font");
    FontSet fs;
    for (int i = 0; i < count; ++i) {
        FontSource src;
        src.font_id = i;
        src.kind = FontSource::Kind::kProceduralBitmap;
        src.seed = uint64_t(i);
        fs.sources.push_back(src);
        fs.fonts.push_back(Font::realize(src));
    }
    return fs;
}

FontSet FontSet::from_spec(const std::string& spec) {
    FontSet fs;
    std::stringstream ss(spec);
    std::string item;
    auto push = [&fs](FontSource src) {
        src.font_id = int(fs.fonts.size());
        fs.sources.push_back(src);
        fs.fonts.push_back(Font::realize(src));
    };
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        if (item.rfind("builtin:", 0) == 0) {
            const int n = std::stoi(item.substr(8));
            for (int i = 0; i < n; ++i) {
                FontSource src;
                src.kind = FontSource::Kind::kProceduralBitmap;
                src.seed = uint64_t(i);
                push(src);
            }
        } else if (item.rfind("seed:", 0) == 0) {
            FontSource src;
            src.kind = FontSource::Kind::kProceduralBitmap;
            src.seed = std::stoull(item.substr(5));
            push(src);
        } else if (item.rfind("ttf:", 0) == 0) {
            FontSource src;
            src.kind = FontSource::Kind::kOutlineFontFile;
            src.path = item.substr(4);
            push(src);
        } else {
            throw TensorError("bad font spec item: " + item);
        }
    }
    TEXTSR_CHECK(!fs.fonts.empty(), "font spec produced no fonts: " << spec);
    return fs;
}

void FontSet::validate(const Charset& charset) const {
    for (size_t f = 0; f < fonts.size(); ++f)
        for (char32_t ch : charset.chars()) {
            if (!fonts[f]->has_glyph(ch))
                throw FontError("font '" + fonts[f]->name() + "' has no glyph for character '" +
                                encode_utf8({ch}) + "'");
        }
}

// ---- sampling ----

std::vector<int> sample_text(const std::vector<std::string>& corpus, Rng& rng,
                             const Charset& charset, const TextgenConfig& cfg) {
    if (cfg.random_text || corpus.empty()) {
        TEXTSR_CHECK(cfg.random_text, "corpus empty and random mode disabled");
        const int n = int(rng.uniform_int(1, cfg.n_max));
        std::vector<int> out;
        for (int i = 0; i < n; ++i) out.push_back(int(rng.uniform_int(0, charset.size() - 1)));
        return out;
    }
    for (int attempt = 0; attempt < cfg.retry_limit; ++attempt) {
        const auto& line = corpus[size_t(rng.uniform_int(0, int64_t(corpus.size()) - 1))];
        std::vector<int> out;
        for (char32_t ch : decode_utf8(line)) {
            if (auto idx = charset.index_of(ch)) {
                out.push_back(*idx);
                if (int(out.size()) >= cfg.n_max) break;
            }
        }
        if (!out.empty()) return out;
    }
    throw TensorError("sample_text: no usable line after " + std::to_string(cfg.retry_limit) +
                      " attempts");
}

RenderStyle sample_style(int n_chars, int font_id, Rng& rng, const TextgenConfig& cfg,
                         const FontSet& fonts) {
    RenderStyle st;
    st.font_id = font_id;
    st.font_px = rng.uniform(cfg.font_px_min, cfg.font_px_max);
    st.tracking_px = rng.uniform(cfg.tracking_min, cfg.tracking_max);
    st.rot_deg = rng.uniform(-cfg.rot_jitter_deg, cfg.rot_jitter_deg);
    st.shear = rng.uniform(-cfg.shear_jitter, cfg.shear_jitter);
    st.margin_px = rng.uniform(6.0, 14.0);
    for (int c = 0; c < 3; ++c) st.bg[size_t(c)] = rng.uniform(0.0, 1.0);
    auto lum = [](const std::array<double, 3>& c) {
        return 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2];
    };
    for (int tries = 0; tries < 64; ++tries) {
        for (int c = 0; c < 3; ++c) st.fg[size_t(c)] = rng.uniform(0.0, 1.0);
        if (std::abs(lum(st.fg) - lum(st.bg)) >= cfg.min_contrast) break;
    }
    if (std::abs(lum(st.fg) - lum(st.bg)) < cfg.min_contrast) {
        // force contrast rather than loop forever on an unlucky stream
        const double target = lum(st.bg) > 0.5 ? 0.05 : 0.95;
        st.fg = {target, target, target};
    }
    for (int i = 0; i < n_chars; ++i) {
        st.char_scale.push_back(1.0 + rng.uniform(-cfg.char_scale_jitter, cfg.char_scale_jitter));
        st.char_dy.push_back(rng.uniform(-cfg.char_dy_jitter, cfg.char_dy_jitter));
    }
    if (cfg.bg_images) {
        std::vector<std::string> files;
        for (const auto& e : std::filesystem::directory_iterator(cfg.bg_dir))
            if (e.path().extension() == ".png") files.push_back(e.path().string());
        std::sort(files.begin(), files.end());
        TEXTSR_CHECK(!files.empty(), "bg_images enabled but no .png in " << cfg.bg_dir);
        st.bg_image_path = files[size_t(rng.uniform_int(0, int64_t(files.size()) - 1))];
        st.bg_crop_seed = rng.next_u64();
    }
    (void)fonts;
    return st;
}

// ---- rendering ----

namespace {

Affine line_jitter(double rot_deg, double shear, double cx, double cy) {
    const double th = rot_deg * 3.14159265358979 / 180.0;
    const double c = std::cos(th), s = std::sin(th);
    // shear then rotate, both about (cx,cy)
    const Affine sh{1, shear, 0, 0, 1, 0};
    const Affine rot{c, -s, 0, s, c, 0};
    return Affine::translate(-cx, -cy).then(sh).then(rot).then(Affine::translate(cx, cy));
}

Image solid_or_crop_background(const RenderStyle& st, int64_t H, int64_t W, int64_t content_w) {
    Image bg = make_image(3, H, W, 0.0);
    if (st.bg_image_path.empty()) {
        for (int c = 0; c < 3; ++c)
            for (int64_t y = 0; y < H; ++y)
                for (int64_t x = 0; x < content_w; ++x) bg.at(c, y, x) = st.bg[size_t(c)];
        return bg;
    }
    Image src = read_png(st.bg_image_path);
    Rng rng(st.bg_crop_seed);
    const double up = rng.uniform(4.0, 16.0);
    const int64_t ch = std::max<int64_t>(2, int64_t(std::ceil(double(H) / up)));
    const int64_t cw = std::max<int64_t>(2, int64_t(std::ceil(double(content_w) / up)));
    const int64_t sh = img_h(src), sw = img_w(src);
    const int64_t y0 = sh > ch ? rng.uniform_int(0, sh - ch - 1) : 0;
    const int64_t x0 = sw > cw ? rng.uniform_int(0, sw - cw - 1) : 0;
    Image crop = make_image(img_c(src), std::min(ch, sh), std::min(cw, sw));
    for (int64_t c = 0; c < img_c(src); ++c)
        for (int64_t y = 0; y < img_h(crop); ++y)
            for (int64_t x = 0; x < img_w(crop); ++x)
                crop.at(c, y, x) = src.at(c, y0 + y, x0 + x);
    Image up_img = image_resize(crop, H, content_w, ResizeMethod::kBicubic);
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < content_w; ++x)
                bg.at(c, y, x) = std::clamp(up_img.at(img_c(src) == 1 ? 0 : c, y, x), 0.0, 1.0);
    return bg;
}

}  // namespace

TextSample render_text_image(const std::vector<int>& text, const Charset& charset,
                             const FontSet& fonts, const RenderStyle& style,
                             const TextgenConfig& cfg) {
    const int n = int(text.size());
    TEXTSR_CHECK(n >= 1 && n <= cfg.n_max, "text length " << n << " outside [1," << cfg.n_max << "]");
    TEXTSR_CHECK(style.font_id >= 0 && style.font_id < fonts.count(), "font_id out of range");
    TEXTSR_CHECK(int(style.char_scale.size()) >= n && int(style.char_dy.size()) >= n,
                 "style per-character parameter count mismatch");
    TEXTSR_CHECK(cfg.height == 128, "HR height is fixed at 128");
    const Font& font = *fonts.fonts[size_t(style.font_id)];
    const int64_t H = cfg.height;

    // layout (pre-jitter)
    std::vector<Affine> place(size_t(n));
    double cursor = style.margin_px;
    const double baseline = double(H) / 2.0 + 0.3 * style.font_px;
    for (int i = 0; i < n; ++i) {
        const char32_t ch = charset.at(text[size_t(i)]);
        const double s = style.font_px * style.char_scale[size_t(i)];
        const double top = baseline - 0.8 * s + style.char_dy[size_t(i)];
        place[size_t(i)] = Affine::scale_xy(s, s).then(Affine::translate(cursor, top));
        cursor += font.advance(ch) * s + style.tracking_px;
    }
    const double content_w = cursor + style.margin_px;
    const int64_t W = std::max<int64_t>(
        H, int64_t(std::ceil(content_w / double(cfg.width_multiple))) * cfg.width_multiple);

    // line-level affine, attenuated on wide lines and halved until boxes stay ordered
    double rot = style.rot_deg * std::min(1.0, 256.0 / std::max(content_w, 1.0));
    double shear = style.shear;
    std::vector<Box> boxes(size_t(n));
    Affine jit;
    for (int attempt = 0;; ++attempt) {
        jit = line_jitter(rot, shear, content_w / 2.0, double(H) / 2.0);
        bool ok = true;
        for (int i = 0; i < n; ++i) {
            const char32_t ch = charset.at(text[size_t(i)]);
            GlyphBounds b = glyph_bounds(font, ch, place[size_t(i)].then(jit));
            boxes[size_t(i)] = {std::clamp(b.x1, 0.0, double(W)), std::clamp(b.y1, 0.0, double(H)),
                                std::clamp(b.x2, 0.0, double(W)), std::clamp(b.y2, 0.0, double(H))};
            if (i > 0 && boxes[size_t(i)].x1 <= boxes[size_t(i - 1)].x1) ok = false;
            if (boxes[size_t(i)].x2 - boxes[size_t(i)].x1 <= 0 ||
                boxes[size_t(i)].y2 - boxes[size_t(i)].y1 <= 0)
                ok = false;
        }
        if (ok) break;
        TEXTSR_CHECK(attempt < 6, "render_text_image: cannot order boxes under jitter");
        rot *= 0.5;
        shear *= 0.5;
    }

    // rasterize coverage and composite
    Tensor<double> cov({H, W}, 0.0);
    for (int i = 0; i < n; ++i)
        rasterize_glyph(font, charset.at(text[size_t(i)]), place[size_t(i)].then(jit), cov);

    TextSample sample;
    sample.hr = solid_or_crop_background(style, H, W, std::min<int64_t>(W, int64_t(content_w)));
    for (int c = 0; c < 3; ++c)
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x) {
                const double a = cov.at(y, x);
                if (a > 0)
                    sample.hr.at(c, y, x) =
                        sample.hr.at(c, y, x) * (1 - a) + style.fg[size_t(c)] * a;
            }

    // per-character canonical structure masks: the 128-wide window centered on
    // the box center, clamp-shifted to stay inside the image (the same rule the
    // SR prior transform and the conditioned discriminator use)
    for (int i = 0; i < n; ++i) {
        const double cx = std::clamp(0.5 * (boxes[size_t(i)].x1 + boxes[size_t(i)].x2), 64.0,
                                     double(W) - 64.0);
        Tensor<double> mcov({int64_t(128), int64_t(128)}, 0.0);
        const Affine tf = place[size_t(i)].then(jit).then(Affine::translate(64.0 - cx, 0.0));
        rasterize_glyph(font, charset.at(text[size_t(i)]), tf, mcov);
        Image mask = make_image(1, 128, 128);
        int64_t fg_count = 0;
        for (int64_t p = 0; p < 128 * 128; ++p) {
            mask[p] = mcov[p] > 0.5 ? 1.0 : 0.0;
            fg_count += mask[p] > 0.5;
        }
        TEXTSR_CHECK(fg_count > 0, "empty structure mask for character index " << text[size_t(i)]);
        sample.structures.push_back(std::move(mask));
    }

    sample.text = text;
    sample.boxes = boxes;
    sample.font_id = style.font_id;
    sample.style = style;
    return sample;
}

Image render_structure_gt(int char_index, const Charset& charset, const Font& font,
                          const StructureParams& params, int canvas) {
    TEXTSR_CHECK(char_index >= 0 && char_index < charset.size(), "char_index out of range");
    const char32_t ch = charset.at(char_index);
    const double H = double(canvas);
    const double baseline = H / 2.0 + 0.3 * params.font_px;
    const double top = baseline - 0.8 * params.font_px + params.dy;
    Affine place = Affine::scale_xy(params.font_px, params.font_px).then(Affine::translate(0, top));
    GlyphBounds b = glyph_bounds(font, ch, place);
    place = place.then(Affine::translate(H / 2.0 - 0.5 * (b.x1 + b.x2), 0));
    place = place.then(line_jitter(params.rot_deg, params.shear, H / 2.0, H / 2.0));

    Tensor<double> cov({int64_t(canvas), int64_t(canvas)}, 0.0);
    rasterize_glyph(font, ch, place, cov);
    Image mask = make_image(1, canvas, canvas);
    int64_t fg = 0;
    for (int64_t p = 0; p < cov.numel(); ++p) {
        mask[p] = cov[p] > 0.5 ? 1.0 : 0.0;
        fg += mask[p] > 0.5;
    }
    TEXTSR_CHECK(fg > 0, "render_structure_gt produced a blank canvas for character '"
                             << encode_utf8({ch}) << "'");
    return mask;
}

// ---- manifests ----

nlohmann::json ManifestRecord::to_json() const {
    nlohmann::json j;
    j["id"] = id;
    j["hr_path"] = hr_path;
    if (!lr_path.empty()) j["lr_path"] = lr_path;
    j["text"] = text;
    nlohmann::json bx = nlohmann::json::array();
    for (const auto& b : boxes) bx.push_back({b.x1, b.y1, b.x2, b.y2});
    j["boxes"] = bx;
    j["structure_paths"] = structure_paths;
    j["font_id"] = font_id;
    if (scale) j["scale"] = scale;
    if (!degradation.is_null()) j["degradation"] = degradation;
    return j;
}

ManifestRecord ManifestRecord::from_json(const nlohmann::json& j) {
    ManifestRecord r;
    r.id = j.at("id").get<std::string>();
    r.hr_path = j.at("hr_path").get<std::string>();
    r.lr_path = j.value("lr_path", std::string());
    r.text = j.at("text").get<std::vector<int>>();
    for (const auto& b : j.at("boxes"))
        r.boxes.push_back({b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
                           b.at(3).get<double>()});
    r.structure_paths = j.at("structure_paths").get<std::vector<std::string>>();
    r.font_id = j.at("font_id").get<int>();
    r.scale = j.value("scale", 0);
    if (j.contains("degradation")) r.degradation = j.at("degradation");
    return r;
}

void write_manifest(const DatasetManifest& m, const std::string& path) {
    std::ofstream f(path);
    TEXTSR_CHECK(f.good(), "cannot open manifest for writing: " << path);
    nlohmann::json hdr;
    hdr["type"] = "header";
    hdr["version"] = 1;
    hdr["global_seed"] = m.global_seed;
    hdr["charset"] = m.charset_utf8;
    f << hdr.dump() << "\n";
    std::set<std::string> ids;
    for (const auto& r : m.records) {
        TEXTSR_CHECK(ids.insert(r.id).second, "duplicate record id: " << r.id);
        f << r.to_json().dump() << "\n";
    }
    TEXTSR_CHECK(f.good(), "manifest write failed: " << path);
}

DatasetManifest read_manifest(const std::string& path, bool verify_files) {
    std::ifstream f(path);
    TEXTSR_CHECK(f.good(), "cannot open manifest: " << path);
    DatasetManifest m;
    std::string line;
    int lineno = 0;
    std::set<std::string> ids;
    const auto base = std::filesystem::path(path).parent_path();
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const std::exception& e) {
            throw TensorError("manifest parse error at line " + std::to_string(lineno) + ": " +
                              e.what());
        }
        try {
            if (lineno == 1 && j.value("type", "") == "header") {
                m.global_seed = j.value("global_seed", uint64_t(0));
                m.charset_utf8 = j.value("charset", std::string());
                continue;
            }
            ManifestRecord r = ManifestRecord::from_json(j);
            TEXTSR_CHECK(ids.insert(r.id).second, "duplicate record id " << r.id);
            if (!m.charset_utf8.empty()) {
                const int M = int(decode_utf8(m.charset_utf8).size());
                for (int t : r.text)
                    TEXTSR_CHECK(t >= 0 && t < M, "record " << r.id << ": index " << t
                                                            << " outside charset of size " << M);
            }
            if (verify_files) {
                auto exists = [&](const std::string& p) {
                    return std::filesystem::exists(base / p);
                };
                TEXTSR_CHECK(exists(r.hr_path), "missing file " << r.hr_path);
                TEXTSR_CHECK(r.lr_path.empty() || exists(r.lr_path), "missing file " << r.lr_path);
                for (const auto& sp : r.structure_paths)
                    TEXTSR_CHECK(exists(sp), "missing file " << sp);
            }
            m.records.push_back(std::move(r));
        } catch (const TensorError&) {
            throw;
        } catch (const std::exception& e) {
            throw TensorError("manifest field error at line " + std::to_string(lineno) + ": " +
                              e.what());
        }
    }
    return m;
}

}  // namespace textsr
