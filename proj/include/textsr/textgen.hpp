#pragma once

#include <json.hpp>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "textsr/font.hpp"
#include "textsr/image.hpp"
#include "textsr/rng.hpp"
#include "textsr/roi.hpp"

namespace textsr {

// Ordered symbol set; codebook index of a character is its list position and
// the CTC blank class sits at index M (one past the last real class).
class Charset {
public:
    static Charset default_charset();  // digits + latin letters + 6 punctuation (M=68)
    static Charset from_string(const std::string& utf8);
    static Charset from_file(const std::string& path);  // one character per line

    int size() const { return int(chars_.size()); }                // M
    int blank_index() const { return int(chars_.size()); }         // == M
    int ctc_classes() const { return int(chars_.size()) + 1; }     // M + 1
    char32_t at(int i) const { return chars_[size_t(i)]; }
    std::optional<int> index_of(char32_t ch) const;
    const std::vector<char32_t>& chars() const { return chars_; }
    std::string to_utf8() const;
    uint64_t hash() const;

private:
    explicit Charset(std::vector<char32_t> chars);
    std::vector<char32_t> chars_;
};

std::vector<char32_t> decode_utf8(const std::string& s);
std::string encode_utf8(const std::vector<char32_t>& cs);

// Realized fonts for rendering. All fonts must cover the whole charset.
struct FontSet {
    std::vector<FontSource> sources;
    std::vector<std::shared_ptr<Font>> fonts;

    static FontSet builtin(int count);
    // spec: comma list of "builtin:N", "seed:<uint>", "ttf:<path>"
    static FontSet from_spec(const std::string& spec);

    int count() const { return int(fonts.size()); }
    void validate(const Charset& charset) const;
};

struct TextgenConfig {
    int n_max = 16;
    int width_multiple = 32;
    int height = 128;
    double rot_jitter_deg = 5.0;   // line-level affine jitter
    double shear_jitter = 0.05;
    double font_px_min = 68.0;
    double font_px_max = 112.0;
    double char_scale_jitter = 0.06;
    double char_dy_jitter = 5.0;
    double tracking_min = 1.0;
    double tracking_max = 7.0;
    double min_contrast = 0.35;
    bool bg_images = false;        // optional crop-and-upsample backgrounds
    std::string bg_dir;
    int retry_limit = 100;
    bool random_text = false;      // sample chars uniformly instead of a corpus
};

// Everything rendering needs; sampled once, then rendering is deterministic.
struct RenderStyle {
    int font_id = 0;
    double font_px = 96.0;
    double tracking_px = 3.0;
    double rot_deg = 0.0;
    double shear = 0.0;
    std::array<double, 3> fg{0, 0, 0};
    std::array<double, 3> bg{1, 1, 1};
    double margin_px = 10.0;
    std::vector<double> char_scale;  // one per character
    std::vector<double> char_dy;
    std::string bg_image_path;       // empty = solid color
    uint64_t bg_crop_seed = 0;
};

struct TextSample {
    Image hr;                        // [3,128,W], W a multiple of width_multiple
    std::vector<int> text;           // codebook indexes
    std::vector<Box> boxes;          // HR pixel coordinates
    std::vector<Image> structures;   // [1,128,128] binary masks
    int font_id = 0;
    RenderStyle style;
};

// text sampling: corpus line or uniform-random, filtered to the charset
std::vector<int> sample_text(const std::vector<std::string>& corpus, Rng& rng,
                             const Charset& charset, const TextgenConfig& cfg);

RenderStyle sample_style(int n_chars, int font_id, Rng& rng, const TextgenConfig& cfg,
                         const FontSet& fonts);

TextSample render_text_image(const std::vector<int>& text, const Charset& charset,
                             const FontSet& fonts, const RenderStyle& style,
                             const TextgenConfig& cfg);

// canonical per-character ground-truth mask (ink centered in a 128x128 canvas,
// drawn size / offset / affine jitter preserved)
struct StructureParams {
    double font_px = 96.0;
    double dy = 0.0;
    double rot_deg = 0.0;
    double shear = 0.0;
};
Image render_structure_gt(int char_index, const Charset& charset, const Font& font,
                          const StructureParams& params, int canvas = 128);

// ---- dataset manifests (JSON-Lines) ----

struct ManifestRecord {
    std::string id;
    std::string hr_path;
    std::string lr_path;  // empty when absent
    std::vector<int> text;
    std::vector<Box> boxes;
    std::vector<std::string> structure_paths;
    int font_id = 0;
    int scale = 0;  // 0 when no LR pair
    nlohmann::json degradation;  // replayable record, null when absent

    nlohmann::json to_json() const;
    static ManifestRecord from_json(const nlohmann::json& j);
};

struct DatasetManifest {
    uint64_t global_seed = 0;
    std::string charset_utf8;
    std::vector<ManifestRecord> records;
};

void write_manifest(const DatasetManifest& m, const std::string& path);
DatasetManifest read_manifest(const std::string& path, bool verify_files = false);

}  // namespace textsr
