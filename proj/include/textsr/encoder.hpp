#pragma once

#include "textsr/image.hpp"
#include "textsr/nn.hpp"
#include "textsr/roi.hpp"

namespace textsr {

struct EncProfile {
    int64_t d_model = 256;
    int layers = 4;
    int heads = 4;
    int64_t c0 = 32, c1 = 64, c2 = 128;  // backbone widths
    int64_t d_w = 512;                   // must match the generator profile
    int64_t t_max = 160;                 // positional table length

    static EncProfile dflt() { return {}; }
    static EncProfile tiny() {
        EncProfile p;
        p.d_model = 96;
        p.layers = 2;
        p.heads = 4;
        p.c0 = 24;
        p.c1 = 48;
        p.c2 = 96;
        p.d_w = 128;
        return p;
    }
    static EncProfile micro() {
        EncProfile p;
        p.d_model = 48;
        p.layers = 1;
        p.heads = 2;
        p.c0 = 12;
        p.c1 = 24;
        p.c2 = 48;
        p.d_w = 64;
        return p;
    }
    static EncProfile by_name(const std::string& n);
    nlohmann::json to_json() const;
    static EncProfile from_json(const nlohmann::json& j);
};

// joint per-image outputs: one w, per-timestep class logits and boxes
struct EncoderOutput {
    VarF w;                     // [B, D_w]
    std::vector<VarF> logits;   // per image [T, M+1]
    std::vector<VarF> boxes;    // per image [T, 4] as (cx,cy,bw,bh) in [0,1]
};

struct CharacterDetection {
    int code_index = 0;
    Box box;            // normalized corners
    int timestep = 0;
    double confidence = 0;
};

class EncoderNet {
public:
    static constexpr int kInputHeight = 32;
    static constexpr int kStride = 4;  // total horizontal downsampling

    EncoderNet(int num_classes, const EncProfile& profile, Rng& rng);

    // LR ingestion: resize to height 32 preserving aspect, zero-pad width to a
    // stride multiple. Coordinates stay proportional to the padded extent.
    static Tensorf ingest(const Image& lr);

    EncoderOutput forward(const VarF& x) const;  // x: [B,3,32,W]
    EncoderOutput encode_images(const std::vector<Image>& lrs) const;  // pads to batch max width

    int num_classes() const { return M_; }
    const EncProfile& profile() const { return profile_; }
    void collect(ParamMap& pm, const std::string& p);

private:
    int M_;
    EncProfile profile_;
    ConvLayer stem_, down1_, down2_;
    ResBlock rb0_, rb1_, rb2a_, rb2b_;
    LinearLayer token_proj_;
    VarF pos_;
    std::vector<TransformerBlock> blocks_;
    LayerNormLayer final_ln_;
    LinearLayer class_head_;
    LinearLayer box_h1_, box_h2_;
    LinearLayer style_head_;
};

// greedy CTC collapse; returns (code_index, run_start, run_end) per emitted token
std::vector<std::array<int, 3>> ctc_greedy_decode(const Tensorf& logits);

// one detection per decoded token; box taken at the max-probability timestep of
// the run (run-averaged variant behind the flag)
std::vector<CharacterDetection> select_detections(const EncoderOutput& out, int image_index,
                                                  bool run_averaged_boxes = false);

// canonical square character window (side = image height) used by the prior
// transform, the conditioned discriminator, and structure ground truth
Box character_window(double cx_norm, double height_over_width);

}  // namespace textsr
