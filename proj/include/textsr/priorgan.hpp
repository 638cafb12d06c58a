#pragma once

#include "textsr/nn.hpp"

namespace textsr {

// Generator dimensions. Synthesis runs 4x4 -> 128x128; channels are listed per
// resolution {4,8,16,32,64,128}.
struct GenProfile {
    int64_t d_code = 512;
    int64_t d_w = 512;
    int64_t d_z = 512;
    int mapping_layers = 4;
    std::vector<int64_t> channels{256, 128, 64, 32, 32, 32};

    static GenProfile dflt() { return {}; }
    static GenProfile tiny() { return {128, 128, 128, 4, {128, 64, 32, 16, 16, 16}}; }
    static GenProfile micro() { return {64, 64, 64, 2, {64, 32, 16, 8, 8, 8}}; }
    static GenProfile by_name(const std::string& name);

    nlohmann::json to_json() const;
    static GenProfile from_json(const nlohmann::json& j);
    int64_t channels_at(int res) const;  // res in {4,...,128}
};

// per-character generator outputs
struct PriorBundle {
    Tensorf structure;                // [1,128,128] in [0,1]
    std::map<int, Tensorf> features;  // scale -> [C,scale,scale]
};

struct PriorBundleVar {
    VarF structure;
    std::map<int, VarF> features;
};

// style-modulated conv with weight demodulation (no per-layer noise anywhere)
struct ModConvBlock {
    LinearLayer affine;  // w -> per-input-channel style, bias init 1
    VarF weight;         // [Cout,Cin,3,3]
    VarF bias;           // [Cout]
    bool up = false;

    ModConvBlock() = default;
    ModConvBlock(int64_t c_in, int64_t c_out, int64_t d_w, bool up, Rng& rng);
    // returns post-activation features; writes the pre-activation tap if asked
    VarF forward(const VarF& x, const VarF& w_lat, VarF* pre_act) const;
    void collect(ParamMap& pm, const std::string& p);
};

// Retrofitted style generator: discrete per-character codes replace the
// learned constant; w from the mapping net modulates every conv.
class Generator {
public:
    Generator(int num_codes, const GenProfile& profile, Rng& rng);

    int num_codes() const { return int(codebook_.value().dim(0)); }
    const GenProfile& profile() const { return profile_; }

    VarF map_latent(const VarF& z) const;  // [B,Dz] -> [B,Dw]
    Tensorf map_latent_eval(const Tensord& z) const;

    struct BatchOut {
        VarF structure;             // [B,1,128,128]
        std::map<int, VarF> taps;   // scale -> [B,C,s,s]
    };
    BatchOut generate_batch(const std::vector<int>& code_indices, const VarF& w) const;

    // single-character convenience (w given as a row tensor)
    PriorBundle generate(int code_index, const Tensorf& w_row) const;
    PriorBundleVar generate_var(int code_index, const VarF& w_row) const;

    VarF codebook() const { return codebook_; }
    void collect(ParamMap& pm, const std::string& p);

private:
    GenProfile profile_;
    VarF codebook_;               // [M, D_code]
    std::vector<LinearLayer> mapping_;
    LinearLayer input_proj_;      // code -> C0*4*4
    ModConvBlock conv4_;          // 4x4 conv (no upsample)
    std::vector<ModConvBlock> ups_;  // 8,16,32,64,128
    ConvLayer to_structure_;      // 1x1 -> 1 channel
};

// linear interpolation with exact endpoints
std::vector<Tensorf> interpolate_w(const Tensorf& w1, const Tensorf& w2, int steps);

// small patch-embedding self-attention classifier over 128x128 masks
class Recognizer {
public:
    Recognizer(int num_classes, int64_t d, int layers, int heads, Rng& rng);
    static Recognizer for_profile(int num_classes, const std::string& profile, Rng& rng);

    VarF forward(const VarF& masks) const;  // [B,1,128,128] -> [B,M]
    std::vector<int> classify(const Tensorf& masks) const;
    void freeze();
    bool frozen() const { return frozen_; }
    void collect(ParamMap& pm, const std::string& p);

private:
    ConvLayer patch_;  // k=16,s=16
    VarF pos_;         // [64,d]
    std::vector<TransformerBlock> blocks_;
    LayerNormLayer ln_;
    LinearLayer head_;
    bool frozen_ = false;
};

// strided conv discriminator on square inputs, hinge-ready scalar per sample
class PatchDiscriminator {
public:
    PatchDiscriminator(int64_t in_ch, int64_t base, int levels, Rng& rng);
    VarF forward(const VarF& x) const;  // [B,C,S,S] -> [B,1]
    void collect(ParamMap& pm, const std::string& p);

private:
    std::vector<ConvLayer> convs_;
    ConvLayer final_;
};

// one generator+discriminator pretraining step (recognizer stays frozen)
struct PretrainLosses {
    double adv_g = 0, adv_d = 0, recog = 0;
};
PretrainLosses pretrain_step(Generator& gen, PatchDiscriminator& d_pre,
                             const Recognizer& recognizer, const std::vector<int>& codes,
                             const VarF& z, const Tensorf& real_masks, double lambda_recog,
                             Adam& opt_g, Adam& opt_d);

}  // namespace textsr
