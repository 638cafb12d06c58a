#pragma once

#include "textsr/encoder.hpp"
#include "textsr/priorgan.hpp"

namespace textsr {

struct SrProfile {
    int64_t base = 64;  // width at height-64 features; h32 doubles, h128 halves
    int recon_blocks = 2;

    static SrProfile dflt() { return {}; }
    static SrProfile tiny() { return {32, 2}; }
    static SrProfile micro() { return {16, 1}; }
    static SrProfile by_name(const std::string& n);
    nlohmann::json to_json() const { return {{"base", base}, {"recon_blocks", recon_blocks}}; }
    static SrProfile from_json(const nlohmann::json& j) {
        return {j.at("base").get<int64_t>(), j.at("recon_blocks").get<int>()};
    }
};

// LR feature extraction + per-character structure-prior injection
// (RoIAlign -> AdaIN -> SFT -> paste back) at the configured scales, then a
// Conv-ResBlock reconstruction trunk up to height 128.
class SRNet {
public:
    SRNet(int scale, const SrProfile& profile, const GenProfile& gen_profile,
          std::vector<int> prior_scales, Rng& rng);

    struct CharPrior {
        double cx_norm = 0.5;           // canonical window anchor
        std::map<int, VarF> features;   // generator taps, [C,s,s] per scale
    };

    // lr: [B,3,H,W] with H*scale == 128; chars: per image, left-to-right
    VarF forward(const VarF& lr, const std::vector<std::vector<CharPrior>>& chars) const;

    int scale() const { return scale_; }
    const std::vector<int>& prior_scales() const { return prior_scales_; }
    void collect(ParamMap& pm, const std::string& p);

private:
    struct PriorTransform {
        ConvLayer proj;        // 1x1 generator-channels -> feature-channels
        ConvLayer cond;        // 3x3 condition conv
        ConvLayer gamma_conv;  // zero-init
        ConvLayer beta_conv;   // zero-init
        void collect(ParamMap& pm, const std::string& p);
    };

    VarF inject(const VarF& feat_batch, int scale_s,
                const std::vector<std::vector<CharPrior>>& chars) const;

    int scale_;
    SrProfile profile_;
    std::vector<int> prior_scales_;
    bool has_down_;

    ConvLayer stem_;
    ResBlock rb_s1_, rb_s2_;
    ConvLayer down_;
    ResBlock rb_d1_;
    ConvLayer up64_;
    ResBlock rb64_;
    ConvLayer up128_;
    ResBlock rb128_;
    std::vector<ResBlock> recon_;
    ConvLayer to_rgb_;
    std::map<int, PriorTransform> pt_;
};

// Everything one SR run needs, bundled for checkpointing and inference.
struct SrSystem {
    Charset charset = Charset::default_charset();
    int scale = 2;
    std::vector<int> prior_scales{32, 64};
    std::string profile_name = "default";
    GenProfile gen_profile;
    EncProfile enc_profile;
    SrProfile sr_profile;
    std::shared_ptr<Generator> gen;
    std::shared_ptr<EncoderNet> enc;
    std::shared_ptr<SRNet> sr;
    std::shared_ptr<PatchDiscriminator> d_cond;  // 4-channel (image + structure)

    static SrSystem create(const Charset& charset, int scale, std::vector<int> prior_scales,
                           const std::string& profile_name, uint64_t seed);

    ParamMap prior_params() const;  // generator (codebook + mapping + synthesis)
    ParamMap main_params() const;   // encoder + SR net
    ParamMap disc_params() const;
    uint64_t config_hash() const;
};

struct SuperResolveOut {
    Image sr;
    std::vector<CharacterDetection> detections;
    std::vector<Image> structures;    // per detection, [1,128,128]
    std::vector<PriorBundle> priors;  // per detection
};

// full inference path: encode, decode detections, generate priors, SR
SuperResolveOut super_resolve(const Image& lr, const SrSystem& sys);

}  // namespace textsr
