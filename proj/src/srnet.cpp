#include "textsr/srnet.hpp"

#include <algorithm>

namespace textsr {

SrProfile SrProfile::by_name(const std::string& n) {
    if (n == "default") return dflt();
    if (n == "tiny") return tiny();
    if (n == "micro") return micro();
    throw TensorError("unknown profile: " + n);
}

SRNet::SRNet(int scale, const SrProfile& profile, const GenProfile& gen_profile,
             std::vector<int> prior_scales, Rng& rng)
    : scale_(scale), profile_(profile), prior_scales_(std::move(prior_scales)),
      has_down_(scale == 2) {
    TEXTSR_CHECK(scale == 2 || scale == 4, "SRNet scale must be 2 or 4");
    TEXTSR_CHECK(!prior_scales_.empty(), "prior scales must be nonempty");
    for (int s : prior_scales_)
        TEXTSR_CHECK(s == 32 || s == 64, "prior scale must be 32 or 64, got " << s);

    const int64_t b = profile.base;
    const int64_t c32 = 2 * b, c64 = b, c128 = std::max<int64_t>(8, b / 2);

    if (has_down_) {
        stem_ = ConvLayer(3, b, 3, 1, 1, rng);
        rb_s1_ = ResBlock(b, rng);
        rb_s2_ = ResBlock(b, rng);
        down_ = ConvLayer(b, c32, 3, 2, 1, rng);
        rb_d1_ = ResBlock(c32, rng);
        up64_ = ConvLayer(c32 + b, c64, 3, 1, 1, rng);  // skip concat from stem
    } else {
        stem_ = ConvLayer(3, c32, 3, 1, 1, rng);
        rb_s1_ = ResBlock(c32, rng);
        rb_s2_ = ResBlock(c32, rng);
        up64_ = ConvLayer(c32, c64, 3, 1, 1, rng);
    }
    rb64_ = ResBlock(c64, rng);
    up128_ = ConvLayer(c64, c128, 3, 1, 1, rng);
    rb128_ = ResBlock(c128, rng);
    for (int i = 0; i < profile.recon_blocks; ++i) recon_.emplace_back(c128, rng);
    to_rgb_ = ConvLayer(c128, 3, 3, 1, 1, rng);

    for (int s : prior_scales_) {
        PriorTransform pt;
        const int64_t feat_c = s == 32 ? c32 : c64;
        pt.proj = ConvLayer(gen_profile.channels_at(s), feat_c, 1, 1, 0, rng);
        pt.cond = ConvLayer(feat_c, feat_c, 3, 1, 1, rng);
        pt.gamma_conv = ConvLayer(feat_c, feat_c, 3, 1, 1, rng, /*zero_init=*/true);
        pt.beta_conv = ConvLayer(feat_c, feat_c, 3, 1, 1, rng, /*zero_init=*/true);
        pt_[s] = pt;
    }
}

void SRNet::PriorTransform::collect(ParamMap& pm, const std::string& p) {
    proj.collect(pm, p + ".proj");
    cond.collect(pm, p + ".cond");
    gamma_conv.collect(pm, p + ".gamma");
    beta_conv.collect(pm, p + ".beta");
}

VarF SRNet::inject(const VarF& feat_batch, int scale_s,
                   const std::vector<std::vector<CharPrior>>& chars) const {
    const auto it = pt_.find(scale_s);
    if (it == pt_.end()) return feat_batch;
    const PriorTransform& pt = it->second;

    const int64_t B = feat_batch.value().dim(0);
    const int64_t C = feat_batch.value().dim(1);
    const int64_t h = feat_batch.value().dim(2), w = feat_batch.value().dim(3);
    TEXTSR_CHECK(h == scale_s, "feature height " << h << " != prior scale " << scale_s);

    std::vector<VarF> images;
    for (int64_t bi = 0; bi < B; ++bi) {
        VarF f = select_image(feat_batch, bi);
        if (bi < int64_t(chars.size())) {
            for (const auto& ch : chars[size_t(bi)]) {
                auto fit = ch.features.find(scale_s);
                if (fit == ch.features.end()) continue;
                const Box win = character_window(ch.cx_norm, double(h) / double(w));
                VarF crop = roi_align(f, win, scale_s, scale_s);
                const auto& pf = fit->second;
                VarF proj = reshape(
                    pt.proj.forward(reshape(pf, {int64_t(1), pf.value().dim(0), pf.value().dim(1),
                                                 pf.value().dim(2)})),
                    {C, int64_t(scale_s), int64_t(scale_s)});
                VarF norm = adain(proj, crop);
                VarF cond4 = leaky_relu(
                    pt.cond.forward(reshape(norm, {int64_t(1), C, int64_t(scale_s),
                                                   int64_t(scale_s)})),
                    0.2f);
                VarF gamma =
                    reshape(pt.gamma_conv.forward(cond4), {C, int64_t(scale_s), int64_t(scale_s)});
                VarF beta =
                    reshape(pt.beta_conv.forward(cond4), {C, int64_t(scale_s), int64_t(scale_s)});
                VarF fused = add(add(crop, mul(crop, gamma)), beta);
                f = paste_back(f, fused, win);
            }
        }
        images.push_back(f);
    }
    return stack_images(images);
}

VarF SRNet::forward(const VarF& lr, const std::vector<std::vector<CharPrior>>& chars) const {
    const auto& xv = lr.value();
    TEXTSR_CHECK(xv.ndim() == 4 && xv.dim(1) == 3, "SRNet expects [B,3,H,W]");
    TEXTSR_CHECK(xv.dim(2) * scale_ == 128,
                 "SRNet built for LR height " << 128 / scale_ << ", got " << xv.dim(2));
    TEXTSR_CHECK(xv.dim(3) % 2 == 0, "LR width must be even");

    VarF e32, skip64;
    if (has_down_) {
        VarF s = leaky_relu(stem_.forward(lr), 0.2f);
        s = rb_s2_.forward(rb_s1_.forward(s));
        skip64 = s;
        e32 = rb_d1_.forward(leaky_relu(down_.forward(s), 0.2f));
    } else {
        VarF s = leaky_relu(stem_.forward(lr), 0.2f);
        e32 = rb_s2_.forward(rb_s1_.forward(s));
    }

    e32 = inject(e32, 32, chars);

    VarF u = upsample_nearest2(e32);
    if (has_down_) u = concat_channels(u, skip64);
    VarF f64 = rb64_.forward(leaky_relu(up64_.forward(u), 0.2f));

    f64 = inject(f64, 64, chars);

    VarF f128 = rb128_.forward(leaky_relu(up128_.forward(upsample_nearest2(f64)), 0.2f));
    for (const auto& rb : recon_) f128 = rb.forward(f128);
    return sigmoid(to_rgb_.forward(f128));
}

void SRNet::collect(ParamMap& pm, const std::string& p) {
    stem_.collect(pm, p + ".stem");
    rb_s1_.collect(pm, p + ".rb_s1");
    rb_s2_.collect(pm, p + ".rb_s2");
    if (has_down_) {
        down_.collect(pm, p + ".down");
        rb_d1_.collect(pm, p + ".rb_d1");
    }
    up64_.collect(pm, p + ".up64");
    rb64_.collect(pm, p + ".rb64");
    up128_.collect(pm, p + ".up128");
    rb128_.collect(pm, p + ".rb128");
    for (size_t i = 0; i < recon_.size(); ++i)
        recon_[i].collect(pm, p + ".recon" + std::to_string(i));
    to_rgb_.collect(pm, p + ".to_rgb");
    for (auto& [s, pt] : pt_) pt.collect(pm, p + ".pt" + std::to_string(s));
}

// ---- SrSystem ----

SrSystem SrSystem::create(const Charset& charset, int scale, std::vector<int> prior_scales,
                          const std::string& profile_name, uint64_t seed) {
    SrSystem sys;
    sys.charset = charset;
    sys.scale = scale;
    sys.prior_scales = prior_scales;
    sys.profile_name = profile_name;
    sys.gen_profile = GenProfile::by_name(profile_name);
    sys.enc_profile = EncProfile::by_name(profile_name);
    sys.sr_profile = SrProfile::by_name(profile_name);
    TEXTSR_CHECK(sys.enc_profile.d_w == sys.gen_profile.d_w,
                 "encoder d_w must match generator d_w");
    Rng r_gen(hash_combine(seed, 0x9e01));
    Rng r_enc(hash_combine(seed, 0x9e02));
    Rng r_sr(hash_combine(seed, 0x9e03));
    Rng r_d(hash_combine(seed, 0x9e04));
    sys.gen = std::make_shared<Generator>(charset.size(), sys.gen_profile, r_gen);
    sys.enc = std::make_shared<EncoderNet>(charset.size(), sys.enc_profile, r_enc);
    sys.sr = std::make_shared<SRNet>(scale, sys.sr_profile, sys.gen_profile, prior_scales, r_sr);
    sys.d_cond = std::make_shared<PatchDiscriminator>(4, std::max<int64_t>(8, sys.sr_profile.base / 4),
                                                      4, r_d);
    return sys;
}

ParamMap SrSystem::prior_params() const {
    ParamMap pm;
    gen->collect(pm, "gen");
    return pm;
}

ParamMap SrSystem::main_params() const {
    ParamMap pm;
    enc->collect(pm, "enc");
    sr->collect(pm, "sr");
    return pm;
}

ParamMap SrSystem::disc_params() const {
    ParamMap pm;
    d_cond->collect(pm, "d_cond");
    return pm;
}

uint64_t SrSystem::config_hash() const {
    uint64_t h = charset.hash();
    h = hash_combine(h, uint64_t(scale));
    for (int s : prior_scales) h = hash_combine(h, uint64_t(s));
    for (char c : profile_name) h = hash_combine(h, uint64_t(c));
    return h;
}

// ---- inference ----

SuperResolveOut super_resolve(const Image& lr, const SrSystem& sys) {
    TEXTSR_CHECK(img_h(lr) * sys.scale == 128,
                 "expected LR height " << 128 / sys.scale << ", got " << img_h(lr));
    SuperResolveOut out;

    EncoderOutput enc_out = sys.enc->encode_images({lr});
    out.detections = select_detections(enc_out, 0);
    std::sort(out.detections.begin(), out.detections.end(),
              [](const CharacterDetection& a, const CharacterDetection& b) {
                  return a.box.x1 < b.box.x1;
              });

    Tensorf w_row({int64_t(1), enc_out.w.value().dim(1)});
    for (int64_t j = 0; j < w_row.numel(); ++j) w_row[j] = enc_out.w.value()[j];

    std::vector<std::vector<SRNet::CharPrior>> chars(1);
    for (const auto& det : out.detections) {
        PriorBundle pb = sys.gen->generate(det.code_index, w_row);
        SRNet::CharPrior cp;
        cp.cx_norm = det.box.cx();
        for (const auto& [s, f] : pb.features)
            if (std::find(sys.prior_scales.begin(), sys.prior_scales.end(), s) !=
                sys.prior_scales.end())
                cp.features[s] = VarF::leaf(f);
        chars[0].push_back(cp);
        out.priors.push_back(pb);
        Image st = make_image(1, 128, 128);
        for (int64_t i = 0; i < st.numel(); ++i) st[i] = double(pb.structure[i]);
        out.structures.push_back(std::move(st));
    }

    Tensorf lrT({int64_t(1), 3, img_h(lr), img_w(lr)});
    for (int64_t i = 0; i < lr.numel(); ++i) lrT[i] = float(lr[i]);
    VarF sr = sys.sr->forward(VarF::leaf(std::move(lrT)), chars);

    const auto& sv = sr.value();
    out.sr = make_image(3, sv.dim(2), sv.dim(3));
    for (int64_t i = 0; i < out.sr.numel(); ++i)
        out.sr[i] = std::clamp(double(sv[i]), 0.0, 1.0);
    return out;
}

}  // namespace textsr
