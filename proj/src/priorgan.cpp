#include "textsr/priorgan.hpp"

namespace textsr {

GenProfile GenProfile::by_name(const std::string& name) {
    if (name == "default") return dflt();
    if (name == "tiny") return tiny();
    if (name == "micro") return micro();
    throw TensorError("unknown profile: " + name);
}

nlohmann::json GenProfile::to_json() const {
    return {{"d_code", d_code},
            {"d_w", d_w},
            {"d_z", d_z},
            {"mapping_layers", mapping_layers},
            {"channels", channels}};
}

GenProfile GenProfile::from_json(const nlohmann::json& j) {
    GenProfile p;
    p.d_code = j.at("d_code").get<int64_t>();
    p.d_w = j.at("d_w").get<int64_t>();
    p.d_z = j.at("d_z").get<int64_t>();
    p.mapping_layers = j.at("mapping_layers").get<int>();
    p.channels = j.at("channels").get<std::vector<int64_t>>();
    return p;
}

int64_t GenProfile::channels_at(int res) const {
    int level = 0;
    for (int r = 4; r < res; r *= 2) ++level;
    TEXTSR_CHECK(level < int(channels.size()), "resolution " << res << " outside profile");
    return channels[size_t(level)];
}

// ---- ModConvBlock ----

ModConvBlock::ModConvBlock(int64_t c_in, int64_t c_out, int64_t d_w, bool up_, Rng& rng)
    : affine(d_w, c_in, rng, 0.2, 1.0), up(up_) {
    weight = VarF::leaf(he_normal({c_out, c_in, 3, 3}, c_in * 9, rng), true);
    bias = VarF::leaf(Tensorf::zeros({c_out}), true);
}

VarF ModConvBlock::forward(const VarF& x, const VarF& w_lat, VarF* pre_act) const {
    VarF h = up ? upsample_nearest2(x) : x;
    VarF style = affine.forward(w_lat);  // [B,Cin]
    h = scale_channels(h, style);
    h = conv2d(h, weight, VarF(), 1, 1);

    // demodulation: per-sample output-channel norm of the modulated kernel
    const int64_t c_out = weight.value().dim(0), c_in = weight.value().dim(1);
    VarF w2 = reshape(square(weight), {c_out * c_in, int64_t(9)});
    VarF ones = VarF::leaf(Tensorf::full({int64_t(9), int64_t(1)}, 1.0f));
    VarF w2sum = reshape(matmul(w2, ones), {c_out, c_in});         // [Cout,Cin]
    VarF denom = matmul(square(style), transpose2d(w2sum));        // [B,Cout]
    VarF d = rsqrt_op(add_scalar(denom, 1e-8f));
    h = scale_channels(h, d);
    h = bias_channels(h, bias);
    if (pre_act) *pre_act = h;
    return leaky_relu(h, 0.2f);
}

void ModConvBlock::collect(ParamMap& pm, const std::string& p) {
    affine.collect(pm, p + ".affine");
    pm.add(p + ".w", weight);
    pm.add(p + ".b", bias);
}

// ---- Generator ----

Generator::Generator(int num_codes, const GenProfile& profile, Rng& rng) : profile_(profile) {
    TEXTSR_CHECK(num_codes >= 2, "codebook needs at least 2 codes");
    TEXTSR_CHECK(profile.channels.size() == 6, "profile needs 6 channel entries (4..128)");
    Tensorf cb({int64_t(num_codes), profile.d_code});
    for (int64_t i = 0; i < cb.numel(); ++i) cb[i] = float(rng.normal());
    codebook_ = VarF::leaf(std::move(cb), true);

    for (int i = 0; i < profile.mapping_layers; ++i)
        mapping_.emplace_back(i == 0 ? profile.d_z : profile.d_w, profile.d_w, rng, 0.2);

    input_proj_ = LinearLayer(profile.d_code, profile.channels[0] * 16, rng);
    conv4_ = ModConvBlock(profile.channels[0], profile.channels[0], profile.d_w, false, rng);
    for (int i = 1; i < 6; ++i)
        ups_.emplace_back(profile.channels[size_t(i - 1)], profile.channels[size_t(i)],
                          profile.d_w, true, rng);
    to_structure_ = ConvLayer(profile.channels[5], 1, 1, 1, 0, rng);
}

VarF Generator::map_latent(const VarF& z) const {
    TEXTSR_CHECK(z.value().ndim() == 2 && z.value().dim(1) == profile_.d_z,
                 "map_latent expects [B," << profile_.d_z << "]");
    for (int64_t i = 0; i < z.value().numel(); ++i)
        TEXTSR_CHECK(std::isfinite(double(z.value()[i])), "non-finite z");
    // pixel norm, then the k-layer MLP
    VarF h = z;
    VarF ms = rows_mean(square(h));
    h = mul_rows(h, rsqrt_op(add_scalar(ms, 1e-8f)));
    for (const auto& fc : mapping_) h = leaky_relu(fc.forward(h), 0.2f);
    return h;
}

Tensorf Generator::map_latent_eval(const Tensord& z) const {
    VarF zf = VarF::leaf(z.cast<float>());
    return map_latent(zf).value();
}

Generator::BatchOut Generator::generate_batch(const std::vector<int>& code_indices,
                                              const VarF& w) const {
    const int64_t B = int64_t(code_indices.size());
    TEXTSR_CHECK(B >= 1, "generate_batch needs at least one code");
    TEXTSR_CHECK(w.value().ndim() == 2 && w.value().dim(0) == B &&
                     w.value().dim(1) == profile_.d_w,
                 "w shape mismatch in generate_batch");
    for (int c : code_indices)
        TEXTSR_CHECK(c >= 0 && c < num_codes(),
                     "code index " << c << " out of range [0," << num_codes() << ")");

    VarF codes = embedding_rows(codebook_, code_indices);              // [B,Dcode]
    VarF x = reshape(input_proj_.forward(codes), {B, profile_.channels[0], 4, 4});
    x = conv4_.forward(x, w, nullptr);

    BatchOut out;
    int res = 4;
    for (size_t i = 0; i < ups_.size(); ++i) {
        res *= 2;
        VarF pre;
        const bool want_tap = (res == 32 || res == 64);
        x = ups_[i].forward(x, w, want_tap ? &pre : nullptr);
        if (want_tap) out.taps[res] = pre;
    }
    out.structure = sigmoid(to_structure_.forward(x));
    return out;
}

PriorBundleVar Generator::generate_var(int code_index, const VarF& w_row) const {
    BatchOut out = generate_batch({code_index}, w_row);
    PriorBundleVar pb;
    pb.structure = reshape(select_image(out.structure, 0), {int64_t(1), int64_t(128), int64_t(128)});
    for (auto& [s, tap] : out.taps) pb.features[s] = select_image(tap, 0);
    return pb;
}

PriorBundle Generator::generate(int code_index, const Tensorf& w_row) const {
    VarF w = VarF::leaf(w_row.ndim() == 1 ? w_row.reshaped({int64_t(1), w_row.dim(0)}) : w_row);
    PriorBundleVar pv = generate_var(code_index, w);
    PriorBundle pb;
    pb.structure = pv.structure.value();
    for (auto& [s, f] : pv.features) pb.features[s] = f.value();
    return pb;
}

void Generator::collect(ParamMap& pm, const std::string& p) {
    pm.add(p + ".codebook", codebook_);
    for (size_t i = 0; i < mapping_.size(); ++i)
        mapping_[i].collect(pm, p + ".map" + std::to_string(i));
    input_proj_.collect(pm, p + ".input");
    conv4_.collect(pm, p + ".conv4");
    for (size_t i = 0; i < ups_.size(); ++i)
        ups_[i].collect(pm, p + ".up" + std::to_string(i));
    to_structure_.collect(pm, p + ".to_structure");
}

std::vector<Tensorf> interpolate_w(const Tensorf& w1, const Tensorf& w2, int steps) {
    TEXTSR_CHECK(steps >= 2, "interpolate_w needs steps >= 2");
    TEXTSR_CHECK(w1.same_shape(w2), "interpolate_w shape mismatch");
    std::vector<Tensorf> out;
    for (int i = 0; i < steps; ++i) {
        if (i == 0) {
            out.push_back(w1);
            continue;
        }
        if (i == steps - 1) {
            out.push_back(w2);
            continue;
        }
        const float t = float(i) / float(steps - 1);
        Tensorf w = w1;
        for (int64_t j = 0; j < w.numel(); ++j) w[j] = (1.0f - t) * w1[j] + t * w2[j];
        out.push_back(std::move(w));
    }
    return out;
}

// ---- Recognizer ----

Recognizer::Recognizer(int num_classes, int64_t d, int layers, int heads, Rng& rng)
    : patch_(1, d, 16, 16, 0, rng), ln_(d), head_(d, num_classes, rng) {
    Tensorf pos({int64_t(64), d});
    for (int64_t i = 0; i < pos.numel(); ++i) pos[i] = float(rng.normal() * 0.02);
    pos_ = VarF::leaf(std::move(pos), true);
    for (int i = 0; i < layers; ++i) blocks_.emplace_back(d, heads, 2, rng);
}

Recognizer Recognizer::for_profile(int num_classes, const std::string& profile, Rng& rng) {
    if (profile == "default") return Recognizer(num_classes, 128, 3, 4, rng);
    if (profile == "tiny") return Recognizer(num_classes, 64, 2, 4, rng);
    if (profile == "micro") return Recognizer(num_classes, 32, 1, 2, rng);
    throw TensorError("unknown profile: " + profile);
}

VarF Recognizer::forward(const VarF& masks) const {
    const auto& mv = masks.value();
    TEXTSR_CHECK(mv.ndim() == 4 && mv.dim(1) == 1 && mv.dim(2) == 128 && mv.dim(3) == 128,
                 "recognizer expects [B,1,128,128]");
    VarF grid = patch_.forward(masks);  // [B,d,8,8]
    const int64_t B = mv.dim(0), d = grid.value().dim(1);
    std::vector<VarF> rows;
    for (int64_t b = 0; b < B; ++b) {
        VarF tokens = transpose2d(reshape(select_image(grid, b), {d, int64_t(64)}));  // [64,d]
        tokens = add(tokens, pos_);
        for (const auto& blk : blocks_) tokens = blk.forward(tokens);
        rows.push_back(head_.forward(ln_.forward(cols_mean(tokens))));  // [1,M]
    }
    return rows.size() == 1 ? rows[0] : concat_rows(rows);
}

std::vector<int> Recognizer::classify(const Tensorf& masks) const {
    VarF logits = forward(VarF::leaf(masks));
    const auto& lv = logits.value();
    std::vector<int> out;
    for (int64_t b = 0; b < lv.dim(0); ++b) {
        int best = 0;
        for (int64_t m = 1; m < lv.dim(1); ++m)
            if (lv.at(b, m) > lv.at(b, best)) best = int(m);
        out.push_back(best);
    }
    return out;
}

void Recognizer::freeze() {
    ParamMap pm;
    collect(pm, "r");
    for (auto& [n, v] : pm.items) v.node_ptr()->requires_grad = false;
    frozen_ = true;
}

void Recognizer::collect(ParamMap& pm, const std::string& p) {
    patch_.collect(pm, p + ".patch");
    pm.add(p + ".pos", pos_);
    for (size_t i = 0; i < blocks_.size(); ++i)
        blocks_[i].collect(pm, p + ".blk" + std::to_string(i));
    ln_.collect(pm, p + ".ln");
    head_.collect(pm, p + ".head");
}

// ---- PatchDiscriminator ----

PatchDiscriminator::PatchDiscriminator(int64_t in_ch, int64_t base, int levels, Rng& rng) {
    int64_t c = in_ch;
    int64_t o = base;
    for (int i = 0; i < levels; ++i) {
        convs_.emplace_back(c, o, 3, 2, 1, rng);
        c = o;
        o = std::min<int64_t>(o * 2, 256);
    }
    final_ = ConvLayer(c, 1, 3, 1, 1, rng);
}

VarF PatchDiscriminator::forward(const VarF& x) const {
    VarF h = x;
    for (const auto& cv : convs_) h = leaky_relu(cv.forward(h), 0.2f);
    h = final_.forward(h);                    // [B,1,h,w]
    return spatial_mean(h);                   // [B,1]
}

void PatchDiscriminator::collect(ParamMap& pm, const std::string& p) {
    for (size_t i = 0; i < convs_.size(); ++i)
        convs_[i].collect(pm, p + ".c" + std::to_string(i));
    final_.collect(pm, p + ".final");
}

// ---- pretraining step ----

PretrainLosses pretrain_step(Generator& gen, PatchDiscriminator& d_pre,
                             const Recognizer& recognizer, const std::vector<int>& codes,
                             const VarF& z, const Tensorf& real_masks, double lambda_recog,
                             Adam& opt_g, Adam& opt_d) {
    TEXTSR_CHECK(recognizer.frozen(), "pretrain_step requires a frozen recognizer");
    PretrainLosses out;

    VarF w = gen.map_latent(z);
    Generator::BatchOut fake = gen.generate_batch(codes, w);

    // discriminator step on detached fakes
    {
        VarF d_real = d_pre.forward(VarF::leaf(real_masks));
        VarF d_fake = d_pre.forward(VarF::leaf(fake.structure.value()));
        VarF loss_d = hinge_d(d_real, d_fake);
        out.adv_d = double(loss_d.value()[0]);
        TEXTSR_CHECK(std::isfinite(out.adv_d), "non-finite discriminator loss");
        opt_d.zero_grad();
        backward(loss_d);
        opt_d.step();
    }

    // generator step
    {
        VarF d_fake = d_pre.forward(fake.structure);
        VarF loss_adv = hinge_g(d_fake);
        VarF recog_logits = recognizer.forward(fake.structure);
        VarF loss_recog = cross_entropy(recog_logits, codes);
        out.adv_g = double(loss_adv.value()[0]);
        out.recog = double(loss_recog.value()[0]);
        TEXTSR_CHECK(std::isfinite(out.adv_g) && std::isfinite(out.recog),
                     "non-finite generator loss");
        VarF total = lambda_recog == 0.0
                         ? loss_adv
                         : add(loss_adv, mul_scalar(loss_recog, float(lambda_recog)));
        opt_g.zero_grad();
        backward(total);
        opt_g.step();
    }
    return out;
}

}  // namespace textsr
