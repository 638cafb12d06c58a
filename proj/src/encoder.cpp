#include "textsr/encoder.hpp"

#include <cmath>

namespace textsr {

EncProfile EncProfile::by_name(const std::string& n) {
    if (n == "default") return dflt();
    if (n == "tiny") return tiny();
    if (n == "micro") return micro();
    throw TensorError("unknown profile: " + n);
}

nlohmann::json EncProfile::to_json() const {
    return {{"d_model", d_model}, {"layers", layers}, {"heads", heads}, {"c0", c0},
            {"c1", c1},           {"c2", c2},         {"d_w", d_w},     {"t_max", t_max}};
}

EncProfile EncProfile::from_json(const nlohmann::json& j) {
    EncProfile p;
    p.d_model = j.at("d_model").get<int64_t>();
    p.layers = j.at("layers").get<int>();
    p.heads = j.at("heads").get<int>();
    p.c0 = j.at("c0").get<int64_t>();
    p.c1 = j.at("c1").get<int64_t>();
    p.c2 = j.at("c2").get<int64_t>();
    p.d_w = j.at("d_w").get<int64_t>();
    p.t_max = j.at("t_max").get<int64_t>();
    return p;
}

EncoderNet::EncoderNet(int num_classes, const EncProfile& profile, Rng& rng)
    : M_(num_classes),
      profile_(profile),
      stem_(3, profile.c0, 3, 1, 1, rng),
      down1_(profile.c0, profile.c1, 3, 2, 1, rng),
      down2_(profile.c1, profile.c2, 3, 2, 1, rng),
      rb0_(profile.c0, rng),
      rb1_(profile.c1, rng),
      rb2a_(profile.c2, rng),
      rb2b_(profile.c2, rng),
      token_proj_(profile.c2, profile.d_model, rng),
      final_ln_(profile.d_model),
      class_head_(profile.d_model, num_classes + 1, rng),
      box_h1_(profile.d_model, profile.d_model / 2, rng),
      box_h2_(profile.d_model / 2, 4, rng),
      style_head_(profile.d_model, profile.d_w, rng) {
    Tensorf pos({profile.t_max, profile.d_model});
    for (int64_t i = 0; i < pos.numel(); ++i) pos[i] = float(rng.normal() * 0.02);
    pos_ = VarF::leaf(std::move(pos), true);
    for (int i = 0; i < profile.layers; ++i)
        blocks_.emplace_back(profile.d_model, profile.heads, 4, rng);
}

Tensorf EncoderNet::ingest(const Image& lr) {
    const int64_t H = img_h(lr), W = img_w(lr);
    TEXTSR_CHECK(img_c(lr) == 3, "encoder input must be RGB");
    Image resized = lr;
    if (H != kInputHeight) {
        const int64_t w2 = std::max<int64_t>(
            1, int64_t(std::floor(double(W) * double(kInputHeight) / double(H) + 0.5)));
        resized = image_resize(lr, kInputHeight, w2, ResizeMethod::kBilinear);
        clip01(resized);
    }
    const int64_t W2 = img_w(resized);
    const int64_t Wp = (W2 + kStride - 1) / kStride * kStride;
    Tensorf out({3, kInputHeight, Wp});
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 0; y < kInputHeight; ++y)
            for (int64_t x = 0; x < W2; ++x)
                out.at(c, y, x) = float(resized.at(c, y, x));
    return out;
}

EncoderOutput EncoderNet::forward(const VarF& x) const {
    const auto& xv = x.value();
    TEXTSR_CHECK(xv.ndim() == 4 && xv.dim(1) == 3, "encoder expects [B,3,32,W]");
    TEXTSR_CHECK(xv.dim(2) == kInputHeight,
                 "encoder input height must be " << kInputHeight << ", got " << xv.dim(2));
    TEXTSR_CHECK(xv.dim(3) % kStride == 0,
                 "encoder input width must be a multiple of " << kStride);
    const int64_t B = xv.dim(0);
    const int64_t T = xv.dim(3) / kStride;
    TEXTSR_CHECK(T <= profile_.t_max, "sequence length " << T << " exceeds positional table");

    VarF h = leaky_relu(stem_.forward(x), 0.2f);
    h = rb0_.forward(h);
    h = leaky_relu(down1_.forward(h), 0.2f);
    h = rb1_.forward(h);
    h = leaky_relu(down2_.forward(h), 0.2f);
    h = rb2a_.forward(h);
    h = rb2b_.forward(h);
    VarF seq = vertical_mean(h);  // [B,c2,T]

    std::vector<int> pos_idx(size_t(T));
    for (int64_t t = 0; t < T; ++t) pos_idx[size_t(t)] = int(t);
    VarF pos_slice = gather_rows(pos_, pos_idx);

    EncoderOutput out;
    std::vector<VarF> w_rows;
    for (int64_t b = 0; b < B; ++b) {
        VarF tokens = token_proj_.forward(tokens_of(seq, b));  // [T,d]
        tokens = add(tokens, pos_slice);
        for (const auto& blk : blocks_) tokens = blk.forward(tokens);
        tokens = final_ln_.forward(tokens);
        out.logits.push_back(class_head_.forward(tokens));
        out.boxes.push_back(sigmoid(box_h2_.forward(leaky_relu(box_h1_.forward(tokens), 0.2f))));
        w_rows.push_back(style_head_.forward(cols_mean(tokens)));  // [1,Dw]
    }
    out.w = w_rows.size() == 1 ? w_rows[0] : concat_rows(w_rows);
    return out;
}

EncoderOutput EncoderNet::encode_images(const std::vector<Image>& lrs) const {
    TEXTSR_CHECK(!lrs.empty(), "encode_images: empty batch");
    std::vector<Tensorf> ing;
    int64_t wmax = 0;
    for (const auto& im : lrs) {
        ing.push_back(ingest(im));
        wmax = std::max(wmax, ing.back().dim(2));
    }
    Tensorf batch({int64_t(lrs.size()), 3, kInputHeight, wmax});
    for (size_t i = 0; i < ing.size(); ++i)
        for (int64_t c = 0; c < 3; ++c)
            for (int64_t y = 0; y < kInputHeight; ++y)
                for (int64_t x = 0; x < ing[i].dim(2); ++x)
                    batch.at(int64_t(i), c, y, x) = ing[i].at(c, y, x);
    return forward(VarF::leaf(std::move(batch)));
}

std::vector<std::array<int, 3>> ctc_greedy_decode(const Tensorf& logits) {
    TEXTSR_CHECK(logits.ndim() == 2, "ctc_greedy_decode expects [T,V]");
    const int64_t T = logits.dim(0), V = logits.dim(1);
    for (int64_t i = 0; i < logits.numel(); ++i)
        TEXTSR_CHECK(std::isfinite(double(logits[i])), "non-finite logits in decode");
    const int blank = int(V - 1);
    std::vector<std::array<int, 3>> out;
    int prev = -1;
    for (int64_t t = 0; t < T; ++t) {
        int best = 0;
        for (int64_t v = 1; v < V; ++v)
            if (logits.at(t, v) > logits.at(t, best)) best = int(v);
        if (best != blank && best == prev) {
            out.back()[2] = int(t);  // extend current run
        } else if (best != blank) {
            out.push_back({best, int(t), int(t)});
        }
        prev = best;
    }
    return out;
}

std::vector<CharacterDetection> select_detections(const EncoderOutput& out, int image_index,
                                                  bool run_averaged_boxes) {
    const Tensorf& logits = out.logits[size_t(image_index)].value();
    const Tensorf& boxes = out.boxes[size_t(image_index)].value();
    const int64_t V = logits.dim(1);
    auto runs = ctc_greedy_decode(logits);

    std::vector<CharacterDetection> dets;
    for (const auto& [code, t0, t1] : runs) {
        // softmax probability of this class per timestep of the run
        int best_t = t0;
        double best_p = -1;
        double acc[4] = {0, 0, 0, 0};
        for (int t = t0; t <= t1; ++t) {
            double mx = logits.at(t, 0);
            for (int64_t v = 1; v < V; ++v) mx = std::max(mx, double(logits.at(t, v)));
            double sum = 0;
            for (int64_t v = 0; v < V; ++v) sum += std::exp(double(logits.at(t, v)) - mx);
            const double p = std::exp(double(logits.at(t, code)) - mx) / sum;
            if (p > best_p) {
                best_p = p;
                best_t = t;
            }
            for (int k = 0; k < 4; ++k) acc[k] += boxes.at(t, k);
        }
        double cx, cy, bw, bh;
        if (run_averaged_boxes) {
            const double n = double(t1 - t0 + 1);
            cx = acc[0] / n, cy = acc[1] / n, bw = acc[2] / n, bh = acc[3] / n;
        } else {
            cx = boxes.at(best_t, 0);
            cy = boxes.at(best_t, 1);
            bw = boxes.at(best_t, 2);
            bh = boxes.at(best_t, 3);
        }
        bw = std::max(bw, 1e-3);
        bh = std::max(bh, 1e-3);
        CharacterDetection d;
        d.code_index = code;
        d.box = {std::clamp(cx - bw / 2, 0.0, 1.0 - 1e-6), std::clamp(cy - bh / 2, 0.0, 1.0 - 1e-6),
                 std::clamp(cx + bw / 2, 1e-6, 1.0), std::clamp(cy + bh / 2, 1e-6, 1.0)};
        if (d.box.x2 - d.box.x1 < 1e-4) d.box.x2 = std::min(1.0, d.box.x1 + 1e-4);
        if (d.box.y2 - d.box.y1 < 1e-4) d.box.y2 = std::min(1.0, d.box.y1 + 1e-4);
        d.timestep = best_t;
        d.confidence = best_p;
        dets.push_back(d);
    }
    return dets;
}

Box character_window(double cx_norm, double height_over_width) {
    const double side = std::min(height_over_width, 1.0);
    const double x1 = std::clamp(cx_norm - side / 2, 0.0, 1.0 - side);
    return {x1, 0.0, x1 + side, 1.0};
}

}  // namespace textsr
