#include "textsr/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace textsr {

Tensorf he_normal(std::vector<int64_t> shape, int64_t fan_in, Rng& rng, double gain) {
    Tensorf t(shape);
    const double scale = gain * std::sqrt(2.0 / double(fan_in));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = float(rng.normal() * scale);
    return t;
}

LinearLayer::LinearLayer(int64_t in, int64_t out, Rng& rng, double gain, double bias_init) {
    w = VarF::leaf(he_normal({out, in}, in, rng, gain), true);
    b = VarF::leaf(Tensorf::full({out}, float(bias_init)), true);
}

ConvLayer::ConvLayer(int64_t in_ch, int64_t out_ch, int64_t k, int64_t stride_, int64_t pad_,
                     Rng& rng, bool zero_init)
    : stride(stride_), pad(pad_) {
    Tensorf wt = zero_init ? Tensorf::zeros({out_ch, in_ch, k, k})
                           : he_normal({out_ch, in_ch, k, k}, in_ch * k * k, rng);
    w = VarF::leaf(std::move(wt), true);
    b = VarF::leaf(Tensorf::zeros({out_ch}), true);
}

LayerNormLayer::LayerNormLayer(int64_t dim) {
    gamma = VarF::leaf(Tensorf::full({dim}, 1.0f), true);
    beta = VarF::leaf(Tensorf::zeros({dim}), true);
}

TransformerBlock::TransformerBlock(int64_t d, int heads_, int64_t mlp_mult, Rng& rng)
    : ln1(d),
      ln2(d),
      q(d, d, rng),
      k(d, d, rng),
      v(d, d, rng),
      proj(d, d, rng),
      fc1(d, d * mlp_mult, rng),
      fc2(d * mlp_mult, d, rng),
      heads(heads_) {
    TEXTSR_CHECK(d % heads_ == 0, "transformer width not divisible by heads");
}

VarF TransformerBlock::forward(const VarF& tokens) const {
    const int64_t T = tokens.value().dim(0);
    const int64_t d = tokens.value().dim(1);
    const int64_t dh = d / heads;

    VarF x = ln1.forward(tokens);
    VarF qs = q.forward(x), ks = k.forward(x), vs = v.forward(x);
    std::vector<VarF> head_outs;
    for (int h = 0; h < heads; ++h) {
        VarF qh = slice_cols(qs, h * dh, (h + 1) * dh);
        VarF kh = slice_cols(ks, h * dh, (h + 1) * dh);
        VarF vh = slice_cols(vs, h * dh, (h + 1) * dh);
        VarF scores = mul_scalar(matmul(qh, transpose2d(kh)), float(1.0 / std::sqrt(double(dh))));
        VarF attn = softmax_rows(scores);
        head_outs.push_back(matmul(attn, vh));
    }
    VarF merged = heads == 1 ? head_outs[0] : concat_cols(head_outs);
    VarF attn_out = proj.forward(merged);
    VarF y = add(tokens, attn_out);

    VarF z = ln2.forward(y);
    z = fc2.forward(leaky_relu(fc1.forward(z), 0.2f));
    (void)T;
    return add(y, z);
}

void TransformerBlock::collect(ParamMap& pm, const std::string& p) {
    ln1.collect(pm, p + ".ln1");
    ln2.collect(pm, p + ".ln2");
    q.collect(pm, p + ".q");
    k.collect(pm, p + ".k");
    v.collect(pm, p + ".v");
    proj.collect(pm, p + ".proj");
    fc1.collect(pm, p + ".fc1");
    fc2.collect(pm, p + ".fc2");
}

ResBlock::ResBlock(int64_t ch, Rng& rng) : c1(ch, ch, 3, 1, 1, rng), c2(ch, ch, 3, 1, 1, rng) {}

VarF ResBlock::forward(const VarF& x) const {
    return add(x, c2.forward(leaky_relu(c1.forward(x), 0.2f)));
}

// ---- Adam ----

Adam::Adam(std::vector<VarF> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
        m_.push_back(Tensorf::zeros(p.value().shape()));
        v_.push_back(Tensorf::zeros(p.value().shape()));
    }
}

Adam::Adam(const ParamMap& pm, double lr, double beta1, double beta2, double eps)
    : Adam(
          [&pm] {
              std::vector<VarF> ps;
              for (const auto& [n, v] : pm.items) ps.push_back(v);
              return ps;
          }(),
          lr, beta1, beta2, eps) {}

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, double(t_));
    const double bc2 = 1.0 - std::pow(b2_, double(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        VarF& p = params_[i];
        if (!p.has_grad()) continue;
        Tensorf& g = p.grad();
        Tensorf& m = m_[i];
        Tensorf& v = v_[i];
        float* pw = p.value().data();
        for (int64_t j = 0; j < g.numel(); ++j) {
            m[j] = float(b1_ * m[j] + (1.0 - b1_) * g[j]);
            v[j] = float(b2_ * v[j] + (1.0 - b2_) * double(g[j]) * double(g[j]));
            const double mh = m[j] / bc1;
            const double vh = v[j] / bc2;
            pw[j] = float(pw[j] - lr_ * mh / (std::sqrt(vh) + eps_));
        }
    }
}

void Adam::save_state(const std::string& prefix,
                      std::vector<std::pair<std::string, Tensorf>>& out,
                      nlohmann::json& hdr) const {
    for (size_t i = 0; i < params_.size(); ++i) {
        out.emplace_back(prefix + "/m/" + std::to_string(i), m_[i]);
        out.emplace_back(prefix + "/v/" + std::to_string(i), v_[i]);
    }
    hdr["adam"][prefix]["t"] = t_;
    hdr["adam"][prefix]["lr"] = lr_;
}

void Adam::load_state(const std::string& prefix, const std::map<std::string, Tensorf>& tensors,
                      const nlohmann::json& hdr) {
    for (size_t i = 0; i < params_.size(); ++i) {
        auto im = tensors.find(prefix + "/m/" + std::to_string(i));
        auto iv = tensors.find(prefix + "/v/" + std::to_string(i));
        TEXTSR_CHECK(im != tensors.end() && iv != tensors.end(),
                     "checkpoint missing optimizer state for " << prefix);
        TEXTSR_CHECK(im->second.same_shape(m_[i]), "optimizer state shape mismatch");
        m_[i] = im->second;
        v_[i] = iv->second;
    }
    t_ = hdr.at("adam").at(prefix).at("t").get<int64_t>();
    lr_ = hdr.at("adam").at(prefix).at("lr").get<double>();
}

// ---- checkpoint file ----

namespace {
constexpr char kMagic[8] = {'T', 'X', 'S', 'R', 'C', 'K', 'P', '1'};
}

void save_checkpoint(const std::string& path, const nlohmann::json& header,
                     const std::vector<std::pair<std::string, Tensorf>>& tensors) {
    std::ofstream f(path, std::ios::binary);
    TEXTSR_CHECK(f.good(), "cannot open checkpoint for writing: " << path);
    f.write(kMagic, 8);
    const std::string hdr = header.dump();
    const uint64_t hlen = hdr.size();
    f.write(reinterpret_cast<const char*>(&hlen), 8);
    f.write(hdr.data(), std::streamsize(hlen));
    const uint64_t n = tensors.size();
    f.write(reinterpret_cast<const char*>(&n), 8);
    for (const auto& [name, t] : tensors) {
        const uint64_t nlen = name.size();
        f.write(reinterpret_cast<const char*>(&nlen), 8);
        f.write(name.data(), std::streamsize(nlen));
        const uint64_t nd = uint64_t(t.ndim());
        f.write(reinterpret_cast<const char*>(&nd), 8);
        for (int i = 0; i < t.ndim(); ++i) {
            const int64_t d = t.dim(i);
            f.write(reinterpret_cast<const char*>(&d), 8);
        }
        f.write(reinterpret_cast<const char*>(t.data()), std::streamsize(t.numel() * 4));
    }
    TEXTSR_CHECK(f.good(), "checkpoint write failed: " << path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    TEXTSR_CHECK(f.good(), "cannot open checkpoint: " << path);
    char magic[8];
    f.read(magic, 8);
    TEXTSR_CHECK(f.good() && std::memcmp(magic, kMagic, 8) == 0,
                 "not a checkpoint file: " << path);
    uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), 8);
    std::string hdr(hlen, '\0');
    f.read(hdr.data(), std::streamsize(hlen));
    Checkpoint ck;
    ck.header = nlohmann::json::parse(hdr);
    uint64_t n = 0;
    f.read(reinterpret_cast<char*>(&n), 8);
    for (uint64_t i = 0; i < n; ++i) {
        uint64_t nlen = 0;
        f.read(reinterpret_cast<char*>(&nlen), 8);
        std::string name(nlen, '\0');
        f.read(name.data(), std::streamsize(nlen));
        uint64_t nd = 0;
        f.read(reinterpret_cast<char*>(&nd), 8);
        std::vector<int64_t> shape(nd);
        for (auto& d : shape) f.read(reinterpret_cast<char*>(&d), 8);
        Tensorf t(shape);
        f.read(reinterpret_cast<char*>(t.data()), std::streamsize(t.numel() * 4));
        TEXTSR_CHECK(f.good(), "truncated checkpoint: " << path);
        ck.tensors.emplace(std::move(name), std::move(t));
    }
    return ck;
}

void assign_params(const ParamMap& pm, const std::map<std::string, Tensorf>& tensors) {
    for (const auto& [name, var] : pm.items) {
        auto it = tensors.find(name);
        TEXTSR_CHECK(it != tensors.end(), "checkpoint missing parameter " << name);
        TEXTSR_CHECK(it->second.same_shape(var.value()),
                     "checkpoint shape mismatch for " << name << ": " << it->second.shape_str()
                                                      << " vs " << var.value().shape_str());
        const_cast<VarF&>(var).value() = it->second;
    }
}

std::vector<std::pair<std::string, Tensorf>> dump_params(const ParamMap& pm) {
    std::vector<std::pair<std::string, Tensorf>> out;
    for (const auto& [name, var] : pm.items) out.emplace_back(name, var.value());
    return out;
}

}  // namespace textsr
