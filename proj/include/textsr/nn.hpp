#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "textsr/losses.hpp"
#include "textsr/ops.hpp"
#include "textsr/rng.hpp"

namespace textsr {

using VarF = Var<float>;

// Ordered named parameter registry (order defines serialization layout)
struct ParamMap {
    std::vector<std::pair<std::string, VarF>> items;

    void add(const std::string& name, const VarF& v) { items.emplace_back(name, v); }
    void merge(const ParamMap& other, const std::string& prefix) {
        for (const auto& [n, v] : other.items) items.emplace_back(prefix + n, v);
    }
    int64_t total_count() const {
        int64_t n = 0;
        for (const auto& [k, v] : items) n += v.value().numel();
        return n;
    }
};

// ---- initializers ----

Tensorf he_normal(std::vector<int64_t> shape, int64_t fan_in, Rng& rng, double gain = 1.0);

// ---- layers ----

struct LinearLayer {
    VarF w, b;

    LinearLayer() = default;
    LinearLayer(int64_t in, int64_t out, Rng& rng, double gain = 1.0, double bias_init = 0.0);
    VarF forward(const VarF& x) const { return linear(x, w, b); }
    void collect(ParamMap& pm, const std::string& p) {
        pm.add(p + ".w", w);
        pm.add(p + ".b", b);
    }
};

struct ConvLayer {
    VarF w, b;
    int64_t stride = 1, pad = 1;

    ConvLayer() = default;
    ConvLayer(int64_t in_ch, int64_t out_ch, int64_t k, int64_t stride, int64_t pad, Rng& rng,
              bool zero_init = false);
    VarF forward(const VarF& x) const { return conv2d(x, w, b, stride, pad); }
    void collect(ParamMap& pm, const std::string& p) {
        pm.add(p + ".w", w);
        pm.add(p + ".b", b);
    }
};

struct LayerNormLayer {
    VarF gamma, beta;

    LayerNormLayer() = default;
    explicit LayerNormLayer(int64_t dim);
    VarF forward(const VarF& x) const { return layernorm_rows(x, gamma, beta); }
    void collect(ParamMap& pm, const std::string& p) {
        pm.add(p + ".g", gamma);
        pm.add(p + ".b", beta);
    }
};

// pre-norm transformer encoder block on [T,d] token matrices
struct TransformerBlock {
    LayerNormLayer ln1, ln2;
    LinearLayer q, k, v, proj, fc1, fc2;
    int heads = 4;

    TransformerBlock() = default;
    TransformerBlock(int64_t d, int heads, int64_t mlp_mult, Rng& rng);
    VarF forward(const VarF& tokens) const;
    void collect(ParamMap& pm, const std::string& p);
};

// residual conv block: x + conv(lrelu(conv(x)))
struct ResBlock {
    ConvLayer c1, c2;

    ResBlock() = default;
    ResBlock(int64_t ch, Rng& rng);
    VarF forward(const VarF& x) const;
    void collect(ParamMap& pm, const std::string& p) {
        c1.collect(pm, p + ".c1");
        c2.collect(pm, p + ".c2");
    }
};

// ---- optimizer ----

class Adam {
public:
    Adam() = default;
    Adam(std::vector<VarF> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8);
    explicit Adam(const ParamMap& pm, double lr, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8);

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }
    void zero_grad();
    void step();

    // serialization into a named-tensor sink (state tensors + step counter)
    void save_state(const std::string& prefix,
                    std::vector<std::pair<std::string, Tensorf>>& out, nlohmann::json& hdr) const;
    void load_state(const std::string& prefix,
                    const std::map<std::string, Tensorf>& tensors, const nlohmann::json& hdr);

private:
    std::vector<VarF> params_;
    std::vector<Tensorf> m_, v_;
    double lr_ = 1e-4, b1_ = 0.9, b2_ = 0.999, eps_ = 1e-8;
    int64_t t_ = 0;
};

// ---- checkpoint container ----

struct Checkpoint {
    nlohmann::json header;
    std::map<std::string, Tensorf> tensors;
};

void save_checkpoint(const std::string& path, const nlohmann::json& header,
                     const std::vector<std::pair<std::string, Tensorf>>& tensors);
Checkpoint load_checkpoint(const std::string& path);

// copy values into registered parameters by name (strict)
void assign_params(const ParamMap& pm, const std::map<std::string, Tensorf>& tensors);
std::vector<std::pair<std::string, Tensorf>> dump_params(const ParamMap& pm);

}  // namespace textsr
