// SPDX-License-Identifier: Apache-2.0
#include "ttl/model.hpp"

#include <cmath>
#include <limits>

namespace ttl {

void ModelConfig::validate() const {
    if (hidden_size <= 0 || intermediate_size <= 0 || n_layers < 0 || vocab_size <= 0)
        throw ConfigError("model config: sizes must be positive");
    if (context_length < 1) throw ConfigError("model config: context_length must be >= 1");
    if (n_heads <= 0 || hidden_size % n_heads != 0)
        throw ConfigError("model config: hidden_size must be divisible by n_heads");
    if (n_kv_heads <= 0 || n_heads % n_kv_heads != 0)
        throw ConfigError("model config: n_heads must be divisible by n_kv_heads");
    // odd head_dim is rejected by the rope op itself; layer-free configs
    // (param counting, serialization) stay usable
}

ModelConfig ModelConfig::preset_160m() {
    ModelConfig c;
    c.hidden_size = 768;
    c.intermediate_size = 3072;
    c.context_length = 2048;
    c.n_heads = 12;
    c.n_kv_heads = 12;
    c.n_layers = 12;
    c.vocab_size = 32000;
    return c;
}

ModelConfig ModelConfig::preset_460m() {
    ModelConfig c;
    c.hidden_size = 1024;
    c.intermediate_size = 4096;
    c.context_length = 2048;
    c.n_heads = 16;
    c.n_kv_heads = 16;
    c.n_layers = 24;
    c.vocab_size = 32000;
    return c;
}

uint64_t param_count(const ModelConfig& c) {
    c.validate();
    const uint64_t h = static_cast<uint64_t>(c.hidden_size);
    const uint64_t i = static_cast<uint64_t>(c.intermediate_size);
    const uint64_t v = static_cast<uint64_t>(c.vocab_size);
    const uint64_t kv = static_cast<uint64_t>(c.kv_width());
    uint64_t per_layer = h * h      // q
                         + 2 * h * kv // k, v
                         + h * h    // o
                         + 2 * h    // two norm gains
                         + 2 * h * i // gate, up
                         + i * h;   // down
    uint64_t total = v * h + static_cast<uint64_t>(c.n_layers) * per_layer + h;
    if (!c.tie_embeddings) total += h * v;
    return total;
}

ModelParams ModelParams::init(const ModelConfig& config, Rng& rng) {
    config.validate();
    ModelParams p;
    p.config = config;
    const float std_dev = 0.02f;
    const float residual_std =
        std_dev / std::sqrt(2.0f * static_cast<float>(std::max<int64_t>(config.n_layers, 1)));
    const int64_t h = config.hidden_size, i = config.intermediate_size;
    const int64_t kv = config.kv_width(), v = config.vocab_size;

    p.token_embedding = Tensor::randn({v, h}, rng, std_dev, true);
    p.layers.resize(static_cast<size_t>(config.n_layers));
    for (auto& l : p.layers) {
        l.attn_norm = Tensor::full({h}, 1.0f, true);
        l.wq = Tensor::randn({h, h}, rng, std_dev, true);
        l.wk = Tensor::randn({h, kv}, rng, std_dev, true);
        l.wv = Tensor::randn({h, kv}, rng, std_dev, true);
        l.wo = Tensor::randn({h, h}, rng, residual_std, true);
        l.mlp_norm = Tensor::full({h}, 1.0f, true);
        l.w_gate = Tensor::randn({h, i}, rng, std_dev, true);
        l.w_up = Tensor::randn({h, i}, rng, std_dev, true);
        l.w_down = Tensor::randn({i, h}, rng, residual_std, true);
    }
    p.final_norm = Tensor::full({h}, 1.0f, true);
    if (!config.tie_embeddings) p.lm_head = Tensor::randn({h, v}, rng, std_dev, true);
    return p;
}

ModelParams ModelParams::zeros(const ModelConfig& config) {
    config.validate();
    ModelParams p;
    p.config = config;
    const int64_t h = config.hidden_size, i = config.intermediate_size;
    const int64_t kv = config.kv_width(), v = config.vocab_size;
    p.token_embedding = Tensor::zeros({v, h}, true);
    p.layers.resize(static_cast<size_t>(config.n_layers));
    for (auto& l : p.layers) {
        l.attn_norm = Tensor::zeros({h}, true);
        l.wq = Tensor::zeros({h, h}, true);
        l.wk = Tensor::zeros({h, kv}, true);
        l.wv = Tensor::zeros({h, kv}, true);
        l.wo = Tensor::zeros({h, h}, true);
        l.mlp_norm = Tensor::zeros({h}, true);
        l.w_gate = Tensor::zeros({h, i}, true);
        l.w_up = Tensor::zeros({h, i}, true);
        l.w_down = Tensor::zeros({i, h}, true);
    }
    p.final_norm = Tensor::zeros({h}, true);
    if (!config.tie_embeddings) p.lm_head = Tensor::zeros({h, v}, true);
    return p;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named_tensors() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("token_embedding", token_embedding);
    for (size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        const std::string pfx = "layer." + std::to_string(i) + ".";
        out.emplace_back(pfx + "attn_norm", l.attn_norm);
        out.emplace_back(pfx + "wq", l.wq);
        out.emplace_back(pfx + "wk", l.wk);
        out.emplace_back(pfx + "wv", l.wv);
        out.emplace_back(pfx + "wo", l.wo);
        out.emplace_back(pfx + "mlp_norm", l.mlp_norm);
        out.emplace_back(pfx + "w_gate", l.w_gate);
        out.emplace_back(pfx + "w_up", l.w_up);
        out.emplace_back(pfx + "w_down", l.w_down);
    }
    out.emplace_back("final_norm", final_norm);
    if (!config.tie_embeddings) out.emplace_back("lm_head", lm_head);
    return out;
}

static Tensor causal_mask(int64_t seq) {
    std::vector<float> m(static_cast<size_t>(seq * seq), 0.0f);
    const float neg_inf = -std::numeric_limits<float>::infinity();
    for (int64_t i = 0; i < seq; ++i)
        for (int64_t j = i + 1; j < seq; ++j) m[static_cast<size_t>(i * seq + j)] = neg_inf;
    return Tensor::from_data({seq, seq}, std::move(m));
}

// Splits [B, S, width] activations into [B, heads, S, head_dim] with rope
// applied per position.
static Tensor to_heads(const Tensor& x, int64_t batch, int64_t seq, int64_t heads,
                       int64_t head_dim, const std::vector<int64_t>& positions, float theta) {
    Tensor r = reshape(x, {batch, seq, heads, head_dim});
    r = rope(r, positions, theta);
    return permute_0213(r);
}

Tensor gqa_attention(const Tensor& x, const LayerParams& layer, const ModelConfig& config,
                     bool causal) {
    const bool flat = x.ndim() == 2;
    const Tensor x3 = flat ? reshape(x, {1, x.dim(0), x.dim(1)}) : x;
    const int64_t batch = x3.dim(0), seq = x3.dim(1);
    if (seq > config.context_length)
        throw ShapeError("attention: sequence exceeds context_length");
    const int64_t hd = config.head_dim();
    const int64_t group = config.n_heads / config.n_kv_heads;

    std::vector<int64_t> positions(static_cast<size_t>(seq));
    for (int64_t i = 0; i < seq; ++i) positions[static_cast<size_t>(i)] = i;

    Tensor q = to_heads(matmul(x3, layer.wq), batch, seq, config.n_heads, hd, positions,
                        config.rope_theta);
    Tensor k = to_heads(matmul(x3, layer.wk), batch, seq, config.n_kv_heads, hd, positions,
                        config.rope_theta);
    Tensor v = permute_0213(reshape(matmul(x3, layer.wv), {batch, seq, config.n_kv_heads, hd}));
    if (group > 1) {
        k = repeat_heads(k, group);
        v = repeat_heads(v, group);
    }

    Tensor scores = scale(matmul_nt(q, k), 1.0f / std::sqrt(static_cast<float>(hd)));
    Tensor probs = causal ? softmax_rows(scores, causal_mask(seq)) : softmax_rows(scores);
    Tensor ctx = matmul(probs, v);                              // [B, heads, S, hd]
    Tensor merged = reshape(permute_0213(ctx), {batch, seq, config.hidden_size});
    Tensor out = matmul(merged, layer.wo);
    return flat ? reshape(out, {seq, config.hidden_size}) : out;
}

Tensor swiglu_mlp(const Tensor& x, const LayerParams& layer) {
    Tensor gate = silu(matmul(x, layer.w_gate));
    Tensor up = matmul(x, layer.w_up);
    return matmul(mul(gate, up), layer.w_down);
}

Tensor model_forward(const ModelParams& params, const std::vector<int32_t>& tokens,
                     int64_t batch, int64_t seq) {
    const ModelConfig& c = params.config;
    if (batch <= 0 || seq <= 0 || static_cast<int64_t>(tokens.size()) != batch * seq)
        throw ShapeError("model_forward: tokens must hold batch*seq ids");
    if (seq > c.context_length) throw ShapeError("model_forward: sequence exceeds context_length");

    Tensor x = reshape(embedding(params.token_embedding, tokens), {batch, seq, c.hidden_size});
    for (const auto& layer : params.layers) {
        x = add(x, gqa_attention(rmsnorm(x, layer.attn_norm, c.norm_eps), layer, c));
        x = add(x, swiglu_mlp(rmsnorm(x, layer.mlp_norm, c.norm_eps), layer));
    }
    x = rmsnorm(x, params.final_norm, c.norm_eps);
    Tensor flat = reshape(x, {batch * seq, c.hidden_size});
    if (c.tie_embeddings) return matmul_nt(flat, params.token_embedding);
    return matmul(flat, params.lm_head);
}

} // namespace ttl
