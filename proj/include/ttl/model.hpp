// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ttl/rng.hpp"
#include "ttl/tensor.hpp"

namespace ttl {

// Decoder-only transformer dimensions. Defaults that the architecture
// family fixes (rope_theta, norm_eps) are overridable but rarely touched.
struct ModelConfig {
    int64_t hidden_size = 0;
    int64_t intermediate_size = 0;
    int64_t context_length = 0;
    int64_t n_heads = 0;
    int64_t n_kv_heads = 0;
    int64_t n_layers = 0;
    int64_t vocab_size = 0;
    float rope_theta = 10000.0f;
    float norm_eps = 1e-5f;
    bool tie_embeddings = false;

    void validate() const;
    int64_t head_dim() const { return hidden_size / n_heads; }
    // width of the k/v projections: hidden * n_kv_heads / n_heads
    int64_t kv_width() const { return head_dim() * n_kv_heads; }

    static ModelConfig preset_160m();
    static ModelConfig preset_460m();
};

struct LayerParams {
    Tensor attn_norm; // [hidden]
    Tensor wq;        // [hidden, hidden]
    Tensor wk;        // [hidden, kv_width]
    Tensor wv;        // [hidden, kv_width]
    Tensor wo;        // [hidden, hidden]
    Tensor mlp_norm;  // [hidden]
    Tensor w_gate;    // [hidden, intermediate]
    Tensor w_up;      // [hidden, intermediate]
    Tensor w_down;    // [intermediate, hidden]
};

// All weights of a model. No bias terms anywhere.
struct ModelParams {
    ModelConfig config;
    Tensor token_embedding; // [vocab, hidden]
    std::vector<LayerParams> layers;
    Tensor final_norm; // [hidden]
    Tensor lm_head;    // [hidden, vocab]; undefined when tie_embeddings

    // normal(0, 0.02) init with the residual outputs (wo, w_down) scaled
    // down by sqrt(2 * n_layers) for stable small-scale training.
    static ModelParams init(const ModelConfig& config, Rng& rng);
    static ModelParams zeros(const ModelConfig& config);

    // Deterministic (name, tensor) enumeration; the checkpoint tensor table
    // and the optimizer state follow this exact order.
    std::vector<std::pair<std::string, Tensor>> named_tensors() const;
};

// Exact parameter total implied by the config's shapes.
uint64_t param_count(const ModelConfig& config);

// One attention block on x: [batch, seq, hidden] (or [seq, hidden]).
Tensor gqa_attention(const Tensor& x, const LayerParams& layer, const ModelConfig& config,
                     bool causal = true);

// down( silu(x @ gate) * (x @ up) ), * elementwise
Tensor swiglu_mlp(const Tensor& x, const LayerParams& layer);

// Full forward: tokens is a [batch * seq] row-major id block; returns
// logits [batch * seq, vocab]. Records the autograd tape when any
// parameter requires grad.
Tensor model_forward(const ModelParams& params, const std::vector<int32_t>& tokens,
                     int64_t batch, int64_t seq);

} // namespace ttl
