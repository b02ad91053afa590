// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ttl/model.hpp"
#include "ttl/quant.hpp"

namespace ttl {

struct GenerationParams {
    int64_t max_new_tokens = 128;
    double temperature = 1.0; // 0 means greedy
    int64_t top_k = 0;        // 0 means unrestricted
    uint64_t seed = 0;
    std::vector<int32_t> stop_ids;
    bool use_cache = true; // false: re-forward the whole prefix every step
};

struct GenerationResult {
    std::vector<int32_t> ids; // generated tokens (prompt excluded)
    bool prompt_truncated = false;
};

// Read-only weight view the decoder runs against: dense f32 weights, or the
// f16/4-bit tensors of a quantized model, dequantized row-by-row on the fly.
class InferenceModel {
  public:
    explicit InferenceModel(const ModelParams& params);     // borrows params
    explicit InferenceModel(const QuantizedParams& params); // borrows params

    const ModelConfig& config() const { return config_; }
    uint64_t footprint_bytes() const { return footprint_; } // 0 for dense f32

    struct MatRef {
        enum class Kind { F32, F16, Q4 } kind = Kind::F32;
        int64_t rows = 0, cols = 0;
        const float* f32 = nullptr;
        const uint16_t* f16 = nullptr;
        const QuantizedTensor* q4 = nullptr;

        // acc[0..cols) += coeff * row(r)
        void axpy_row(int64_t r, float coeff, float* acc) const;
        // dot(row(r), x)
        float dot_row(int64_t r, const float* x) const;
        void copy_row(int64_t r, float* out) const;
    };

    struct LayerRefs {
        const float* attn_norm; // norms are always dense f32 (decoded once)
        const float* mlp_norm;
        MatRef wq, wk, wv, wo, w_gate, w_up, w_down;
    };

    const MatRef& embedding() const { return embedding_; }
    const MatRef& head() const { return head_; } // undefined when tied
    const float* final_norm() const { return final_norm_.data(); }
    const LayerRefs& layer(int64_t i) const { return layers_[static_cast<size_t>(i)]; }

  private:
    ModelConfig config_;
    uint64_t footprint_ = 0;
    MatRef embedding_, head_;
    std::vector<LayerRefs> layers_;
    std::vector<float> final_norm_;
    std::vector<std::vector<float>> norm_storage_; // decoded f16 norm gains
};

// Incremental decoder state: per-layer key/value caches. feed() never
// recomputes earlier positions.
class InferenceSession {
  public:
    explicit InferenceSession(const InferenceModel& model);

    // Appends one token and returns the logits at its position.
    const std::vector<float>& feed(int32_t token);
    void reset();
    int64_t position() const { return pos_; }

  private:
    const InferenceModel& model_;
    int64_t pos_ = 0;
    std::vector<std::vector<float>> k_cache_; // per layer: [ctx, kv_heads*head_dim]
    std::vector<std::vector<float>> v_cache_;
    std::vector<float> logits_;
    // scratch
    std::vector<float> x_, xn_, q_, kv_, attn_out_, gate_, up_, act_, scores_;
};

// Greedy when temperature == 0; sampling restricted to top_k when set;
// reproducible for a fixed seed. Stops at any stop id (included in the
// output) or after max_new_tokens. A prompt longer than the context is
// truncated on the left.
GenerationResult generate(const InferenceModel& model, const std::vector<int32_t>& prompt,
                          const GenerationParams& params);

struct ThroughputStats {
    std::vector<double> tokens_per_s; // one per repetition
    double mean = 0, median = 0, stddev = 0;
    int64_t tokens_per_rep = 0;
    std::string hardware;
    uint64_t footprint_bytes = 0;

    std::string text() const;
};

// Decode-loop tokens/second over `repetitions` greedy runs.
ThroughputStats measure_throughput(const InferenceModel& model,
                                   const std::vector<int32_t>& prompt, int64_t n_tokens,
                                   int64_t repetitions);

} // namespace ttl
