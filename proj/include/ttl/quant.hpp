// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ttl/model.hpp"
#include "ttl/tensor.hpp"

namespace ttl {

// Asymmetric 4-bit round-to-nearest group quantization. Each group of
// group_size consecutive elements (row-major order) stores
//   x_hat = scale * (code - zero),  code in [0, 15]
// with scale = (max - min) / 15 and zero = round(-min / scale), which keeps
// the per-element reconstruction error within scale / 2. A constant group
// is stored exactly (scale = value, code = 1).
struct QuantizedTensor {
    Shape shape;
    int64_t group_size = 128;
    std::vector<uint8_t> codes;  // two codes per byte, even index in the low nibble
    std::vector<float> scales;   // one per group
    std::vector<int16_t> zeros;  // one per group

    int64_t numel() const;
    int64_t n_groups() const;
    uint8_t code_at(int64_t i) const {
        const uint8_t b = codes[static_cast<size_t>(i >> 1)];
        return (i & 1) ? (b >> 4) : (b & 0xf);
    }
    float dequant_at(int64_t i) const {
        const int64_t g = i / group_size;
        return scales[static_cast<size_t>(g)] *
               (static_cast<float>(code_at(i)) - static_cast<float>(zeros[static_cast<size_t>(g)]));
    }
    void dequantize(float* out) const;
    uint64_t payload_bytes() const;
};

QuantizedTensor quantize_tensor(const float* data, const Shape& shape, int64_t group_size);

// matmul(x, dequantize(q)); bit-identical to materializing the dense matrix.
Tensor dequant_matmul(const Tensor& x, const QuantizedTensor& q);

// Whole-model 4-bit artifact. Projection matrices are quantized; norm gains
// and the token embedding are kept in 16-bit floats (small, quality-critical).
struct QuantizedParams {
    struct Entry {
        std::string name;
        Shape shape;
        bool quantized = false;
        QuantizedTensor q;           // when quantized
        std::vector<uint16_t> f16;   // when not
    };
    ModelConfig config;
    int64_t group_size = 128;
    std::vector<Entry> tensors; // order of ModelParams::named_tensors()

    uint64_t footprint_bytes() const; // total payload (codes + scales + zeros + f16)
    void save(const std::string& path) const;
    static QuantizedParams load(const std::string& path);
};

QuantizedParams quantize(const ModelParams& params, int64_t group_size = 128);

// Reconstructs dense f32 weights (test oracle and conversion path).
ModelParams dequantize(const QuantizedParams& qp);

// Serialized payload size for a model of this config, computed from the
// declared shapes alone. Equals quantize(...).footprint_bytes().
uint64_t quantized_footprint_bytes(const ModelConfig& config, int64_t group_size = 128);

} // namespace ttl
