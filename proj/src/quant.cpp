// SPDX-License-Identifier: Apache-2.0
#include "ttl/quant.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "ttl/io_util.hpp"

namespace ttl {

int64_t QuantizedTensor::numel() const { return shape_numel(shape); }
int64_t QuantizedTensor::n_groups() const { return (numel() + group_size - 1) / group_size; }

void QuantizedTensor::dequantize(float* out) const {
    const int64_t n = numel();
    for (int64_t g = 0; g < n_groups(); ++g) {
        const float scale = scales[static_cast<size_t>(g)];
        const float zero = static_cast<float>(zeros[static_cast<size_t>(g)]);
        const int64_t end = std::min(n, (g + 1) * group_size);
        for (int64_t i = g * group_size; i < end; ++i)
            out[i] = scale * (static_cast<float>(code_at(i)) - zero);
    }
}

uint64_t QuantizedTensor::payload_bytes() const {
    return static_cast<uint64_t>((numel() + 1) / 2)      // codes
           + static_cast<uint64_t>(n_groups()) * 4       // scales f32
           + static_cast<uint64_t>(n_groups()) * 2;      // zeros i16
}

QuantizedTensor quantize_tensor(const float* data, const Shape& shape, int64_t group_size) {
    if (group_size < 2) throw ConfigError("quantize: group_size must be >= 2");
    QuantizedTensor q;
    q.shape = shape;
    q.group_size = group_size;
    const int64_t n = q.numel();
    q.codes.assign(static_cast<size_t>((n + 1) / 2), 0);
    const int64_t groups = q.n_groups();
    q.scales.resize(static_cast<size_t>(groups));
    q.zeros.resize(static_cast<size_t>(groups));

    auto set_code = [&](int64_t i, int64_t code) {
        auto& b = q.codes[static_cast<size_t>(i >> 1)];
        if (i & 1)
            b = static_cast<uint8_t>((b & 0x0f) | (code << 4));
        else
            b = static_cast<uint8_t>((b & 0xf0) | code);
    };

    for (int64_t g = 0; g < groups; ++g) {
        const int64_t begin = g * group_size;
        const int64_t end = std::min(n, begin + group_size);
        float mn = data[begin], mx = data[begin];
        for (int64_t i = begin + 1; i < end; ++i) {
            mn = std::min(mn, data[i]);
            mx = std::max(mx, data[i]);
        }
        if (mx == mn) {
            // constant group reconstructs exactly: value * (1 - 0)
            q.scales[static_cast<size_t>(g)] = mn;
            q.zeros[static_cast<size_t>(g)] = 0;
            const int64_t code = (mn == 0.0f) ? 0 : 1;
            for (int64_t i = begin; i < end; ++i) set_code(i, code);
            continue;
        }
        const float scale = (mx - mn) / 15.0f;
        const int64_t zero = std::lround(-static_cast<double>(mn) / scale);
        q.scales[static_cast<size_t>(g)] = scale;
        q.zeros[static_cast<size_t>(g)] = static_cast<int16_t>(zero);
        for (int64_t i = begin; i < end; ++i) {
            int64_t code = std::lround(static_cast<double>(data[i]) / scale) + zero;
            code = std::clamp<int64_t>(code, 0, 15);
            set_code(i, code);
        }
    }
    return q;
}

Tensor dequant_matmul(const Tensor& x, const QuantizedTensor& q) {
    if (q.shape.size() != 2) throw ShapeError("dequant_matmul: matrix expected");
    std::vector<float> dense(static_cast<size_t>(q.numel()));
    q.dequantize(dense.data());
    return matmul(x, Tensor::from_data(q.shape, std::move(dense)));
}

// ---------------------------------------------------------------------------
// whole-model quantization
// ---------------------------------------------------------------------------

static bool should_quantize(const std::string& name) {
    // norm gains and the token embedding stay in f16
    if (name == "token_embedding") return false;
    if (name.find("norm") != std::string::npos) return false;
    return true;
}

QuantizedParams quantize(const ModelParams& params, int64_t group_size) {
    QuantizedParams qp;
    qp.config = params.config;
    qp.group_size = group_size;
    for (const auto& [name, t] : params.named_tensors()) {
        QuantizedParams::Entry e;
        e.name = name;
        e.shape = t.shape();
        if (should_quantize(name)) {
            e.quantized = true;
            e.q = quantize_tensor(t.data(), t.shape(), group_size);
        } else {
            e.f16.resize(static_cast<size_t>(t.numel()));
            const float* p = t.data();
            for (int64_t i = 0; i < t.numel(); ++i)
                e.f16[static_cast<size_t>(i)] = f32_to_f16(p[i]);
        }
        qp.tensors.push_back(std::move(e));
    }
    return qp;
}

ModelParams dequantize(const QuantizedParams& qp) {
    ModelParams params = ModelParams::zeros(qp.config);
    auto named = params.named_tensors();
    if (named.size() != qp.tensors.size())
        throw FormatError("dequantize: tensor count mismatch with config");
    for (size_t i = 0; i < named.size(); ++i) {
        const auto& e = qp.tensors[i];
        if (e.name != named[i].first || e.shape != named[i].second.shape())
            throw FormatError("dequantize: tensor layout mismatch at " + e.name);
        float* dst = named[i].second.mutable_data();
        if (e.quantized) {
            e.q.dequantize(dst);
        } else {
            for (size_t j = 0; j < e.f16.size(); ++j) dst[j] = f16_to_f32(e.f16[j]);
        }
    }
    return params;
}

uint64_t QuantizedParams::footprint_bytes() const {
    uint64_t total = 0;
    for (const auto& e : tensors) {
        if (e.quantized)
            total += e.q.payload_bytes();
        else
            total += static_cast<uint64_t>(e.f16.size()) * 2;
    }
    return total;
}

uint64_t quantized_footprint_bytes(const ModelConfig& c, int64_t group_size) {
    c.validate();
    if (group_size < 2) throw ConfigError("quantize: group_size must be >= 2");
    const uint64_t g = static_cast<uint64_t>(group_size);
    auto q_bytes = [g](uint64_t n) {
        const uint64_t groups = (n + g - 1) / g;
        return (n + 1) / 2 + groups * (4 + 2); // codes + f32 scale + i16 zero
    };
    const uint64_t h = static_cast<uint64_t>(c.hidden_size);
    const uint64_t inter = static_cast<uint64_t>(c.intermediate_size);
    const uint64_t v = static_cast<uint64_t>(c.vocab_size);
    const uint64_t kv = static_cast<uint64_t>(c.kv_width());
    uint64_t total = 2 * v * h; // embedding in f16
    for (int64_t l = 0; l < c.n_layers; ++l) {
        total += 2 * h * 2;                   // two norm gains in f16
        total += 2 * q_bytes(h * h);          // q, o
        total += 2 * q_bytes(h * kv);         // k, v
        total += 2 * q_bytes(h * inter);      // gate, up
        total += q_bytes(inter * h);          // down
    }
    total += 2 * h; // final norm
    if (!c.tie_embeddings) total += q_bytes(h * v);
    return total;
}

// ---------------------------------------------------------------------------
// file format: magic TTLQ, version, config, per-tensor payloads
// ---------------------------------------------------------------------------

namespace {
constexpr char kQuantMagic[4] = {'T', 'T', 'L', 'Q'};
constexpr uint32_t kQuantVersion = 1;
} // namespace

void QuantizedParams::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for write: " + path);
    write_bytes(f, kQuantMagic, 4);
    write_le<uint32_t>(f, kQuantVersion);
    write_le<uint64_t>(f, static_cast<uint64_t>(config.hidden_size));
    write_le<uint64_t>(f, static_cast<uint64_t>(config.intermediate_size));
    write_le<uint64_t>(f, static_cast<uint64_t>(config.context_length));
    write_le<uint64_t>(f, static_cast<uint64_t>(config.n_heads));
    write_le<uint64_t>(f, static_cast<uint64_t>(config.n_kv_heads));
    write_le<uint64_t>(f, static_cast<uint64_t>(config.n_layers));
    write_le<uint64_t>(f, static_cast<uint64_t>(config.vocab_size));
    write_le<float>(f, config.rope_theta);
    write_le<float>(f, config.norm_eps);
    write_le<uint8_t>(f, config.tie_embeddings ? 1 : 0);
    write_le<uint32_t>(f, static_cast<uint32_t>(group_size));
    write_le<uint32_t>(f, static_cast<uint32_t>(tensors.size()));
    for (const auto& e : tensors) {
        write_string(f, e.name);
        write_le<uint8_t>(f, e.quantized ? 1 : 0);
        write_le<uint32_t>(f, static_cast<uint32_t>(e.shape.size()));
        for (int64_t d : e.shape) write_le<uint64_t>(f, static_cast<uint64_t>(d));
        if (e.quantized) {
            for (float s : e.q.scales) write_le<float>(f, s);
            for (int16_t z : e.q.zeros) write_le<int16_t>(f, z);
            write_bytes(f, e.q.codes.data(), e.q.codes.size());
        } else {
            for (uint16_t h : e.f16) write_le<uint16_t>(f, h);
        }
    }
    if (!f) throw IoError("write failed: " + path);
}

QuantizedParams QuantizedParams::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open file: " + path);
    char magic[4];
    read_bytes(f, magic, 4);
    if (std::memcmp(magic, kQuantMagic, 4) != 0)
        throw FormatError(path + ": not a quantized model file");
    if (read_le<uint32_t>(f) != kQuantVersion)
        throw FormatError(path + ": unsupported version");
    QuantizedParams qp;
    qp.config.hidden_size = static_cast<int64_t>(read_le<uint64_t>(f));
    qp.config.intermediate_size = static_cast<int64_t>(read_le<uint64_t>(f));
    qp.config.context_length = static_cast<int64_t>(read_le<uint64_t>(f));
    qp.config.n_heads = static_cast<int64_t>(read_le<uint64_t>(f));
    qp.config.n_kv_heads = static_cast<int64_t>(read_le<uint64_t>(f));
    qp.config.n_layers = static_cast<int64_t>(read_le<uint64_t>(f));
    qp.config.vocab_size = static_cast<int64_t>(read_le<uint64_t>(f));
    qp.config.rope_theta = read_le<float>(f);
    qp.config.norm_eps = read_le<float>(f);
    qp.config.tie_embeddings = read_le<uint8_t>(f) != 0;
    qp.group_size = read_le<uint32_t>(f);
    const uint32_t count = read_le<uint32_t>(f);
    for (uint32_t i = 0; i < count; ++i) {
        QuantizedParams::Entry e;
        e.name = read_string(f);
        e.quantized = read_le<uint8_t>(f) != 0;
        const uint32_t ndim = read_le<uint32_t>(f);
        for (uint32_t d = 0; d < ndim; ++d)
            e.shape.push_back(static_cast<int64_t>(read_le<uint64_t>(f)));
        const int64_t n = shape_numel(e.shape);
        if (e.quantized) {
            e.q.shape = e.shape;
            e.q.group_size = qp.group_size;
            const int64_t groups = e.q.n_groups();
            e.q.scales.resize(static_cast<size_t>(groups));
            for (auto& s : e.q.scales) s = read_le<float>(f);
            e.q.zeros.resize(static_cast<size_t>(groups));
            for (auto& z : e.q.zeros) z = read_le<int16_t>(f);
            e.q.codes.resize(static_cast<size_t>((n + 1) / 2));
            read_bytes(f, e.q.codes.data(), e.q.codes.size());
        } else {
            e.f16.resize(static_cast<size_t>(n));
            for (auto& h : e.f16) h = read_le<uint16_t>(f);
        }
        qp.tensors.push_back(std::move(e));
    }
    return qp;
}

} // namespace ttl
