// SPDX-License-Identifier: Apache-2.0
#include "ttl/inference.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "ttl/io_util.hpp"
#include "ttl/rng.hpp"

namespace ttl {

// ---------------------------------------------------------------------------
// weight views
// ---------------------------------------------------------------------------

void InferenceModel::MatRef::axpy_row(int64_t r, float coeff, float* acc) const {
    switch (kind) {
        case Kind::F32: {
            const float* row = f32 + r * cols;
            for (int64_t j = 0; j < cols; ++j) acc[j] += coeff * row[j];
            break;
        }
        case Kind::F16: {
            const uint16_t* row = f16 + r * cols;
            for (int64_t j = 0; j < cols; ++j) acc[j] += coeff * f16_to_f32(row[j]);
            break;
        }
        case Kind::Q4: {
            const int64_t base = r * cols;
            for (int64_t j = 0; j < cols; ++j) acc[j] += coeff * q4->dequant_at(base + j);
            break;
        }
    }
}

float InferenceModel::MatRef::dot_row(int64_t r, const float* x) const {
    float acc = 0.0f;
    switch (kind) {
        case Kind::F32: {
            const float* row = f32 + r * cols;
            for (int64_t j = 0; j < cols; ++j) acc += row[j] * x[j];
            break;
        }
        case Kind::F16: {
            const uint16_t* row = f16 + r * cols;
            for (int64_t j = 0; j < cols; ++j) acc += f16_to_f32(row[j]) * x[j];
            break;
        }
        case Kind::Q4: {
            const int64_t base = r * cols;
            for (int64_t j = 0; j < cols; ++j) acc += q4->dequant_at(base + j) * x[j];
            break;
        }
    }
    return acc;
}

void InferenceModel::MatRef::copy_row(int64_t r, float* out) const {
    switch (kind) {
        case Kind::F32:
            std::copy(f32 + r * cols, f32 + (r + 1) * cols, out);
            break;
        case Kind::F16:
            for (int64_t j = 0; j < cols; ++j) out[j] = f16_to_f32(f16[r * cols + j]);
            break;
        case Kind::Q4: {
            const int64_t base = r * cols;
            for (int64_t j = 0; j < cols; ++j) out[j] = q4->dequant_at(base + j);
            break;
        }
    }
}

namespace {

// y[cols] = x^T * W for row-major W[rows, cols]
void matvec(const InferenceModel::MatRef& w, const float* x, float* y) {
    std::fill(y, y + w.cols, 0.0f);
    for (int64_t i = 0; i < w.rows; ++i) {
        const float c = x[i];
        if (c != 0.0f) w.axpy_row(i, c, y);
    }
}

void rmsnorm_vec(const float* x, const float* gain, float eps, int64_t n, float* out) {
    double ms = 0.0;
    for (int64_t i = 0; i < n; ++i) ms += static_cast<double>(x[i]) * x[i];
    const float inv = static_cast<float>(1.0 / std::sqrt(ms / static_cast<double>(n) + eps));
    for (int64_t i = 0; i < n; ++i) out[i] = x[i] * inv * gain[i];
}

void rope_vec(float* x, int64_t heads, int64_t head_dim, int64_t pos, float theta) {
    const int64_t half = head_dim / 2;
    for (int64_t h = 0; h < heads; ++h) {
        float* v = x + h * head_dim;
        for (int64_t i = 0; i < half; ++i) {
            const double freq = std::pow(static_cast<double>(theta),
                                         -2.0 * static_cast<double>(i) / static_cast<double>(head_dim));
            const double ang = static_cast<double>(pos) * freq;
            const float c = static_cast<float>(std::cos(ang));
            const float s = static_cast<float>(std::sin(ang));
            const float x0 = v[2 * i], x1 = v[2 * i + 1];
            v[2 * i] = x0 * c - x1 * s;
            v[2 * i + 1] = x0 * s + x1 * c;
        }
    }
}

InferenceModel::MatRef dense_ref(const Tensor& t) {
    InferenceModel::MatRef m;
    m.kind = InferenceModel::MatRef::Kind::F32;
    m.rows = t.dim(0);
    m.cols = t.dim(1);
    m.f32 = t.data();
    return m;
}

} // namespace

InferenceModel::InferenceModel(const ModelParams& params) : config_(params.config) {
    config_.validate();
    embedding_ = dense_ref(params.token_embedding);
    for (const auto& l : params.layers) {
        LayerRefs refs;
        refs.attn_norm = l.attn_norm.data();
        refs.mlp_norm = l.mlp_norm.data();
        refs.wq = dense_ref(l.wq);
        refs.wk = dense_ref(l.wk);
        refs.wv = dense_ref(l.wv);
        refs.wo = dense_ref(l.wo);
        refs.w_gate = dense_ref(l.w_gate);
        refs.w_up = dense_ref(l.w_up);
        refs.w_down = dense_ref(l.w_down);
        layers_.push_back(refs);
    }
    final_norm_.assign(params.final_norm.data(), params.final_norm.data() + config_.hidden_size);
    if (!config_.tie_embeddings) head_ = dense_ref(params.lm_head);
}

InferenceModel::InferenceModel(const QuantizedParams& qp)
    : config_(qp.config), footprint_(qp.footprint_bytes()) {
    config_.validate();
    auto make_ref = [&](const QuantizedParams::Entry& e) {
        MatRef m;
        m.rows = e.shape.size() == 2 ? e.shape[0] : 1;
        m.cols = e.shape.back();
        if (e.quantized) {
            m.kind = MatRef::Kind::Q4;
            m.q4 = &e.q;
        } else {
            m.kind = MatRef::Kind::F16;
            m.f16 = e.f16.data();
        }
        return m;
    };
    // decode 1-D norm gains once; everything else is read through MatRefs
    auto decode_norm = [&](const QuantizedParams::Entry& e) -> const float* {
        std::vector<float> v(e.f16.size());
        for (size_t i = 0; i < v.size(); ++i) v[i] = f16_to_f32(e.f16[i]);
        norm_storage_.push_back(std::move(v));
        return norm_storage_.back().data();
    };
    norm_storage_.reserve(static_cast<size_t>(qp.config.n_layers) * 2 + 1);

    size_t idx = 0;
    auto next = [&]() -> const QuantizedParams::Entry& { return qp.tensors.at(idx++); };
    embedding_ = make_ref(next()); // token_embedding
    layers_.resize(static_cast<size_t>(config_.n_layers));
    for (auto& refs : layers_) {
        refs.attn_norm = decode_norm(next());
        refs.wq = make_ref(next());
        refs.wk = make_ref(next());
        refs.wv = make_ref(next());
        refs.wo = make_ref(next());
        refs.mlp_norm = decode_norm(next());
        refs.w_gate = make_ref(next());
        refs.w_up = make_ref(next());
        refs.w_down = make_ref(next());
    }
    {
        const auto& e = next(); // final_norm
        final_norm_.resize(e.f16.size());
        for (size_t i = 0; i < e.f16.size(); ++i) final_norm_[i] = f16_to_f32(e.f16[i]);
    }
    if (!config_.tie_embeddings) head_ = make_ref(next());
}

// ---------------------------------------------------------------------------
// session
// ---------------------------------------------------------------------------

InferenceSession::InferenceSession(const InferenceModel& model) : model_(model) {
    const ModelConfig& c = model.config();
    const int64_t kv = c.kv_width();
    k_cache_.assign(static_cast<size_t>(c.n_layers),
                    std::vector<float>(static_cast<size_t>(c.context_length * kv)));
    v_cache_ = k_cache_;
    logits_.resize(static_cast<size_t>(c.vocab_size));
    x_.resize(static_cast<size_t>(c.hidden_size));
    xn_.resize(static_cast<size_t>(c.hidden_size));
    q_.resize(static_cast<size_t>(c.hidden_size));
    kv_.resize(static_cast<size_t>(kv));
    attn_out_.resize(static_cast<size_t>(c.hidden_size));
    gate_.resize(static_cast<size_t>(c.intermediate_size));
    up_.resize(static_cast<size_t>(c.intermediate_size));
    act_.resize(static_cast<size_t>(c.intermediate_size));
    scores_.resize(static_cast<size_t>(c.context_length));
}

void InferenceSession::reset() { pos_ = 0; }

const std::vector<float>& InferenceSession::feed(int32_t token) {
    const ModelConfig& c = model_.config();
    if (pos_ >= c.context_length) throw DomainError("feed: context window exhausted");
    if (token < 0 || token >= c.vocab_size) throw DomainError("feed: token id out of range");
    const int64_t hd = c.head_dim();
    const int64_t kvw = c.kv_width();
    const int64_t group = c.n_heads / c.n_kv_heads;
    const float inv_sqrt_hd = 1.0f / std::sqrt(static_cast<float>(hd));

    model_.embedding().copy_row(token, x_.data());

    for (int64_t li = 0; li < c.n_layers; ++li) {
        const auto& l = model_.layer(li);
        float* kc = k_cache_[static_cast<size_t>(li)].data();
        float* vc = v_cache_[static_cast<size_t>(li)].data();

        rmsnorm_vec(x_.data(), l.attn_norm, c.norm_eps, c.hidden_size, xn_.data());
        matvec(l.wq, xn_.data(), q_.data());
        rope_vec(q_.data(), c.n_heads, hd, pos_, c.rope_theta);
        matvec(l.wk, xn_.data(), kv_.data());
        rope_vec(kv_.data(), c.n_kv_heads, hd, pos_, c.rope_theta);
        std::copy(kv_.begin(), kv_.end(), kc + pos_ * kvw);
        matvec(l.wv, xn_.data(), kv_.data());
        std::copy(kv_.begin(), kv_.end(), vc + pos_ * kvw);

        // attention over positions 0..pos_
        std::fill(attn_out_.begin(), attn_out_.end(), 0.0f);
        for (int64_t h = 0; h < c.n_heads; ++h) {
            const float* qh = q_.data() + h * hd;
            const int64_t kvh = h / group;
            float mx = -std::numeric_limits<float>::infinity();
            for (int64_t t = 0; t <= pos_; ++t) {
                const float* krow = kc + t * kvw + kvh * hd;
                float s = 0.0f;
                for (int64_t j = 0; j < hd; ++j) s += qh[j] * krow[j];
                s *= inv_sqrt_hd;
                scores_[static_cast<size_t>(t)] = s;
                mx = std::max(mx, s);
            }
            double denom = 0.0;
            for (int64_t t = 0; t <= pos_; ++t) {
                const float e = std::exp(scores_[static_cast<size_t>(t)] - mx);
                scores_[static_cast<size_t>(t)] = e;
                denom += e;
            }
            const float inv = static_cast<float>(1.0 / denom);
            float* out = attn_out_.data() + h * hd;
            for (int64_t t = 0; t <= pos_; ++t) {
                const float w = scores_[static_cast<size_t>(t)] * inv;
                const float* vrow = vc + t * kvw + kvh * hd;
                for (int64_t j = 0; j < hd; ++j) out[j] += w * vrow[j];
            }
        }
        matvec(l.wo, attn_out_.data(), xn_.data());
        for (int64_t j = 0; j < c.hidden_size; ++j) x_[static_cast<size_t>(j)] += xn_[static_cast<size_t>(j)];

        rmsnorm_vec(x_.data(), l.mlp_norm, c.norm_eps, c.hidden_size, xn_.data());
        matvec(l.w_gate, xn_.data(), gate_.data());
        matvec(l.w_up, xn_.data(), up_.data());
        for (int64_t j = 0; j < c.intermediate_size; ++j) {
            const float g = gate_[static_cast<size_t>(j)];
            const float sig = 1.0f / (1.0f + std::exp(-g));
            act_[static_cast<size_t>(j)] = g * sig * up_[static_cast<size_t>(j)];
        }
        matvec(l.w_down, act_.data(), xn_.data());
        for (int64_t j = 0; j < c.hidden_size; ++j) x_[static_cast<size_t>(j)] += xn_[static_cast<size_t>(j)];
    }

    rmsnorm_vec(x_.data(), model_.final_norm(), c.norm_eps, c.hidden_size, xn_.data());
    if (c.tie_embeddings) {
        for (int64_t v = 0; v < c.vocab_size; ++v)
            logits_[static_cast<size_t>(v)] = model_.embedding().dot_row(v, xn_.data());
    } else {
        matvec(model_.head(), xn_.data(), logits_.data());
    }
    ++pos_;
    return logits_;
}

// ---------------------------------------------------------------------------
// generation
// ---------------------------------------------------------------------------

namespace {

int32_t pick_token(const std::vector<float>& logits, const GenerationParams& p, Rng& rng) {
    const int64_t v = static_cast<int64_t>(logits.size());
    if (p.temperature <= 0.0) {
        int64_t best = 0;
        for (int64_t i = 1; i < v; ++i)
            if (logits[static_cast<size_t>(i)] > logits[static_cast<size_t>(best)]) best = i;
        return static_cast<int32_t>(best);
    }
    std::vector<std::pair<float, int32_t>> scored(static_cast<size_t>(v));
    for (int64_t i = 0; i < v; ++i)
        scored[static_cast<size_t>(i)] = {static_cast<float>(logits[static_cast<size_t>(i)] / p.temperature),
                                          static_cast<int32_t>(i)};
    int64_t k = (p.top_k > 0 && p.top_k < v) ? p.top_k : v;
    std::partial_sort(scored.begin(), scored.begin() + k, scored.end(),
                      [](const auto& a, const auto& b) {
                          if (a.first != b.first) return a.first > b.first;
                          return a.second < b.second;
                      });
    scored.resize(static_cast<size_t>(k));
    double mx = scored[0].first;
    double denom = 0.0;
    for (const auto& [s, id] : scored) denom += std::exp(static_cast<double>(s) - mx);
    double u = rng.next_double() * denom;
    double acc = 0.0;
    for (const auto& [s, id] : scored) {
        acc += std::exp(static_cast<double>(s) - mx);
        if (u < acc) return id;
    }
    return scored.back().second;
}

} // namespace

GenerationResult generate(const InferenceModel& model, const std::vector<int32_t>& prompt,
                          const GenerationParams& params) {
    if (prompt.empty()) throw DomainError("generate: empty prompt");
    const ModelConfig& c = model.config();
    if (params.top_k > c.vocab_size) throw DomainError("generate: top_k exceeds vocab size");

    GenerationResult res;
    std::vector<int32_t> context = prompt;
    // keep at least one slot free for generation
    const int64_t max_prompt = c.context_length - 1;
    if (static_cast<int64_t>(context.size()) > max_prompt) {
        context.erase(context.begin(),
                      context.end() - static_cast<std::ptrdiff_t>(max_prompt));
        res.prompt_truncated = true;
        std::fprintf(stderr,
                     "warning: prompt longer than context window, truncated to last %lld tokens\n",
                     static_cast<long long>(max_prompt));
    }

    Rng rng = Rng::derive(params.seed, 0x9e4e);
    auto is_stop = [&](int32_t id) {
        return std::find(params.stop_ids.begin(), params.stop_ids.end(), id) !=
               params.stop_ids.end();
    };

    if (params.use_cache) {
        InferenceSession session(model);
        const std::vector<float>* logits = nullptr;
        for (int32_t id : context) logits = &session.feed(id);
        for (int64_t i = 0; i < params.max_new_tokens; ++i) {
            const int32_t id = pick_token(*logits, params, rng);
            res.ids.push_back(id);
            if (is_stop(id)) break;
            if (session.position() >= c.context_length) break; // window full
            logits = &session.feed(id);
        }
    } else {
        // oracle path: recompute the full prefix for every emitted token
        for (int64_t i = 0; i < params.max_new_tokens; ++i) {
            InferenceSession session(model);
            const std::vector<float>* logits = nullptr;
            for (int32_t id : context) logits = &session.feed(id);
            const int32_t id = pick_token(*logits, params, rng);
            res.ids.push_back(id);
            if (is_stop(id)) break;
            if (static_cast<int64_t>(context.size()) >= c.context_length) break;
            context.push_back(id);
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// throughput
// ---------------------------------------------------------------------------

static std::string cpu_descriptor() {
    std::ifstream f("/proc/cpuinfo");
    std::string line;
    std::string name = "unknown cpu";
    while (std::getline(f, line)) {
        if (line.rfind("model name", 0) == 0) {
            const size_t colon = line.find(':');
            if (colon != std::string::npos) name = line.substr(colon + 2);
            break;
        }
    }
    return name + " (" + std::to_string(std::thread::hardware_concurrency()) + " hw threads)";
}

ThroughputStats measure_throughput(const InferenceModel& model,
                                   const std::vector<int32_t>& prompt, int64_t n_tokens,
                                   int64_t repetitions) {
    if (n_tokens < 1) throw DomainError("measure_throughput: n_tokens must be >= 1");
    if (repetitions < 1) throw DomainError("measure_throughput: repetitions must be >= 1");
    GenerationParams p;
    p.temperature = 0.0;
    p.max_new_tokens = n_tokens;

    ThroughputStats st;
    st.tokens_per_rep = n_tokens;
    st.hardware = cpu_descriptor();
    st.footprint_bytes = model.footprint_bytes();
    for (int64_t r = 0; r < repetitions; ++r) {
        InferenceSession session(model);
        const std::vector<float>* logits = nullptr;
        for (int32_t id : prompt) logits = &session.feed(id);
        Rng rng(0);
        const auto t0 = std::chrono::steady_clock::now();
        int64_t produced = 0;
        for (int64_t i = 0; i < n_tokens && session.position() < model.config().context_length;
             ++i) {
            const int32_t id = pick_token(*logits, p, rng);
            ++produced;
            if (i + 1 < n_tokens && session.position() < model.config().context_length)
                logits = &session.feed(id);
        }
        const auto t1 = std::chrono::steady_clock::now();
        const double dt = std::chrono::duration<double>(t1 - t0).count();
        st.tokens_per_s.push_back(static_cast<double>(produced) / std::max(dt, 1e-9));
    }
    std::vector<double> sorted = st.tokens_per_s;
    std::sort(sorted.begin(), sorted.end());
    st.median = sorted[sorted.size() / 2];
    st.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(sorted.size());
    double var = 0.0;
    for (double v : sorted) var += (v - st.mean) * (v - st.mean);
    st.stddev = std::sqrt(var / static_cast<double>(sorted.size()));
    return st;
}

std::string ThroughputStats::text() const {
    std::ostringstream os;
    os << "Throughput: mean " << mean << " t/s, median " << median << " t/s, stddev " << stddev
       << " over " << tokens_per_s.size() << " runs of " << tokens_per_rep << " tokens\n";
    os << "Hardware: " << hardware << "\n";
    if (footprint_bytes > 0)
        os << "Model footprint: " << footprint_bytes << " bytes ("
           << static_cast<double>(footprint_bytes) / 1e6 << " MB)\n";
    return os.str();
}

} // namespace ttl
