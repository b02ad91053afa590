// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one check per release criterion, one PASS/FAIL line each.
// Exit status is the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "reference.hpp"
#include "toy.hpp"
#include "ttl/inference.hpp"
#include "ttl/io_util.hpp"
#include "ttl/planner.hpp"
#include "ttl/quant.hpp"
#include "ttl/telemetry.hpp"
#include "ttl/tokenizer.hpp"
#include "ttl/trainer.hpp"

using namespace ttl;
namespace fs = std::filesystem;

namespace {

struct Checker {
    bool ok = true;
    std::vector<std::string> messages;
    void expect(bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            messages.push_back(what);
        }
    }
    void expect_near(double got, double want, double tol, const std::string& what) {
        if (!(std::abs(got - want) <= tol)) {
            ok = false;
            char buf[160];
            std::snprintf(buf, sizeof(buf), "%s: got %.10g, want %.10g +- %.3g", what.c_str(),
                          got, want, tol);
            messages.push_back(buf);
        }
    }
};

std::string fixture_path(const char* name) {
    return (fs::path(TTL_SOURCE_DIR) / "tests" / "data" / name).string();
}

// Toy setup shared by the training-based criteria (also the converged model
// reused by the quantization agreement check).
struct ToySetup {
    ModelConfig model;
    PackedDataset train_ds, eval_ds;

    ToySetup() {
        model.hidden_size = 64;
        model.intermediate_size = 256;
        model.context_length = 256;
        model.n_heads = 4;
        model.n_kv_heads = 4;
        model.n_layers = 2;
        model.vocab_size = 512;
        PackedDataset all = toy::affine_dataset(512, 32, 64, 9);
        auto split = split_eval(all, 0.125, 3);
        train_ds = std::move(split.first);
        eval_ds = std::move(split.second);
    }

    TrainConfig config(int64_t steps) const {
        TrainConfig tc;
        tc.tokens_per_batch = 128;
        tc.total_steps = steps;
        tc.grad_accum_steps = 1;
        tc.peak_lr = 2e-3;
        tc.warmup_steps = std::min<int64_t>(50, steps / 2);
        tc.seed = 7;
        return tc;
    }

    Trainer trainer(int64_t steps, int64_t accum = 1, int64_t tokens_per_batch = 128) const {
        TrainConfig tc = config(steps);
        tc.grad_accum_steps = accum;
        tc.tokens_per_batch = tokens_per_batch;
        Rng rng = Rng::derive(7, 1);
        return Trainer(ModelParams::init(model, rng), tc, train_ds, eval_ds);
    }
};

ModelParams g_converged_toy; // produced by criterion 8, reused by criterion 10

// ---------------------------------------------------------------------------
// criterion 1: scaling-law golden values
// ---------------------------------------------------------------------------
void criterion_scaling(Checker& c) {
    const long double oracle_big = 406.4L / std::pow(70e9L, 0.32L) +
                                   410.7L / std::pow(1.4e12L, 0.28L) + 1.69L;
    const long double oracle_small = 406.4L / std::pow(160e6L, 0.32L) +
                                     410.7L / std::pow(3.5e9L, 0.28L) + 1.69L;
    const double big = predict_loss(70e9, 1.4e12);
    const double small = predict_loss(160e6, 3.5e9);
    c.expect_near(big, static_cast<double>(oracle_big), 1e-9, "loss(70e9, 1.4e12) vs oracle");
    c.expect_near(small, static_cast<double>(oracle_small), 1e-9, "loss(160e6, 3.5e9) vs oracle");
    c.expect_near(big, 1.991, 0.002, "loss(70e9, 1.4e12) golden");
    c.expect_near(small, 3.526, 0.002, "loss(160e6, 3.5e9) golden");
    c.expect(optimal_tokens(70e9) == 1400000000000ULL, "optimal_tokens(70e9) exact");
}

// ---------------------------------------------------------------------------
// criterion 2: parameter-count fidelity
// ---------------------------------------------------------------------------
uint64_t shape_sum_oracle(const ModelConfig& c) {
    const uint64_t h = static_cast<uint64_t>(c.hidden_size);
    const uint64_t i = static_cast<uint64_t>(c.intermediate_size);
    const uint64_t v = static_cast<uint64_t>(c.vocab_size);
    const uint64_t kv = static_cast<uint64_t>((c.hidden_size / c.n_heads) * c.n_kv_heads);
    uint64_t total = v * h + h;
    for (int64_t l = 0; l < c.n_layers; ++l)
        total += h + h * h + h * kv + h * kv + h * h + h + h * i + h * i + i * h;
    if (!c.tie_embeddings) total += h * v;
    return total;
}

void criterion_param_count(Checker& c) {
    c.expect(param_count(ModelConfig::preset_160m()) == 162417408ULL, "160m golden");
    c.expect(param_count(ModelConfig::preset_460m()) == 468239360ULL, "460m golden");
    c.expect(param_count(ModelConfig::preset_160m()) == shape_sum_oracle(ModelConfig::preset_160m()),
             "160m vs oracle");
    c.expect(param_count(ModelConfig::preset_460m()) == shape_sum_oracle(ModelConfig::preset_460m()),
             "460m vs oracle");
    Rng rng(77);
    for (int t = 0; t < 20; ++t) {
        ModelConfig m;
        m.n_heads = static_cast<int64_t>(1 + rng.next_below(8));
        m.hidden_size = m.n_heads * 2 * static_cast<int64_t>(1 + rng.next_below(12));
        std::vector<int64_t> divisors;
        for (int64_t d = 1; d <= m.n_heads; ++d)
            if (m.n_heads % d == 0) divisors.push_back(d);
        m.n_kv_heads = divisors[rng.next_below(divisors.size())];
        m.intermediate_size = static_cast<int64_t>(1 + rng.next_below(300));
        m.context_length = 16;
        m.n_layers = static_cast<int64_t>(rng.next_below(8));
        m.vocab_size = static_cast<int64_t>(1 + rng.next_below(1000));
        m.tie_embeddings = rng.next_below(2) == 1;
        if (param_count(m) != shape_sum_oracle(m)) {
            c.expect(false, "random config " + std::to_string(t) + " mismatch");
            return;
        }
    }
}

// ---------------------------------------------------------------------------
// criterion 3: gradient correctness (op level + end to end)
// ---------------------------------------------------------------------------
double op_fd_worst(const Tensor& input, const Tensor& loss,
                   const std::function<double(const refm::Vec&)>& loss_ref) {
    backward(loss);
    refm::Vec base = refm::to_vec(input);
    double worst = 0;
    for (size_t i = 0; i < base.size(); ++i) {
        refm::Vec plus = base, minus = base;
        const double h = 1e-3 * std::max(1.0, std::abs(base[i]));
        plus[i] += h;
        minus[i] -= h;
        const double fd = (loss_ref(plus) - loss_ref(minus)) / (2 * h);
        worst = std::max(worst, refm::rel_err(static_cast<double>(input.grad()[i]), fd, 1e-3));
    }
    return worst;
}

void criterion_gradients(Checker& c) {
    Rng rng(123);
    auto rand_t = [&](const Shape& s, float scale) {
        std::vector<float> v(static_cast<size_t>(shape_numel(s)));
        for (auto& x : v) x = static_cast<float>((rng.next_double() * 2 - 1) * scale);
        return Tensor::from_data(s, std::move(v), true);
    };
    auto weights = [&](int64_t n) {
        std::vector<float> w(static_cast<size_t>(n));
        for (auto& x : w) x = static_cast<float>(rng.next_double() * 2 - 1);
        return w;
    };
    auto weighted = [](const Tensor& y, const std::vector<float>& w) {
        return sum(mul(y, Tensor::from_data(y.shape(), w)));
    };
    auto wsum = [](const refm::Vec& v, const std::vector<float>& w) {
        double acc = 0;
        for (size_t i = 0; i < v.size(); ++i) acc += v[i] * static_cast<double>(w[i]);
        return acc;
    };

    struct UnaryCase {
        const char* name;
        std::function<Tensor(const Tensor&)> op;
        std::function<double(double)> ref;
        float lo;
    };
    const UnaryCase unary_cases[] = {
        {"silu", [](const Tensor& t) { return silu(t); },
         [](double v) { return v / (1 + std::exp(-v)); }, -1.0f},
        {"exp", [](const Tensor& t) { return ttl::exp(t); },
         [](double v) { return std::exp(v); }, -1.0f},
        {"log", [](const Tensor& t) { return ttl::log(t); },
         [](double v) { return std::log(v); }, 0.5f},
        {"sqrt", [](const Tensor& t) { return ttl::sqrt(t); },
         [](double v) { return std::sqrt(v); }, 0.5f},
        {"scale", [](const Tensor& t) { return scale(t, -0.7f); },
         [](double v) { return -0.7 * v; }, -1.0f},
    };
    for (const auto& uc : unary_cases) {
        std::vector<float> v(8);
        for (auto& x : v) x = uc.lo + static_cast<float>(rng.next_double()) * 1.5f;
        Tensor x = Tensor::from_data({2, 4}, v, true);
        auto w = weights(8);
        const double worst = op_fd_worst(x, weighted(uc.op(x), w), [&](const refm::Vec& in) {
            refm::Vec out(in.size());
            for (size_t i = 0; i < in.size(); ++i) out[i] = uc.ref(in[i]);
            return wsum(out, w);
        });
        c.expect(worst < 1e-3, std::string(uc.name) + " fd rel err " + std::to_string(worst));
    }

    { // add / sub / mul (through both operands)
        Tensor a = rand_t({2, 3}, 1.0f);
        Tensor b = rand_t({2, 3}, 1.0f);
        auto w = weights(6);
        refm::Vec bb = refm::to_vec(b);
        const double worst =
            op_fd_worst(a, weighted(add(mul(a, b), sub(a, b)), w), [&](const refm::Vec& in) {
                refm::Vec out(in.size());
                for (size_t i = 0; i < in.size(); ++i)
                    out[i] = in[i] * bb[i] + (in[i] - bb[i]);
                return wsum(out, w);
            });
        c.expect(worst < 1e-3, "add/sub/mul fd rel err " + std::to_string(worst));
    }
    { // matmul and matmul_nt
        Tensor a = rand_t({3, 4}, 1.0f);
        Tensor b = rand_t({4, 2}, 1.0f);
        auto w = weights(6);
        refm::Vec av = refm::to_vec(a), bv = refm::to_vec(b);
        double worst = op_fd_worst(a, weighted(matmul(a, b), w), [&](const refm::Vec& in) {
            return wsum(refm::matmul(in, bv, 3, 4, 2), w);
        });
        c.expect(worst < 1e-3, "matmul dA fd rel err " + std::to_string(worst));

        Tensor a2 = Tensor::from_data({3, 4}, std::vector<float>(av.begin(), av.end()), true);
        Tensor b2 = Tensor::from_data({4, 2}, std::vector<float>(bv.begin(), bv.end()), true);
        worst = op_fd_worst(b2, weighted(matmul(a2, b2), w), [&](const refm::Vec& in) {
            return wsum(refm::matmul(av, in, 3, 4, 2), w);
        });
        c.expect(worst < 1e-3, "matmul dB fd rel err " + std::to_string(worst));

        Tensor bt = rand_t({2, 4}, 1.0f);
        refm::Vec btv = refm::to_vec(bt);
        Tensor a3 = Tensor::from_data({3, 4}, std::vector<float>(av.begin(), av.end()), true);
        worst = op_fd_worst(a3, weighted(matmul_nt(a3, bt), w), [&](const refm::Vec& in) {
            refm::Vec out(6);
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 2; ++j) {
                    double acc = 0;
                    for (int k = 0; k < 4; ++k)
                        acc += in[static_cast<size_t>(i * 4 + k)] *
                               btv[static_cast<size_t>(j * 4 + k)];
                    out[static_cast<size_t>(i * 2 + j)] = acc;
                }
            return wsum(out, w);
        });
        c.expect(worst < 1e-3, "matmul_nt fd rel err " + std::to_string(worst));
    }
    { // softmax
        Tensor x = rand_t({2, 5}, 2.0f);
        auto w = weights(10);
        const double worst =
            op_fd_worst(x, weighted(softmax_rows(x), w), [&](const refm::Vec& in) {
                refm::Vec out;
                for (int r = 0; r < 2; ++r) {
                    refm::Vec row(in.begin() + r * 5, in.begin() + (r + 1) * 5);
                    refm::Vec p = refm::softmax_row(row);
                    out.insert(out.end(), p.begin(), p.end());
                }
                return wsum(out, w);
            });
        c.expect(worst < 1e-3, "softmax fd rel err " + std::to_string(worst));
    }
    { // rmsnorm (both x and gain)
        Tensor x = rand_t({3, 4}, 1.0f);
        Tensor gain = rand_t({4}, 1.0f);
        auto w = weights(12);
        refm::Vec gv = refm::to_vec(gain), xv = refm::to_vec(x);
        double worst =
            op_fd_worst(x, weighted(rmsnorm(x, gain, 1e-5f), w), [&](const refm::Vec& in) {
                return wsum(refm::rmsnorm(in, gv, 1e-5, 3, 4), w);
            });
        c.expect(worst < 1e-3, "rmsnorm dx fd rel err " + std::to_string(worst));
        Tensor x2 = Tensor::from_data({3, 4}, std::vector<float>(xv.begin(), xv.end()), true);
        Tensor g2 = Tensor::from_data({4}, std::vector<float>(gv.begin(), gv.end()), true);
        worst = op_fd_worst(g2, weighted(rmsnorm(x2, g2, 1e-5f), w), [&](const refm::Vec& in) {
            return wsum(refm::rmsnorm(xv, in, 1e-5, 3, 4), w);
        });
        c.expect(worst < 1e-3, "rmsnorm dgain fd rel err " + std::to_string(worst));
    }
    { // rope
        Tensor x = rand_t({3, 2, 4}, 1.0f);
        auto w = weights(24);
        const double worst =
            op_fd_worst(x, weighted(rope(x, {0, 1, 2}, 10000.0f), w), [&](const refm::Vec& in) {
                refm::Vec out = in;
                refm::rope_inplace(out, 3, 2, 4, 10000.0);
                return wsum(out, w);
            });
        c.expect(worst < 1e-3, "rope fd rel err " + std::to_string(worst));
    }
    { // embedding + cross entropy
        Tensor table = rand_t({6, 4}, 1.0f);
        const std::vector<int32_t> ids{2, 5, 2};
        auto w = weights(12);
        double worst =
            op_fd_worst(table, weighted(embedding(table, ids), w), [&](const refm::Vec& in) {
                refm::Vec out;
                for (int32_t id : ids)
                    out.insert(out.end(), in.begin() + id * 4, in.begin() + (id + 1) * 4);
                return wsum(out, w);
            });
        c.expect(worst < 1e-3, "embedding fd rel err " + std::to_string(worst));

        Tensor logits = rand_t({4, 6}, 2.0f);
        const std::vector<int32_t> targets{1, 5, 0, 3};
        Tensor loss = cross_entropy(logits, targets);
        worst = op_fd_worst(logits, loss, [&](const refm::Vec& in) {
            double total = 0;
            for (int r = 0; r < 4; ++r) {
                refm::Vec row(in.begin() + r * 6, in.begin() + (r + 1) * 6);
                double mx = row[0];
                for (double v : row) mx = std::max(mx, v);
                double denom = 0;
                for (double v : row) denom += std::exp(v - mx);
                total += std::log(denom) + mx - row[static_cast<size_t>(targets[static_cast<size_t>(r)])];
            }
            return total / 4;
        });
        c.expect(worst < 1e-3, "cross_entropy fd rel err " + std::to_string(worst));
    }

    // end to end: every parameter of the 2-layer tiny model
    ModelConfig tiny;
    tiny.hidden_size = 16;
    tiny.intermediate_size = 32;
    tiny.context_length = 16;
    tiny.n_heads = 2;
    tiny.n_kv_heads = 1;
    tiny.n_layers = 2;
    tiny.vocab_size = 11;
    Rng init_rng(53);
    ModelParams p = ModelParams::init(tiny, init_rng);
    const std::vector<int32_t> tokens{1, 4, 7, 2, 9};
    const std::vector<int32_t> targets{4, 7, 2, 9, 1};
    Tensor loss = cross_entropy(model_forward(p, tokens, 1, 5), targets);
    backward(loss);
    refm::Params ref = refm::Params::from(p);
    double worst = 0;
    auto named = p.named_tensors();
    for (size_t ti = 0; ti < named.size(); ++ti) {
        const float* g = named[ti].second.grad();
        for (int64_t i = 0; i < named[ti].second.numel(); ++i) {
            const double h =
                1e-3 * std::max(1.0, std::abs(ref.tensors[ti][static_cast<size_t>(i)]));
            refm::Params plus = ref, minus = ref;
            plus.tensors[ti][static_cast<size_t>(i)] += h;
            minus.tensors[ti][static_cast<size_t>(i)] -= h;
            const double fd = (refm::loss(plus, tokens, targets, 1, 5) -
                               refm::loss(minus, tokens, targets, 1, 5)) /
                              (2 * h);
            worst = std::max(worst, refm::rel_err(static_cast<double>(g[i]), fd, 1e-3));
        }
    }
    c.expect(worst < 1e-2, "end-to-end fd rel err " + std::to_string(worst));
}

// ---------------------------------------------------------------------------
// criterion 4: architecture invariants
// ---------------------------------------------------------------------------
void criterion_architecture(Checker& c) {
    Rng rng(211);
    { // rope relative-shift property
        const int64_t d = 16;
        double worst = 0;
        for (int t = 0; t < 16; ++t) {
            std::vector<float> qv(static_cast<size_t>(d)), kv(static_cast<size_t>(d));
            for (auto& v : qv) v = static_cast<float>(rng.next_double() * 2 - 1);
            for (auto& v : kv) v = static_cast<float>(rng.next_double() * 2 - 1);
            const int64_t m = static_cast<int64_t>(rng.next_below(48));
            const int64_t n = static_cast<int64_t>(rng.next_below(48));
            const int64_t s = static_cast<int64_t>(rng.next_below(48));
            auto rot = [&](const std::vector<float>& v, int64_t pos) {
                return rope(Tensor::from_data({1, 1, d}, v), {pos}, 10000.0f);
            };
            auto dot = [&](const Tensor& a, const Tensor& b) {
                double acc = 0;
                for (int64_t i = 0; i < d; ++i)
                    acc += static_cast<double>(a.data()[i]) * b.data()[i];
                return acc;
            };
            worst = std::max(worst, std::abs(dot(rot(qv, m), rot(kv, n)) -
                                             dot(rot(qv, m + s), rot(kv, n + s))));
        }
        c.expect(worst < 1e-5, "rope relative shift, worst " + std::to_string(worst));
    }
    { // rmsnorm scale invariance
        const int64_t h = 16;
        std::vector<float> vals(static_cast<size_t>(h));
        for (auto& v : vals) v = static_cast<float>(rng.next_double() * 2 - 1);
        std::vector<float> scaled = vals;
        for (auto& v : scaled) v *= 41.0f;
        Tensor gain = Tensor::full({h}, 1.0f);
        Tensor a = rmsnorm(Tensor::from_data({1, h}, vals), gain, 1e-9f);
        Tensor b = rmsnorm(Tensor::from_data({1, h}, scaled), gain, 1e-9f);
        double worst = 0;
        for (int64_t i = 0; i < h; ++i)
            worst = std::max(worst, std::abs(static_cast<double>(a.data()[i]) - b.data()[i]));
        c.expect(worst < 1e-4, "rmsnorm scale invariance, worst " + std::to_string(worst));
    }
    { // gqa vs oracle: kv == heads and grouped
        for (int grouped = 0; grouped < 2; ++grouped) {
            ModelConfig m;
            m.hidden_size = 16;
            m.intermediate_size = 32;
            m.context_length = 16;
            m.n_heads = 4;
            m.n_kv_heads = grouped ? 2 : 4;
            m.n_layers = 1;
            m.vocab_size = 11;
            Rng r2(31 + grouped);
            ModelParams p = ModelParams::init(m, r2);
            Tensor x = Tensor::randn({6, m.hidden_size}, r2, 0.5f);
            Tensor out = gqa_attention(x, p.layers[0], m);
            refm::Vec ref = refm::mha(refm::to_vec(x), refm::to_vec(p.layers[0].wq),
                                      refm::to_vec(p.layers[0].wk), refm::to_vec(p.layers[0].wv),
                                      refm::to_vec(p.layers[0].wo), m, 6);
            double worst = 0;
            for (int64_t i = 0; i < out.numel(); ++i)
                worst = std::max(worst, std::abs(static_cast<double>(out.data()[i]) -
                                                 ref[static_cast<size_t>(i)]));
            c.expect(worst < 1e-5, std::string(grouped ? "grouped" : "full") +
                                       " gqa vs oracle, worst " + std::to_string(worst));
        }
    }
    { // causal invariance of logits, exact
        ModelConfig m;
        m.hidden_size = 16;
        m.intermediate_size = 32;
        m.context_length = 16;
        m.n_heads = 2;
        m.n_kv_heads = 2;
        m.n_layers = 2;
        m.vocab_size = 11;
        Rng r3(41);
        ModelParams p = ModelParams::init(m, r3);
        std::vector<int32_t> t1{1, 4, 7, 2, 9};
        std::vector<int32_t> t2{1, 4, 7, 2, 3};
        NoGradGuard no_grad;
        Tensor a = model_forward(p, t1, 1, 5);
        Tensor b = model_forward(p, t2, 1, 5);
        bool exact = true;
        for (int64_t pos = 0; pos < 4; ++pos)
            for (int64_t v = 0; v < m.vocab_size; ++v)
                exact = exact && a.data()[pos * m.vocab_size + v] ==
                                     b.data()[pos * m.vocab_size + v];
        c.expect(exact, "causal invariance must be exact");
    }
}

// ---------------------------------------------------------------------------
// criterion 5: optimizer and scheduler golden values
// ---------------------------------------------------------------------------
void criterion_optimizer(Checker& c) {
    { // hand-computed first AdamW step, double precision
        double theta = 2.0, g = 0.5, m = 0.0, v = 0.0;
        adamw_update<double>(&theta, &g, &m, &v, 1, 1, 6e-4, 0.9, 0.999, 1e-8, 0.01);
        const double hand = 2.0 - 6e-4 * (0.5 / (0.5 + 1e-8)) - 6e-4 * 0.01 * 2.0;
        c.expect_near(theta, hand, 1e-9, "adamw first step vs hand computation");
        c.expect_near(theta, 1.999388, 1e-6, "adamw first step vs rounded golden");
    }
    {
        TrainConfig cfg = TrainConfig::preset_160m();
        c.expect(lr_at(0, cfg) == 0.0, "lr(0) == 0");
        c.expect_near(lr_at(5000, cfg), 6.0e-4, 1e-12, "lr(warmup) == peak");
        const int64_t mid = cfg.warmup_steps + (cfg.total_steps - cfg.warmup_steps) / 2;
        c.expect_near(lr_at(mid, cfg), 3.0e-4, 1e-9, "cosine midpoint == peak/2");
    }
    { // 100 steps against the independent scalar reference
        Rng rng(3);
        float theta = 0.8f, m = 0, v = 0;
        double ref_m = 0, ref_v = 0;
        float ref_theta = 0.8f;
        double worst = 0;
        for (int64_t t = 1; t <= 100; ++t) {
            const float g = static_cast<float>(rng.next_double() * 2 - 1);
            const double lr = 1e-3 * (0.5 + 0.5 * std::cos(0.01 * static_cast<double>(t)));
            adamw_update<float>(&theta, &g, &m, &v, 1, t, lr, 0.9, 0.999, 1e-8, 0.01);
            // scalar reference, double math with float storage
            ref_m = 0.9 * static_cast<double>(static_cast<float>(ref_m)) + 0.1 * g;
            ref_v = 0.999 * static_cast<double>(static_cast<float>(ref_v)) + 0.001 * g * g;
            const double mh = static_cast<double>(static_cast<float>(ref_m)) /
                              (1 - std::pow(0.9, static_cast<double>(t)));
            const double vh = static_cast<double>(static_cast<float>(ref_v)) /
                              (1 - std::pow(0.999, static_cast<double>(t)));
            ref_theta = static_cast<float>(static_cast<double>(ref_theta) -
                                           lr * (mh / (std::sqrt(vh) + 1e-8)) -
                                           lr * 0.01 * static_cast<double>(ref_theta));
            worst = std::max(worst,
                             std::abs(static_cast<double>(theta) - static_cast<double>(ref_theta)));
        }
        c.expect(worst < 1e-7, "100-step scalar oracle drift " + std::to_string(worst));
    }
}

// ---------------------------------------------------------------------------
// criterion 6: resume determinism
// ---------------------------------------------------------------------------
void criterion_resume(Checker& c) {
    ToySetup toy_setup;
    const auto dir = fs::temp_directory_path() / "ttl_acceptance_resume";
    fs::create_directories(dir);
    const std::string ckpt = (dir / "mid.ttlc").string();

    auto drive = [&](Trainer& tr, TelemetryTracker& tracker, int64_t steps) {
        for (int64_t i = 0; i < steps; ++i) {
            StepStats s = tr.train_step();
            tracker.step_completed(s.tokens);
            tr.state().elapsed_s = tracker.elapsed_s();
            tr.state().energy_kwh = tracker.energy();
            tr.state().emissions_kg = tracker.emissions();
        }
    };
    auto make_tracker = [](double* now, const TrainerState* base) {
        TelemetryTracker t({350.0, 0.9}, 0.3655, [now] { return *now += 1.0; });
        if (base)
            t.set_base(base->tokens_processed, base->elapsed_s, base->energy_kwh,
                       base->emissions_kg);
        t.start();
        return t;
    };

    // uninterrupted 100 steps
    Trainer straight = toy_setup.trainer(100);
    double now_a = 0.0;
    TelemetryTracker tracker_a = make_tracker(&now_a, nullptr);
    drive(straight, tracker_a, 100);

    // 50 steps, checkpoint, resume, 50 more
    Trainer half = toy_setup.trainer(100);
    double now_b = 0.0;
    TelemetryTracker tracker_b = make_tracker(&now_b, nullptr);
    drive(half, tracker_b, 50);
    save_checkpoint(half.state(), ckpt);

    Trainer resumed(load_checkpoint(ckpt), toy_setup.train_ds, toy_setup.eval_ds);
    double now_c = 0.0;
    TelemetryTracker tracker_c = make_tracker(&now_c, &resumed.state());
    drive(resumed, tracker_c, 50);

    bool weights_equal = true, moments_equal = true;
    auto pa = straight.state().params.named_tensors();
    auto pb = resumed.state().params.named_tensors();
    for (size_t i = 0; i < pa.size() && weights_equal; ++i) {
        const float* a = pa[i].second.data();
        const float* b = pb[i].second.data();
        for (int64_t j = 0; j < pa[i].second.numel(); ++j)
            if (a[j] != b[j]) {
                weights_equal = false;
                break;
            }
    }
    for (size_t i = 0; i < straight.state().adam_m.size() && moments_equal; ++i)
        moments_equal = straight.state().adam_m[i] == resumed.state().adam_m[i] &&
                        straight.state().adam_v[i] == resumed.state().adam_v[i];
    c.expect(weights_equal, "weights bitwise equal after resume");
    c.expect(moments_equal, "optimizer moments bitwise equal after resume");
    c.expect(straight.state().tokens_processed == resumed.state().tokens_processed,
             "token counters equal");
    c.expect(straight.state().elapsed_s == resumed.state().elapsed_s &&
                 straight.state().energy_kwh == resumed.state().energy_kwh &&
                 straight.state().emissions_kg == resumed.state().emissions_kg,
             "telemetry counters bitwise equal");

    // the checkpoint file itself round-trips byte-identically
    const std::string again = (dir / "again.ttlc").string();
    save_checkpoint(load_checkpoint(ckpt), again);
    c.expect(read_file_bytes(ckpt) == read_file_bytes(again),
             "checkpoint save/load/save byte-identical");
    fs::remove_all(dir);
}

// ---------------------------------------------------------------------------
// criterion 7: accumulation equivalence
// ---------------------------------------------------------------------------
void criterion_accumulation(Checker& c) {
    ToySetup toy_setup;
    for (int64_t accum : {2LL, 4LL}) {
        Trainer full = toy_setup.trainer(10, 1, 256);
        Trainer split = toy_setup.trainer(10, accum, 256);
        double worst_loss = 0;
        for (int i = 0; i < 10; ++i) {
            StepStats a = full.train_step();
            StepStats b = split.train_step();
            worst_loss = std::max(worst_loss, std::abs(a.loss - b.loss));
        }
        double worst_param = 0;
        auto pa = full.state().params.named_tensors();
        auto pb = split.state().params.named_tensors();
        for (size_t i = 0; i < pa.size(); ++i)
            for (int64_t j = 0; j < pa[i].second.numel(); ++j)
                worst_param = std::max(
                    worst_param, std::abs(static_cast<double>(pa[i].second.data()[j]) -
                                          pb[i].second.data()[j]));
        c.expect(worst_loss < 1e-5, "accum=" + std::to_string(accum) + " loss gap " +
                                        std::to_string(worst_loss));
        c.expect(worst_param < 1e-4, "accum=" + std::to_string(accum) + " param gap " +
                                         std::to_string(worst_param));
    }
}

// ---------------------------------------------------------------------------
// criterion 8: toy convergence
// ---------------------------------------------------------------------------
void criterion_convergence(Checker& c) {
    ToySetup toy_setup;
    TrainConfig tc = toy_setup.config(300);
    tc.eval_interval = 30;
    Rng rng = Rng::derive(7, 1);
    Trainer tr(ModelParams::init(toy_setup.model, rng), tc, toy_setup.train_ds,
               toy_setup.eval_ds);

    double now = 0.0;
    TelemetryTracker tracker({350.0, 0.9}, 0.3655, [&] { return now += 1.0; });
    double first_loss = -1, min_loss = 1e9;
    int64_t first_under_half = -1;
    std::vector<double> losses;
    TelemetryLog log = tr.run(tracker, "", [&](const StepStats& s) {
        if (first_loss < 0) first_loss = s.loss;
        if (s.loss < min_loss) min_loss = s.loss;
        if (first_under_half < 0 && s.loss < 0.5) first_under_half = s.step;
        losses.push_back(s.loss);
    });

    c.expect(std::abs(first_loss - std::log(512.0)) < 0.1 * std::log(512.0),
             "first loss " + std::to_string(first_loss) + " within 10% of ln(512)");
    c.expect(first_under_half > 0 && first_under_half <= 2000,
             "loss fell under 0.5 at step " + std::to_string(first_under_half));

    // window-50 smoothed training loss decreases across the run
    auto window_mean = [&](size_t begin) {
        double acc = 0;
        for (size_t i = begin; i < begin + 50; ++i) acc += losses[i];
        return acc / 50.0;
    };
    bool loss_decreasing = true;
    for (size_t w = 50; w + 50 <= losses.size(); w += 50)
        if (window_mean(w) >= window_mean(w - 50)) loss_decreasing = false;
    c.expect(loss_decreasing, "window-50 smoothed loss decreases across the run");

    // eval perplexity decreases monotonically after smoothing (window 3)
    std::vector<double> ppl;
    for (const auto& r : log.rows)
        if (!std::isnan(r.perplexity)) ppl.push_back(r.perplexity);
    c.expect(ppl.size() >= 5, "collected " + std::to_string(ppl.size()) + " eval points");
    std::vector<double> smooth;
    for (size_t i = 0; i < ppl.size(); ++i) {
        const size_t lo = i >= 1 ? i - 1 : 0;
        const size_t hi = std::min(ppl.size() - 1, i + 1);
        double acc = 0;
        for (size_t j = lo; j <= hi; ++j) acc += ppl[j];
        smooth.push_back(acc / static_cast<double>(hi - lo + 1));
    }
    bool monotone = true;
    for (size_t i = 1; i < smooth.size(); ++i)
        if (smooth[i] > smooth[i - 1] + 1e-9) monotone = false;
    c.expect(monotone, "smoothed eval perplexity decreases monotonically");

    g_converged_toy = tr.state().params; // reused by criterion 10
}

// ---------------------------------------------------------------------------
// criterion 9: tokenizer round trip and fertility fixture
// ---------------------------------------------------------------------------
void criterion_tokenizer(Checker& c) {
    Tokenizer::TrainOptions opts;
    opts.vocab_size = 256 + Tokenizer::kNumSpecials + 120;
    Tokenizer tok = Tokenizer::train(
        std::string_view("the quick brown fox jumps over the lazy dog again and again; "
                         "the brown dog naps while the quick fox runs through the field"),
        opts);

    { // 1 MB of random bytes, exact round trip
        Rng rng(99);
        std::string blob(1 << 20, '\0');
        for (auto& b : blob) b = static_cast<char>(rng.next_below(256));
        c.expect(tok.decode(tok.encode(blob)) == blob, "1 MB random-byte round trip");
    }
    { // multilingual utf-8
        const std::string text =
            "English text. Texto em portugu\xc3\xaas. \xce\x95\xce\xbb\xce\xbb\xce\xb7\xce\xbd"
            "\xce\xb9\xce\xba\xce\xac. \xe6\x97\xa5\xe6\x9c\xac\xe8\xaa\x9e\xe3\x81\xae\xe3\x83"
            "\x86\xe3\x82\xad\xe3\x82\xb9\xe3\x83\x88. \xd0\xa0\xd1\x83\xd1\x81\xd1\x81\xd0\xba"
            "\xd0\xb8\xd0\xb9 \xd1\x82\xd0\xb5\xd0\xba\xd1\x81\xd1\x82. \xf0\x9f\xa6\x99\xf0\x9f"
            "\x8c\x8d emojis \t tabs \n newlines  double  spaces";
        c.expect(tok.decode(tok.encode(text)) == text, "multilingual round trip");
    }
    { // fixture: ordering and the 4-decimal fertility of the leading row
        auto rows = load_fertility_fixtures(fixture_path("tokenizer_counts.csv"));
        auto rep = benchmark_fertility({}, rows, "", 7400);
        bool order = rep.rows.size() == 5 && rep.rows[0].name == "ttl" &&
                     rep.rows[1].name == "gportuguese-2" && rep.rows[2].name == "bertimbau" &&
                     rep.rows[3].name == "cabrita-3b" && rep.rows[4].name == "sabia-7b";
        c.expect(order, "fixture ordering");
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%.4f", rep.rows[0].fertility);
        c.expect(std::string(buf) == "1.3428", std::string("ttl fertility ") + buf);
    }
}

// ---------------------------------------------------------------------------
// criterion 10: quantization
// ---------------------------------------------------------------------------
void criterion_quantization(Checker& c) {
    { // reconstruction error bound, exhaustive over random matrices
        Rng rng(5);
        double worst_ratio = 0;
        for (int trial = 0; trial < 30; ++trial) {
            const int64_t n = 1 + static_cast<int64_t>(rng.next_below(900));
            const int64_t group = 2 + static_cast<int64_t>(rng.next_below(160));
            std::vector<float> vals(static_cast<size_t>(n));
            for (auto& v : vals) v = static_cast<float>(rng.next_double() * 8 - 3);
            QuantizedTensor q = quantize_tensor(vals.data(), {n}, group);
            for (int64_t i = 0; i < n; ++i) {
                const float scale = std::abs(q.scales[static_cast<size_t>(i / group)]);
                const double err = std::abs(q.dequant_at(i) - vals[static_cast<size_t>(i)]);
                if (scale > 0) worst_ratio = std::max(worst_ratio, err / scale);
                if (q.code_at(i) > 15) {
                    c.expect(false, "code out of range");
                    return;
                }
            }
        }
        c.expect(worst_ratio <= 0.5 + 1e-4,
                 "reconstruction error / scale worst " + std::to_string(worst_ratio));
    }
    { // greedy agreement on the converged toy model from criterion 8
        if (!g_converged_toy.token_embedding.defined()) {
            c.expect(false, "converged toy model unavailable (criterion 8 must run first)");
            return;
        }
        InferenceModel full(g_converged_toy);
        QuantizedParams qp = quantize(g_converged_toy, 128);
        InferenceModel quant(qp);
        PackedDataset data = toy::affine_dataset(512, 32, 64, 9);
        std::vector<int32_t> prompt(data.sequence(0), data.sequence(0) + 8);
        GenerationParams g;
        g.temperature = 0.0;
        g.max_new_tokens = 200;
        auto a = generate(full, prompt, g);
        auto b = generate(quant, prompt, g);
        int64_t agree = 0;
        const size_t n = std::min(a.ids.size(), b.ids.size());
        for (size_t i = 0; i < n; ++i) agree += a.ids[i] == b.ids[i];
        const double frac = static_cast<double>(agree) / 200.0;
        c.expect(a.ids.size() == 200 && b.ids.size() == 200, "both runs produced 200 tokens");
        c.expect(frac >= 0.90, "greedy agreement " + std::to_string(frac));
    }
    { // footprint vs the independent byte-count formula (460m config)
        const uint64_t h = 1024, inter = 4096, v = 32000, layers = 24, group = 128;
        auto q_bytes = [&](uint64_t n) {
            return (n + 1) / 2 + ((n + group - 1) / group) * 6;
        };
        uint64_t formula = 2 * v * h + 2 * h;
        formula += layers * (2 * 2 * h);
        formula += layers * (2 * q_bytes(h * h) + 2 * q_bytes(h * h));
        formula += layers * (2 * q_bytes(h * inter) + q_bytes(inter * h));
        formula += q_bytes(h * v);
        const uint64_t reported = quantized_footprint_bytes(ModelConfig::preset_460m(), group);
        const double rel = std::abs(static_cast<double>(reported) - static_cast<double>(formula)) /
                           static_cast<double>(formula);
        c.expect(rel <= 0.02, "footprint " + std::to_string(reported) + " vs formula " +
                                  std::to_string(formula));
        // and the shape formula matches an actually quantized model
        ModelConfig small = toy::small_model(32, 16);
        Rng rng(6);
        ModelParams p = ModelParams::init(small, rng);
        c.expect(quantize(p, 32).footprint_bytes() == quantized_footprint_bytes(small, 32),
                 "shape formula equals quantized payload");
    }
}

// ---------------------------------------------------------------------------
// criterion 11: telemetry
// ---------------------------------------------------------------------------
void criterion_telemetry(Checker& c) {
    TelemetryLog log = TelemetryLog::load_csv(fixture_path("energy_log_460m.csv"));
    c.expect(log.rows.size() == 12, "fixture rows ingested");
    const std::string report = checkpoint_report(log);
    const char* expected_rows[] = {
        "8.1M | 20.49 | 9.40 | 3.34",   "1.6B | 16.90 | 18.82 | 6.70",
        "2.4B | 15.43 | 28.59 | 10.16", "3.2B | 14.64 | 38.20 | 13.57",
        "4.0B | 14.08 | 48.04 | 17.07", "4.9B | 13.61 | 57.74 | 20.52",
        "5.7B | 13.25 | 67.32 | 23.92", "6.5B | 12.87 | 76.84 | 27.30",
        "7.3B | 12.57 | 86.40 | 30.70", "8.1B | 12.27 | 96.19 | 34.18",
        "9.0B | 11.96 | 106.06 | 37.70", "9.8B | 11.77 | 115.69 | 41.31",
    };
    bool verbatim = true;
    for (const char* row : expected_rows)
        if (report.find(row) == std::string::npos) {
            verbatim = false;
            c.expect(false, std::string("missing report row: ") + row);
        }
    c.expect(verbatim, "every fixture row reproduced verbatim");

    { // constant ratio on a generated log
        double now = 0.0;
        TelemetryTracker tracker({403.6, 1.0}, 0.3655, [&] { return now += 3.0; });
        tracker.start();
        bool exact = true;
        for (int step = 1; step <= 25; ++step) {
            tracker.step_completed(8192);
            TelemetryRow r = tracker.row(step, 3.0, std::nan(""));
            exact = exact && (r.emissions_kg == r.energy_kwh * 0.3655);
        }
        c.expect(exact, "emissions/energy ratio exactly the configured intensity");
    }
    { // marginal gain arithmetic from the fixture
        const double first = (20.49 - 16.90) / (18.82 - 9.40);
        const double last = (11.96 - 11.77) / (115.69 - 106.06);
        char fb[32], lb[32];
        std::snprintf(fb, sizeof(fb), "%.4f", first);
        std::snprintf(lb, sizeof(lb), "%.4f", last);
        c.expect(report.find(fb) != std::string::npos,
                 std::string("first marginal gain ") + fb + " in report");
        c.expect(report.find(lb) != std::string::npos,
                 std::string("final marginal gain ") + lb + " in report");
        c.expect(last < first, "marginal gain decreases over the run");
    }
    c.expect_near(emissions_kg(15.5, kDefaultCarbonIntensity), 5.66, 0.05,
                  "15.5 kWh at the default intensity");
}

struct Criterion {
    int id;
    const char* name;
    std::function<void(Checker&)> fn;
};

} // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {1, "scaling-law golden values", criterion_scaling},
        {2, "parameter-count fidelity", criterion_param_count},
        {3, "gradient correctness", criterion_gradients},
        {4, "architecture invariants", criterion_architecture},
        {5, "optimizer/scheduler golden values", criterion_optimizer},
        {6, "resume determinism", criterion_resume},
        {7, "accumulation equivalence", criterion_accumulation},
        {8, "toy convergence", criterion_convergence},
        {9, "tokenizer round trip and fertility", criterion_tokenizer},
        {10, "quantization", criterion_quantization},
        {11, "telemetry", criterion_telemetry},
    };

    int failures = 0;
    for (const auto& crit : criteria) {
        Checker checker;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            crit.fn(checker);
        } catch (const std::exception& e) {
            checker.ok = false;
            checker.messages.push_back(std::string("exception: ") + e.what());
        }
        const double dt =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("[%s] criterion %2d: %s (%.2f s)\n", checker.ok ? "PASS" : "FAIL", crit.id,
                    crit.name, dt);
        for (const auto& m : checker.messages) std::printf("         - %s\n", m.c_str());
        if (!checker.ok) ++failures;
    }
    if (failures == 0)
        std::printf("all %zu criteria passed\n", criteria.size());
    else
        std::printf("%d criteria FAILED\n", failures);
    return failures;
}
