// SPDX-License-Identifier: Apache-2.0
#include "ttl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <thread>
#include <unordered_set>

namespace ttl {

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d < 0) throw ShapeError("negative dimension");
        n *= d;
    }
    return n;
}

static std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

struct Tensor::Node {
    Shape shape;
    std::shared_ptr<std::vector<float>> data;
    std::vector<float> grad; // lazily sized
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    int64_t numel() const { return static_cast<int64_t>(data->size()); }
    float* grad_buf() {
        if (grad.empty()) grad.assign(data->size(), 0.0f);
        return grad.data();
    }
};

using NodePtr = std::shared_ptr<Tensor::Node>;

static NodePtr make_node(Shape shape, std::vector<float> values, bool requires_grad) {
    auto n = std::make_shared<Tensor::Node>();
    if (static_cast<int64_t>(values.size()) != shape_numel(shape))
        throw ShapeError("data length does not match shape");
    n->shape = std::move(shape);
    n->data = std::make_shared<std::vector<float>>(std::move(values));
    n->requires_grad = requires_grad;
    return n;
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
    return Tensor(make_node(shape, std::vector<float>(static_cast<size_t>(shape_numel(shape)), 0.0f),
                            requires_grad));
}

Tensor Tensor::full(const Shape& shape, float value, bool requires_grad) {
    return Tensor(make_node(shape, std::vector<float>(static_cast<size_t>(shape_numel(shape)), value),
                            requires_grad));
}

Tensor Tensor::from_data(const Shape& shape, std::vector<float> data, bool requires_grad) {
    return Tensor(make_node(shape, std::move(data), requires_grad));
}

Tensor Tensor::randn(const Shape& shape, Rng& rng, float std_dev, bool requires_grad) {
    std::vector<float> v(static_cast<size_t>(shape_numel(shape)));
    for (auto& x : v) x = static_cast<float>(rng.next_normal()) * std_dev;
    return Tensor(make_node(shape, std::move(v), requires_grad));
}

const Shape& Tensor::shape() const {
    if (!node_) throw ShapeError("undefined tensor");
    return node_->shape;
}
int64_t Tensor::numel() const { return node_ ? node_->numel() : 0; }
const float* Tensor::data() const { return node_->data->data(); }
float* Tensor::mutable_data() { return node_->data->data(); }
float Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() requires a 1-element tensor");
    return (*node_->data)[0];
}
bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
const float* Tensor::grad() const { return node_->grad_buf(); }
float* Tensor::mutable_grad() { return node_->grad_buf(); }
bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }
void Tensor::zero_grad() {
    if (node_ && !node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0f);
}

// ---------------------------------------------------------------------------
// op plumbing
// ---------------------------------------------------------------------------

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

static Tensor make_op(Shape shape, std::vector<float> values,
                      std::vector<NodePtr> parents,
                      std::function<void(Tensor::Node&)> backward_fn) {
    bool needs = false;
    if (g_grad_enabled)
        for (const auto& p : parents) needs = needs || p->requires_grad;
    NodePtr out = make_node(std::move(shape), std::move(values), needs);
    if (needs) {
        out->parents = std::move(parents);
        out->backward_fn = std::move(backward_fn);
    }
    return Tensor(out);
}

// Suffix broadcast: returns the number of copies of `small` tiled over the
// leading dims of `big`. Throws unless small.shape is a trailing suffix.
static int64_t suffix_tiles(const Shape& big, const Shape& small) {
    if (small.size() > big.size())
        throw ShapeError("broadcast: " + shape_str(small) + " vs " + shape_str(big));
    size_t off = big.size() - small.size();
    for (size_t i = 0; i < small.size(); ++i)
        if (big[off + i] != small[i])
            throw ShapeError("broadcast: " + shape_str(small) + " is not a suffix of " +
                             shape_str(big));
    int64_t tiles = 1;
    for (size_t i = 0; i < off; ++i) tiles *= big[i];
    return tiles;
}

template <typename Fwd, typename Bwd>
static Tensor binary_broadcast_op(const Tensor& a, const Tensor& b, Fwd fwd, Bwd bwd) {
    const bool a_big = a.numel() >= b.numel();
    const Tensor& big = a_big ? a : b;
    const Tensor& small = a_big ? b : a;
    suffix_tiles(big.shape(), small.shape()); // validates
    const int64_t bn = big.numel(), sn = small.numel();
    std::vector<float> out(static_cast<size_t>(bn));
    const float* pb = big.data();
    const float* ps = small.data();
    for (int64_t i = 0; i < bn; ++i) {
        float x = a_big ? pb[i] : ps[i % sn];
        float y = a_big ? ps[i % sn] : pb[i];
        out[static_cast<size_t>(i)] = fwd(x, y);
    }
    NodePtr an = a.node(), bnn = b.node();
    return make_op(big.shape(), std::move(out), {an, bnn},
                   [an, bnn, a_big, bn, sn, bwd](Tensor::Node& o) {
                       const float* g = o.grad.data();
                       const float* pa = an->data->data();
                       const float* pbv = bnn->data->data();
                       float* ga = an->requires_grad ? an->grad_buf() : nullptr;
                       float* gb = bnn->requires_grad ? bnn->grad_buf() : nullptr;
                       for (int64_t i = 0; i < bn; ++i) {
                           int64_t ia = a_big ? i : i % sn;
                           int64_t ib = a_big ? i % sn : i;
                           float dx, dy;
                           bwd(pa[ia], pbv[ib], g[i], dx, dy);
                           if (ga) ga[ia] += dx;
                           if (gb) gb[ib] += dy;
                       }
                   });
}

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_broadcast_op(
        a, b, [](float x, float y) { return x + y; },
        [](float, float, float g, float& dx, float& dy) { dx = g; dy = g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_broadcast_op(
        a, b, [](float x, float y) { return x - y; },
        [](float, float, float g, float& dx, float& dy) { dx = g; dy = -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_broadcast_op(
        a, b, [](float x, float y) { return x * y; },
        [](float x, float y, float g, float& dx, float& dy) { dx = g * y; dy = g * x; });
}

template <typename Fwd, typename Bwd>
static Tensor unary_op(const Tensor& a, Fwd fwd, Bwd bwd) {
    const int64_t n = a.numel();
    std::vector<float> out(static_cast<size_t>(n));
    const float* pa = a.data();
    for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = fwd(pa[i]);
    NodePtr an = a.node();
    return make_op(a.shape(), std::move(out), {an}, [an, n, bwd](Tensor::Node& o) {
        if (!an->requires_grad) return;
        const float* g = o.grad.data();
        const float* x = an->data->data();
        const float* y = o.data->data();
        float* ga = an->grad_buf();
        for (int64_t i = 0; i < n; ++i) ga[i] += g[i] * bwd(x[i], y[i]);
    });
}

Tensor scale(const Tensor& a, float c) {
    return unary_op(
        a, [c](float x) { return x * c; }, [c](float, float) { return c; });
}

Tensor silu(const Tensor& a) {
    return unary_op(
        a,
        [](float x) {
            float s = 1.0f / (1.0f + std::exp(-x));
            return x * s;
        },
        [](float x, float) {
            float s = 1.0f / (1.0f + std::exp(-x));
            return s * (1.0f + x * (1.0f - s));
        });
}

Tensor exp(const Tensor& a) {
    return unary_op(
        a, [](float x) { return std::exp(x); }, [](float, float y) { return y; });
}

Tensor log(const Tensor& a) {
    return unary_op(
        a, [](float x) { return std::log(x); }, [](float x, float) { return 1.0f / x; });
}

Tensor sqrt(const Tensor& a) {
    return unary_op(
        a, [](float x) { return std::sqrt(x); },
        [](float, float y) { return 0.5f / y; });
}

// ---------------------------------------------------------------------------
// matmul kernels. Loop orders keep the per-element accumulation sequence
// fixed (k ascending), so results are bitwise reproducible for any thread
// count: workers own disjoint output rows.
// ---------------------------------------------------------------------------

namespace {
int g_num_threads = 1;
constexpr int64_t kParallelFlopThreshold = 1 << 21;
} // namespace

void set_num_threads(int n) { g_num_threads = std::max(1, n); }
int get_num_threads() { return g_num_threads; }

// Splits [0, total) into contiguous chunks, one per worker.
template <typename Fn>
static void parallel_rows(int64_t total, int64_t flops, Fn&& fn) {
    int workers = g_num_threads;
    if (workers <= 1 || total <= 1 || flops < kParallelFlopThreshold) {
        fn(0, total);
        return;
    }
    if (workers > total) workers = static_cast<int>(total);
    const int64_t chunk = (total + workers - 1) / workers;
    std::vector<std::thread> threads;
    threads.reserve(static_cast<size_t>(workers - 1));
    for (int t = 1; t < workers; ++t) {
        const int64_t begin = t * chunk;
        if (begin >= total) break;
        threads.emplace_back(fn, begin, std::min(total, begin + chunk));
    }
    fn(0, std::min(total, chunk));
    for (auto& th : threads) th.join();
}

// C[m,n] (+)= A[m,k] * B[k,n]
static void mm_nn(const float* A, const float* B, float* C, int64_t m, int64_t k, int64_t n,
                  bool accumulate) {
    parallel_rows(m, m * k * n, [=](int64_t row_begin, int64_t row_end) {
        for (int64_t i = row_begin; i < row_end; ++i) {
            const float* a_row = A + i * k;
            float* c_row = C + i * n;
            if (!accumulate) std::fill(c_row, c_row + n, 0.0f);
            for (int64_t p = 0; p < k; ++p) {
                const float av = a_row[p];
                if (av == 0.0f) continue;
                const float* b_row = B + p * n;
                for (int64_t j = 0; j < n; ++j) c_row[j] += av * b_row[j];
            }
        }
    });
}

// C[m,n] (+)= A[m,k] * B[n,k]^T
static void mm_nt(const float* A, const float* B, float* C, int64_t m, int64_t k, int64_t n,
                  bool accumulate) {
    parallel_rows(m, m * k * n, [=](int64_t row_begin, int64_t row_end) {
        for (int64_t i = row_begin; i < row_end; ++i) {
            const float* a_row = A + i * k;
            float* c_row = C + i * n;
            for (int64_t j = 0; j < n; ++j) {
                const float* b_row = B + j * k;
                float acc = 0.0f;
                for (int64_t p = 0; p < k; ++p) acc += a_row[p] * b_row[p];
                if (accumulate)
                    c_row[j] += acc;
                else
                    c_row[j] = acc;
            }
        }
    });
}

// C[k,n] (+)= A[m,k]^T * B[m,n]. Workers own output rows p; the i loop
// stays innermost-ascending so each element accumulates in the same order
// as the serial kernel.
static void mm_tn(const float* A, const float* B, float* C, int64_t m, int64_t k, int64_t n,
                  bool accumulate) {
    if (g_num_threads > 1 && m * k * n >= kParallelFlopThreshold && k > 1) {
        parallel_rows(k, m * k * n, [=](int64_t p_begin, int64_t p_end) {
            for (int64_t p = p_begin; p < p_end; ++p) {
                float* c_row = C + p * n;
                if (!accumulate) std::fill(c_row, c_row + n, 0.0f);
                for (int64_t i = 0; i < m; ++i) {
                    const float av = A[i * k + p];
                    if (av == 0.0f) continue;
                    const float* b_row = B + i * n;
                    for (int64_t j = 0; j < n; ++j) c_row[j] += av * b_row[j];
                }
            }
        });
        return;
    }
    if (!accumulate) std::fill(C, C + k * n, 0.0f);
    for (int64_t i = 0; i < m; ++i) {
        const float* a_row = A + i * k;
        const float* b_row = B + i * n;
        for (int64_t p = 0; p < k; ++p) {
            const float av = a_row[p];
            if (av == 0.0f) continue;
            float* c_row = C + p * n;
            for (int64_t j = 0; j < n; ++j) c_row[j] += av * b_row[j];
        }
    }
}

static int64_t leading_product(const Shape& s, size_t keep_last) {
    int64_t n = 1;
    for (size_t i = 0; i + keep_last < s.size(); ++i) n *= s[i];
    return n;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() < 2 || sb.size() < 2) throw ShapeError("matmul: operands must have >= 2 dims");
    const int64_t m = sa[sa.size() - 2], k = sa[sa.size() - 1];
    const int64_t kb = sb[sb.size() - 2], n = sb[sb.size() - 1];
    if (k != kb)
        throw ShapeError("matmul: inner dims disagree " + shape_str(sa) + " x " + shape_str(sb));

    const bool b_is_matrix = sb.size() == 2;
    const int64_t batch = leading_product(sa, 2);
    if (!b_is_matrix) {
        if (leading_product(sb, 2) != batch || sb.size() != sa.size())
            throw ShapeError("matmul: batch dims disagree");
    }

    Shape out_shape(sa.begin(), sa.end() - 1);
    out_shape.push_back(n);
    std::vector<float> out(static_cast<size_t>(batch * m * n));
    const float* pa = a.data();
    const float* pb = b.data();
    for (int64_t t = 0; t < batch; ++t)
        mm_nn(pa + t * m * k, b_is_matrix ? pb : pb + t * k * n, out.data() + t * m * n, m, k, n,
              false);

    NodePtr an = a.node(), bn = b.node();
    return make_op(std::move(out_shape), std::move(out), {an, bn},
                   [an, bn, m, k, n, batch, b_is_matrix](Tensor::Node& o) {
                       const float* g = o.grad.data();
                       const float* pa = an->data->data();
                       const float* pb = bn->data->data();
                       if (an->requires_grad) {
                           float* ga = an->grad_buf();
                           for (int64_t t = 0; t < batch; ++t)
                               mm_nt(g + t * m * n, b_is_matrix ? pb : pb + t * k * n,
                                     ga + t * m * k, m, n, k, true);
                       }
                       if (bn->requires_grad) {
                           float* gb = bn->grad_buf();
                           for (int64_t t = 0; t < batch; ++t)
                               mm_tn(pa + t * m * k, g + t * m * n,
                                     b_is_matrix ? gb : gb + t * k * n, m, k, n, true);
                       }
                   });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() != sb.size() || sa.size() < 2)
        throw ShapeError("matmul_nt: rank mismatch");
    const int64_t m = sa[sa.size() - 2], k = sa[sa.size() - 1];
    const int64_t n = sb[sb.size() - 2];
    if (sb[sb.size() - 1] != k) throw ShapeError("matmul_nt: inner dims disagree");
    const int64_t batch = leading_product(sa, 2);
    if (leading_product(sb, 2) != batch) throw ShapeError("matmul_nt: batch dims disagree");

    Shape out_shape(sa.begin(), sa.end() - 1);
    out_shape.push_back(n);
    std::vector<float> out(static_cast<size_t>(batch * m * n));
    const float* pa = a.data();
    const float* pb = b.data();
    for (int64_t t = 0; t < batch; ++t)
        mm_nt(pa + t * m * k, pb + t * n * k, out.data() + t * m * n, m, k, n, false);

    NodePtr an = a.node(), bn = b.node();
    return make_op(std::move(out_shape), std::move(out), {an, bn},
                   [an, bn, m, k, n, batch](Tensor::Node& o) {
                       const float* g = o.grad.data();
                       const float* pa = an->data->data();
                       const float* pb = bn->data->data();
                       if (an->requires_grad) {
                           float* ga = an->grad_buf();
                           // dA = dC * B : [m,n] x [n,k]
                           for (int64_t t = 0; t < batch; ++t)
                               mm_nn(g + t * m * n, pb + t * n * k, ga + t * m * k, m, n, k, true);
                       }
                       if (bn->requires_grad) {
                           float* gb = bn->grad_buf();
                           // dB = dC^T * A : [n,m] x [m,k]
                           for (int64_t t = 0; t < batch; ++t)
                               mm_tn(g + t * m * n, pa + t * m * k, gb + t * n * k, m, n, k, true);
                       }
                   });
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

Tensor reshape(const Tensor& a, const Shape& new_shape) {
    if (shape_numel(new_shape) != a.numel())
        throw ShapeError("reshape: element count mismatch");
    auto out = std::make_shared<Tensor::Node>();
    out->shape = new_shape;
    out->data = a.node()->data; // shared storage
    out->requires_grad = g_grad_enabled && a.requires_grad();
    if (out->requires_grad) {
        NodePtr an = a.node();
        out->parents = {an};
        out->backward_fn = [an](Tensor::Node& o) {
            float* ga = an->grad_buf();
            const float* g = o.grad.data();
            for (size_t i = 0; i < o.data->size(); ++i) ga[i] += g[i];
        };
    }
    return Tensor(out);
}

Tensor permute_0213(const Tensor& a) {
    const Shape& s = a.shape();
    if (s.size() != 4) throw ShapeError("permute_0213: rank-4 tensor required");
    const int64_t A = s[0], B = s[1], C = s[2], D = s[3];
    Shape out_shape{A, C, B, D};
    std::vector<float> out(static_cast<size_t>(a.numel()));
    const float* p = a.data();
    for (int64_t i = 0; i < A; ++i)
        for (int64_t j = 0; j < B; ++j)
            for (int64_t c = 0; c < C; ++c)
                std::memcpy(out.data() + ((i * C + c) * B + j) * D,
                            p + ((i * B + j) * C + c) * D, static_cast<size_t>(D) * 4);
    NodePtr an = a.node();
    return make_op(std::move(out_shape), std::move(out), {an}, [an, A, B, C, D](Tensor::Node& o) {
        if (!an->requires_grad) return;
        float* ga = an->grad_buf();
        const float* g = o.grad.data();
        for (int64_t i = 0; i < A; ++i)
            for (int64_t c = 0; c < C; ++c)
                for (int64_t j = 0; j < B; ++j) {
                    const float* src = g + ((i * C + c) * B + j) * D;
                    float* dst = ga + ((i * B + j) * C + c) * D;
                    for (int64_t d = 0; d < D; ++d) dst[d] += src[d];
                }
    });
}

Tensor repeat_heads(const Tensor& a, int64_t factor) {
    const Shape& s = a.shape();
    if (s.size() < 3) throw ShapeError("repeat_heads: rank >= 3 required");
    if (factor < 1) throw ShapeError("repeat_heads: factor must be >= 1");
    const int64_t G = s[s.size() - 3];
    const int64_t inner = s[s.size() - 2] * s[s.size() - 1];
    const int64_t batch = leading_product(s, 3);
    Shape out_shape = s;
    out_shape[s.size() - 3] = G * factor;
    std::vector<float> out(static_cast<size_t>(batch * G * factor * inner));
    const float* p = a.data();
    for (int64_t t = 0; t < batch; ++t)
        for (int64_t gi = 0; gi < G; ++gi)
            for (int64_t f = 0; f < factor; ++f)
                std::memcpy(out.data() + ((t * G + gi) * factor + f) * inner,
                            p + (t * G + gi) * inner, static_cast<size_t>(inner) * 4);
    NodePtr an = a.node();
    return make_op(std::move(out_shape), std::move(out), {an},
                   [an, batch, G, factor, inner](Tensor::Node& o) {
                       if (!an->requires_grad) return;
                       float* ga = an->grad_buf();
                       const float* g = o.grad.data();
                       for (int64_t t = 0; t < batch; ++t)
                           for (int64_t gi = 0; gi < G; ++gi) {
                               float* dst = ga + (t * G + gi) * inner;
                               for (int64_t f = 0; f < factor; ++f) {
                                   const float* src = g + ((t * G + gi) * factor + f) * inner;
                                   for (int64_t i = 0; i < inner; ++i) dst[i] += src[i];
                               }
                           }
                   });
}

// ---------------------------------------------------------------------------
// reductions and normalizations
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& a) {
    double acc = 0.0;
    const float* p = a.data();
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) acc += p[i];
    NodePtr an = a.node();
    return make_op(Shape{1}, {static_cast<float>(acc)}, {an}, [an, n](Tensor::Node& o) {
        if (!an->requires_grad) return;
        float* ga = an->grad_buf();
        const float g = o.grad[0];
        for (int64_t i = 0; i < n; ++i) ga[i] += g;
    });
}

Tensor softmax_rows(const Tensor& a, const Tensor& mask) {
    const Shape& s = a.shape();
    if (s.empty()) throw ShapeError("softmax_rows: scalar input");
    const int64_t cols = s[s.size() - 1];
    const int64_t rows = a.numel() / cols;
    const float* p = a.data();
    const float* pm = nullptr;
    int64_t mask_n = 0;
    if (mask.defined()) {
        suffix_tiles(s, mask.shape());
        pm = mask.data();
        mask_n = mask.numel();
    }
    std::vector<float> out(static_cast<size_t>(a.numel()));
    const float neg_inf = -std::numeric_limits<float>::infinity();
    for (int64_t r = 0; r < rows; ++r) {
        const float* x = p + r * cols;
        float* y = out.data() + r * cols;
        float mx = neg_inf;
        for (int64_t j = 0; j < cols; ++j) {
            float v = x[j] + (pm ? pm[(r * cols + j) % mask_n] : 0.0f);
            if (v > mx) mx = v;
        }
        if (mx == neg_inf) {
            // fully masked row: defined as all zeros so padding rows stay inert
            std::fill(y, y + cols, 0.0f);
            continue;
        }
        double denom = 0.0;
        for (int64_t j = 0; j < cols; ++j) {
            float v = x[j] + (pm ? pm[(r * cols + j) % mask_n] : 0.0f);
            float e = std::exp(v - mx);
            y[j] = e;
            denom += e;
        }
        const float inv = static_cast<float>(1.0 / denom);
        for (int64_t j = 0; j < cols; ++j) y[j] *= inv;
    }
    NodePtr an = a.node();
    return make_op(s, std::move(out), {an}, [an, rows, cols](Tensor::Node& o) {
        if (!an->requires_grad) return;
        float* ga = an->grad_buf();
        const float* g = o.grad.data();
        const float* y = o.data->data();
        for (int64_t r = 0; r < rows; ++r) {
            const float* yr = y + r * cols;
            const float* gr = g + r * cols;
            float* gar = ga + r * cols;
            double dot = 0.0;
            for (int64_t j = 0; j < cols; ++j) dot += static_cast<double>(yr[j]) * gr[j];
            const float dotf = static_cast<float>(dot);
            for (int64_t j = 0; j < cols; ++j) gar[j] += yr[j] * (gr[j] - dotf);
        }
    });
}

Tensor rmsnorm(const Tensor& x, const Tensor& gain, float eps) {
    const Shape& s = x.shape();
    if (s.empty()) throw ShapeError("rmsnorm: scalar input");
    const int64_t h = s[s.size() - 1];
    if (gain.ndim() != 1 || gain.dim(0) != h)
        throw ShapeError("rmsnorm: gain must match last dimension");
    const int64_t rows = x.numel() / h;
    const float* px = x.data();
    const float* pg = gain.data();
    std::vector<float> out(static_cast<size_t>(x.numel()));
    std::vector<float> inv_rms(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; ++r) {
        const float* xr = px + r * h;
        double ms = 0.0;
        for (int64_t j = 0; j < h; ++j) ms += static_cast<double>(xr[j]) * xr[j];
        ms = ms / static_cast<double>(h) + eps;
        const float inv = static_cast<float>(1.0 / std::sqrt(ms));
        inv_rms[static_cast<size_t>(r)] = inv;
        float* yr = out.data() + r * h;
        for (int64_t j = 0; j < h; ++j) yr[j] = xr[j] * inv * pg[j];
    }
    NodePtr xn = x.node(), gn = gain.node();
    return make_op(s, std::move(out), {xn, gn},
                   [xn, gn, rows, h, inv = std::move(inv_rms)](Tensor::Node& o) {
                       const float* g = o.grad.data();
                       const float* px = xn->data->data();
                       const float* pg = gn->data->data();
                       float* gx = xn->requires_grad ? xn->grad_buf() : nullptr;
                       float* gg = gn->requires_grad ? gn->grad_buf() : nullptr;
                       for (int64_t r = 0; r < rows; ++r) {
                           const float* xr = px + r * h;
                           const float* gr = g + r * h;
                           const float ir = inv[static_cast<size_t>(r)];
                           if (gg) {
                               for (int64_t j = 0; j < h; ++j) gg[j] += gr[j] * xr[j] * ir;
                           }
                           if (gx) {
                               double dot = 0.0;
                               for (int64_t j = 0; j < h; ++j)
                                   dot += static_cast<double>(gr[j]) * pg[j] * xr[j];
                               const float c =
                                   static_cast<float>(dot) * ir * ir * ir / static_cast<float>(h);
                               float* gxr = gx + r * h;
                               for (int64_t j = 0; j < h; ++j)
                                   gxr[j] += gr[j] * pg[j] * ir - xr[j] * c;
                           }
                       }
                   });
}

Tensor rope(const Tensor& x, const std::vector<int64_t>& positions, float theta) {
    const Shape& s = x.shape();
    if (s.size() < 3) throw ShapeError("rope: expected [.., seq, heads, head_dim]");
    const int64_t d = s[s.size() - 1];
    if (d % 2 != 0) throw ConfigError("rope: head_dim must be even");
    const int64_t heads = s[s.size() - 2];
    const int64_t seq = s[s.size() - 3];
    if (static_cast<int64_t>(positions.size()) != seq)
        throw ShapeError("rope: positions must have one entry per sequence index");
    const int64_t batch = leading_product(s, 3);
    const int64_t half = d / 2;

    // cos/sin table per (position, pair)
    std::vector<float> cs(static_cast<size_t>(seq * half * 2));
    for (int64_t t = 0; t < seq; ++t) {
        const double m = static_cast<double>(positions[t]);
        for (int64_t i = 0; i < half; ++i) {
            const double freq =
                std::pow(static_cast<double>(theta), -2.0 * static_cast<double>(i) / static_cast<double>(d));
            const double ang = m * freq;
            cs[static_cast<size_t>((t * half + i) * 2)] = static_cast<float>(std::cos(ang));
            cs[static_cast<size_t>((t * half + i) * 2 + 1)] = static_cast<float>(std::sin(ang));
        }
    }

    std::vector<float> out(static_cast<size_t>(x.numel()));
    const float* p = x.data();
    for (int64_t b = 0; b < batch; ++b)
        for (int64_t t = 0; t < seq; ++t)
            for (int64_t hd = 0; hd < heads; ++hd) {
                const float* xr = p + ((b * seq + t) * heads + hd) * d;
                float* yr = out.data() + ((b * seq + t) * heads + hd) * d;
                for (int64_t i = 0; i < half; ++i) {
                    const float c = cs[static_cast<size_t>((t * half + i) * 2)];
                    const float sn = cs[static_cast<size_t>((t * half + i) * 2 + 1)];
                    const float x0 = xr[2 * i], x1 = xr[2 * i + 1];
                    yr[2 * i] = x0 * c - x1 * sn;
                    yr[2 * i + 1] = x0 * sn + x1 * c;
                }
            }
    NodePtr xn = x.node();
    return make_op(s, std::move(out), {xn},
                   [xn, batch, seq, heads, half, d, table = std::move(cs)](Tensor::Node& o) {
                       if (!xn->requires_grad) return;
                       float* gx = xn->grad_buf();
                       const float* g = o.grad.data();
                       for (int64_t b = 0; b < batch; ++b)
                           for (int64_t t = 0; t < seq; ++t)
                               for (int64_t hd = 0; hd < heads; ++hd) {
                                   const float* gr = g + ((b * seq + t) * heads + hd) * d;
                                   float* gxr = gx + ((b * seq + t) * heads + hd) * d;
                                   for (int64_t i = 0; i < half; ++i) {
                                       const float c = table[static_cast<size_t>((t * half + i) * 2)];
                                       const float sn =
                                           table[static_cast<size_t>((t * half + i) * 2 + 1)];
                                       const float g0 = gr[2 * i], g1 = gr[2 * i + 1];
                                       // inverse rotation
                                       gxr[2 * i] += g0 * c + g1 * sn;
                                       gxr[2 * i + 1] += -g0 * sn + g1 * c;
                                   }
                               }
                   });
}

Tensor embedding(const Tensor& table, const std::vector<int32_t>& ids) {
    if (table.ndim() != 2) throw ShapeError("embedding: table must be [vocab, width]");
    const int64_t vocab = table.dim(0), width = table.dim(1);
    for (int32_t id : ids)
        if (id < 0 || id >= vocab) throw DomainError("embedding: token id out of range");
    const int64_t n = static_cast<int64_t>(ids.size());
    std::vector<float> out(static_cast<size_t>(n * width));
    const float* p = table.data();
    for (int64_t i = 0; i < n; ++i)
        std::memcpy(out.data() + i * width, p + static_cast<int64_t>(ids[static_cast<size_t>(i)]) * width,
                    static_cast<size_t>(width) * 4);
    NodePtr tn = table.node();
    auto ids_copy = ids;
    return make_op(Shape{n, width}, std::move(out), {tn},
                   [tn, width, ids = std::move(ids_copy)](Tensor::Node& o) {
                       if (!tn->requires_grad) return;
                       float* gt = tn->grad_buf();
                       const float* g = o.grad.data();
                       for (size_t i = 0; i < ids.size(); ++i) {
                           float* dst = gt + static_cast<int64_t>(ids[i]) * width;
                           const float* src = g + static_cast<int64_t>(i) * width;
                           for (int64_t j = 0; j < width; ++j) dst[j] += src[j];
                       }
                   });
}

static Tensor cross_entropy_impl(const Tensor& logits, const std::vector<int32_t>& targets,
                                 const std::vector<uint8_t>* mask_prompt) {
    if (logits.ndim() != 2) throw ShapeError("cross_entropy: logits must be [n, vocab]");
    const int64_t n = logits.dim(0), v = logits.dim(1);
    if (static_cast<int64_t>(targets.size()) != n)
        throw ShapeError("cross_entropy: one target per row required");
    if (mask_prompt && static_cast<int64_t>(mask_prompt->size()) != n)
        throw ShapeError("cross_entropy: mask length mismatch");
    std::vector<uint8_t> keep(static_cast<size_t>(n), 1);
    int64_t kept = 0;
    for (int64_t i = 0; i < n; ++i) {
        if (targets[static_cast<size_t>(i)] < 0 || targets[static_cast<size_t>(i)] >= v)
            throw DomainError("cross_entropy: target id out of range");
        if (mask_prompt && (*mask_prompt)[static_cast<size_t>(i)]) keep[static_cast<size_t>(i)] = 0;
        kept += keep[static_cast<size_t>(i)];
    }
    if (kept == 0) throw DomainError("cross_entropy: every position is masked out");

    const float* p = logits.data();
    double total = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        if (!keep[static_cast<size_t>(i)]) continue;
        const float* row = p + i * v;
        float mx = row[0];
        for (int64_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (int64_t j = 0; j < v; ++j) denom += std::exp(static_cast<double>(row[j]) - mx);
        total += std::log(denom) + mx - row[targets[static_cast<size_t>(i)]];
    }
    const float loss = static_cast<float>(total / static_cast<double>(kept));

    NodePtr ln = logits.node();
    auto tgt = targets;
    return make_op(Shape{1}, {loss}, {ln},
                   [ln, n, v, kept, tgt = std::move(tgt), keep = std::move(keep)](Tensor::Node& o) {
                       if (!ln->requires_grad) return;
                       float* gl = ln->grad_buf();
                       const float g = o.grad[0] / static_cast<float>(kept);
                       const float* p = ln->data->data();
                       for (int64_t i = 0; i < n; ++i) {
                           if (!keep[static_cast<size_t>(i)]) continue;
                           const float* row = p + i * v;
                           float* grow = gl + i * v;
                           float mx = row[0];
                           for (int64_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
                           double denom = 0.0;
                           for (int64_t j = 0; j < v; ++j)
                               denom += std::exp(static_cast<double>(row[j]) - mx);
                           const float inv = static_cast<float>(1.0 / denom);
                           for (int64_t j = 0; j < v; ++j)
                               grow[j] += g * std::exp(row[j] - mx) * inv;
                           grow[tgt[static_cast<size_t>(i)]] -= g;
                       }
                   });
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int32_t>& targets) {
    return cross_entropy_impl(logits, targets, nullptr);
}

Tensor cross_entropy_masked(const Tensor& logits, const std::vector<int32_t>& targets,
                            const std::vector<uint8_t>& mask_prompt) {
    return cross_entropy_impl(logits, targets, &mask_prompt);
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw ShapeError("backward: loss must be a defined scalar tensor");
    if (!loss.requires_grad()) return;

    // Post-order DFS: parents land before children, so the reversed list
    // visits each node before any of its parents.
    std::vector<Tensor::Node*> order;
    std::unordered_set<Tensor::Node*> seen;
    struct Frame {
        Tensor::Node* node;
        size_t next_parent;
    };
    std::vector<Frame> stack{{loss.node().get(), 0}};
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            Tensor::Node* p = f.node->parents[f.next_parent++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    // Interior grads are scratch for this invocation; only leaves accumulate
    // across calls.
    for (Tensor::Node* nd : order)
        if (nd->backward_fn && !nd->grad.empty())
            std::fill(nd->grad.begin(), nd->grad.end(), 0.0f);

    loss.node()->grad_buf()[0] += 1.0f;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Tensor::Node* nd = *it;
        if (nd->backward_fn) {
            nd->grad_buf(); // ensure allocated even if no consumer wrote to it
            nd->backward_fn(*nd);
        }
    }
}

} // namespace ttl
