// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "ttl/errors.hpp"
#include "ttl/rng.hpp"

namespace ttl {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);

// Worker threads for large matmuls (default 1). Results are bitwise
// identical for every thread count: threads own disjoint output rows and
// each element keeps its fixed k-ascending accumulation order.
void set_num_threads(int n);
int get_num_threads();

// Dense row-major float32 tensor with a reverse-mode autograd tape.
//
// A Tensor is a cheap handle onto a shared node. Ops record their parents
// and a backward closure when any input requires gradients; backward(loss)
// walks the tape once in reverse topological order. Values are immutable
// after an op creates them; only grad buffers accumulate.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(const Shape& shape, bool requires_grad = false);
    static Tensor full(const Shape& shape, float value, bool requires_grad = false);
    static Tensor from_data(const Shape& shape, std::vector<float> data,
                            bool requires_grad = false);
    // Entries drawn N(0, std). Consumes values from rng in row-major order.
    static Tensor randn(const Shape& shape, Rng& rng, float std_dev,
                        bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    int64_t numel() const;
    int64_t dim(size_t i) const { return shape().at(i); }
    size_t ndim() const { return shape().size(); }

    const float* data() const;
    float* mutable_data(); // for in-place parameter updates only
    float item() const;    // value of a 1-element tensor

    bool requires_grad() const;
    // Gradient buffer, allocated zero-filled on first access.
    const float* grad() const;
    float* mutable_grad();
    bool has_grad() const;
    void zero_grad();

    // Internal node identity (stable within a process).
    const void* id() const { return node_.get(); }

    struct Node;
    const std::shared_ptr<Node>& node() const { return node_; }
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  private:
    std::shared_ptr<Node> node_;
};

// ---- elementwise (broadcast: the smaller shape must be a trailing suffix
//      of the larger; it is tiled over the leading dimensions) ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float c);
Tensor silu(const Tensor& a); // x * sigmoid(x)
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);

// ---- linear algebra ----
// a: [.., m, k], b: [k, n] or [.., k, n] with matching leading dims.
Tensor matmul(const Tensor& a, const Tensor& b);
// a: [.., m, k], b: [.., n, k] -> a * b^T, leading dims must match.
Tensor matmul_nt(const Tensor& a, const Tensor& b);

// ---- shape ----
Tensor reshape(const Tensor& a, const Shape& new_shape); // shares storage
Tensor permute_0213(const Tensor& a);                    // [A,B,C,D] -> [A,C,B,D]
// [.., groups, rows, cols] -> [.., groups*factor, rows, cols], each group
// repeated `factor` times consecutively. Backward sums the copies.
Tensor repeat_heads(const Tensor& a, int64_t factor);

// ---- reductions / normalizations ----
Tensor sum(const Tensor& a); // scalar
// Softmax over the last dimension, stabilized by max subtraction. mask, when
// defined, is added to the inputs first (use -inf to forbid positions; its
// shape must be a trailing suffix). A fully masked row yields all zeros.
Tensor softmax_rows(const Tensor& a, const Tensor& mask = {});
// y = x / sqrt(mean_lastdim(x^2) + eps) * gain, gain: [last_dim].
Tensor rmsnorm(const Tensor& x, const Tensor& gain, float eps);
// Rotary position coding over the last dimension (must be even): the pair
// (x[2i], x[2i+1]) at sequence position p is rotated by p * theta^(-2i/d).
// x: [.., seq, heads, head_dim]; positions: one entry per seq index.
Tensor rope(const Tensor& x, const std::vector<int64_t>& positions, float theta);
// table: [vocab, width]; ids index rows; result [ids.size(), width].
Tensor embedding(const Tensor& table, const std::vector<int32_t>& ids);
// Mean over rows of -log softmax(logits)[target]. logits: [n, vocab].
Tensor cross_entropy(const Tensor& logits, const std::vector<int32_t>& targets);
// Same, but positions where mask_prompt is true are excluded from the mean.
// Throws if every position is masked.
Tensor cross_entropy_masked(const Tensor& logits, const std::vector<int32_t>& targets,
                            const std::vector<uint8_t>& mask_prompt);

// Accumulates d(loss)/d(t) into every requires_grad tensor reachable from
// loss. loss must be scalar. Repeated calls accumulate additively.
void backward(const Tensor& loss);

// Suspends tape recording for the enclosing scope (forward-only eval).
class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool prev_;
};

} // namespace ttl
