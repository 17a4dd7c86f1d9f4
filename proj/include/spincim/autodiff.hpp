#pragma once

#include "spincim/tensor.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace spincim::ad {

// Reverse-mode tape over Tensor values. Graphs are rebuilt per forward
// pass; leaves (parameters) persist across passes and accumulate
// gradients until the optimizer clears them. Single-threaded per graph.
struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool grad_alloc = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    Tensor& ensure_grad();
    void accumulate(const Tensor& g);
};

using Var = std::shared_ptr<Node>;

Var constant(Tensor v);
Var leaf(Tensor v); // trainable: participates in gradient propagation

inline const Tensor& value(const Var& v) { return v->value; }

// Runs reverse-mode accumulation from a scalar root (numel == 1).
void backward(const Var& root);
void zero_grad(const Var& v);

// --- elementwise / structural ---------------------------------------------
Var add(const Var& a, const Var& b);       // same shape
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);       // elementwise
Var smul(const Var& a, double k);
Var sadd(const Var& a, double k);
Var square(const Var& a);
Var log_op(const Var& a);
Var exp_op(const Var& a);
Var softplus(const Var& a);                // ln(1 + e^x), overflow-safe
Var relu(const Var& a);
Var sum(const Var& a);                     // -> scalar
Var mean(const Var& a);                    // -> scalar
Var reshape(const Var& a, std::vector<std::size_t> shape);

// --- broadcast over matrix rows --------------------------------------------
Var add_rowvec(const Var& a, const Var& bias);   // a[N x C] + bias[C]
Var mul_rowvec(const Var& a, const Var& scale);  // a[N x C] * scale[C]

// --- linear algebra ---------------------------------------------------------
Var matmul(const Var& a, const Var& b);    // [N x D] * [D x C]

// --- quantizer with straight-through surrogate ------------------------------
// Forward sign(x) in {-1,+1} (tie -> +1); backward passes gradient where
// |x| <= clip. hardtanh shares the identical backward and is the exact
// differentiable surrogate used by the gradient checks.
Var sign_ste(const Var& a, double clip);
Var hardtanh(const Var& a, double clip);

// --- convolution plumbing ----------------------------------------------------
// Images are stored [N, C*H*W] channel-major per sample. im2col emits
// [N*P, K*K*C] with column index c*K*K + kh*K + kw, so rows of one input
// channel are contiguous; the crossbar mapper reuses this layout.
Var im2col(const Var& x, std::size_t channels, std::size_t height, std::size_t width,
           std::size_t kernel, std::size_t pad);
// [N*P, C_out] column-major patches -> [N, C_out*P] channel-major images
Var conv_pack(const Var& cols, std::size_t batch, std::size_t positions, std::size_t channels);
// 2x2 max pooling, stride 2 (floor semantics on odd extents)
Var maxpool2(const Var& x, std::size_t channels, std::size_t height, std::size_t width);

// --- normalization -----------------------------------------------------------
// Per-column standardization by batch statistics. Variance is biased
// (divide by N) and the denominator is sqrt(max(var, eps)) so columns
// with real spread come out with variance exactly 1. Batch moments are
// exported for the running-statistics update.
Var batch_normalize(const Var& z, double eps, Tensor* batch_mean, Tensor* batch_var);

// --- loss ---------------------------------------------------------------------
// Mean over the batch of -log softmax(logits)[label], max-stabilized.
Var softmax_ce(const Var& logits, const std::vector<int>& labels);

// --- finite-difference validation ----------------------------------------------
// build() constructs the scalar loss from the current parameter values.
// Returns the worst discrepancy between reverse-mode and central
// differences, relative where the gradient is O(1) or larger, absolute
// below that.
double grad_check(const std::function<Var()>& build, const std::vector<Var>& params, double eps);

// --- plain-tensor helpers shared with the inference engine ---------------------
Tensor mm(const Tensor& a, const Tensor& b);
Tensor im2col_tensor(const Tensor& x, std::size_t channels, std::size_t height, std::size_t width,
                     std::size_t kernel, std::size_t pad);
Tensor softmax_rows(const Tensor& logits);

} // namespace spincim::ad
