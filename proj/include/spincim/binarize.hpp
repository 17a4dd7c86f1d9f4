#pragma once

#include "spincim/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace spincim {

// Sign quantization with the straight-through surrogate, plus the packed
// XNOR-popcount dot product that stands in for the crossbar's bitwise MAC.

// out[i] = +1 if latent[i] >= 0 else -1 (tie at zero goes to +1)
Tensor binarize(const Tensor& latent);

// grad_in[i] = grad_out[i] where |latent[i]| <= clip, else 0; the exact
// gradient of clamp(latent, -clip, clip) away from the boundary
Tensor ste_backward(const Tensor& grad_out, const Tensor& latent, double clip);

// Latent weights plus their current sign pattern; refresh() re-derives
// bin after any latent update.
struct BinaryWeight {
    Tensor latent;
    Tensor bin;

    explicit BinaryWeight(Tensor latent_init) : latent(std::move(latent_init)) { refresh(); }
    void refresh() { bin = binarize(latent); }
};

// Bit vector packed into 64-bit words; bit b encodes the value 2b-1.
class BitVec {
public:
    BitVec() = default;
    explicit BitVec(std::size_t n) : n_(n), words_((n + 63) / 64, 0) {}

    static BitVec from_pm1(std::span<const double> values);

    std::size_t size() const { return n_; }
    void set(std::size_t i, bool b);
    bool get(std::size_t i) const;
    const std::vector<std::uint64_t>& words() const { return words_; }

private:
    std::size_t n_ = 0;
    std::vector<std::uint64_t> words_;
};

// 2*popcount(xnor(x, w)) - N == sum of the encoded +/-1 products
long long xnor_popcount_dot(const BitVec& x, const BitVec& w);

} // namespace spincim
