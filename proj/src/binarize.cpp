#include "spincim/binarize.hpp"

#include "spincim/errors.hpp"

#include <bit>
#include <cmath>

namespace spincim {

Tensor binarize(const Tensor& latent) {
    Tensor out = latent;
    for (auto& x : out.vec()) {
        if (std::isnan(x))
            throw numeric_error("binarize: NaN entry");
        x = x >= 0.0 ? 1.0 : -1.0;
    }
    return out;
}

Tensor ste_backward(const Tensor& grad_out, const Tensor& latent, double clip) {
    if (clip <= 0.0)
        throw domain_error("ste_backward: clip must be positive");
    if (!grad_out.same_shape(latent))
        throw dimension_error("ste_backward: grad " + grad_out.shape_str() + " vs latent " +
                              latent.shape_str());
    Tensor out = grad_out;
    for (std::size_t i = 0; i < out.numel(); ++i)
        if (std::abs(latent[i]) > clip)
            out[i] = 0.0;
    return out;
}

BitVec BitVec::from_pm1(std::span<const double> values) {
    BitVec bv(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        double v = values[i];
        if (v != 1.0 && v != -1.0)
            throw domain_error("bit encoding expects +/-1 values");
        bv.set(i, v > 0.0);
    }
    return bv;
}

void BitVec::set(std::size_t i, bool b) {
    if (b)
        words_[i / 64] |= (1ULL << (i % 64));
    else
        words_[i / 64] &= ~(1ULL << (i % 64));
}

bool BitVec::get(std::size_t i) const { return (words_[i / 64] >> (i % 64)) & 1ULL; }

long long xnor_popcount_dot(const BitVec& x, const BitVec& w) {
    if (x.size() != w.size())
        throw dimension_error("xnor dot: length " + std::to_string(x.size()) + " vs " +
                              std::to_string(w.size()));
    const std::size_t n = x.size();
    long long pc = 0;
    const auto& xw = x.words();
    const auto& ww = w.words();
    for (std::size_t k = 0; k < xw.size(); ++k) {
        std::uint64_t m = ~(xw[k] ^ ww[k]);
        // mask the tail beyond n in the last word
        if (k + 1 == xw.size() && (n % 64) != 0)
            m &= (1ULL << (n % 64)) - 1ULL;
        pc += std::popcount(m);
    }
    return 2 * pc - static_cast<long long>(n);
}

} // namespace spincim
