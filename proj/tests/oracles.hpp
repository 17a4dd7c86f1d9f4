#pragma once

// Test-only reference implementations, kept independent of the library's
// computation paths on purpose: the brute-force loops here are what the
// fast paths get checked against.

#include "spincim/rng.hpp"
#include "spincim/tensor.hpp"

#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

// plain triple-loop matmul
inline spincim::Tensor matmul(const spincim::Tensor& a, const spincim::Tensor& b) {
    const std::size_t n = a.dim(0), d = a.dim(1), c = b.dim(1);
    spincim::Tensor out({n, c});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < d; ++k)
                acc += a.at(i, k) * b.at(k, j);
            out.at(i, j) = acc;
        }
    return out;
}

// integer +/-1 dot product
inline long long pm1_dot(const std::vector<int>& x, const std::vector<int>& w) {
    long long s = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
        s += static_cast<long long>(x[i]) * w[i];
    return s;
}

// direct convolution: x is one sample [C*H*W], w is [C_out][C][K][K]
// flattened as [K*K*C x C_out] with row index c*K*K + kh*K + kw
inline spincim::Tensor conv2d_direct(const spincim::Tensor& x, const spincim::Tensor& w,
                                     std::size_t channels, std::size_t h, std::size_t wth,
                                     std::size_t k, std::size_t pad, std::size_t c_out) {
    const std::size_t n = x.dim(0);
    const std::size_t oh = h + 2 * pad - k + 1, ow = wth + 2 * pad - k + 1;
    spincim::Tensor out({n, c_out * oh * ow});
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t co = 0; co < c_out; ++co)
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t xx = 0; xx < ow; ++xx) {
                    double acc = 0.0;
                    for (std::size_t ci = 0; ci < channels; ++ci)
                        for (std::size_t ky = 0; ky < k; ++ky)
                            for (std::size_t kx = 0; kx < k; ++kx) {
                                const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) -
                                                          static_cast<std::ptrdiff_t>(pad);
                                const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xx + kx) -
                                                          static_cast<std::ptrdiff_t>(pad);
                                if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h) || sx < 0 ||
                                    sx >= static_cast<std::ptrdiff_t>(wth))
                                    continue;
                                acc += x[s * channels * h * wth + ci * h * wth +
                                         static_cast<std::size_t>(sy) * wth +
                                         static_cast<std::size_t>(sx)] *
                                       w.at(ci * k * k + ky * k + kx, co);
                            }
                    out[s * c_out * oh * ow + co * oh * ow + y * ow + xx] = acc;
                }
    return out;
}

// 3-sigma binomial band check on an empirical frequency
inline bool within_binomial_band(double observed_fraction, double p, std::size_t n,
                                 double sigmas = 3.0) {
    const double sd = std::sqrt(p * (1.0 - p) / static_cast<double>(n));
    return std::abs(observed_fraction - p) <= sigmas * sd;
}

inline double lag1_autocorrelation(const std::vector<std::uint8_t>& bits) {
    const std::size_t n = bits.size();
    double mean = 0.0;
    for (auto b : bits)
        mean += b;
    mean /= static_cast<double>(n);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = bits[i] - mean;
        den += d * d;
        if (i + 1 < n)
            num += d * (bits[i + 1] - mean);
    }
    return den == 0.0 ? 0.0 : num / den;
}

inline double chi_square_uniform(const std::vector<std::size_t>& counts, std::size_t total) {
    const double expected = static_cast<double>(total) / static_cast<double>(counts.size());
    double chi = 0.0;
    for (std::size_t c : counts) {
        const double d = static_cast<double>(c) - expected;
        chi += d * d / expected;
    }
    return chi;
}

inline spincim::Tensor random_tensor(std::vector<std::size_t> shape, spincim::Rng& rng,
                                     double scale = 1.0) {
    spincim::Tensor t(std::move(shape));
    for (auto& v : t.vec())
        v = scale * rng.normal();
    return t;
}

inline spincim::Tensor random_pm1(std::vector<std::size_t> shape, spincim::Rng& rng) {
    spincim::Tensor t(std::move(shape));
    for (auto& v : t.vec())
        v = rng.bernoulli(0.5) ? 1.0 : -1.0;
    return t;
}

} // namespace oracle
