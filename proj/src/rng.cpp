#include "spincim/rng.hpp"

#include "spincim/errors.hpp"

#include <cmath>

namespace spincim {

namespace {

inline std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t mix_key(std::uint64_t key, std::uint64_t idx) {
    std::uint64_t x = key ^ (0x9e3779b97f4a7c15ULL + idx);
    std::uint64_t a = splitmix64(x);
    std::uint64_t b = splitmix64(x);
    return a ^ (b << 1);
}

inline std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

} // namespace

Rng::Rng(std::uint64_t seed) : key_(seed) {
    std::uint64_t x = seed;
    for (auto& s : state_)
        s = splitmix64(x);
}

Rng Rng::child(std::uint64_t a) const { return Rng(mix_key(key_, a)); }
Rng Rng::child(std::uint64_t a, std::uint64_t b) const { return child(a).child(b); }
Rng Rng::child(std::uint64_t a, std::uint64_t b, std::uint64_t c) const { return child(a).child(b).child(c); }

std::uint64_t Rng::next_u64() {
    // xoshiro256++
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Rng::uniform() {
    ++draws_;
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
    // Box-Muller, one value per call so the draw count stays exact.
    ++draws_;
    double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; // (0, 1]
    double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
}

bool Rng::bernoulli(double p) {
    if (!(p >= 0.0 && p <= 1.0))
        throw domain_error("bernoulli probability out of [0,1]");
    ++draws_;
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53 < p;
}

std::size_t Rng::uniform_index(std::size_t n) {
    if (n == 0)
        throw domain_error("uniform_index over empty range");
    ++draws_;
    // rejection sampling keeps the distribution exactly uniform
    const std::uint64_t bound = n;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
}

} // namespace spincim
