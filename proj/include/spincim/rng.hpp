#pragma once

#include <cstdint>
#include <cstddef>

namespace spincim {

// Deterministic hierarchical random source (xoshiro256++ seeded via
// splitmix64). Every stochastic site in the simulator pulls from a
// substream derived as child(epoch).child(batch).child(module), so a
// (config, seed) pair fixes every draw regardless of evaluation order.
//
// draws() counts sampling calls, one per bernoulli/normal/index draw.
// The resource model cross-checks its closed-form RNG-bit predictions
// against this counter.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    // Independent substream; derivation depends only on this stream's
    // key and the path indices, never on how many draws were consumed.
    Rng child(std::uint64_t a) const;
    Rng child(std::uint64_t a, std::uint64_t b) const;
    Rng child(std::uint64_t a, std::uint64_t b, std::uint64_t c) const;

    std::uint64_t next_u64();

    double uniform();                     // [0, 1)
    double normal();                      // standard normal
    bool bernoulli(double p);             // true with probability p
    std::size_t uniform_index(std::size_t n);  // uniform over [0, n)

    std::uint64_t key() const { return key_; }
    std::uint64_t draws() const { return draws_; }
    void reset_draws() { draws_ = 0; }

private:
    std::uint64_t key_;
    std::uint64_t state_[4];
    std::uint64_t draws_ = 0;
};

// Fixed stream tags for the top-level substream split.
namespace stream {
inline constexpr std::uint64_t init = 1;     // parameter initialization
inline constexpr std::uint64_t train = 2;    // shuffling + training masks
inline constexpr std::uint64_t eval = 3;     // MC forward passes
inline constexpr std::uint64_t device = 4;   // device instance variation
inline constexpr std::uint64_t data = 5;     // synthetic dataset noise
inline constexpr std::uint64_t bank = 6;     // post-training quantization draws
} // namespace stream

} // namespace spincim
