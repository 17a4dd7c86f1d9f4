#pragma once

#include "spincim/rng.hpp"
#include "spincim/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace spincim {

struct Dataset {
    Tensor x;                // [N x D] features (images flattened row-major)
    std::vector<int> labels; // [N]
    std::vector<std::size_t> image_shape; // {H, W} or {C, H, W} when image data

    std::size_t size() const { return x.empty() ? 0 : x.dim(0); }
    Dataset subset(std::size_t offset, std::size_t count) const;
};

// --- IDX container -----------------------------------------------------------
// Big-endian dimensions; element types 0x08 (ubyte, scaled to [0,1]) and
// 0x0E (double, taken verbatim) are supported. Parse errors carry the
// offending byte offset.
Tensor parse_idx(const std::vector<std::uint8_t>& bytes);
Tensor load_idx(const std::string& path);
std::vector<int> load_idx_labels(const std::string& path);

std::vector<std::uint8_t> encode_idx_u8(const Tensor& t);    // values scaled *255, rounded
std::vector<std::uint8_t> encode_idx_f64(const Tensor& t);
void write_idx_u8(const std::string& path, const Tensor& t);
void write_idx_f64(const std::string& path, const Tensor& t);
void write_idx_labels(const std::string& path, const std::vector<int>& labels);

// --- synthetic tasks ----------------------------------------------------------
enum class SyntheticKind { two_moons, blobs };

// Balanced two-class sets, deterministic per seed. two_moons places the
// classes on interleaved half-circle arcs (noise == 0 keeps the points
// exactly on the arcs); blobs are two well-separated Gaussians.
Dataset gen_synthetic(SyntheticKind kind, std::size_t n, double noise, std::uint64_t seed);

// uniform box samples, used as far-out OOD probes for 2-D tasks
Tensor uniform_box(std::size_t n, double lo, double hi, std::size_t dims, Rng& rng);

// bilinear image resize (shared by the digit-corpus loader and tests)
Tensor resize_bilinear(const Tensor& images, std::size_t h_in, std::size_t w_in,
                       std::size_t h_out, std::size_t w_out);

} // namespace spincim
