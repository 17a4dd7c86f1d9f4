#pragma once

#include "spincim/model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace spincim {

// Binary container, little-endian, magic "NSPN", version byte, then
// length-prefixed sections: model echo, parameters by role, affine
// running statistics, posterior banks, RNG seed. Loading reproduces
// bit-identical inference.
struct Checkpoint {
    ModelSpec spec;
    std::vector<std::pair<std::string, Tensor>> params; // name -> value
    std::vector<std::uint8_t> roles;                    // aligned with params
    std::vector<std::pair<std::uint32_t, Tensor>> norm_stats; // layer -> [mean | var]
    std::vector<std::pair<std::uint32_t, CrossbarBank>> banks;
    std::uint64_t seed = 0;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

Checkpoint checkpoint_from_model(Model& model, std::uint64_t seed);
Model model_from_checkpoint(const Checkpoint& ck);

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

} // namespace spincim
