#pragma once

#include "spincim/autodiff.hpp"
#include "spincim/rng.hpp"
#include "spincim/tensor.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace spincim {

enum class DropoutKind { neuron, spatial, scale, affine };

struct AdaptiveSchedule {
    double p_min = 0.05;
    double p_max = 0.25;
};

struct DropoutSpec {
    DropoutKind kind = DropoutKind::neuron;
    double p = 0.0;
    std::optional<AdaptiveSchedule> adaptive;
};

// --- mask sampling ----------------------------------------------------------
// Keep bits: 1 keeps the unit, 0 drops it. One RNG draw per bit.
std::vector<std::uint8_t> sample_neuron_mask(std::size_t n, double p, Rng& rng);
std::vector<std::uint8_t> sample_spatial_mask(std::size_t channel_count, double p, Rng& rng);

// x[N x C] masked per column with inverse scaling 1/(1-p) applied to the
// survivors (omit for p == 1, where everything is zero anyway).
Tensor apply_neuron_mask(const Tensor& x, const std::vector<std::uint8_t>& keep, double p,
                         bool rescale = true);
// keep has one bit per channel; each dropped channel zeroes its whole
// H*W map inside x[N x C*H*W].
Tensor apply_spatial_mask(const Tensor& x, const std::vector<std::uint8_t>& keep,
                          std::size_t map_size, double p, bool rescale = true);

// Mask vector usable as a graph constant: keep -> 1/(1-p), drop -> 0.
Tensor mask_to_factors(const std::vector<std::uint8_t>& keep, double p, bool rescale);

// --- scale dropout ----------------------------------------------------------
// Modulation, never zeroing: for mask_bit == 0 the effective scale is
// the identity vector, so the layer output equals its input.
Tensor scale_dropout_forward(const Tensor& x, const Tensor& scale, bool mask_bit);
ad::Var scale_dropout_graph(const ad::Var& x, const ad::Var& scale, bool mask_bit);

// Layer-size dependent probability: log-linear in the parameter count
// between (p_min, p_max) anchored at the smallest/largest layer.
double adaptive_p(std::size_t layer_param_count, const AdaptiveSchedule& schedule,
                  std::size_t n_min, std::size_t n_max);

// lambda * sum_i (s_i - 1)^2
double scale_regularizer(const Tensor& scale, double lambda);
ad::Var scale_regularizer_graph(const ad::Var& scale, double lambda);

// --- inverted normalization with affine dropout ------------------------------
struct InvertedNormState {
    Tensor gamma;        // [C], learnable
    Tensor beta;         // [C], learnable
    Tensor running_mean; // [C]
    Tensor running_var;  // [C]
    double eps = 1e-8;
    double momentum = 0.1;

    explicit InvertedNormState(std::size_t channels);
};

// Affine first (gamma' = m_g*gamma + (1-m_g)*1, beta' = m_b*beta), then
// standardization: batch statistics in train mode (with running-stat
// update), running statistics in infer mode.
Tensor inverted_norm_forward(const Tensor& x, InvertedNormState& st, bool m_gamma, bool m_beta,
                             bool train);
// Training-graph variant; gamma/beta enter as graph leaves so gradients
// reach them, and the running stats of `st` are updated as a side effect.
ad::Var inverted_norm_graph(const ad::Var& x, const ad::Var& gamma, const ad::Var& beta,
                            InvertedNormState& st, bool m_gamma, bool m_beta);

} // namespace spincim
