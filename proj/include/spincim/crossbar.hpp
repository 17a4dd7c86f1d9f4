#pragma once

#include "spincim/rng.hpp"
#include "spincim/tensor.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace spincim {

struct EventCounts; // resource.hpp

enum class FaultKind : std::uint8_t { none = 0, stuck_on = 1, stuck_off = 2 };

struct NoiseConfig {
    double sigma_g_rel = 0.0;          // relative conductance spread at programming
    std::optional<int> adc_bits;       // column ADC resolution; nullopt = ideal readout
};

struct FaultConfig {
    double rate_stuck_on = 0.0;  // per physical device
    double rate_stuck_off = 0.0;
};

// Differential binary-weight array: each signed weight occupies a
// (g_plus, g_minus) device pair. Read voltage is normalized to 1 and
// outputs are reported in (g_on - g_off) units, so the ideal MAC result
// is an exact integer.
struct Crossbar {
    std::size_t rows = 0, cols = 0;
    std::vector<double> g_plus, g_minus;           // rows * cols
    std::vector<FaultKind> fault_plus, fault_minus; // rows * cols
    double g_on = 2.0, g_off = 1.0;
    NoiseConfig noise;

    double& gp(std::size_t r, std::size_t c) { return g_plus[r * cols + c]; }
    double& gm(std::size_t r, std::size_t c) { return g_minus[r * cols + c]; }
    double gp(std::size_t r, std::size_t c) const { return g_plus[r * cols + c]; }
    double gm(std::size_t r, std::size_t c) const { return g_minus[r * cols + c]; }
};

// Programs W in {-1,+1}: +1 -> (g_on, g_off), -1 -> (g_off, g_on), then
// Gaussian relative spread, then stuck-at faults (faults dominate).
Crossbar program_binary(const Tensor& weights, double g_on, double g_off,
                        const NoiseConfig& noise, const FaultConfig& faults, Rng& rng);

// Directly inject a fault into one device of a programmed array.
void inject_fault(Crossbar& xb, std::size_t row, std::size_t col, bool plus_device,
                  FaultKind kind);

// Column-wise differential MAC. Input entries must be in {-1, 0, +1}
// (0 marks an undriven row, e.g. padding or a dropped wordline group) or
// {0, 1} in unipolar mode. active == nullptr treats every row as active.
std::vector<double> analog_mac(const Crossbar& xb, std::span<const double> x,
                               const std::vector<std::uint8_t>* active_rows = nullptr,
                               EventCounts* ledger = nullptr);

// --- conv / dense mapping -----------------------------------------------------

enum class MapStrategy { unfold_column, kxk_grid };

// One physical tile of the mapped layer. Logical rows are patch indices
// (c*K*K + kh*K + kw ordering, matching im2col); tiles partition the
// logical row/column space of their grid cell.
struct CrossbarSlot {
    std::size_t rows = 0, cols = 0;
    std::size_t row_offset = 0, col_offset = 0; // within the logical array of this grid cell
    std::size_t grid_index = 0;                 // kh*K + kw for kxk_grid, 0 for unfold
};

struct MappingPlan {
    MapStrategy strategy = MapStrategy::unfold_column;
    std::size_t kernel = 1, in_channels = 0, out_channels = 0;
    std::size_t max_rows = 0, max_cols = 0;
    std::vector<CrossbarSlot> crossbars;

    // dropout hardware at the array inputs, in module units
    std::size_t wordline_group_count = 0;  // spatial: one group per input channel
    std::size_t neuron_module_count = 0;   // one per logical row
    std::size_t spatial_module_count = 0;  // one per input channel

    std::size_t crossbar_count() const { return crossbars.size(); }
    std::size_t logical_rows() const { return kernel * kernel * in_channels; }
    std::size_t total_mapped_cells() const;
    std::string report() const;
};

// Strategy 1 unfolds each kernel into one logical column block of
// K*K*C_in rows; strategy 2 spreads the kernel over K*K arrays of
// C_in x C_out. Both tile to the hardware limits.
MappingPlan plan_conv_mapping(std::size_t kernel, std::size_t in_channels,
                              std::size_t out_channels, MapStrategy strategy,
                              std::size_t max_rows, std::size_t max_cols);
// Dense layer: degenerate kernel of 1.
MappingPlan plan_dense_mapping(std::size_t in_features, std::size_t out_features,
                               std::size_t max_rows, std::size_t max_cols);

// Wordline-group gating: group g covers all logical rows of input
// channel g (K*K consecutive patch rows under the im2col ordering).
// Returns one active-row bitmap per crossbar slot.
std::vector<std::vector<std::uint8_t>> wordline_group_enable(const MappingPlan& plan,
                                                             const std::vector<std::uint8_t>& keep);

// A layer's weights programmed tile by tile according to a plan.
struct MappedLayer {
    MappingPlan plan;
    std::vector<Crossbar> tiles; // aligned with plan.crossbars

    // One MAC over a logical input row vector (length K*K*C_in), with an
    // optional per-slot active-row mask from wordline_group_enable.
    std::vector<double> mac(std::span<const double> x,
                            const std::vector<std::vector<std::uint8_t>>* active = nullptr,
                            EventCounts* ledger = nullptr) const;
};

// weights is [K*K*C_in x C_out] (dense: [in x out]); rows follow the
// im2col patch ordering so both strategies slice it consistently.
MappedLayer program_layer(const Tensor& weights, const MappingPlan& plan, double g_on,
                          double g_off, const NoiseConfig& noise, const FaultConfig& faults,
                          Rng& rng);

} // namespace spincim
