#pragma once

#include "spincim/rng.hpp"

#include <cstdint>
#include <vector>

namespace spincim {

struct EventCounts; // resource.hpp

// Thermal-activation switching model for a magnetic tunnel junction
// driven below the deterministic write threshold. The law is pluggable
// in principle (measured lookup tables could replace it); everything
// downstream only consumes switching_probability / calibrate_current.
struct MtjParams {
    double critical_current = 1.0;  // arbitrary current units
    double attempt_time = 1.0;      // same unit as the pulse width
    double thermal_stability = 40.0;
};

// p = 1 - exp(-(t/tau0) * exp(delta * (I/Ic - 1))); strictly increasing
// in both current and pulse width, bounded in (0,1).
double switching_probability(double current, double pulse_width, const MtjParams& params);

// Inverse of switching_probability in the current argument.
double calibrate_current(double p_target, double pulse_width, const MtjParams& params);

// One physical dropout module instance. realized_p is drawn once per
// instance from N(nominal_p, sigma_p^2) clamped to [0,1] and then fixed,
// reflecting device-to-device variation of the probability fit.
struct DropoutModuleState {
    double nominal_p = 0.0;
    double realized_p = 0.0;
    double sigma_p = 0.0;
};

double sample_module_probability(double nominal_p, double sigma_p, Rng& rng);
DropoutModuleState make_dropout_module(double nominal_p, double sigma_p, Rng& rng);

// n independent Bernoulli(realized_p) bits via the SET / read / RESET
// cycle; each bit books one RNG event in the ledger when one is given.
std::vector<std::uint8_t> generate_bitstream(const DropoutModuleState& mod, std::size_t n, Rng& rng,
                                             EventCounts* ledger = nullptr);

// Parallel stack of identical MTJs: k devices in the low-resistance
// state out of level_count give L+1 distinct conductance levels.
struct MultiLevelCell {
    int level_count = 1; // L
    double g_on = 2.0;
    double g_off = 1.0;
    int on_count = 0; // k
};

double multilevel_conductance(const MultiLevelCell& cell);

// Nearest-level index of v on the uniform grid over [lo, hi] with L+1
// levels; exact half-steps round to the even index; out-of-range clamps.
int quantize_to_level(double v, double lo, double hi, int levels);
double dequantize_level(int index, double lo, double hi, int levels);

} // namespace spincim
