#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace spincim {

struct ModelSpec; // model.hpp

// Hardware events accumulated per inference of one input. Dynamic
// fields scale with the MC pass count; dropout_modules and
// parameter_bits are static properties of the mapped network.
struct EventCounts {
    std::uint64_t rng_bits = 0;
    std::uint64_t crossbar_reads = 0;
    std::uint64_t wordline_activations = 0;
    std::uint64_t scale_memory_reads = 0;
    std::uint64_t adc_conversions = 0;
    std::uint64_t dropout_modules = 0; // static
    std::uint64_t parameter_bits = 0;  // static

    EventCounts& operator+=(const EventCounts& o);
    bool dynamic_equal(const EventCounts& o) const;
    std::string to_string() const;
};

// Per-event energies in picojoules. The shipped defaults are calibrated
// against the reference configurations in configs/ so the reference
// per-image figures come out; they are calibration constants, not
// measured device physics.
struct CostTable {
    double rng_bit_pj = 0.9202453987730062;
    double crossbar_read_pj = 1.0;
    double wordline_activation_pj = 0.01;
    double adc_conversion_pj = 0.2587764460309737;
    double scale_memory_read_pj = 1.084067830369415;
};

struct EnergyBreakdown {
    double rng_uj = 0;
    double crossbar_uj = 0;
    double wordline_uj = 0;
    double adc_uj = 0;
    double scale_uj = 0;
    double total_uj = 0;
};

enum class Method; // model.hpp

// Static dropout-module count for a model under a Bayesian method:
// per-neuron modules count every activation at a dropout site, spatial
// counts feature maps, scale counts one module per layer, affine two.
std::uint64_t count_dropout_modules(const ModelSpec& model, Method method);

// Closed-form event counts for T MC passes over one input, using the
// model's crossbar mapping. The instrumented simulator must reproduce
// these exactly; tests assert equality.
EventCounts count_events(const ModelSpec& model, Method method, std::uint64_t passes);

EnergyBreakdown energy_estimate(const EventCounts& counts, const CostTable& costs);

// e_a / e_b; the conventional "x times more efficient" direction.
double efficiency_ratio(double e_a, double e_b);

} // namespace spincim
