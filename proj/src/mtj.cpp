#include "spincim/mtj.hpp"

#include "spincim/errors.hpp"
#include "spincim/resource.hpp"

#include <algorithm>
#include <cmath>

namespace spincim {

double switching_probability(double current, double pulse_width, const MtjParams& params) {
    if (pulse_width <= 0.0)
        throw domain_error("switching_probability: pulse width must be positive");
    if (params.critical_current <= 0.0 || params.attempt_time <= 0.0 || params.thermal_stability <= 0.0)
        throw domain_error("switching_probability: invalid device parameters");
    const double rate = (pulse_width / params.attempt_time) *
                        std::exp(params.thermal_stability * (current / params.critical_current - 1.0));
    return 1.0 - std::exp(-rate);
}

double calibrate_current(double p_target, double pulse_width, const MtjParams& params) {
    if (!(p_target > 0.0 && p_target < 1.0))
        throw domain_error("calibrate_current: target probability must lie in (0,1)");
    if (pulse_width <= 0.0)
        throw domain_error("calibrate_current: pulse width must be positive");
    const double rate = -std::log1p(-p_target); // -ln(1-p)
    return params.critical_current *
           (1.0 + std::log(rate * params.attempt_time / pulse_width) / params.thermal_stability);
}

double sample_module_probability(double nominal_p, double sigma_p, Rng& rng) {
    if (sigma_p < 0.0)
        throw domain_error("sample_module_probability: sigma must be nonnegative");
    if (sigma_p == 0.0)
        return nominal_p;
    const double p = nominal_p + sigma_p * rng.normal();
    return std::clamp(p, 0.0, 1.0);
}

DropoutModuleState make_dropout_module(double nominal_p, double sigma_p, Rng& rng) {
    DropoutModuleState mod;
    mod.nominal_p = nominal_p;
    mod.sigma_p = sigma_p;
    mod.realized_p = sample_module_probability(nominal_p, sigma_p, rng);
    return mod;
}

std::vector<std::uint8_t> generate_bitstream(const DropoutModuleState& mod, std::size_t n, Rng& rng,
                                             EventCounts* ledger) {
    if (n < 1)
        throw domain_error("generate_bitstream: need at least one bit");
    std::vector<std::uint8_t> bits(n);
    for (std::size_t i = 0; i < n; ++i) {
        // SET attempt (the stochastic write), sense-amp read, deterministic RESET
        bits[i] = rng.bernoulli(mod.realized_p) ? 1 : 0;
        if (ledger)
            ledger->rng_bits += 1;
    }
    return bits;
}

double multilevel_conductance(const MultiLevelCell& cell) {
    if (cell.level_count < 1 || cell.on_count < 0 || cell.on_count > cell.level_count)
        throw domain_error("multilevel_conductance: on-count outside [0, L]");
    if (!(cell.g_on > cell.g_off && cell.g_off > 0.0))
        throw domain_error("multilevel_conductance: need g_on > g_off > 0");
    return cell.on_count * cell.g_on + (cell.level_count - cell.on_count) * cell.g_off;
}

int quantize_to_level(double v, double lo, double hi, int levels) {
    if (!(lo < hi))
        throw domain_error("quantize_to_level: empty range");
    if (levels < 1)
        throw domain_error("quantize_to_level: need at least one level step");
    const double t = (v - lo) / (hi - lo) * static_cast<double>(levels);
    if (t <= 0.0)
        return 0;
    if (t >= static_cast<double>(levels))
        return levels;
    const double fl = std::floor(t);
    const double frac = t - fl;
    int k = static_cast<int>(fl);
    if (frac > 0.5)
        ++k;
    else if (frac == 0.5 && (k % 2) != 0) // ties to even
        ++k;
    return k;
}

double dequantize_level(int index, double lo, double hi, int levels) {
    if (!(lo < hi) || levels < 1)
        throw domain_error("dequantize_level: invalid grid");
    if (index < 0 || index > levels)
        throw domain_error("dequantize_level: index outside [0, L]");
    return lo + (hi - lo) * static_cast<double>(index) / static_cast<double>(levels);
}

} // namespace spincim
