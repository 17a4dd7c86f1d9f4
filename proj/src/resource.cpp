#include "spincim/resource.hpp"

#include "spincim/errors.hpp"
#include "spincim/model.hpp"

#include <cmath>
#include <sstream>

namespace spincim {

EventCounts& EventCounts::operator+=(const EventCounts& o) {
    rng_bits += o.rng_bits;
    crossbar_reads += o.crossbar_reads;
    wordline_activations += o.wordline_activations;
    scale_memory_reads += o.scale_memory_reads;
    adc_conversions += o.adc_conversions;
    dropout_modules += o.dropout_modules;
    parameter_bits += o.parameter_bits;
    return *this;
}

bool EventCounts::dynamic_equal(const EventCounts& o) const {
    return rng_bits == o.rng_bits && crossbar_reads == o.crossbar_reads &&
           wordline_activations == o.wordline_activations &&
           scale_memory_reads == o.scale_memory_reads && adc_conversions == o.adc_conversions;
}

std::string EventCounts::to_string() const {
    std::ostringstream os;
    os << "rng_bits=" << rng_bits << " crossbar_reads=" << crossbar_reads
       << " wordline_activations=" << wordline_activations
       << " scale_memory_reads=" << scale_memory_reads << " adc_conversions=" << adc_conversions
       << " dropout_modules=" << dropout_modules << " parameter_bits=" << parameter_bits;
    return os.str();
}

std::uint64_t count_dropout_modules(const ModelSpec& model, Method method) {
    if (model.layers.empty())
        throw domain_error("count_dropout_modules: empty model");
    std::uint64_t n = 0;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        if (!model.has_stochastic_site(i, method))
            continue;
        const LayerSpec& l = model.layers[i];
        switch (method) {
        case Method::spindrop: n += l.output_units(); break;
        case Method::spatial: n += l.fan_out(); break;
        case Method::scaledrop: n += 1; break;
        case Method::affine: n += 2; break;
        case Method::vi_subset: n += l.fan_out(); break; // one sampler per channel
        case Method::spinbayes: n += 1; break;           // the per-layer arbiter
        }
    }
    return n;
}

EventCounts count_events(const ModelSpec& model, Method method, std::uint64_t passes) {
    EventCounts ev;
    ev.dropout_modules = count_dropout_modules(model, method);

    const bool scale_like =
        method == Method::scaledrop || method == Method::vi_subset || method == Method::spinbayes;

    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const LayerSpec& l = model.layers[i];

        // static storage: binary weights are 1 bit, everything else 32
        ev.parameter_bits += static_cast<std::uint64_t>(l.weight_count()) * (l.binarized ? 1 : 32);
        if (method == Method::affine)
            ev.parameter_bits += 2ull * 32ull * l.fan_out(); // gamma, beta
        else
            ev.parameter_bits += 32ull * l.fan_out(); // bias
        if (method == Method::scaledrop)
            ev.parameter_bits += 32ull * l.fan_out();
        if (method == Method::vi_subset || method == Method::spinbayes)
            ev.parameter_bits += 2ull * 32ull * l.fan_out(); // posterior mu/sigma
        if (method == Method::spinbayes) {
            const auto level_bits = static_cast<std::uint64_t>(
                std::ceil(std::log2(static_cast<double>(model.bank_levels + 1))));
            ev.parameter_bits += model.bank_instances * l.fan_out() * level_bits;
        }

        // per-pass stochastic draws at this site; Bernoulli sites with
        // p == 0 are deterministic and consume nothing
        if (model.has_stochastic_site(i, method)) {
            const bool active = method == Method::vi_subset || method == Method::spinbayes ||
                                model.site_probability(i) > 0.0;
            std::uint64_t draws = 0;
            switch (method) {
            case Method::spindrop: draws = l.output_units(); break;
            case Method::spatial: draws = l.fan_out(); break;
            case Method::scaledrop: draws = 1; break;
            case Method::affine: draws = 2; break;
            case Method::vi_subset: draws = l.fan_out(); break;
            case Method::spinbayes: draws = 1; break;
            }
            if (active)
                ev.rng_bits += draws * passes;
        }

        if (scale_like)
            ev.scale_memory_reads += static_cast<std::uint64_t>(l.fan_out()) * passes;

        // crossbar traffic: every mapped tile is read once per MAC site
        if (l.crossbar_routed) {
            MappingPlan plan = model.layer_plan(i);
            const std::uint64_t positions = l.positions();
            for (const auto& slot : plan.crossbars) {
                ev.crossbar_reads += positions * passes;
                ev.wordline_activations += slot.rows * positions * passes;
                ev.adc_conversions += slot.cols * positions * passes;
            }
        }
    }
    return ev;
}

EnergyBreakdown energy_estimate(const EventCounts& counts, const CostTable& costs) {
    if (costs.rng_bit_pj < 0 || costs.crossbar_read_pj < 0 || costs.wordline_activation_pj < 0 ||
        costs.adc_conversion_pj < 0 || costs.scale_memory_read_pj < 0)
        throw domain_error("energy_estimate: negative cost entry");
    constexpr double pj_to_uj = 1e-6;
    EnergyBreakdown e;
    e.rng_uj = counts.rng_bits * costs.rng_bit_pj * pj_to_uj;
    e.crossbar_uj = counts.crossbar_reads * costs.crossbar_read_pj * pj_to_uj;
    e.wordline_uj = counts.wordline_activations * costs.wordline_activation_pj * pj_to_uj;
    e.adc_uj = counts.adc_conversions * costs.adc_conversion_pj * pj_to_uj;
    e.scale_uj = counts.scale_memory_reads * costs.scale_memory_read_pj * pj_to_uj;
    e.total_uj = e.rng_uj + e.crossbar_uj + e.wordline_uj + e.adc_uj + e.scale_uj;
    return e;
}

double efficiency_ratio(double e_a, double e_b) {
    if (e_b == 0.0)
        throw domain_error("efficiency_ratio: zero denominator");
    return e_a / e_b;
}

} // namespace spincim
