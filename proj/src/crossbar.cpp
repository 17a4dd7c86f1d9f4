#include "spincim/crossbar.hpp"

#include "spincim/errors.hpp"
#include "spincim/resource.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace spincim {

namespace {

double faulted_value(double programmed, FaultKind f, double g_on, double g_off) {
    switch (f) {
    case FaultKind::stuck_on:
        return g_on;
    case FaultKind::stuck_off:
        return g_off;
    default:
        return programmed;
    }
}

FaultKind draw_fault(const FaultConfig& cfg, Rng& rng) {
    if (cfg.rate_stuck_on < 0.0 || cfg.rate_stuck_off < 0.0 ||
        cfg.rate_stuck_on + cfg.rate_stuck_off > 1.0)
        throw domain_error("fault rates must be nonnegative with sum <= 1");
    if (cfg.rate_stuck_on == 0.0 && cfg.rate_stuck_off == 0.0)
        return FaultKind::none;
    const double u = rng.uniform();
    if (u < cfg.rate_stuck_on)
        return FaultKind::stuck_on;
    if (u < cfg.rate_stuck_on + cfg.rate_stuck_off)
        return FaultKind::stuck_off;
    return FaultKind::none;
}

} // namespace

Crossbar program_binary(const Tensor& weights, double g_on, double g_off,
                        const NoiseConfig& noise, const FaultConfig& faults, Rng& rng) {
    if (weights.rank() != 2)
        throw dimension_error("program_binary expects a weight matrix, got " + weights.shape_str());
    if (!(g_on > g_off && g_off > 0.0))
        throw domain_error("program_binary: need g_on > g_off > 0");
    if (noise.sigma_g_rel < 0.0)
        throw domain_error("program_binary: negative conductance spread");

    Crossbar xb;
    xb.rows = weights.dim(0);
    xb.cols = weights.dim(1);
    xb.g_on = g_on;
    xb.g_off = g_off;
    xb.noise = noise;
    xb.g_plus.resize(xb.rows * xb.cols);
    xb.g_minus.resize(xb.rows * xb.cols);
    xb.fault_plus.assign(xb.rows * xb.cols, FaultKind::none);
    xb.fault_minus.assign(xb.rows * xb.cols, FaultKind::none);

    for (std::size_t i = 0; i < xb.rows * xb.cols; ++i) {
        const double w = weights[i];
        if (w != 1.0 && w != -1.0)
            throw domain_error("program_binary: weight entries must be +/-1");
        double gp = w > 0.0 ? g_on : g_off;
        double gm = w > 0.0 ? g_off : g_on;
        if (noise.sigma_g_rel > 0.0) {
            // unbiased relative spread; floor keeps conductances physical
            gp = std::max(gp * (1.0 + noise.sigma_g_rel * rng.normal()), 1e-12);
            gm = std::max(gm * (1.0 + noise.sigma_g_rel * rng.normal()), 1e-12);
        }
        xb.fault_plus[i] = draw_fault(faults, rng);
        xb.fault_minus[i] = draw_fault(faults, rng);
        xb.g_plus[i] = faulted_value(gp, xb.fault_plus[i], g_on, g_off);
        xb.g_minus[i] = faulted_value(gm, xb.fault_minus[i], g_on, g_off);
    }
    return xb;
}

void inject_fault(Crossbar& xb, std::size_t row, std::size_t col, bool plus_device,
                  FaultKind kind) {
    if (row >= xb.rows || col >= xb.cols)
        throw dimension_error("inject_fault: cell outside array");
    const std::size_t i = row * xb.cols + col;
    if (plus_device) {
        xb.fault_plus[i] = kind;
        xb.g_plus[i] = faulted_value(xb.g_plus[i], kind, xb.g_on, xb.g_off);
    } else {
        xb.fault_minus[i] = kind;
        xb.g_minus[i] = faulted_value(xb.g_minus[i], kind, xb.g_on, xb.g_off);
    }
}

std::vector<double> analog_mac(const Crossbar& xb, std::span<const double> x,
                               const std::vector<std::uint8_t>* active_rows,
                               EventCounts* ledger) {
    if (x.size() != xb.rows)
        throw dimension_error("analog_mac: input length " + std::to_string(x.size()) +
                              " vs rows " + std::to_string(xb.rows));
    if (active_rows && active_rows->size() != xb.rows)
        throw dimension_error("analog_mac: active-row mask length mismatch");
    for (double v : x)
        if (v != 1.0 && v != -1.0 && v != 0.0)
            throw domain_error("analog_mac: inputs must be in {-1, 0, +1} or {0, 1}");

    // two-phase read: positive-driven rows then negative-driven rows
    std::vector<double> pos(xb.cols, 0.0), neg(xb.cols, 0.0);
    for (std::size_t i = 0; i < xb.rows; ++i) {
        if (x[i] == 0.0)
            continue;
        if (active_rows && !(*active_rows)[i])
            continue; // dropped wordline group: row not enabled
        const double* gp = xb.g_plus.data() + i * xb.cols;
        const double* gm = xb.g_minus.data() + i * xb.cols;
        double* acc = x[i] > 0.0 ? pos.data() : neg.data();
        for (std::size_t j = 0; j < xb.cols; ++j)
            acc[j] += gp[j] - gm[j];
    }

    const double unit = xb.g_on - xb.g_off; // read voltage normalized to 1
    std::vector<double> out(xb.cols);
    for (std::size_t j = 0; j < xb.cols; ++j)
        out[j] = (pos[j] - neg[j]) / unit;

    if (xb.noise.adc_bits) {
        const int bits = *xb.noise.adc_bits;
        if (bits < 1 || bits > 31)
            throw domain_error("analog_mac: adc_bits outside [1, 31]");
        const double full_scale = static_cast<double>(xb.rows);
        const double lsb = 2.0 * full_scale / (static_cast<double>((1u << bits)) - 1.0);
        for (auto& v : out) {
            double q = std::round(v / lsb) * lsb;
            v = std::clamp(q, -full_scale, full_scale);
        }
    }

    if (ledger) {
        ledger->crossbar_reads += 1;
        ledger->wordline_activations += xb.rows;
        ledger->adc_conversions += xb.cols;
    }
    return out;
}

// ---------------------------------------------------------------------------
// mapping

std::size_t MappingPlan::total_mapped_cells() const {
    std::size_t n = 0;
    for (const auto& s : crossbars)
        n += s.rows * s.cols;
    return n;
}

namespace {

void tile_grid_cell(MappingPlan& plan, std::size_t grid_index, std::size_t logical_rows,
                    std::size_t logical_cols) {
    for (std::size_t r0 = 0; r0 < logical_rows; r0 += plan.max_rows)
        for (std::size_t c0 = 0; c0 < logical_cols; c0 += plan.max_cols) {
            CrossbarSlot s;
            s.grid_index = grid_index;
            s.row_offset = r0;
            s.col_offset = c0;
            s.rows = std::min(plan.max_rows, logical_rows - r0);
            s.cols = std::min(plan.max_cols, logical_cols - c0);
            plan.crossbars.push_back(s);
        }
}

// logical patch-row of a slot-local row, shared by programming, input
// gathering and group masking so the two strategies stay consistent
std::size_t logical_row(const MappingPlan& plan, const CrossbarSlot& slot, std::size_t local) {
    if (plan.strategy == MapStrategy::unfold_column)
        return slot.row_offset + local;
    const std::size_t channel = slot.row_offset + local;
    return channel * plan.kernel * plan.kernel + slot.grid_index;
}

} // namespace

MappingPlan plan_conv_mapping(std::size_t kernel, std::size_t in_channels,
                              std::size_t out_channels, MapStrategy strategy,
                              std::size_t max_rows, std::size_t max_cols) {
    if (kernel < 1 || in_channels < 1 || out_channels < 1)
        throw domain_error("plan_conv_mapping: zero dimension");
    if (max_rows < 1 || max_cols < 1)
        throw domain_error("plan_conv_mapping: zero hardware extent");

    MappingPlan plan;
    plan.strategy = strategy;
    plan.kernel = kernel;
    plan.in_channels = in_channels;
    plan.out_channels = out_channels;
    plan.max_rows = max_rows;
    plan.max_cols = max_cols;

    if (strategy == MapStrategy::unfold_column) {
        tile_grid_cell(plan, 0, kernel * kernel * in_channels, out_channels);
    } else {
        for (std::size_t g = 0; g < kernel * kernel; ++g)
            tile_grid_cell(plan, g, in_channels, out_channels);
    }

    plan.wordline_group_count = in_channels;
    plan.neuron_module_count = kernel * kernel * in_channels;
    plan.spatial_module_count = in_channels;
    return plan;
}

MappingPlan plan_dense_mapping(std::size_t in_features, std::size_t out_features,
                               std::size_t max_rows, std::size_t max_cols) {
    return plan_conv_mapping(1, in_features, out_features, MapStrategy::unfold_column, max_rows,
                             max_cols);
}

std::vector<std::vector<std::uint8_t>> wordline_group_enable(const MappingPlan& plan,
                                                             const std::vector<std::uint8_t>& keep) {
    if (keep.size() != plan.wordline_group_count)
        throw dimension_error("wordline_group_enable: mask length " + std::to_string(keep.size()) +
                              " vs groups " + std::to_string(plan.wordline_group_count));
    const std::size_t kk = plan.kernel * plan.kernel;
    std::vector<std::vector<std::uint8_t>> active;
    active.reserve(plan.crossbars.size());
    for (const auto& slot : plan.crossbars) {
        std::vector<std::uint8_t> rows(slot.rows);
        for (std::size_t i = 0; i < slot.rows; ++i) {
            const std::size_t channel = logical_row(plan, slot, i) / kk;
            rows[i] = keep[channel];
        }
        active.push_back(std::move(rows));
    }
    return active;
}

MappedLayer program_layer(const Tensor& weights, const MappingPlan& plan, double g_on,
                          double g_off, const NoiseConfig& noise, const FaultConfig& faults,
                          Rng& rng) {
    if (weights.rank() != 2 || weights.dim(0) != plan.logical_rows() ||
        weights.dim(1) != plan.out_channels)
        throw dimension_error("program_layer: weights " + weights.shape_str() +
                              " vs plan logical array " + std::to_string(plan.logical_rows()) +
                              "x" + std::to_string(plan.out_channels));
    MappedLayer layer;
    layer.plan = plan;
    layer.tiles.reserve(plan.crossbars.size());
    std::size_t slot_idx = 0;
    for (const auto& slot : plan.crossbars) {
        Tensor sub({slot.rows, slot.cols});
        for (std::size_t i = 0; i < slot.rows; ++i) {
            const std::size_t lr = logical_row(plan, slot, i);
            for (std::size_t j = 0; j < slot.cols; ++j)
                sub[i * slot.cols + j] = weights.at(lr, slot.col_offset + j);
        }
        Rng tile_rng = rng.child(slot_idx++);
        layer.tiles.push_back(program_binary(sub, g_on, g_off, noise, faults, tile_rng));
    }
    return layer;
}

std::vector<double> MappedLayer::mac(std::span<const double> x,
                                     const std::vector<std::vector<std::uint8_t>>* active,
                                     EventCounts* ledger) const {
    if (x.size() != plan.logical_rows())
        throw dimension_error("mapped mac: input length " + std::to_string(x.size()) +
                              " vs logical rows " + std::to_string(plan.logical_rows()));
    if (active && active->size() != tiles.size())
        throw dimension_error("mapped mac: active mask set does not match tile count");

    std::vector<double> out(plan.out_channels, 0.0);
    std::vector<double> slot_in;
    for (std::size_t t = 0; t < tiles.size(); ++t) {
        const CrossbarSlot& slot = plan.crossbars[t];
        slot_in.resize(slot.rows);
        for (std::size_t i = 0; i < slot.rows; ++i)
            slot_in[i] = x[logical_row(plan, slot, i)];
        std::vector<double> part =
            analog_mac(tiles[t], slot_in, active ? &(*active)[t] : nullptr, ledger);
        for (std::size_t j = 0; j < slot.cols; ++j)
            out[slot.col_offset + j] += part[j]; // digital partial-sum accumulation
    }
    return out;
}

std::string MappingPlan::report() const {
    std::ostringstream os;
    os << "plan strategy=" << (strategy == MapStrategy::unfold_column ? "unfold_column" : "kxk_grid")
       << " kernel=" << kernel << " in_channels=" << in_channels
       << " out_channels=" << out_channels << " crossbars=" << crossbars.size()
       << " wordline_groups=" << wordline_group_count
       << " neuron_modules=" << neuron_module_count
       << " spatial_modules=" << spatial_module_count << "\n";
    for (std::size_t t = 0; t < crossbars.size(); ++t) {
        const auto& s = crossbars[t];
        const double util = static_cast<double>(s.rows * s.cols) /
                            static_cast<double>(max_rows * max_cols);
        os << "crossbar index=" << t << " grid=" << s.grid_index << " rows=" << s.rows
           << " cols=" << s.cols << " row_offset=" << s.row_offset
           << " col_offset=" << s.col_offset << " utilization=" << util << "\n";
    }
    return os.str();
}

} // namespace spincim
