#include "spincim/model.hpp"

#include "spincim/binarize.hpp"
#include "spincim/errors.hpp"

#include <algorithm>
#include <cmath>

namespace spincim {

const char* method_name(Method m) {
    switch (m) {
    case Method::spindrop: return "spindrop";
    case Method::spatial: return "spatial";
    case Method::scaledrop: return "scaledrop";
    case Method::affine: return "affine";
    case Method::vi_subset: return "vi_subset";
    case Method::spinbayes: return "spinbayes";
    }
    return "?";
}

Method method_from_string(const std::string& s) {
    if (s == "spindrop") return Method::spindrop;
    if (s == "spatial") return Method::spatial;
    if (s == "scaledrop") return Method::scaledrop;
    if (s == "affine") return Method::affine;
    if (s == "vi_subset") return Method::vi_subset;
    if (s == "spinbayes") return Method::spinbayes;
    throw config_error("unknown method '" + s + "'");
}

std::size_t LayerSpec::fan_in() const {
    return kind == LayerKind::conv ? kernel * kernel * in_channels : in_features;
}

void ModelSpec::resolve() {
    if (layers.empty())
        throw config_error("model: needs at least one layer");
    if (input_shape.empty())
        throw config_error("model: missing input shape");

    bool image = input_shape.size() == 3;
    std::size_t c = image ? input_shape[0] : 0;
    std::size_t h = image ? input_shape[1] : 0;
    std::size_t w = image ? input_shape[2] : 0;
    std::size_t features = image ? c * h * w : input_shape[0];

    for (std::size_t i = 0; i < layers.size(); ++i) {
        LayerSpec& l = layers[i];
        if (l.kind == LayerKind::conv) {
            if (!image)
                throw config_error("model: conv layer " + std::to_string(i) +
                                   " needs image-shaped input");
            l.in_channels = c;
            l.in_h = h;
            l.in_w = w;
            if (l.kernel > h + 2 * l.pad || l.kernel > w + 2 * l.pad)
                throw config_error("model: conv kernel exceeds padded input at layer " +
                                   std::to_string(i));
            l.out_h = h + 2 * l.pad - l.kernel + 1;
            l.out_w = w + 2 * l.pad - l.kernel + 1;
            c = l.out_channels;
            h = l.pool ? l.out_h / 2 : l.out_h;
            w = l.pool ? l.out_w / 2 : l.out_w;
            if (h == 0 || w == 0)
                throw config_error("model: spatial extent vanished at layer " + std::to_string(i));
            features = c * h * w;
        } else {
            l.in_features = features;
            if (l.pool)
                throw config_error("model: pooling after a dense layer");
            image = false;
            features = l.out_features;
        }

        switch (binarize) {
        case BinarizePolicy::none: l.binarized = false; break;
        case BinarizePolicy::all: l.binarized = true; break;
        case BinarizePolicy::all_but_last: l.binarized = i + 1 < layers.size(); break;
        case BinarizePolicy::hidden: l.binarized = i > 0 && i + 1 < layers.size(); break;
        }

        const bool last = i + 1 == layers.size();
        if (last)
            l.activation = Activation::none;
        else if (hidden_activation == ActivationPolicy::relu)
            l.activation = Activation::relu;
        else if (hidden_activation == ActivationPolicy::sign)
            l.activation = Activation::sign;
        else
            l.activation = (binarize_activations && l.binarized) ? Activation::sign
                                                                 : Activation::relu;
    }

    // A layer runs on crossbars when its weights are binary and its input
    // arrives in the {-1,0,+1} / {0,1} alphabet; anything else stays on
    // the digital path even in device mode.
    for (std::size_t i = 0; i < layers.size(); ++i) {
        LayerSpec& l = layers[i];
        bool binary_input;
        if (i == 0)
            binary_input = input_coding != InputCoding::real;
        else
            binary_input = layers[i - 1].activation == Activation::sign;
        l.crossbar_routed = l.binarized && binary_input;
    }
}

bool ModelSpec::has_stochastic_site(std::size_t layer, Method m) const {
    const bool hidden = layer + 1 < layers.size();
    switch (m) {
    case Method::spindrop:
        return hidden;
    case Method::spatial: {
        bool any_conv = false;
        for (const auto& l : layers)
            any_conv = any_conv || l.kind == LayerKind::conv;
        if (any_conv)
            return hidden && layers[layer].kind == LayerKind::conv;
        return hidden; // degenerate: feature-wise on dense stacks
    }
    case Method::scaledrop:
    case Method::affine:
    case Method::vi_subset:
    case Method::spinbayes:
        return true;
    }
    return false;
}

double ModelSpec::site_probability(std::size_t layer) const {
    if (!adaptive)
        return dropout_p;
    std::size_t n_min = SIZE_MAX, n_max = 0;
    for (const auto& l : layers) {
        n_min = std::min(n_min, l.weight_count());
        n_max = std::max(n_max, l.weight_count());
    }
    if (n_min == n_max)
        return 0.5 * (adaptive->p_min + adaptive->p_max);
    return adaptive_p(layers[layer].weight_count(), *adaptive, n_min, n_max);
}

MappingPlan ModelSpec::layer_plan(std::size_t layer) const {
    const LayerSpec& l = layers.at(layer);
    if (l.kind == LayerKind::conv)
        return plan_conv_mapping(l.kernel, l.in_channels, l.out_channels, mapping.strategy,
                                 mapping.max_rows, mapping.max_cols);
    return plan_dense_mapping(l.in_features, l.out_features, mapping.max_rows, mapping.max_cols);
}

std::size_t Model::site_module_count(std::size_t layer) const {
    if (!spec_.has_stochastic_site(layer, spec_.method))
        return 0;
    const LayerSpec& l = spec_.layers[layer];
    switch (spec_.method) {
    case Method::spindrop: return l.output_units();
    case Method::spatial: return l.fan_out();
    case Method::scaledrop: return 1;
    case Method::affine: return 2;
    case Method::vi_subset: return l.fan_out();
    case Method::spinbayes: return 1;
    }
    return 0;
}

// ---------------------------------------------------------------------------

Tensor Block::effective_weight() const {
    return spec.binarized ? binarize(weight->value) : weight->value;
}

namespace {

Tensor glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
    Tensor t({rows, cols});
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    for (auto& v : t.vec())
        v = (2.0 * rng.uniform() - 1.0) * limit;
    return t;
}

} // namespace

Model::Model(ModelSpec spec, Rng init_rng) : spec_(std::move(spec)) {
    spec_.resolve();
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
        const LayerSpec& l = spec_.layers[i];
        Block b;
        b.spec = l;
        Rng lr = init_rng.child(i);
        b.weight = ad::leaf(glorot_uniform(l.fan_in(), l.fan_out(), lr));
        if (spec_.method == Method::affine) {
            b.gamma = ad::leaf(Tensor::ones({l.fan_out()}));
            b.beta = ad::leaf(Tensor::zeros({l.fan_out()}));
            b.norm = std::make_unique<InvertedNormState>(l.fan_out());
        } else {
            b.bias = ad::leaf(Tensor::zeros({l.fan_out()}));
        }
        if (spec_.method == Method::scaledrop)
            b.scale_u = ad::leaf(Tensor::full({l.fan_out()}, softplus_inverse(1.0)));
        if (spec_.method == Method::vi_subset || spec_.method == Method::spinbayes) {
            b.post_mu = ad::leaf(Tensor::full({l.fan_out()}, spec_.prior.mu0));
            b.post_rho = ad::leaf(Tensor::full({l.fan_out()}, softplus_inverse(0.05)));
        }
        blocks_.push_back(std::move(b));
    }
}

std::vector<Parameter> Model::parameters() {
    std::vector<Parameter> out;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        Block& b = blocks_[i];
        const std::string prefix = "layer" + std::to_string(i) + ".";
        out.push_back({prefix + "weight", ParamRole::weight, b.weight});
        if (b.bias)
            out.push_back({prefix + "bias", ParamRole::bias, b.bias});
        if (b.scale_u)
            out.push_back({prefix + "scale", ParamRole::scale, b.scale_u});
        if (b.gamma)
            out.push_back({prefix + "gamma", ParamRole::affine_gamma, b.gamma});
        if (b.beta)
            out.push_back({prefix + "beta", ParamRole::affine_beta, b.beta});
        if (b.post_mu)
            out.push_back({prefix + "post_mu", ParamRole::posterior_mu, b.post_mu});
        if (b.post_rho)
            out.push_back({prefix + "post_rho", ParamRole::posterior_sigma, b.post_rho});
    }
    return out;
}

Tensor Model::encode_input(const Tensor& x) const {
    switch (spec_.input_coding) {
    case InputCoding::real:
        return x;
    case InputCoding::sign: {
        Tensor out = x;
        for (auto& v : out.vec())
            v = v >= 0.5 ? 1.0 : -1.0;
        return out;
    }
    case InputCoding::binary01: {
        Tensor out = x;
        for (auto& v : out.vec())
            v = v >= 0.5 ? 1.0 : 0.0;
        return out;
    }
    }
    return x;
}

// ---------------------------------------------------------------------------
// training graph

ad::Var Model::forward_graph(const Tensor& x, Rng& pass_rng, GraphAux* aux) {
    const std::size_t batch = x.dim(0);
    ad::Var h = ad::constant(x);

    ad::Var penalty, kl;
    double pending_rescale = 1.0;

    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        Block& b = blocks_[i];
        const LayerSpec& l = b.spec;
        Rng block_rng = pass_rng.child(i);

        // linear stage (conv runs in patch layout: [N*P x C_out])
        ad::Var w_eff = l.binarized ? ad::sign_ste(b.weight, spec_.ste_clip) : b.weight;
        ad::Var z;
        std::size_t positions = 1;
        if (l.kind == LayerKind::conv) {
            positions = l.positions();
            ad::Var cols = ad::im2col(h, l.in_channels, l.in_h, l.in_w, l.kernel, l.pad);
            z = ad::matmul(cols, w_eff);
        } else {
            z = ad::matmul(h, w_eff);
        }
        if (pending_rescale != 1.0) {
            // inverse dropout scaling from the previous site, folded in
            // after the MAC so crossbar inputs stay binary
            z = ad::smul(z, pending_rescale);
            pending_rescale = 1.0;
        }

        // scale stage (p == 0 sites are deterministic and draw nothing)
        if (spec_.method == Method::scaledrop) {
            const double p = spec_.site_probability(i);
            const bool keep = p > 0.0 ? block_rng.bernoulli(1.0 - p) : true;
            ad::Var s = ad::softplus(b.scale_u);
            z = scale_dropout_graph(z, s, keep);
            ad::Var pen = ad::sum(ad::square(ad::sadd(s, -1.0)));
            penalty = penalty ? ad::add(penalty, pen) : pen;
        } else if (spec_.method == Method::vi_subset || spec_.method == Method::spinbayes) {
            Tensor eps({l.fan_out()});
            for (auto& v : eps.vec())
                v = block_rng.normal();
            ad::Var s = sample_scale_graph(b.post_mu, b.post_rho, eps);
            z = ad::mul_rowvec(z, s);
            ad::Var lkl = kl_gauss_graph(b.post_mu, b.post_rho, spec_.prior);
            kl = kl ? ad::add(kl, lkl) : lkl;
        }

        // bias / normalization stage
        if (spec_.method == Method::affine) {
            const double p = spec_.site_probability(i);
            const bool keep_gamma = p > 0.0 ? block_rng.bernoulli(1.0 - p) : true;
            const bool keep_beta = p > 0.0 ? block_rng.bernoulli(1.0 - p) : true;
            z = inverted_norm_graph(z, b.gamma, b.beta, *b.norm, keep_gamma, keep_beta);
        } else {
            z = ad::add_rowvec(z, b.bias);
        }

        // activation
        if (l.activation == Activation::relu)
            z = ad::relu(z);
        else if (l.activation == Activation::sign)
            z = ad::sign_ste(z, spec_.ste_clip);

        if (l.kind == LayerKind::conv)
            z = ad::conv_pack(z, batch, positions, l.out_channels);

        // neuron / spatial dropout on the activation
        if (spec_.method == Method::spindrop && spec_.has_stochastic_site(i, spec_.method) &&
            spec_.site_probability(i) > 0.0) {
            const double p = spec_.site_probability(i);
            auto keep = sample_neuron_mask(l.output_units(), p, block_rng);
            z = ad::mul_rowvec(z, ad::constant(mask_to_factors(keep, p, false)));
            pending_rescale = p < 1.0 ? 1.0 / (1.0 - p) : 1.0;
        } else if (spec_.method == Method::spatial && spec_.has_stochastic_site(i, spec_.method) &&
                   spec_.site_probability(i) > 0.0) {
            const double p = spec_.site_probability(i);
            auto keep = sample_spatial_mask(l.fan_out(), p, block_rng);
            Tensor factors({l.output_units()});
            for (std::size_t c = 0; c < l.fan_out(); ++c)
                for (std::size_t k = 0; k < positions; ++k)
                    factors[c * positions + k] = keep[c] ? 1.0 : 0.0;
            z = ad::mul_rowvec(z, ad::constant(factors));
            pending_rescale = p < 1.0 ? 1.0 / (1.0 - p) : 1.0;
        }

        if (l.pool)
            z = ad::maxpool2(z, l.out_channels, l.out_h, l.out_w);

        h = z;
    }

    if (aux) {
        aux->scale_penalty = penalty;
        aux->kl = kl;
    }
    return h;
}

// ---------------------------------------------------------------------------
// inference path

namespace {

void book_rng(EventCounts* ledger, std::uint64_t n) {
    if (ledger)
        ledger->rng_bits += n;
}

} // namespace

Tensor Model::forward_infer(const Tensor& x, Rng* pass_rng, ExecMode mode,
                            const DeviceState* dev, EventCounts* ledger) const {
    if (mode == ExecMode::device && !dev)
        throw domain_error("device mode requires a DeviceState");
    const std::size_t batch = x.dim(0);
    Tensor h = x;
    double pending_rescale = 1.0;

    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const Block& b = blocks_[i];
        const LayerSpec& l = b.spec;
        Rng block_rng = pass_rng ? pass_rng->child(i) : Rng(0);
        const bool stochastic = pass_rng != nullptr;

        // realized module probabilities stand in for the nominal ones on
        // the device path
        const std::vector<DropoutModuleState>* mods =
            (mode == ExecMode::device && i < dev->modules.size()) ? &dev->modules[i] : nullptr;
        auto module_p = [&](std::size_t m, double nominal) {
            return mods && m < mods->size() ? (*mods)[m].realized_p : nominal;
        };

        std::size_t positions = 1;
        Tensor z;
        if (l.kind == LayerKind::conv) {
            positions = l.positions();
            Tensor cols = ad::im2col_tensor(h, l.in_channels, l.in_h, l.in_w, l.kernel, l.pad);
            if (mode == ExecMode::device && l.crossbar_routed) {
                const MappedLayer& mapped = dev->mapped[i];
                z = Tensor({cols.dim(0), l.out_channels});
                for (std::size_t r = 0; r < cols.dim(0); ++r) {
                    auto out = mapped.mac({cols.data() + r * cols.dim(1), cols.dim(1)}, nullptr,
                                          ledger);
                    std::copy(out.begin(), out.end(), z.data() + r * l.out_channels);
                }
            } else {
                z = ad::mm(cols, b.effective_weight());
            }
        } else {
            if (mode == ExecMode::device && l.crossbar_routed) {
                const MappedLayer& mapped = dev->mapped[i];
                z = Tensor({batch, l.out_features});
                for (std::size_t r = 0; r < batch; ++r) {
                    auto out = mapped.mac({h.data() + r * h.dim(1), h.dim(1)}, nullptr, ledger);
                    std::copy(out.begin(), out.end(), z.data() + r * l.out_features);
                }
            } else {
                z = ad::mm(h, b.effective_weight());
            }
        }
        if (pending_rescale != 1.0) {
            for (auto& v : z.vec())
                v *= pending_rescale;
            pending_rescale = 1.0;
        }

        // scale stage (p == 0 sites are deterministic and draw nothing)
        if (spec_.method == Method::scaledrop) {
            bool keep = true;
            if (stochastic && spec_.site_probability(i) > 0.0) {
                keep = block_rng.bernoulli(module_p(0, 1.0 - spec_.site_probability(i)));
                book_rng(ledger, 1);
            }
            Tensor s = b.scale_u->value;
            for (auto& v : s.vec())
                v = softplus_scalar(v);
            z = scale_dropout_forward(z, s, keep);
            if (ledger)
                ledger->scale_memory_reads += l.fan_out();
        } else if (spec_.method == Method::vi_subset) {
            ScalePosterior post(l.fan_out());
            post.mu = b.post_mu->value;
            post.rho = b.post_rho->value;
            Tensor s;
            if (stochastic) {
                s = sample_scale(post, block_rng);
                book_rng(ledger, l.fan_out());
            } else {
                s = post.mu;
            }
            Tensor zz = z;
            for (std::size_t r = 0; r < z.dim(0); ++r)
                for (std::size_t c = 0; c < l.fan_out(); ++c)
                    zz[r * l.fan_out() + c] *= s[c];
            z = zz;
            if (ledger)
                ledger->scale_memory_reads += l.fan_out();
        } else if (spec_.method == Method::spinbayes) {
            if (b.bank.instance_count == 0)
                throw domain_error("spinbayes model evaluated before bank construction");
            std::vector<std::uint8_t> sel;
            if (stochastic) {
                sel = arbiter_select(b.bank.instance_count, block_rng);
                book_rng(ledger, 1);
            } else {
                sel.assign(b.bank.instance_count, 0);
                sel[0] = 1;
            }
            z = bank_forward(z, b.bank, sel);
            if (ledger)
                ledger->scale_memory_reads += l.fan_out();
        }

        // bias / normalization
        if (spec_.method == Method::affine) {
            bool keep_gamma = true, keep_beta = true;
            if (stochastic && spec_.site_probability(i) > 0.0) {
                const double nominal = 1.0 - spec_.site_probability(i);
                keep_gamma = block_rng.bernoulli(module_p(0, nominal));
                keep_beta = block_rng.bernoulli(module_p(1, nominal));
                book_rng(ledger, 2);
            }
            z = inverted_norm_forward(z, *b.norm, keep_gamma, keep_beta, false);
        } else {
            for (std::size_t r = 0; r < z.dim(0); ++r)
                for (std::size_t c = 0; c < l.fan_out(); ++c)
                    z[r * l.fan_out() + c] += b.bias->value[c];
        }

        // activation
        if (l.activation == Activation::relu) {
            for (auto& v : z.vec())
                v = v > 0.0 ? v : 0.0;
        } else if (l.activation == Activation::sign) {
            z = binarize(z);
        }

        if (l.kind == LayerKind::conv) {
            Tensor packed({batch, l.out_channels * positions});
            for (std::size_t n = 0; n < batch; ++n)
                for (std::size_t p = 0; p < positions; ++p)
                    for (std::size_t c = 0; c < l.out_channels; ++c)
                        packed[n * l.out_channels * positions + c * positions + p] =
                            z[(n * positions + p) * l.out_channels + c];
            z = std::move(packed);
        }

        // neuron / spatial dropout
        if (spec_.method == Method::spindrop && spec_.has_stochastic_site(i, spec_.method) &&
            stochastic && spec_.site_probability(i) > 0.0) {
            const double p = spec_.site_probability(i);
            std::vector<std::uint8_t> keep(l.output_units());
            for (std::size_t m = 0; m < keep.size(); ++m)
                keep[m] = block_rng.bernoulli(module_p(m, 1.0 - p)) ? 1 : 0;
            book_rng(ledger, keep.size());
            Tensor f = mask_to_factors(keep, p, false);
            for (std::size_t r = 0; r < batch; ++r)
                for (std::size_t cidx = 0; cidx < f.numel(); ++cidx)
                    z[r * f.numel() + cidx] *= f[cidx];
            pending_rescale = p < 1.0 ? 1.0 / (1.0 - p) : 1.0;
        } else if (spec_.method == Method::spatial && spec_.has_stochastic_site(i, spec_.method) &&
                   stochastic && spec_.site_probability(i) > 0.0) {
            const double p = spec_.site_probability(i);
            std::vector<std::uint8_t> keep(l.fan_out());
            for (std::size_t m = 0; m < keep.size(); ++m)
                keep[m] = block_rng.bernoulli(module_p(m, 1.0 - p)) ? 1 : 0;
            book_rng(ledger, keep.size());
            for (std::size_t r = 0; r < batch; ++r)
                for (std::size_t c = 0; c < l.fan_out(); ++c)
                    if (!keep[c]) {
                        double* map = z.data() + r * z.dim(1) + c * positions;
                        for (std::size_t k = 0; k < positions; ++k)
                            map[k] = 0.0;
                    }
            pending_rescale = p < 1.0 ? 1.0 / (1.0 - p) : 1.0;
        }

        if (l.pool) {
            const std::size_t oh = l.out_h / 2, ow = l.out_w / 2;
            Tensor pooled({batch, l.out_channels * oh * ow});
            for (std::size_t n = 0; n < batch; ++n)
                for (std::size_t c = 0; c < l.out_channels; ++c) {
                    const double* chan = z.data() + n * z.dim(1) + c * l.out_h * l.out_w;
                    double* out = pooled.data() + n * pooled.dim(1) + c * oh * ow;
                    for (std::size_t y = 0; y < oh; ++y)
                        for (std::size_t xx = 0; xx < ow; ++xx) {
                            double m = chan[(2 * y) * l.out_w + 2 * xx];
                            for (std::size_t dy = 0; dy < 2; ++dy)
                                for (std::size_t dx = 0; dx < 2; ++dx)
                                    m = std::max(m, chan[(2 * y + dy) * l.out_w + (2 * xx + dx)]);
                            out[y * ow + xx] = m;
                        }
                }
            z = std::move(pooled);
        }

        h = std::move(z);
    }
    return h;
}

void Model::build_banks(Rng rng) {
    if (spec_.method != Method::spinbayes)
        return;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        Block& b = blocks_[i];
        ScalePosterior post(b.spec.fan_out());
        post.mu = b.post_mu->value;
        post.rho = b.post_rho->value;
        Rng brng = rng.child(i);
        b.bank = build_bank_auto_range(post, spec_.bank_instances, spec_.bank_levels, brng);
    }
}

DeviceState DeviceState::build(const Model& model, const CrossbarConfig& xb,
                               const DeviceConfig& dev, Rng rng) {
    DeviceState st;
    st.crossbar = xb;
    st.device = dev;
    const auto& blocks = model.blocks();
    st.mapped.resize(blocks.size());
    st.modules.resize(blocks.size());
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const Block& b = blocks[i];
        if (b.spec.crossbar_routed) {
            Rng prog_rng = rng.child(stream::device, i);
            st.mapped[i] = program_layer(b.effective_weight(), model.spec().layer_plan(i), xb.g_on,
                                         xb.g_off, xb.noise, xb.faults, prog_rng);
        }
        // realized dropout probabilities, one Gaussian fit per module
        const std::size_t n_mods = model.site_module_count(i);
        const Method m = model.spec().method;
        const bool bernoulli_site = m == Method::spindrop || m == Method::spatial ||
                                    m == Method::scaledrop || m == Method::affine;
        if (n_mods > 0 && bernoulli_site) {
            Rng mod_rng = rng.child(stream::device, i, 1000003);
            st.modules[i].reserve(n_mods);
            const double keep_nominal = 1.0 - model.spec().site_probability(i);
            for (std::size_t k = 0; k < n_mods; ++k)
                st.modules[i].push_back(make_dropout_module(keep_nominal, dev.sigma_p, mod_rng));
        }
    }
    return st;
}

} // namespace spincim
