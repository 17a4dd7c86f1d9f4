#include "spincim/train.hpp"

#include "spincim/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

namespace spincim {

namespace {

struct AdamState {
    std::vector<Tensor> m, v;
    std::size_t t = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

void adam_step(std::vector<Parameter>& params, AdamState& st, double lr) {
    if (st.m.empty()) {
        for (const auto& p : params) {
            st.m.push_back(Tensor::zeros(p.var->value.shape()));
            st.v.push_back(Tensor::zeros(p.var->value.shape()));
        }
    }
    ++st.t;
    const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& node = *params[k].var;
        if (!node.grad_alloc)
            continue;
        Tensor& val = node.value;
        for (std::size_t i = 0; i < val.numel(); ++i) {
            const double g = node.grad[i];
            st.m[k][i] = st.beta1 * st.m[k][i] + (1.0 - st.beta1) * g;
            st.v[k][i] = st.beta2 * st.v[k][i] + (1.0 - st.beta2) * g * g;
            val[i] -= lr * (st.m[k][i] / bc1) / (std::sqrt(st.v[k][i] / bc2) + st.eps);
        }
    }
}

struct SgdState {
    std::vector<Tensor> vel;
};

void sgd_step(std::vector<Parameter>& params, SgdState& st, double lr, double momentum) {
    if (st.vel.empty())
        for (const auto& p : params)
            st.vel.push_back(Tensor::zeros(p.var->value.shape()));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& node = *params[k].var;
        if (!node.grad_alloc)
            continue;
        for (std::size_t i = 0; i < node.value.numel(); ++i) {
            st.vel[k][i] = momentum * st.vel[k][i] - lr * node.grad[i];
            node.value[i] += st.vel[k][i];
        }
    }
}

void clamp_binary_latents(Model& model, double clip) {
    for (auto& b : model.blocks())
        if (b.spec.binarized)
            for (auto& w : b.weight->value.vec())
                w = std::clamp(w, -clip, clip);
}

struct Snapshot {
    std::vector<Tensor> params;
    std::vector<std::pair<Tensor, Tensor>> norm;
};

Snapshot take_snapshot(Model& model) {
    Snapshot s;
    for (auto& p : model.parameters())
        s.params.push_back(p.var->value);
    for (auto& b : model.blocks())
        if (b.norm)
            s.norm.emplace_back(b.norm->running_mean, b.norm->running_var);
    return s;
}

void restore_snapshot(Model& model, const Snapshot& s) {
    auto params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i)
        params[i].var->value = s.params[i];
    std::size_t k = 0;
    for (auto& b : model.blocks())
        if (b.norm) {
            b.norm->running_mean = s.norm[k].first;
            b.norm->running_var = s.norm[k].second;
            ++k;
        }
}

} // namespace

TrainResult run_training(const RunConfig& cfg, const Dataset& train_data, std::ostream* log) {
    Rng root(cfg.train.seed);
    TrainResult result{Model(cfg.model, root.child(stream::init)), {}, {}, false};
    Model& model = result.model;

    const Tensor coded = model.encode_input(train_data.x);
    const std::size_t n = coded.dim(0);
    const std::size_t batch_size = std::min(cfg.train.batch, n);
    const std::size_t n_batches = std::max<std::size_t>(1, n / batch_size);

    auto params = model.parameters();
    AdamState adam;
    SgdState sgd;

    const bool vi = cfg.model.method == Method::vi_subset || cfg.model.method == Method::spinbayes;
    const double anneal_epochs = std::max(1.0, 0.3 * static_cast<double>(cfg.train.epochs));

    Snapshot last_good = take_snapshot(model);

    for (std::size_t epoch = 0; epoch < cfg.train.epochs && !result.diverged; ++epoch) {
        Rng shuffle_rng = root.child(stream::train, epoch);
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = n; i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);

        // KL weight ramps linearly over the first 30% of epochs
        const double anneal =
            std::min(1.0, static_cast<double>(epoch + 1) / anneal_epochs) * cfg.kl_weight;

        double loss_sum = 0.0;
        std::size_t seen = 0, correct = 0, batches_done = 0;
        for (std::size_t b = 0; b * batch_size < n; ++b) {
            const std::size_t lo = b * batch_size;
            const std::size_t count = std::min(batch_size, n - lo);
            if (count < 2)
                break; // batch statistics need >= 2 rows; drop the remainder
            Tensor xb({count, coded.dim(1)});
            std::vector<int> yb(count);
            for (std::size_t i = 0; i < count; ++i) {
                const std::size_t src = order[lo + i];
                std::copy(coded.data() + src * coded.dim(1), coded.data() + (src + 1) * coded.dim(1),
                          xb.data() + i * coded.dim(1));
                yb[i] = train_data.labels[src];
            }

            Rng pass_rng = root.child(stream::train, epoch, b);
            GraphAux aux;
            double loss_val;
            ad::Var loss, logits;
            try {
                logits = model.forward_graph(xb, pass_rng, &aux);
                ad::Var ce = ad::softmax_ce(logits, yb);
                loss = ce;
                if (cfg.model.method == Method::scaledrop && aux.scale_penalty && cfg.lambda > 0.0)
                    loss = ad::add(loss, ad::smul(aux.scale_penalty, cfg.lambda));
                if (vi && aux.kl)
                    loss = elbo_loss_graph(ce, aux.kl, anneal, n_batches);
                loss_val = loss->value[0];
            } catch (const Error& e) {
                // overflowed parameters surface as numeric errors inside
                // the graph; treat them like a non-finite loss
                if (e.kind() != ErrorKind::numeric && e.kind() != ErrorKind::domain)
                    throw;
                loss_val = std::numeric_limits<double>::quiet_NaN();
            }
            if (!std::isfinite(loss_val)) {
                restore_snapshot(model, last_good);
                result.diverged = true;
                if (log)
                    (*log) << "epoch e=" << epoch << " diverged; restored last finite state\n";
                break;
            }

            for (auto& p : params)
                ad::zero_grad(p.var);
            ad::backward(loss);
            if (cfg.train.optimizer == "adam")
                adam_step(params, adam, cfg.train.lr);
            else
                sgd_step(params, sgd, cfg.train.lr, cfg.train.momentum);
            clamp_binary_latents(model, cfg.model.ste_clip);

            loss_sum += loss_val * static_cast<double>(count);
            const Tensor& lv = logits->value;
            for (std::size_t i = 0; i < count; ++i) {
                std::size_t best = 0;
                for (std::size_t j = 1; j < lv.dim(1); ++j)
                    if (lv[i * lv.dim(1) + j] > lv[i * lv.dim(1) + best])
                        best = j;
                if (static_cast<int>(best) == yb[i])
                    ++correct;
            }
            seen += count;
            ++batches_done;
        }

        if (result.diverged)
            break;
        if (seen > 0) {
            result.epoch_loss.push_back(loss_sum / static_cast<double>(seen));
            result.epoch_acc.push_back(static_cast<double>(correct) / static_cast<double>(seen));
            if (log)
                (*log) << "epoch e=" << epoch << " loss=" << result.epoch_loss.back()
                       << " acc=" << result.epoch_acc.back() << "\n";
        }
        last_good = take_snapshot(model);
    }

    if (cfg.model.method == Method::spinbayes)
        model.build_banks(root.child(stream::bank));
    return result;
}

UncertaintyReport run_eval(const Model& model, const Dataset& data, std::size_t passes,
                           ExecMode mode, const CrossbarConfig& xb, const DeviceConfig& dev,
                           std::uint64_t seed) {
    Rng rng(seed);
    if (mode == ExecMode::device) {
        DeviceState st = DeviceState::build(model, xb, dev, rng);
        return predict_bayes(model, data.x, data.labels, passes, rng, mode, &st);
    }
    return predict_bayes(model, data.x, data.labels, passes, rng, ExecMode::math, nullptr);
}

} // namespace spincim
