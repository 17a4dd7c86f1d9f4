#include "spincim/dropout.hpp"

#include "spincim/errors.hpp"

#include <cmath>

namespace spincim {

std::vector<std::uint8_t> sample_neuron_mask(std::size_t n, double p, Rng& rng) {
    if (!(p >= 0.0 && p <= 1.0))
        throw domain_error("dropout probability outside [0,1]");
    std::vector<std::uint8_t> keep(n);
    for (std::size_t i = 0; i < n; ++i)
        keep[i] = rng.bernoulli(1.0 - p) ? 1 : 0;
    return keep;
}

std::vector<std::uint8_t> sample_spatial_mask(std::size_t channel_count, double p, Rng& rng) {
    if (channel_count < 1)
        throw domain_error("spatial mask needs at least one channel");
    return sample_neuron_mask(channel_count, p, rng);
}

Tensor mask_to_factors(const std::vector<std::uint8_t>& keep, double p, bool rescale) {
    const double survive = (rescale && p < 1.0) ? 1.0 / (1.0 - p) : 1.0;
    Tensor f({keep.size()});
    for (std::size_t i = 0; i < keep.size(); ++i)
        f[i] = keep[i] ? survive : 0.0;
    return f;
}

Tensor apply_neuron_mask(const Tensor& x, const std::vector<std::uint8_t>& keep, double p,
                         bool rescale) {
    if (x.rank() != 2 || x.dim(1) != keep.size())
        throw dimension_error("neuron mask length " + std::to_string(keep.size()) + " vs " +
                              x.shape_str());
    Tensor f = mask_to_factors(keep, p, rescale);
    Tensor out = x;
    const std::size_t n = x.dim(0), c = x.dim(1);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j)
            out[i * c + j] *= f[j];
    return out;
}

Tensor apply_spatial_mask(const Tensor& x, const std::vector<std::uint8_t>& keep,
                          std::size_t map_size, double p, bool rescale) {
    if (x.rank() != 2 || x.dim(1) != keep.size() * map_size)
        throw dimension_error("spatial mask " + std::to_string(keep.size()) + " maps of " +
                              std::to_string(map_size) + " vs " + x.shape_str());
    Tensor f = mask_to_factors(keep, p, rescale);
    Tensor out = x;
    const std::size_t n = x.dim(0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < keep.size(); ++c) {
            double* map = out.data() + i * x.dim(1) + c * map_size;
            for (std::size_t k = 0; k < map_size; ++k)
                map[k] *= f[c];
        }
    return out;
}

Tensor scale_dropout_forward(const Tensor& x, const Tensor& scale, bool mask_bit) {
    if (x.rank() != 2 || x.dim(1) != scale.numel())
        throw dimension_error("scale vector " + std::to_string(scale.numel()) + " vs " +
                              x.shape_str());
    if (!mask_bit)
        return x; // identity scale on drop
    Tensor out = x;
    const std::size_t n = x.dim(0), c = x.dim(1);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j)
            out[i * c + j] *= scale[j];
    return out;
}

ad::Var scale_dropout_graph(const ad::Var& x, const ad::Var& scale, bool mask_bit) {
    if (!mask_bit)
        return x; // dropped: no edge to the scale parameter
    return ad::mul_rowvec(x, scale);
}

double adaptive_p(std::size_t layer_param_count, const AdaptiveSchedule& schedule,
                  std::size_t n_min, std::size_t n_max) {
    if (!(n_min < n_max))
        throw domain_error("adaptive_p: need n_min < n_max");
    if (layer_param_count < n_min || layer_param_count > n_max)
        throw domain_error("adaptive_p: layer size outside [n_min, n_max]");
    if (schedule.p_min > schedule.p_max)
        throw domain_error("adaptive_p: p_min > p_max");
    const double t = (std::log(static_cast<double>(layer_param_count)) -
                      std::log(static_cast<double>(n_min))) /
                     (std::log(static_cast<double>(n_max)) - std::log(static_cast<double>(n_min)));
    const double p = schedule.p_min + (schedule.p_max - schedule.p_min) * t;
    return std::clamp(p, schedule.p_min, schedule.p_max);
}

double scale_regularizer(const Tensor& scale, double lambda) {
    if (lambda < 0.0)
        throw domain_error("scale_regularizer: lambda must be nonnegative");
    double s = 0.0;
    for (double v : scale.vec())
        s += (v - 1.0) * (v - 1.0);
    return lambda * s;
}

ad::Var scale_regularizer_graph(const ad::Var& scale, double lambda) {
    if (lambda < 0.0)
        throw domain_error("scale_regularizer: lambda must be nonnegative");
    return ad::smul(ad::sum(ad::square(ad::sadd(scale, -1.0))), lambda);
}

InvertedNormState::InvertedNormState(std::size_t channels)
    : gamma(Tensor::ones({channels})),
      beta(Tensor::zeros({channels})),
      running_mean(Tensor::zeros({channels})),
      running_var(Tensor::ones({channels})) {}

namespace {

void update_running(InvertedNormState& st, const Tensor& mean, const Tensor& var) {
    for (std::size_t j = 0; j < st.running_mean.numel(); ++j) {
        st.running_mean[j] = (1.0 - st.momentum) * st.running_mean[j] + st.momentum * mean[j];
        st.running_var[j] = (1.0 - st.momentum) * st.running_var[j] + st.momentum * var[j];
    }
}

} // namespace

Tensor inverted_norm_forward(const Tensor& x, InvertedNormState& st, bool m_gamma, bool m_beta,
                             bool train) {
    if (x.rank() != 2 || x.dim(1) != st.gamma.numel())
        throw dimension_error("inverted norm channels " + std::to_string(st.gamma.numel()) +
                              " vs " + x.shape_str());
    const std::size_t n = x.dim(0), c = x.dim(1);
    if (train && n < 2)
        throw domain_error("inverted norm train mode needs a batch of at least 2");

    // affine first: dropped gamma collapses to 1, dropped beta to 0
    Tensor z = x;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            double g = m_gamma ? st.gamma[j] : 1.0;
            double b = m_beta ? st.beta[j] : 0.0;
            z[i * c + j] = g * x[i * c + j] + b;
        }

    Tensor out({n, c});
    if (train) {
        Tensor mean({c}), var({c});
        for (std::size_t j = 0; j < c; ++j) {
            double m = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                m += z[i * c + j];
            m /= static_cast<double>(n);
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double d = z[i * c + j] - m;
                s += d * d;
            }
            mean[j] = m;
            var[j] = s / static_cast<double>(n);
        }
        for (std::size_t j = 0; j < c; ++j) {
            const double denom = std::sqrt(std::max(var[j], st.eps));
            for (std::size_t i = 0; i < n; ++i)
                out[i * c + j] = (z[i * c + j] - mean[j]) / denom;
        }
        update_running(st, mean, var);
    } else {
        for (std::size_t j = 0; j < c; ++j) {
            const double denom = std::sqrt(st.running_var[j] + st.eps);
            for (std::size_t i = 0; i < n; ++i)
                out[i * c + j] = (z[i * c + j] - st.running_mean[j]) / denom;
        }
    }
    return out;
}

ad::Var inverted_norm_graph(const ad::Var& x, const ad::Var& gamma, const ad::Var& beta,
                            InvertedNormState& st, bool m_gamma, bool m_beta) {
    ad::Var z = x;
    if (m_gamma)
        z = ad::mul_rowvec(z, gamma);
    if (m_beta)
        z = ad::add_rowvec(z, beta);
    Tensor mean, var;
    ad::Var out = ad::batch_normalize(z, st.eps, &mean, &var);
    update_running(st, mean, var);
    return out;
}

} // namespace spincim
