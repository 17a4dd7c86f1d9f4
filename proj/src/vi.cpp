#include "spincim/vi.hpp"

#include "spincim/errors.hpp"
#include "spincim/mtj.hpp"

#include <algorithm>
#include <cmath>

namespace spincim {

double softplus_scalar(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

double softplus_inverse(double y) {
    if (y <= 0.0)
        throw domain_error("softplus_inverse needs a positive argument");
    return y > 30.0 ? y : std::log(std::expm1(y));
}

ScalePosterior::ScalePosterior(std::size_t channels, double mu0, double sigma0)
    : mu(Tensor::full({channels}, mu0)), rho(Tensor::full({channels}, softplus_inverse(sigma0))) {}

Tensor ScalePosterior::sigma() const {
    Tensor s = rho;
    for (auto& v : s.vec())
        v = softplus_scalar(v);
    return s;
}

Tensor sample_scale(const ScalePosterior& post, Rng& rng) {
    Tensor eps({post.channels()});
    for (auto& v : eps.vec())
        v = rng.normal();
    return sample_scale_with_noise(post, eps);
}

Tensor sample_scale_with_noise(const ScalePosterior& post, const Tensor& eps) {
    if (eps.numel() != post.channels())
        throw dimension_error("noise length " + std::to_string(eps.numel()) + " vs posterior " +
                              std::to_string(post.channels()));
    Tensor s = post.sigma();
    Tensor out({post.channels()});
    for (std::size_t i = 0; i < out.numel(); ++i)
        out[i] = post.mu[i] + s[i] * eps[i];
    return out;
}

ad::Var sample_scale_graph(const ad::Var& mu, const ad::Var& rho, const Tensor& eps) {
    return ad::add(mu, ad::mul(ad::softplus(rho), ad::constant(eps)));
}

double kl_gauss(const Tensor& mu_q, const Tensor& sigma_q, double mu_p, double sigma_p) {
    if (!mu_q.same_shape(sigma_q))
        throw dimension_error("kl_gauss: mu/sigma shape mismatch");
    if (sigma_p <= 0.0)
        throw domain_error("kl_gauss: prior sigma must be positive");
    double kl = 0.0;
    for (std::size_t i = 0; i < mu_q.numel(); ++i) {
        const double sq = sigma_q[i];
        if (sq <= 0.0)
            throw domain_error("kl_gauss: posterior sigma must be positive");
        const double dm = mu_q[i] - mu_p;
        kl += std::log(sigma_p / sq) + (sq * sq + dm * dm) / (2.0 * sigma_p * sigma_p) - 0.5;
    }
    return kl;
}

ad::Var kl_gauss_graph(const ad::Var& mu, const ad::Var& rho, const PriorSpec& prior) {
    if (prior.sigma0 <= 0.0)
        throw domain_error("kl_gauss: prior sigma must be positive");
    ad::Var sigma = ad::softplus(rho);
    ad::Var log_term = ad::smul(ad::log_op(sigma), -1.0); // -ln sigma_q (+ ln sigma_p below)
    ad::Var quad = ad::smul(ad::add(ad::square(sigma), ad::square(ad::sadd(mu, -prior.mu0))),
                            1.0 / (2.0 * prior.sigma0 * prior.sigma0));
    ad::Var per = ad::sadd(ad::add(log_term, quad), std::log(prior.sigma0) - 0.5);
    return ad::sum(per);
}

double elbo_loss(double ce, double kl, double lambda_kl, std::size_t n_batches) {
    if (lambda_kl < 0.0)
        throw domain_error("elbo_loss: lambda must be nonnegative");
    if (n_batches == 0)
        throw domain_error("elbo_loss: batch count must be positive");
    return ce + lambda_kl * kl / static_cast<double>(n_batches);
}

ad::Var elbo_loss_graph(const ad::Var& ce, const ad::Var& kl, double lambda_kl,
                        std::size_t n_batches) {
    if (lambda_kl < 0.0)
        throw domain_error("elbo_loss: lambda must be nonnegative");
    if (n_batches == 0)
        throw domain_error("elbo_loss: batch count must be positive");
    return ad::add(ce, ad::smul(kl, lambda_kl / static_cast<double>(n_batches)));
}

double CrossbarBank::dequant(std::size_t instance, std::size_t channel) const {
    return dequantize_level(level_index[instance * channels() + channel], lo, hi, levels);
}

CrossbarBank build_bank(const ScalePosterior& post, std::size_t instances, int levels, double lo,
                        double hi, Rng& rng) {
    if (instances < 1)
        throw domain_error("build_bank: need at least one instance");
    if (levels < 1)
        throw domain_error("build_bank: need at least one level step");
    if (!(lo < hi))
        throw domain_error("build_bank: empty value range");
    if (levels > 255)
        throw domain_error("build_bank: level index must fit one byte");
    CrossbarBank bank;
    bank.instance_count = instances;
    bank.levels = levels;
    bank.lo = lo;
    bank.hi = hi;
    bank.level_index.resize(instances * post.channels());
    for (std::size_t m = 0; m < instances; ++m) {
        Tensor s = sample_scale(post, rng);
        for (std::size_t c = 0; c < post.channels(); ++c)
            bank.level_index[m * post.channels() + c] =
                static_cast<std::uint8_t>(quantize_to_level(s[c], lo, hi, levels));
    }
    return bank;
}

CrossbarBank build_bank_auto_range(const ScalePosterior& post, std::size_t instances, int levels,
                                   Rng& rng) {
    Tensor sigma = post.sigma();
    double lo = post.mu[0], hi = post.mu[0];
    for (std::size_t c = 0; c < post.channels(); ++c) {
        lo = std::min(lo, post.mu[c] - 4.0 * sigma[c]);
        hi = std::max(hi, post.mu[c] + 4.0 * sigma[c]);
    }
    if (!(lo < hi)) { // fully degenerate posterior; give the grid width
        lo -= 0.5;
        hi += 0.5;
    }
    return build_bank(post, instances, levels, lo, hi, rng);
}

std::vector<std::uint8_t> arbiter_select(std::size_t instances, Rng& rng) {
    if (instances < 1)
        throw domain_error("arbiter_select: need at least one instance");
    std::vector<std::uint8_t> sel(instances, 0);
    sel[rng.uniform_index(instances)] = 1;
    return sel;
}

Tensor bank_forward(const Tensor& x, const CrossbarBank& bank,
                    const std::vector<std::uint8_t>& sel) {
    if (sel.size() != bank.instance_count)
        throw domain_error("bank_forward: selector length " + std::to_string(sel.size()) +
                           " vs bank " + std::to_string(bank.instance_count));
    std::size_t picked = bank.instance_count;
    std::size_t ones = 0;
    for (std::size_t i = 0; i < sel.size(); ++i)
        if (sel[i]) {
            picked = i;
            ++ones;
        }
    if (ones != 1)
        throw domain_error("bank_forward: selector must be one-hot");
    const std::size_t c = bank.channels();
    if (x.rank() != 2 || x.dim(1) != c)
        throw dimension_error("bank_forward: bank channels " + std::to_string(c) + " vs " +
                              x.shape_str());
    Tensor out = x;
    for (std::size_t i = 0; i < x.dim(0); ++i)
        for (std::size_t j = 0; j < c; ++j)
            out[i * c + j] *= bank.dequant(picked, j);
    return out;
}

} // namespace spincim
