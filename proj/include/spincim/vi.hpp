#pragma once

#include "spincim/autodiff.hpp"
#include "spincim/rng.hpp"
#include "spincim/tensor.hpp"

#include <cstdint>
#include <vector>

namespace spincim {

// Gaussian posterior over a per-channel scale vector. sigma is stored
// through a softplus parameterization (rho), so positivity is structural.
struct ScalePosterior {
    Tensor mu;  // [C]
    Tensor rho; // [C], sigma = softplus(rho)

    explicit ScalePosterior(std::size_t channels, double mu0 = 1.0, double sigma0 = 0.05);
    Tensor sigma() const;
    std::size_t channels() const { return mu.numel(); }
};

struct PriorSpec {
    double mu0 = 1.0;
    double sigma0 = 0.1;
};

double softplus_scalar(double x);
double softplus_inverse(double y);

// s = mu + sigma .* eps with eps ~ N(0, I); one draw per channel.
Tensor sample_scale(const ScalePosterior& post, Rng& rng);
Tensor sample_scale_with_noise(const ScalePosterior& post, const Tensor& eps);
// Graph version for training: gradients reach mu and rho through the
// reparameterization.
ad::Var sample_scale_graph(const ad::Var& mu, const ad::Var& rho, const Tensor& eps);

// KL(q || p) for diagonal Gaussians, summed over components.
double kl_gauss(const Tensor& mu_q, const Tensor& sigma_q, double mu_p, double sigma_p);
ad::Var kl_gauss_graph(const ad::Var& mu, const ad::Var& rho, const PriorSpec& prior);

// ce + lambda_kl * kl / n_batches
double elbo_loss(double ce, double kl, double lambda_kl, std::size_t n_batches);
ad::Var elbo_loss_graph(const ad::Var& ce, const ad::Var& kl, double lambda_kl,
                        std::size_t n_batches);

// Posterior samples quantized onto a uniform conductance grid and held
// as selectable instances; the arbiter picks one per forward pass.
struct CrossbarBank {
    std::size_t instance_count = 0; // M
    int levels = 15;                // L -> L+1 grid points
    double lo = 0.0, hi = 1.0;
    std::vector<std::uint8_t> level_index; // M * C, row-major per instance

    std::size_t channels() const {
        return instance_count == 0 ? 0 : level_index.size() / instance_count;
    }
    double dequant(std::size_t instance, std::size_t channel) const;
};

CrossbarBank build_bank(const ScalePosterior& post, std::size_t instances, int levels, double lo,
                        double hi, Rng& rng);
// Default grid: [m - 4*s_max, m + 4*s_max] aggregated across channels.
CrossbarBank build_bank_auto_range(const ScalePosterior& post, std::size_t instances, int levels,
                                   Rng& rng);

// Random one-hot selector, uniform over instances; one draw.
std::vector<std::uint8_t> arbiter_select(std::size_t instances, Rng& rng);

// Dequantizes the selected instance and applies it as a scale vector.
Tensor bank_forward(const Tensor& x, const CrossbarBank& bank,
                    const std::vector<std::uint8_t>& sel);

} // namespace spincim
