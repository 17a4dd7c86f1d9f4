#pragma once

#include "spincim/model.hpp"
#include "spincim/resource.hpp"
#include "spincim/rng.hpp"
#include "spincim/tensor.hpp"

#include <string>
#include <vector>

namespace spincim {

struct UncertaintyReport {
    Tensor mean_probs;     // [N x C]
    Tensor per_pass_probs; // [T x N x C] flattened as [T, N*C]
    Tensor entropy;        // [N], entropy of the MC mean distribution
    double nll = 0.0;
    double accuracy = 0.0;
    std::vector<int> predictions;
    EventCounts events; // per-image closed-form-comparable counts

    std::size_t passes() const { return per_pass_probs.empty() ? 0 : per_pass_probs.dim(0); }
    // line-delimited records: one per sample
    std::string records(const std::vector<int>& labels) const;
};

enum class OodScore { entropy, max_prob };

struct OodResult {
    double threshold = 0.0;
    double detection_rate = 0.0;
    OodScore score_kind = OodScore::entropy;
};

// Monte Carlo Bayesian inference: T stochastic passes with per-pass RNG
// substreams derived from (seed, pass, module). One network realization
// is drawn per pass and applied to the whole batch.
UncertaintyReport predict_bayes(const Model& model, const Tensor& x, const std::vector<int>& labels,
                                std::size_t passes, Rng rng, ExecMode mode = ExecMode::math,
                                const DeviceState* dev = nullptr);

double predictive_entropy(const std::vector<double>& probs);
Tensor row_entropies(const Tensor& probs);

// mean over samples of -ln p[label], probabilities floored at 1e-12
double nll(const Tensor& mean_probs, const std::vector<int>& labels);

double accuracy_of(const Tensor& mean_probs, const std::vector<int>& labels);

// threshold at the given empirical quantile of the in-distribution
// scores; detection = fraction of OOD scores strictly above it
OodResult ood_rate(const std::vector<double>& scores_id, const std::vector<double>& scores_ood,
                   double quantile = 0.95, OodScore kind = OodScore::entropy);

enum class CorruptionKind { gaussian_noise, uniform_noise, rotation };

// gaussian_noise: adds N(0, severity^2) everywhere.
// uniform_noise: replaces entries with U(lo, hi) at rate = severity.
// rotation: rotates each H x W image by severity degrees (bilinear, zero
// padding); requires image-shaped data.
Tensor corrupt(const Tensor& x, CorruptionKind kind, double severity, Rng& rng,
               std::size_t height = 0, std::size_t width = 0, double lo = 0.0, double hi = 1.0);

} // namespace spincim
