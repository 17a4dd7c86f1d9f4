#include "spincim/uncertainty.hpp"

#include "spincim/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace spincim {

double predictive_entropy(const std::vector<double>& probs) {
    double sum = 0.0, h = 0.0;
    for (double p : probs) {
        if (p < 0.0)
            throw domain_error("predictive_entropy: negative probability");
        sum += p;
        if (p > 0.0)
            h -= p * std::log(p);
    }
    if (std::abs(sum - 1.0) > 1e-6)
        throw domain_error("predictive_entropy: probabilities sum to " + std::to_string(sum));
    return h;
}

Tensor row_entropies(const Tensor& probs) {
    const std::size_t n = probs.dim(0), c = probs.dim(1);
    Tensor h({n});
    for (std::size_t i = 0; i < n; ++i) {
        double e = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            const double p = probs[i * c + j];
            if (p > 0.0)
                e -= p * std::log(p);
        }
        h[i] = e;
    }
    return h;
}

double nll(const Tensor& mean_probs, const std::vector<int>& labels) {
    const std::size_t n = mean_probs.dim(0), c = mean_probs.dim(1);
    if (labels.size() != n)
        throw dimension_error("nll: label count mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const int l = labels[i];
        if (l < 0 || static_cast<std::size_t>(l) >= c)
            throw domain_error("nll: label out of range");
        total -= std::log(std::max(mean_probs[i * c + l], 1e-12));
    }
    return total / static_cast<double>(n);
}

double accuracy_of(const Tensor& mean_probs, const std::vector<int>& labels) {
    const std::size_t n = mean_probs.dim(0), c = mean_probs.dim(1);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < c; ++j)
            if (mean_probs[i * c + j] > mean_probs[i * c + best])
                best = j;
        if (static_cast<int>(best) == labels[i])
            ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

UncertaintyReport predict_bayes(const Model& model, const Tensor& x, const std::vector<int>& labels,
                                std::size_t passes, Rng rng, ExecMode mode,
                                const DeviceState* dev) {
    if (passes < 1)
        throw domain_error("predict_bayes: need at least one pass");
    const Tensor coded = model.encode_input(x);
    const std::size_t n = coded.dim(0);
    const std::size_t c = model.spec().classes();

    UncertaintyReport rep;
    rep.per_pass_probs = Tensor({passes, n * c});
    rep.mean_probs = Tensor({n, c});
    EventCounts events;

    Rng eval_rng = rng.child(stream::eval);
    for (std::size_t t = 0; t < passes; ++t) {
        Rng pass_rng = eval_rng.child(t);
        Tensor logits = model.forward_infer(coded, &pass_rng, mode, dev, &events);
        Tensor probs = ad::softmax_rows(logits);
        for (std::size_t i = 0; i < n * c; ++i) {
            rep.per_pass_probs[t * n * c + i] = probs[i];
            rep.mean_probs[i] += probs[i] / static_cast<double>(passes);
        }
    }

    // compute-side events scale with the batch; report them per image
    events.crossbar_reads /= n;
    events.wordline_activations /= n;
    events.adc_conversions /= n;
    rep.events = events;

    rep.entropy = row_entropies(rep.mean_probs);
    rep.predictions.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < c; ++j)
            if (rep.mean_probs[i * c + j] > rep.mean_probs[i * c + best])
                best = j;
        rep.predictions[i] = static_cast<int>(best);
    }
    if (!labels.empty()) {
        rep.nll = nll(rep.mean_probs, labels);
        rep.accuracy = accuracy_of(rep.mean_probs, labels);
    }
    return rep;
}

std::string UncertaintyReport::records(const std::vector<int>& labels) const {
    const std::size_t n = mean_probs.dim(0), c = mean_probs.dim(1);
    const std::size_t t_count = passes();
    std::ostringstream os;
    os.precision(9);
    for (std::size_t i = 0; i < n; ++i) {
        // fraction of passes whose argmax agrees with the MC prediction
        std::size_t agree = 0;
        for (std::size_t t = 0; t < t_count; ++t) {
            std::size_t best = 0;
            for (std::size_t j = 1; j < c; ++j)
                if (per_pass_probs[t * n * c + i * c + j] > per_pass_probs[t * n * c + i * c + best])
                    best = j;
            if (static_cast<int>(best) == predictions[i])
                ++agree;
        }
        os << "sample id=" << i;
        if (i < labels.size())
            os << " label=" << labels[i];
        os << " pred=" << predictions[i] << " entropy=" << entropy[i]
           << " agree=" << (t_count ? static_cast<double>(agree) / t_count : 1.0) << "\n";
    }
    return os.str();
}

OodResult ood_rate(const std::vector<double>& scores_id, const std::vector<double>& scores_ood,
                   double quantile, OodScore kind) {
    if (scores_id.empty() || scores_ood.empty())
        throw domain_error("ood_rate: empty score set");
    if (!(quantile > 0.0 && quantile < 1.0))
        throw domain_error("ood_rate: quantile outside (0,1)");
    std::vector<double> sorted = scores_id;
    std::sort(sorted.begin(), sorted.end());
    // k-th order statistic with k = ceil(q * n): new exchangeable scores
    // exceed it with probability ~ 1 - q
    std::size_t k = static_cast<std::size_t>(
        std::ceil(quantile * static_cast<double>(sorted.size())));
    k = std::min(std::max<std::size_t>(k, 1), sorted.size());
    OodResult res;
    res.score_kind = kind;
    res.threshold = sorted[k - 1];
    std::size_t detected = 0;
    for (double s : scores_ood)
        if (s > res.threshold)
            ++detected;
    res.detection_rate = static_cast<double>(detected) / static_cast<double>(scores_ood.size());
    return res;
}

Tensor corrupt(const Tensor& x, CorruptionKind kind, double severity, Rng& rng,
               std::size_t height, std::size_t width, double lo, double hi) {
    if (severity < 0.0)
        throw domain_error("corrupt: severity must be nonnegative");
    Tensor out = x;
    switch (kind) {
    case CorruptionKind::gaussian_noise: {
        if (severity == 0.0)
            return out;
        for (auto& v : out.vec())
            v += severity * rng.normal();
        return out;
    }
    case CorruptionKind::uniform_noise: {
        if (severity == 0.0)
            return out;
        const double rate = std::min(severity, 1.0);
        for (auto& v : out.vec())
            if (rng.bernoulli(rate))
                v = lo + (hi - lo) * rng.uniform();
        return out;
    }
    case CorruptionKind::rotation: {
        if (height == 0 || width == 0)
            throw domain_error("corrupt: rotation needs image extents");
        if (x.rank() != 2 || x.dim(1) % (height * width) != 0)
            throw dimension_error("corrupt: data " + x.shape_str() + " is not " +
                                  std::to_string(height) + "x" + std::to_string(width) + " images");
        if (severity == 0.0)
            return out;
        const std::size_t channels = x.dim(1) / (height * width);
        const double rad = severity * 3.141592653589793238462643383279502884 / 180.0;
        const double ca = std::cos(rad), sa = std::sin(rad);
        const double cy = (static_cast<double>(height) - 1.0) / 2.0;
        const double cx = (static_cast<double>(width) - 1.0) / 2.0;
        for (std::size_t n = 0; n < x.dim(0); ++n)
            for (std::size_t ch = 0; ch < channels; ++ch) {
                const double* src = x.data() + n * x.dim(1) + ch * height * width;
                double* dst = out.data() + n * x.dim(1) + ch * height * width;
                for (std::size_t yy = 0; yy < height; ++yy)
                    for (std::size_t xx = 0; xx < width; ++xx) {
                        // inverse map: sample the source at the back-rotated point
                        const double dy = static_cast<double>(yy) - cy;
                        const double dx = static_cast<double>(xx) - cx;
                        const double sy = ca * dy + sa * dx + cy;
                        const double sx = -sa * dy + ca * dx + cx;
                        double v = 0.0;
                        const double fy = std::floor(sy), fx = std::floor(sx);
                        const double wy = sy - fy, wx = sx - fx;
                        for (int oy = 0; oy < 2; ++oy)
                            for (int ox = 0; ox < 2; ++ox) {
                                const double py = fy + oy, px = fx + ox;
                                if (py < 0 || py >= static_cast<double>(height) || px < 0 ||
                                    px >= static_cast<double>(width))
                                    continue;
                                const double wgt = (oy ? wy : 1.0 - wy) * (ox ? wx : 1.0 - wx);
                                v += wgt * src[static_cast<std::size_t>(py) * width +
                                               static_cast<std::size_t>(px)];
                            }
                        dst[yy * width + xx] = v;
                    }
            }
        return out;
    }
    }
    throw domain_error("corrupt: unknown corruption kind");
}

} // namespace spincim
