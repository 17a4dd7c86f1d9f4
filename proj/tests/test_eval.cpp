#include "doctest.h"

#include "oracles.hpp"
#include "spincim/config.hpp"
#include "spincim/dataset.hpp"
#include "spincim/errors.hpp"
#include "spincim/train.hpp"
#include "spincim/uncertainty.hpp"

#include <cmath>

using namespace spincim;
namespace o = oracle;

TEST_CASE("predictive entropy: frozen values and domain checks") {
    CHECK(predictive_entropy({0.5, 0.5}) == doctest::Approx(0.6931471805599453).epsilon(1e-12));
    CHECK(predictive_entropy({0.0, 1.0, 0.0}) == 0.0);
    CHECK(predictive_entropy({0.7, 0.3}) == doctest::Approx(0.6108643020548935).epsilon(1e-10));
    CHECK_THROWS_AS(predictive_entropy({-0.1, 1.1}), Error);
    CHECK_THROWS_AS(predictive_entropy({0.2, 0.2}), Error);
}

TEST_CASE("negative log-likelihood: anchors and monotonicity") {
    Tensor onehot({1, 3}, {0.0, 1.0, 0.0});
    CHECK(nll(onehot, {1}) == doctest::Approx(0.0).epsilon(1e-9));

    Tensor uniform10 = Tensor::full({2, 10}, 0.1);
    CHECK(nll(uniform10, {3, 7}) == doctest::Approx(2.302585092994046).epsilon(1e-12));

    Tensor lo({1, 2}, {0.3, 0.7});
    Tensor hi({1, 2}, {0.6, 0.4});
    CHECK(nll(hi, {0}) < nll(lo, {0}));

    // probability floor keeps confident errors finite
    Tensor zeroed({1, 2}, {0.0, 1.0});
    CHECK(std::isfinite(nll(zeroed, {0})));
}

TEST_CASE("ood_rate: saturation, exchangeability, degenerate cases") {
    std::vector<double> id{0.1, 0.2, 0.3, 0.4, 0.5};
    std::vector<double> far{0.9, 1.2, 2.0};
    CHECK(ood_rate(id, far, 0.95).detection_rate == 1.0);

    std::vector<double> below{0.05};
    CHECK(ood_rate(id, below, 0.95).detection_rate == 0.0);

    // exchangeable scores: detection ~ 1 - quantile within binomial 3 sigma
    Rng rng(1);
    std::vector<double> a(100000), b(100000);
    for (auto& v : a)
        v = rng.normal();
    for (auto& v : b)
        v = rng.normal();
    const double rate = ood_rate(a, b, 0.95).detection_rate;
    CHECK(o::within_binomial_band(rate, 0.05, b.size()));

    CHECK_THROWS_AS(ood_rate({}, far, 0.95), Error);
    CHECK_THROWS_AS(ood_rate(id, far, 1.5), Error);
}

TEST_CASE("corrupt: identity, rotation closure, decorrelation") {
    Rng rng(2);
    Tensor x = o::random_tensor({3, 8 * 8}, rng);
    for (auto kind : {CorruptionKind::gaussian_noise, CorruptionKind::uniform_noise,
                      CorruptionKind::rotation}) {
        Rng r(3);
        Tensor out = corrupt(x, kind, 0.0, r, 8, 8);
        CHECK(out.vec() == x.vec());
    }

    // full-turn rotation reproduces the image within resampling tolerance
    Rng r2(4);
    Tensor img = o::random_tensor({2, 16 * 16}, r2);
    Rng r3(5);
    Tensor turned = corrupt(img, CorruptionKind::rotation, 360.0, r3, 16, 16);
    for (std::size_t i = 0; i < img.numel(); ++i)
        CHECK(std::abs(turned[i] - img[i]) <= 1e-6);

    // full-rate uniform noise output is uncorrelated with the input
    Rng r4(6);
    Tensor base({1, 10000});
    for (std::size_t i = 0; i < base.numel(); ++i)
        base[i] = (i % 100) / 100.0;
    Tensor noisy = corrupt(base, CorruptionKind::uniform_noise, 1.0, r4, 0, 0, 0.0, 1.0);
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < base.numel(); ++i) {
        mx += base[i];
        my += noisy[i];
    }
    mx /= base.numel();
    my /= base.numel();
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < base.numel(); ++i) {
        sxy += (base[i] - mx) * (noisy[i] - my);
        sxx += (base[i] - mx) * (base[i] - mx);
        syy += (noisy[i] - my) * (noisy[i] - my);
    }
    CHECK(std::abs(sxy / std::sqrt(sxx * syy)) <= 0.02);

    CHECK_THROWS_AS(corrupt(x, CorruptionKind::rotation, 10.0, r4, 0, 0), Error);
    CHECK_THROWS_AS(corrupt(x, CorruptionKind::gaussian_noise, -1.0, r4), Error);
}

namespace {

RunConfig small_mlp_config(Method method, std::uint64_t seed) {
    RunConfig cfg = parse_config(
        "[model]\n"
        "input = 2\n"
        "layers = dense16, dense16, dense2\n"
        "binarize = none\n"
        "[method]\n"
        "name = scaledrop\n"
        "p = 0.2\n"
        "[train]\n"
        "epochs = 60\n"
        "batch = 32\n"
        "lr = 0.02\n");
    cfg.model.method = method;
    cfg.train.seed = seed;
    cfg.model.resolve();
    return cfg;
}

} // namespace

TEST_CASE("predict_bayes: report invariants and determinism") {
    RunConfig cfg = small_mlp_config(Method::scaledrop, 7);
    Dataset data = gen_synthetic(SyntheticKind::two_moons, 200, 0.1, 3);
    TrainResult tr = run_training(cfg, data);

    UncertaintyReport rep = predict_bayes(tr.model, data.x, data.labels, 16, Rng(5));
    const std::size_t n = rep.mean_probs.dim(0), c = rep.mean_probs.dim(1);
    REQUIRE(n == 200);
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0;
        for (std::size_t j = 0; j < c; ++j) {
            CHECK(rep.mean_probs[i * c + j] >= 0.0);
            sum += rep.mean_probs[i * c + j];
        }
        CHECK(std::abs(sum - 1.0) <= 1e-9);
        CHECK(rep.entropy[i] >= 0.0);
        CHECK(rep.entropy[i] <= std::log(static_cast<double>(c)) + 1e-12);
    }

    UncertaintyReport again = predict_bayes(tr.model, data.x, data.labels, 16, Rng(5));
    CHECK(again.mean_probs.vec() == rep.mean_probs.vec());
    CHECK(again.per_pass_probs.vec() == rep.per_pass_probs.vec());

    CHECK_THROWS_AS(predict_bayes(tr.model, data.x, data.labels, 0, Rng(5)), Error);
}

TEST_CASE("deterministic model: per-pass outputs identical, entropy is single-pass entropy") {
    RunConfig cfg = small_mlp_config(Method::scaledrop, 11);
    cfg.model.dropout_p = 0.0;
    Dataset data = gen_synthetic(SyntheticKind::blobs, 64, 0.3, 5);
    TrainResult tr = run_training(cfg, data);

    UncertaintyReport rep = predict_bayes(tr.model, data.x, data.labels, 5, Rng(6));
    const std::size_t nc = rep.mean_probs.numel();
    for (std::size_t t = 1; t < 5; ++t)
        for (std::size_t i = 0; i < nc; ++i)
            CHECK(rep.per_pass_probs[t * nc + i] == rep.per_pass_probs[i]);
}

TEST_CASE("blobs model: far-away noise scores above in-distribution entropy (10 seeds)") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        RunConfig cfg = small_mlp_config(Method::vi_subset, seed);
        cfg.train.epochs = 40;
        Dataset data = gen_synthetic(SyntheticKind::blobs, 256, 0.4, seed * 31);
        TrainResult tr = run_training(cfg, data);

        UncertaintyReport id_rep = predict_bayes(tr.model, data.x, data.labels, 24, Rng(seed));
        Rng box_rng = Rng(seed).child(77);
        Tensor ood = uniform_box(256, -12.0, 12.0, 2, box_rng);
        UncertaintyReport ood_rep = predict_bayes(tr.model, ood, {}, 24, Rng(seed + 1));

        double id_mean = 0, ood_mean = 0;
        for (std::size_t i = 0; i < 256; ++i) {
            id_mean += id_rep.entropy[i];
            ood_mean += ood_rep.entropy[i];
        }
        CHECK(ood_mean / 256 > id_mean / 256);
    }
}

TEST_CASE("T=1 equals a single stochastic pass; larger T stabilizes the estimate") {
    RunConfig cfg = small_mlp_config(Method::scaledrop, 19);
    cfg.model.dropout_p = 0.5;
    cfg.train.epochs = 40;
    Dataset data = gen_synthetic(SyntheticKind::two_moons, 200, 0.12, 13);
    TrainResult tr = run_training(cfg, data);

    UncertaintyReport one = predict_bayes(tr.model, data.x, data.labels, 1, Rng(3));
    CHECK(one.per_pass_probs.vec() == one.mean_probs.vec());

    // across-run variance of the mean-entropy estimate shrinks with T
    auto entropy_estimate = [&](std::size_t passes, std::uint64_t seed) {
        UncertaintyReport rep = predict_bayes(tr.model, data.x, data.labels, passes, Rng(seed));
        double m = 0;
        for (std::size_t i = 0; i < rep.entropy.numel(); ++i)
            m += rep.entropy[i];
        return m / static_cast<double>(rep.entropy.numel());
    };
    auto variance_over_runs = [&](std::size_t passes) {
        double s = 0, sq = 0;
        const int reps = 20;
        for (int r = 0; r < reps; ++r) {
            const double v = entropy_estimate(passes, 1000 + r);
            s += v;
            sq += v * v;
        }
        s /= reps;
        return sq / reps - s * s;
    };
    CHECK(variance_over_runs(100) < variance_over_runs(1));
}

TEST_CASE("report records: one line per sample") {
    RunConfig cfg = small_mlp_config(Method::scaledrop, 3);
    cfg.train.epochs = 5;
    Dataset data = gen_synthetic(SyntheticKind::two_moons, 8, 0.1, 1);
    TrainResult tr = run_training(cfg, data);
    UncertaintyReport rep = predict_bayes(tr.model, data.x, data.labels, 4, Rng(2));
    std::string recs = rep.records(data.labels);
    std::size_t lines = 0;
    for (char ch : recs)
        lines += ch == '\n';
    CHECK(lines == 8);
    CHECK(recs.find("sample id=0 label=") == 0);
}
