#include "doctest.h"

#include "oracles.hpp"
#include "spincim/dropout.hpp"
#include "spincim/errors.hpp"
#include "spincim/model.hpp"

#include <cmath>

using namespace spincim;
namespace o = oracle;

TEST_CASE("neuron mask: degenerate probabilities and binomial band") {
    Rng rng(1);
    for (auto b : sample_neuron_mask(64, 0.0, rng))
        CHECK(b == 1);
    for (auto b : sample_neuron_mask(64, 1.0, rng))
        CHECK(b == 0);

    Rng rng2(2);
    const std::size_t n = 100000;
    auto keep = sample_neuron_mask(n, 0.5, rng2);
    double kept = 0;
    for (auto b : keep)
        kept += b;
    CHECK(o::within_binomial_band(kept / n, 0.5, n));
    CHECK(rng2.draws() == n); // exactly one consumption per unit
}

TEST_CASE("neuron mask application: inverse scaling of survivors") {
    Tensor x({2, 3}, {1, 2, 3, 4, 5, 6});
    std::vector<std::uint8_t> keep{1, 0, 1};
    Tensor out = apply_neuron_mask(x, keep, 0.5);
    CHECK(out.vec() == std::vector<double>{2, 0, 6, 8, 0, 12});
    Tensor raw = apply_neuron_mask(x, keep, 0.5, false);
    CHECK(raw.vec() == std::vector<double>{1, 0, 3, 4, 0, 6});
}

TEST_CASE("spatial mask: whole maps drop together") {
    Rng rng(3);
    // p = 0: identity over all maps
    Tensor x({1, 2 * 4}, {1, 2, 3, 4, 5, 6, 7, 8});
    auto keep0 = sample_spatial_mask(2, 0.0, rng);
    CHECK(apply_spatial_mask(x, keep0, 4, 0.0).vec() == x.vec());

    // dropping channel 0 zeroes its whole map, leaves the other intact
    std::vector<std::uint8_t> keep{0, 1};
    Tensor out = apply_spatial_mask(x, keep, 4, 0.5, false);
    CHECK(out.vec() == std::vector<double>{0, 0, 0, 0, 5, 6, 7, 8});

    // per-channel drop frequency within the binomial band
    const std::size_t trials = 10000, c = 64;
    std::vector<std::size_t> drops(c, 0);
    Rng rng2(4);
    for (std::size_t t = 0; t < trials; ++t) {
        auto k = sample_spatial_mask(c, 0.3, rng2);
        for (std::size_t i = 0; i < c; ++i)
            drops[i] += k[i] ? 0 : 1;
    }
    for (std::size_t i = 0; i < c; ++i)
        CHECK(o::within_binomial_band(static_cast<double>(drops[i]) / trials, 0.3, trials, 4.0));
}

TEST_CASE("scale dropout: modulation to identity, never zeroing") {
    Tensor x({1, 2}, {1.0, 1.0});
    Tensor s({2}, {2.0, 0.5});

    CHECK(scale_dropout_forward(x, s, false).vec() == x.vec()); // drop -> identity
    Tensor ones({2}, {1.0, 1.0});
    CHECK(scale_dropout_forward(x, ones, true).vec() == x.vec());
    CHECK(scale_dropout_forward(x, s, true).vec() == std::vector<double>{2.0, 0.5});

    Rng rng(5);
    Tensor xr = o::random_tensor({4, 6}, rng);
    Tensor sr = o::random_tensor({6}, rng);
    CHECK(scale_dropout_forward(xr, sr, false).vec() == xr.vec());
}

TEST_CASE("adaptive probability: anchors and log-linear midpoint") {
    AdaptiveSchedule sc{0.05, 0.25};
    CHECK(adaptive_p(100, sc, 100, 10000) == doctest::Approx(0.05));
    CHECK(adaptive_p(10000, sc, 100, 10000) == doctest::Approx(0.25));
    CHECK(adaptive_p(1000, sc, 100, 10000) == doctest::Approx(0.15).epsilon(1e-12));
    CHECK_THROWS_AS(adaptive_p(5, sc, 100, 10000), Error);
    CHECK_THROWS_AS(adaptive_p(100, sc, 100, 100), Error);
}

TEST_CASE("scale regularizer: centered at one, linear in lambda") {
    Tensor ones({3}, {1.0, 1.0, 1.0});
    CHECK(scale_regularizer(ones, 2.0) == 0.0);

    Tensor s({2}, {2.0, 0.0});
    CHECK(scale_regularizer(s, 1.0) == doctest::Approx(2.0));
    CHECK(scale_regularizer(s, 2.0) == doctest::Approx(2.0 * scale_regularizer(s, 1.0)));
    CHECK_THROWS_AS(scale_regularizer(s, -1.0), Error);
}

TEST_CASE("inverted normalization: affine collapse and train-mode moments") {
    InvertedNormState st(2);
    st.gamma = Tensor({2}, {3.0, -2.0});
    st.beta = Tensor({2}, {0.7, 0.4});

    // dropped masks with (0,1) running stats: identity up to eps
    Tensor x({3, 2}, {0.1, -0.2, 0.5, 0.3, -0.4, 0.8});
    Tensor out = inverted_norm_forward(x, st, false, false, false);
    for (std::size_t i = 0; i < x.numel(); ++i)
        CHECK(out[i] == doctest::Approx(x[i]).epsilon(1e-6));

    // train mode: gamma=2, beta=0, constant rows -> centered output
    InvertedNormState st2(2);
    st2.gamma = Tensor({2}, {2.0, 2.0});
    Tensor xc({4, 2}, {1, 5, 1, 5, 1, 5, 1, 5});
    Tensor out2 = inverted_norm_forward(xc, st2, true, true, true);
    for (double v : out2.vec())
        CHECK(std::abs(v) <= 1e-9);

    // moment oracle: any masks, random batch, unit moments
    Rng rng(6);
    for (int mg = 0; mg <= 1; ++mg)
        for (int mb = 0; mb <= 1; ++mb) {
            InvertedNormState st3(4);
            st3.gamma = o::random_tensor({4}, rng);
            st3.beta = o::random_tensor({4}, rng);
            Tensor xr = o::random_tensor({8, 4}, rng, 2.0);
            Tensor y = inverted_norm_forward(xr, st3, mg, mb, true);
            for (std::size_t c = 0; c < 4; ++c) {
                double m = 0, s2 = 0;
                for (std::size_t i = 0; i < 8; ++i)
                    m += y[i * 4 + c];
                m /= 8;
                for (std::size_t i = 0; i < 8; ++i) {
                    const double d = y[i * 4 + c] - m;
                    s2 += d * d;
                }
                s2 /= 8;
                CHECK(std::abs(m) <= 1e-6);
                CHECK(std::abs(s2 - 1.0) <= 1e-6);
            }
        }

    Tensor single({1, 2}, {0.0, 0.0});
    InvertedNormState st4(2);
    CHECK_THROWS_AS(inverted_norm_forward(single, st4, true, true, true), Error);
}

TEST_CASE("inverted norm reduces to plain normalization under keep masks with unit affine") {
    Rng rng(7);
    Tensor x = o::random_tensor({6, 3}, rng);
    InvertedNormState st(3); // gamma = 1, beta = 0 by construction
    Tensor got = inverted_norm_forward(x, st, true, true, true);
    Tensor mean, var;
    auto plain = ad::batch_normalize(ad::constant(x), st.eps, &mean, &var);
    for (std::size_t i = 0; i < x.numel(); ++i)
        CHECK(got[i] == doctest::Approx(plain->value[i]).epsilon(1e-12));
}

TEST_CASE("MC forward: degenerate stochasticity and determinism") {
    ModelSpec spec;
    spec.input_shape = {2};
    LayerSpec l1;
    l1.kind = LayerKind::dense;
    l1.out_features = 8;
    LayerSpec l2;
    l2.kind = LayerKind::dense;
    l2.out_features = 2;
    spec.layers = {l1, l2};
    spec.method = Method::scaledrop;
    spec.binarize = BinarizePolicy::none;
    spec.dropout_p = 0.0; // degenerate: all passes identical, zero draws

    Model model(spec, Rng(1).child(stream::init));
    Rng data_rng(2);
    Tensor x = o::random_tensor({5, 2}, data_rng);

    Rng p1 = Rng(3).child(stream::eval, 0);
    Rng p2 = Rng(3).child(stream::eval, 1);
    EventCounts ev;
    Tensor a = model.forward_infer(x, &p1, ExecMode::math, nullptr, &ev);
    Tensor b = model.forward_infer(x, &p2, ExecMode::math, nullptr, &ev);
    CHECK(a.vec() == b.vec());
    CHECK(ev.rng_bits == 0);

    // stochastic model: fixed seed, run-to-run identical
    spec.dropout_p = 0.5;
    Model model2(spec, Rng(1).child(stream::init));
    Rng q1 = Rng(4).child(stream::eval, 7);
    Rng q2 = Rng(4).child(stream::eval, 7);
    Tensor r1 = model2.forward_infer(x, &q1, ExecMode::math);
    Tensor r2 = model2.forward_infer(x, &q2, ExecMode::math);
    CHECK(r1.vec() == r2.vec());
}

TEST_CASE("instrumented RNG consumption per pass matches the site counts") {
    // 3 dense blocks; hidden sites for neuron dropout are blocks 0 and 1
    ModelSpec spec;
    spec.input_shape = {4};
    LayerSpec a, b, c;
    a.out_features = 6;
    b.out_features = 5;
    c.out_features = 3;
    spec.layers = {a, b, c};
    spec.binarize = BinarizePolicy::none;
    spec.dropout_p = 0.3;

    Rng data_rng(2);
    Tensor x = o::random_tensor({2, 4}, data_rng);

    for (Method m : {Method::spindrop, Method::spatial, Method::scaledrop, Method::affine}) {
        spec.method = m;
        Model model(spec, Rng(1).child(stream::init));
        Rng pass = Rng(9).child(stream::eval, 0);
        const std::uint64_t before = pass.draws();
        EventCounts ev;
        model.forward_infer(x, &pass, ExecMode::math, nullptr, &ev);
        (void)before;
        std::uint64_t expect = 0;
        switch (m) {
        case Method::spindrop: expect = 6 + 5; break;        // hidden activations
        case Method::spatial: expect = 6 + 5; break;         // feature-wise on dense
        case Method::scaledrop: expect = 3; break;           // one per layer
        case Method::affine: expect = 6; break;              // two per layer
        default: break;
        }
        CHECK(ev.rng_bits == expect);
    }
}
