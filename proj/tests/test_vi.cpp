#include "doctest.h"

#include "oracles.hpp"
#include "spincim/errors.hpp"
#include "spincim/vi.hpp"

#include <cmath>

using namespace spincim;
namespace o = oracle;

TEST_CASE("sample_scale: degenerate posterior, moments, determinism") {
    ScalePosterior tight(4, 2.5, 1e-9);
    Rng rng(1);
    Tensor s = sample_scale(tight, rng);
    for (double v : s.vec())
        CHECK(v == doctest::Approx(2.5).epsilon(1e-6));

    ScalePosterior wide(1, 0.0, 1.0);
    Rng rng2(2);
    double sum = 0, sq = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double v = sample_scale(wide, rng2)[0];
        sum += v;
        sq += v * v;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(std::abs(mean) <= 0.01);
    CHECK(std::abs(var - 1.0) <= 0.02);

    Rng a(3), b(3);
    CHECK(sample_scale(wide, a).vec() == sample_scale(wide, b).vec());
}

TEST_CASE("kl_gauss: identity, closed form, nonnegativity") {
    Tensor mu({3}, {1.0, -0.5, 2.0});
    Tensor sigma({3}, {0.4, 1.1, 0.9});
    // q == p componentwise is only expressible against a scalar prior
    Tensor mu1({1}, {1.0});
    Tensor sg1({1}, {1.0});
    CHECK(kl_gauss(mu1, sg1, 1.0, 1.0) == doctest::Approx(0.0).epsilon(1e-15));

    Tensor mu2({1}, {1.5});
    CHECK(kl_gauss(mu2, sg1, 1.0, 1.0) == doctest::Approx(0.125).epsilon(1e-12));

    Rng rng(4);
    for (int k = 0; k < 1000; ++k) {
        Tensor m({2}, {rng.normal(), rng.normal()});
        Tensor s({2}, {0.1 + rng.uniform(), 0.1 + rng.uniform()});
        CHECK(kl_gauss(m, s, rng.normal(), 0.1 + rng.uniform()) >= 0.0);
    }

    Tensor bad({1}, {-0.1});
    CHECK_THROWS_AS(kl_gauss(mu1, bad, 0.0, 1.0), Error);
    CHECK_THROWS_AS(kl_gauss(mu1, sg1, 0.0, 0.0), Error);
}

TEST_CASE("elbo assembly") {
    CHECK(elbo_loss(0.7, 3.0, 0.0, 4) == doctest::Approx(0.7));
    CHECK(elbo_loss(0.7, 0.0, 2.0, 4) == doctest::Approx(0.7));
    CHECK(elbo_loss(1.0, 2.0, 0.5, 4) == doctest::Approx(1.25));
    CHECK_THROWS_AS(elbo_loss(1.0, 1.0, -0.5, 4), Error);
    CHECK_THROWS_AS(elbo_loss(1.0, 1.0, 0.5, 0), Error);
}

TEST_CASE("reparameterized ELBO gradients match finite differences with frozen noise") {
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        Rng t = rng.child(trial);
        const std::size_t c = 3;
        auto mu = ad::leaf(o::random_tensor({c}, t, 0.5));
        auto rho = ad::leaf(o::random_tensor({c}, t, 0.5));
        Tensor eps = o::random_tensor({c}, t);
        Tensor x = o::random_tensor({4, c}, t);
        std::vector<int> labels{0, 2, 1, 0};
        PriorSpec prior;

        auto f = [&] {
            auto s = sample_scale_graph(mu, rho, eps);
            auto logits = ad::mul_rowvec(ad::constant(x), s);
            auto ce = ad::softmax_ce(logits, labels);
            auto kl = kl_gauss_graph(mu, rho, prior);
            return elbo_loss_graph(ce, kl, 1.0, 8);
        };
        CHECK(ad::grad_check(f, {mu, rho}, 1e-5) <= 1e-4);
    }
}

TEST_CASE("bank construction: degenerate, statistical, saturated") {
    // degenerate posterior with mu on a grid point
    ScalePosterior degen(2, 0.5, 1e-12);
    Rng rng(6);
    CrossbarBank bank = build_bank(degen, 1, 10, 0.0, 1.0, rng);
    CHECK(bank.level_index == std::vector<std::uint8_t>{5, 5});
    CHECK(bank.dequant(0, 0) == doctest::Approx(0.5));

    // large bank: per-channel mean within one quantization step of mu
    ScalePosterior post(3, 1.0, 0.08);
    Rng rng2(7);
    const std::size_t m_count = 10000;
    CrossbarBank big = build_bank(post, m_count, 15, 0.0, 2.0, rng2);
    const double step = 2.0 / 15;
    for (std::size_t c = 0; c < 3; ++c) {
        double mean = 0;
        for (std::size_t m = 0; m < m_count; ++m)
            mean += big.dequant(m, c);
        mean /= m_count;
        CHECK(std::abs(mean - 1.0) <= step);
    }

    // empirical bank variance tracks the posterior variance up to
    // quantization-step effects
    {
        const double sigma = 0.16;
        ScalePosterior p2(2, 1.0, sigma);
        Rng rv(17);
        CrossbarBank vb = build_bank(p2, 20000, 63, 0.0, 2.0, rv);
        const double vstep = 2.0 / 63.0;
        for (std::size_t c = 0; c < 2; ++c) {
            double mean = 0, sq = 0;
            for (std::size_t m = 0; m < vb.instance_count; ++m) {
                const double v = vb.dequant(m, c);
                mean += v;
                sq += v * v;
            }
            mean /= vb.instance_count;
            const double var = sq / vb.instance_count - mean * mean;
            CHECK(std::abs(var - sigma * sigma) <= vstep * vstep + 0.1 * sigma * sigma);
        }
    }

    // all mu below lo saturates at index 0
    ScalePosterior low(2, -5.0, 1e-12);
    Rng rng3(8);
    CrossbarBank sat = build_bank(low, 4, 7, 0.0, 1.0, rng3);
    for (auto idx : sat.level_index)
        CHECK(idx == 0);

    CHECK_THROWS_AS(build_bank(post, 0, 15, 0.0, 1.0, rng3), Error);
    CHECK_THROWS_AS(build_bank(post, 1, 15, 1.0, 1.0, rng3), Error);
}

TEST_CASE("arbiter: one-hot invariant and uniformity") {
    Rng rng(9);
    auto sel1 = arbiter_select(1, rng);
    CHECK(sel1 == std::vector<std::uint8_t>{1});

    for (int k = 0; k < 200; ++k) {
        auto sel = arbiter_select(8, rng);
        int pop = 0;
        for (auto b : sel)
            pop += b;
        CHECK(pop == 1);
    }

    // chi-square over M=8 with 1e5 draws below the 0.999 quantile (df=7)
    Rng rng2(10);
    std::vector<std::size_t> counts(8, 0);
    const std::size_t draws = 100000;
    for (std::size_t k = 0; k < draws; ++k) {
        auto sel = arbiter_select(8, rng2);
        for (std::size_t i = 0; i < 8; ++i)
            if (sel[i])
                ++counts[i];
    }
    CHECK(o::chi_square_uniform(counts, draws) < 24.321886347856854);

    CHECK_THROWS_AS(arbiter_select(0, rng2), Error);
}

TEST_CASE("bank_forward: selection semantics and quantization bound") {
    Rng rng(11);
    Tensor x = o::random_tensor({3, 4}, rng);

    // sigma ~ 0: every instance identical, output independent of selection
    // (mu sits on a grid point, away from rounding ties)
    ScalePosterior degen(4, 0.7, 1e-12);
    Rng r1(12);
    CrossbarBank bank = build_bank(degen, 5, 15, 0.0, 1.5, r1);
    std::vector<std::uint8_t> s0{1, 0, 0, 0, 0}, s3{0, 0, 0, 1, 0};
    CHECK(bank_forward(x, bank, s0).vec() == bank_forward(x, bank, s3).vec());

    // selecting instance k equals applying instance k's dequantized scales
    ScalePosterior post(4, 1.0, 0.2);
    Rng r2(13);
    CrossbarBank b2 = build_bank(post, 6, 15, 0.0, 2.0, r2);
    std::vector<std::uint8_t> sel(6, 0);
    sel[4] = 1;
    Tensor got = bank_forward(x, b2, sel);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t c = 0; c < 4; ++c)
            CHECK(got[i * 4 + c] == doctest::Approx(x[i * 4 + c] * b2.dequant(4, c)).epsilon(1e-12));

    // finer grids converge to the unquantized sample within half a step
    ScalePosterior p3(2, 1.0, 0.1);
    for (int levels : {15, 63, 255}) {
        Rng r3(14); // same draws per grid
        CrossbarBank b3 = build_bank(p3, 1, levels, 0.0, 2.0, r3);
        Rng r4(14);
        Tensor s = sample_scale(p3, r4);
        const double step = 2.0 / levels;
        for (std::size_t c = 0; c < 2; ++c)
            CHECK(std::abs(b3.dequant(0, c) - s[c]) <= step / 2 + 1e-12);
    }

    std::vector<std::uint8_t> malformed{1, 1, 0, 0, 0, 0};
    CHECK_THROWS_AS(bank_forward(x, b2, malformed), Error);
}

TEST_CASE("two-crossbar decomposition: MAC then scale equals the monolithic product") {
    Rng rng(15);
    Tensor w = o::random_pm1({16, 4}, rng);
    Tensor x = o::random_pm1({6, 16}, rng);
    Tensor s({4}, {1.25, 0.75, 1.0, 0.5});

    // monolithic: x (W .* s broadcast over rows)
    Tensor ws = w;
    for (std::size_t r = 0; r < 16; ++r)
        for (std::size_t c = 0; c < 4; ++c)
            ws.at(r, c) *= s[c];
    Tensor mono = ad::mm(x, ws);

    // decomposed: binary MAC, then per-column scale modulation
    Tensor mac = ad::mm(x, w);
    for (std::size_t r = 0; r < 6; ++r)
        for (std::size_t c = 0; c < 4; ++c)
            mac.at(r, c) *= s[c];
    for (std::size_t i = 0; i < mono.numel(); ++i)
        CHECK(std::abs(mono[i] - mac[i]) <= 1e-10);
}
