#include "doctest.h"

#include "oracles.hpp"
#include "spincim/autodiff.hpp"
#include "spincim/binarize.hpp"
#include "spincim/errors.hpp"

#include <cmath>
#include <limits>

using namespace spincim;
namespace o = oracle;

TEST_CASE("binarize: sign with tie to +1") {
    Tensor t({3}, {0.3, -0.2, 0.0});
    CHECK(binarize(t).vec() == std::vector<double>{1, -1, 1});

    Tensor pos({4}, {0.1, 5.0, 2.0, 0.0});
    for (double v : binarize(pos).vec())
        CHECK(v == 1.0);

    Tensor bad({1}, {std::numeric_limits<double>::quiet_NaN()});
    CHECK_THROWS_AS(binarize(bad), Error);
}

TEST_CASE("binarize agrees with the elementwise sign oracle and is idempotent") {
    Rng rng(3);
    Tensor x = o::random_tensor({257}, rng);
    Tensor b = binarize(x);
    for (std::size_t i = 0; i < x.numel(); ++i)
        CHECK(b[i] == (x[i] >= 0.0 ? 1.0 : -1.0));
    CHECK(binarize(b).vec() == b.vec());
}

TEST_CASE("ste_backward: pass, clip and mask oracle") {
    Tensor g({3}, {1.0, 2.0, 3.0});
    Tensor inside({3}, {0.5, -0.5, 0.0});
    CHECK(ste_backward(g, inside, 1.0).vec() == g.vec());

    Tensor outside({3}, {2.0, 2.0, 2.0});
    for (double v : ste_backward(g, outside, 1.0).vec())
        CHECK(v == 0.0);

    Rng rng(17);
    Tensor latent = o::random_tensor({64}, rng, 1.5);
    Tensor grad = o::random_tensor({64}, rng);
    Tensor out = ste_backward(grad, latent, 1.0);
    for (std::size_t i = 0; i < latent.numel(); ++i)
        CHECK(out[i] == (std::abs(latent[i]) <= 1.0 ? grad[i] : 0.0));

    CHECK_THROWS_AS(ste_backward(g, inside, 0.0), Error);
}

TEST_CASE("ste is the exact gradient of the hard-tanh surrogate") {
    Rng rng(23);
    // points kept away from the clip boundary so finite differences see
    // a smooth function
    auto w = ad::leaf(Tensor({6}, {0.4, -0.8, 1.7, -2.3, 0.05, 0.9}));
    auto f = [&] { return ad::sum(ad::square(ad::hardtanh(w, 1.0))); };
    CHECK(ad::grad_check(f, {w}, 1e-6) <= 1e-8);

    // sign_ste backward equals ste_backward on the same latent
    Tensor grad = o::random_tensor({6}, rng);
    ad::zero_grad(w);
    auto s = ad::sign_ste(w, 1.0);
    s->ensure_grad();
    for (std::size_t i = 0; i < 6; ++i)
        s->grad[i] = grad[i];
    s->backward(*s);
    Tensor expect = ste_backward(grad, w->value, 1.0);
    CHECK(w->grad.vec() == expect.vec());
}

TEST_CASE("BinaryWeight keeps its sign pattern in step with the latent") {
    Rng rng(29);
    BinaryWeight bw(o::random_tensor({4, 3}, rng));
    CHECK(bw.bin.vec() == binarize(bw.latent).vec());
    for (auto& v : bw.latent.vec())
        v = -v;
    bw.refresh();
    CHECK(bw.bin.vec() == binarize(bw.latent).vec());
}

TEST_CASE("xnor-popcount dot: hand cases") {
    BitVec x = BitVec::from_pm1(std::vector<double>{1, -1, 1});
    BitVec w = BitVec::from_pm1(std::vector<double>{1, 1, -1});
    CHECK(xnor_popcount_dot(x, w) == -1);

    std::vector<double> same(8, 1.0);
    BitVec s = BitVec::from_pm1(same);
    CHECK(xnor_popcount_dot(s, s) == 8);

    BitVec short_vec(4);
    CHECK_THROWS_AS(xnor_popcount_dot(x, short_vec), Error);
}

TEST_CASE("xnor-popcount dot equals the integer dot oracle (exhaustive small, random large)") {
    for (std::size_t n = 1; n <= 8; ++n) {
        for (std::uint32_t xm = 0; xm < (1u << n); ++xm)
            for (std::uint32_t wm = 0; wm < (1u << n); ++wm) {
                std::vector<int> xi(n), wi(n);
                BitVec xb(n), wb(n);
                for (std::size_t i = 0; i < n; ++i) {
                    xi[i] = (xm >> i) & 1 ? 1 : -1;
                    wi[i] = (wm >> i) & 1 ? 1 : -1;
                    xb.set(i, xi[i] > 0);
                    wb.set(i, wi[i] > 0);
                }
                REQUIRE(xnor_popcount_dot(xb, wb) == o::pm1_dot(xi, wi));
            }
    }

    Rng rng(41);
    for (int trial = 0; trial < 32; ++trial) {
        const std::size_t n = 1024;
        std::vector<int> xi(n), wi(n);
        BitVec xb(n), wb(n);
        for (std::size_t i = 0; i < n; ++i) {
            xi[i] = rng.bernoulli(0.5) ? 1 : -1;
            wi[i] = rng.bernoulli(0.5) ? 1 : -1;
            xb.set(i, xi[i] > 0);
            wb.set(i, wi[i] > 0);
        }
        REQUIRE(xnor_popcount_dot(xb, wb) == o::pm1_dot(xi, wi));
    }
}
