#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "test_util.hpp"
#include "xaigan/explain.hpp"

using namespace xaigan;
using namespace xaigan::explain;
using xaigan::testutil::random_tensor;

TEST_CASE("lambda_weight endpoints and hand values") {
    CHECK(lambda_weight(0.0, 2) == 1.0);
    CHECK(lambda_weight(0.5, 2) == 0.0);
    CHECK(lambda_weight(0.25, 2) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(lambda_weight(0.9, 2) == 0.0);
    CHECK(lambda_weight(0.0, 4) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("lambda_weight is non-increasing and vanishes past 0.5") {
    double prev = lambda_weight(0.0, 2);
    for (int i = 1; i <= 100; ++i) {
        const double x = 0.005 * i;
        const double v = lambda_weight(x, 2);
        CHECK(v <= prev + 1e-15);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        prev = v;
    }
    for (double x : {0.5, 0.6, 1.0, 7.5}) CHECK(lambda_weight(x, 2) == 0.0);
    for (int gamma : {2, 4, 6}) {
        double p = lambda_weight(0.0, gamma);
        for (int i = 1; i <= 50; ++i) {
            const double v = lambda_weight(0.01 * i, gamma);
            CHECK(v <= p + 1e-15);
            p = v;
        }
    }
}

TEST_CASE("lambda_weight rejects odd or non-positive gamma") {
    CHECK_THROWS_AS(lambda_weight(0.1, 3), std::invalid_argument);
    CHECK_THROWS_AS(lambda_weight(0.1, 1), std::invalid_argument);
    CHECK_THROWS_AS(lambda_weight(0.1, 0), std::invalid_argument);
    CHECK_THROWS_AS(lambda_weight(0.1, -2), std::invalid_argument);
    LambdaParams bad;
    bad.gamma = 3;
    CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("gamma"), std::invalid_argument);
    bad.gamma = 2;
    bad.alpha = 0.0;
    CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("alpha"), std::invalid_argument);
}

namespace {

// critic that is a single dense linear map of the flattened image
models::Critic linear_critic(const Tensor& w_col) {
    models::Critic c;
    c.params = {w_col};
    c.forward = [w_col](const Tensor& x) {
        Tensor flat = reshape(x, {1, static_cast<int>(x.numel())});
        return matmul(flat, w_col);
    };
    return c;
}

}  // namespace

TEST_CASE("saliency of a linear critic is the normalized channel-max |w|") {
    Rng rng(101);
    const int h = 6, w = 6;
    Tensor weights = random_tensor(rng, {3 * h * w, 1}, -1.0, 1.0, true);
    models::Critic critic = linear_critic(weights);
    Tensor img = random_tensor(rng, {3, h, w}, -1, 1, false);

    ExplanationMap map = compute_saliency(critic, img, 1.0);
    REQUIRE(map.values.shape() == Shape{1, h, w});

    // analytic: |grad| ∝ |w| per flattened pixel, channel-max, peak-normalized
    std::vector<Scalar> expect(static_cast<size_t>(h) * w, 0.0);
    for (int c = 0; c < 3; ++c)
        for (int j = 0; j < h * w; ++j)
            expect[static_cast<size_t>(j)] =
                std::max(expect[static_cast<size_t>(j)],
                         std::abs(weights.data()[static_cast<size_t>(c * h * w + j)]));
    Scalar peak = 0;
    for (Scalar v : expect) peak = std::max(peak, v);
    for (Scalar& v : expect) v /= peak;
    for (size_t i = 0; i < expect.size(); ++i)
        CHECK(map.values.data()[i] == doctest::Approx(expect[i]).epsilon(1e-10));
}

TEST_CASE("constant critic yields an all-zero map") {
    Tensor weights = Tensor::zeros({3 * 16, 1}, true);
    models::Critic critic = linear_critic(weights);
    Rng rng(3);
    Tensor img = random_tensor(rng, {3, 4, 4}, -1, 1, false);
    ExplanationMap map = compute_saliency(critic, img, 1.0);
    for (Scalar v : map.values.data()) CHECK(v == 0.0);
}

TEST_CASE("saliency values live in [0,1] with peak 1") {
    models::Discriminator d = models::build_discriminator(4, 5);
    Rng rng(7);
    Tensor img = random_tensor(rng, {2, 3, 16, 16}, -1, 1, false);
    ExplanationMap map = compute_saliency(models::as_critic(d), img, 1.0);
    REQUIRE(map.values.shape() == Shape{2, 1, 16, 16});
    for (int n = 0; n < 2; ++n) {
        Scalar peak = 0;
        for (int j = 0; j < 16 * 16; ++j) {
            const Scalar v = map.values.data()[static_cast<size_t>(n * 256 + j)];
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
            peak = std::max(peak, v);
        }
        CHECK(peak == 1.0);
    }
}

TEST_CASE("saliency leaves critic parameters and their grads untouched") {
    models::Discriminator d = models::build_discriminator(4, 11);
    std::vector<std::vector<Scalar>> before;
    for (const Tensor& p : d.param_tensors()) before.push_back(p.data());
    Rng rng(13);
    Tensor img = random_tensor(rng, {1, 3, 16, 16}, -1, 1, false);
    compute_saliency(models::as_critic(d), img, 1.0);
    auto params = d.param_tensors();
    for (size_t i = 0; i < params.size(); ++i) {
        CHECK(params[i].data() == before[i]);
        CHECK_FALSE(params[i].has_grad());
    }
}

TEST_CASE("saliency matches finite differences on a two-layer critic") {
    Rng rng(17);
    const int hw = 8;
    nn::Conv2dLayer l1 = nn::make_conv({3, 4, 3, 1, 1, 0, false, false, nn::Activation::tanh}, 19);
    nn::Conv2dLayer l2 = nn::make_conv({4, 1, 3, 1, 1, 0, false, false, nn::Activation::none}, 23);
    // widen the weights so gradients are well above fd noise
    for (Scalar& v : l1.weight.data()) v *= 20.0;
    for (Scalar& v : l2.weight.data()) v *= 20.0;
    models::Critic critic;
    critic.params = {l1.weight, l1.bias, l2.weight, l2.bias};
    critic.forward = [&](const Tensor& x) { return l2.forward(l1.forward(x)); };

    Tensor img = random_tensor(rng, {1, 3, hw, hw}, -1, 1, false);
    ExplanationMap map = compute_saliency(critic, img, 1.0);

    const double target = 1.0;
    Tensor fd = finite_difference_grad(
        [&](const Tensor& probe) {
            NoGradGuard ng;
            const double out = mean(critic.forward(probe)).item();
            return (out - target) * (out - target);
        },
        img, 1e-5);

    // same reduction pipeline on the fd estimate
    std::vector<Scalar> expect(static_cast<size_t>(hw) * hw, 0.0);
    for (int c = 0; c < 3; ++c)
        for (int j = 0; j < hw * hw; ++j)
            expect[static_cast<size_t>(j)] = std::max(
                expect[static_cast<size_t>(j)], std::abs(fd.data()[static_cast<size_t>(c * hw * hw + j)]));
    Scalar peak = 0;
    for (Scalar v : expect) peak = std::max(peak, v);
    REQUIRE(peak > 0);
    for (Scalar& v : expect) v /= peak;
    for (size_t i = 0; i < expect.size(); ++i)
        CHECK(map.values.data()[i] == doctest::Approx(expect[i]).epsilon(1e-6));
}

TEST_CASE("saliency rejects non-finite gradients") {
    Tensor weights = Tensor::full({3 * 16, 1}, 1.0, true);
    weights.data()[0] = std::numeric_limits<double>::infinity();
    models::Critic critic = linear_critic(weights);
    Rng rng(41);
    Tensor img = random_tensor(rng, {3, 4, 4}, -1, 1, false);
    CHECK_THROWS_WITH_AS(compute_saliency(critic, img, 1.0), doctest::Contains("non-finite"),
                         std::runtime_error);
}

TEST_CASE("saliency refuses to run under a no-grad guard") {
    models::Discriminator d = models::build_discriminator(4, 43);
    Rng rng(47);
    Tensor img = random_tensor(rng, {1, 3, 16, 16}, -1, 1, false);
    NoGradGuard ng;
    CHECK_THROWS_AS(compute_saliency(models::as_critic(d), img, 1.0), std::logic_error);
}

TEST_CASE("apply_gradient_mask hand cases") {
    ExplanationMap ones{Tensor::full({1, 1, 2}, 1.0), MapSource::primary};
    Tensor grad = Tensor::from_data({1, 1, 1, 2}, {1.0, 2.0});
    Tensor out = apply_gradient_mask(grad, ones, 0.2, 1.0);
    CHECK(out.data()[0] == doctest::Approx(1.2).epsilon(1e-12));
    CHECK(out.data()[1] == doctest::Approx(2.4).epsilon(1e-12));

    SUBCASE("lambda zero is a bit-exact identity") {
        Tensor same = apply_gradient_mask(grad, ones, 0.2, 0.0);
        CHECK(same.data() == grad.data());
    }
    SUBCASE("zero map is a bit-exact identity") {
        ExplanationMap zeros{Tensor::zeros({1, 1, 2}), MapSource::primary};
        Tensor same = apply_gradient_mask(grad, zeros, 0.2, 1.0);
        CHECK(same.data() == grad.data());
    }
}

TEST_CASE("apply_gradient_mask matches the written-out formula and keeps signs") {
    Rng rng(29);
    for (int trial = 0; trial < 20; ++trial) {
        const int h = static_cast<int>(rng.uniform_int(1, 16));
        const int w = static_cast<int>(rng.uniform_int(1, 16));
        Tensor g = random_tensor(rng, {2, 3, h, w}, -2, 2, false);
        Tensor m = random_tensor(rng, {2, 1, h, w}, 0, 1, false);
        const double alpha = 0.05 + 0.2 * rng.uniform();
        const double lam = rng.uniform();
        Tensor out = apply_gradient_mask(g, {m, MapSource::primary}, alpha, lam);
        for (int n = 0; n < 2; ++n)
            for (int c = 0; c < 3; ++c)
                for (int j = 0; j < h * w; ++j) {
                    const size_t gi = static_cast<size_t>((n * 3 + c) * h * w + j);
                    const size_t mi = static_cast<size_t>(n * h * w + j);
                    const double hand =
                        g.data()[gi] + alpha * lam * (g.data()[gi] * m.data()[mi]);
                    CHECK(std::abs(out.data()[gi] - hand) <= 1e-12);
                    // multiplier stays in [1, 1+alpha]: signs never flip
                    CHECK(out.data()[gi] * g.data()[gi] >= 0.0);
                }
    }
}

TEST_CASE("gradient mask hook plugs into backward") {
    Tensor x = Tensor::from_data({1, 3, 1, 2}, {1, 2, 3, 4, 5, 6}, true);
    Tensor y = scale(x, 2.0);
    ExplanationMap m{Tensor::from_data({1, 1, 1, 2}, {1.0, 0.5}), MapSource::primary};
    register_grad_hook(y, make_gradient_mask_hook(m, 0.1, 1.0, y.shape()));
    backward(sum(y));
    // d(sum)/dy = 1, hook scales by (1 + 0.1*m), then *2 through scale
    for (int c = 0; c < 3; ++c) {
        CHECK(x.grad()[static_cast<size_t>(c * 2)] == doctest::Approx(2.0 * 1.1).epsilon(1e-12));
        CHECK(x.grad()[static_cast<size_t>(c * 2 + 1)] ==
              doctest::Approx(2.0 * 1.05).epsilon(1e-12));
    }
}

TEST_CASE("compose_input_mask hand cases") {
    ExplanationMap m{Tensor::full({1, 2, 2}, 1.0), MapSource::mask};
    Tensor noise = Tensor::full({1, 2, 2}, 1.0);
    Tensor up = compose_input_mask(noise, m, 0.5, MaskSign::suppress);
    for (Scalar v : up.data()) CHECK(v == doctest::Approx(1.5).epsilon(1e-12));
    Tensor down = compose_input_mask(noise, m, 0.5, MaskSign::exaggerate);
    for (Scalar v : down.data()) CHECK(v == doctest::Approx(0.5).epsilon(1e-12));

    SUBCASE("lambda_b zero returns the noise bit-exactly") {
        Rng rng(31);
        Tensor n2 = random_tensor(rng, {1, 4, 4}, 0.9, 1.1, false);
        Tensor out = compose_input_mask(n2, {Tensor::full({1, 4, 4}, 0.7), MapSource::mask}, 0.0,
                                        MaskSign::suppress);
        CHECK(out.data() == n2.data());
    }
    SUBCASE("clamped to [0,2]") {
        Tensor bright = Tensor::full({1, 1, 1}, 1.9);
        Tensor out = compose_input_mask(bright, {Tensor::full({1, 1, 1}, 1.0), MapSource::mask},
                                        0.5, MaskSign::suppress);
        CHECK(out.data()[0] == 2.0);
        Tensor dim = Tensor::full({1, 1, 1}, 0.1);
        Tensor out2 = compose_input_mask(dim, {Tensor::full({1, 1, 1}, 1.0), MapSource::mask}, 0.5,
                                         MaskSign::exaggerate);
        CHECK(out2.data()[0] == 0.0);
    }
}

TEST_CASE("composed mask differs from noise exactly where the map is positive") {
    Rng rng(37);
    Tensor noise = random_tensor(rng, {1, 8, 8}, 0.9, 1.1, false);
    std::vector<Scalar> mv(64, 0.0);
    for (int i = 0; i < 64; i += 3) mv[static_cast<size_t>(i)] = 0.25 + 0.75 * rng.uniform();
    ExplanationMap m{Tensor::from_data({1, 8, 8}, mv), MapSource::mask};
    Tensor out = compose_input_mask(noise, m, 0.5, MaskSign::suppress);
    for (size_t i = 0; i < 64; ++i) {
        if (mv[i] > 0.0)
            CHECK(out.data()[i] != noise.data()[i]);
        else
            CHECK(out.data()[i] == noise.data()[i]);
    }
}
