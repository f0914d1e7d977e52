#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "xaigan/nn.hpp"

using namespace xaigan;
using namespace xaigan::nn;
using xaigan::testutil::random_tensor;

TEST_CASE("init_weights is deterministic per seed") {
    ConvSpec spec{3, 8, 3, 1, 1, 0, false, false, Activation::none};
    Conv2dLayer a = make_conv(spec, 42);
    Conv2dLayer b = make_conv(spec, 42);
    Conv2dLayer c = make_conv(spec, 43);
    CHECK(a.weight.data() == b.weight.data());
    CHECK(a.weight.data() != c.weight.data());
    for (Scalar v : a.bias.data()) CHECK(v == 0.0);
}

TEST_CASE("init_weights draws from normal(0, 0.02)") {
    // 100*100 1x1 kernel = 10000 weights
    ConvSpec spec{100, 100, 1, 1, 0, 0, false, false, Activation::none};
    Conv2dLayer layer = make_conv(spec, 7);
    double mean = 0;
    for (Scalar v : layer.weight.data()) mean += v;
    mean /= static_cast<double>(layer.weight.numel());
    double var = 0;
    for (Scalar v : layer.weight.data()) var += (v - mean) * (v - mean);
    var /= static_cast<double>(layer.weight.numel());
    CHECK(std::abs(mean) <= 0.001);
    CHECK(std::abs(std::sqrt(var) - 0.02) <= 0.002);
}

TEST_CASE("conv block output sizes") {
    Rng rng(1);
    SUBCASE("k3 s2 p1 halves") {
        Conv2dLayer l = make_conv({3, 8, 3, 2, 1, 0, false, true, Activation::leaky_relu_02}, 1);
        Tensor y = l.forward(random_tensor(rng, {1, 3, 16, 16}, -1, 1, false));
        CHECK(y.shape() == Shape{1, 8, 8, 8});
        CHECK(l.spec.out_size(16) == 8);
    }
    SUBCASE("k7 s1 p3 preserves") {
        Conv2dLayer l = make_conv({3, 8, 7, 1, 3, 0, false, true, Activation::leaky_relu_02}, 1);
        Tensor y = l.forward(random_tensor(rng, {1, 3, 16, 16}, -1, 1, false));
        CHECK(y.shape() == Shape{1, 8, 16, 16});
    }
    SUBCASE("transposed k3 s2 p1 op1 doubles") {
        Conv2dLayer l = make_conv({8, 4, 3, 2, 1, 1, true, true, Activation::relu}, 1);
        Tensor y = l.forward(random_tensor(rng, {1, 8, 8, 8}, -1, 1, false));
        CHECK(y.shape() == Shape{1, 4, 16, 16});
        CHECK(l.spec.out_size(8) == 16);
    }
}

TEST_CASE("shape contracts hold for all sizes divisible by 8") {
    Rng rng(2);
    for (int size : {8, 16, 24, 32}) {
        Conv2dLayer down = make_conv({2, 4, 3, 2, 1, 0, false, true, Activation::leaky_relu_02}, 3);
        Conv2dLayer keep = make_conv({2, 2, 7, 1, 3, 0, false, false, Activation::none}, 4);
        Conv2dLayer up = make_conv({2, 2, 3, 2, 1, 1, true, false, Activation::relu}, 5);
        Tensor x = random_tensor(rng, {1, 2, size, size}, -1, 1, false);
        CHECK(down.forward(x).shape() == Shape{1, 4, size / 2, size / 2});
        CHECK(keep.forward(x).shape() == Shape{1, 2, size, size});
        CHECK(up.forward(x).shape() == Shape{1, 2, 2 * size, 2 * size});
    }
}

TEST_CASE("conv block rejects channel mismatch") {
    Conv2dLayer l = make_conv({3, 8, 3, 1, 1, 0, false, false, Activation::none}, 1);
    Tensor x = Tensor::zeros({1, 4, 8, 8});
    CHECK_THROWS_WITH_AS(l.forward(x), doctest::Contains("channels"), std::invalid_argument);
}

TEST_CASE("zero-initialized residual block is the identity") {
    ResidualBlock block = make_residual_block(4, 9);
    for (Tensor* t : {&block.conv1.weight, &block.conv1.bias, &block.conv2.weight,
                      &block.conv2.bias})
        for (Scalar& v : t->data()) v = 0.0;
    Rng rng(3);
    Tensor x = random_tensor(rng, {1, 4, 8, 8}, -1, 1, false);
    Tensor y = block.forward(x);
    CHECK(y.data() == x.data());
}

TEST_CASE("residual block preserves shape") {
    ResidualBlock block = make_residual_block(6, 11);
    Rng rng(4);
    for (int size : {4, 8}) {
        Tensor x = random_tensor(rng, {2, 6, size, size}, -1, 1, false);
        CHECK(block.forward(x).shape() == x.shape());
    }
}

TEST_CASE("zero-init residual gradient is all ones") {
    ResidualBlock block = make_residual_block(3, 13);
    for (Tensor* t : {&block.conv1.weight, &block.conv1.bias, &block.conv2.weight,
                      &block.conv2.bias})
        for (Scalar& v : t->data()) v = 0.0;
    Rng rng(5);
    Tensor x = testutil::random_tensor(rng, {1, 3, 4, 4});
    backward(sum(block.forward(x)));
    for (Scalar g : x.grad()) CHECK(g == doctest::Approx(1.0));
}

TEST_CASE("residual block rejects wrong channel count") {
    ResidualBlock block = make_residual_block(4, 1);
    CHECK_THROWS_AS(block.forward(Tensor::zeros({1, 5, 8, 8})), std::invalid_argument);
}

TEST_CASE("instance norm output is standardized per channel") {
    Rng rng(6);
    Tensor x = random_tensor(rng, {2, 3, 12, 12}, -2.0, 2.0, false);
    Tensor y = instance_norm(x);
    const int plane = 12 * 12;
    for (int i = 0; i < 2 * 3; ++i) {
        double mean = 0;
        for (int j = 0; j < plane; ++j) mean += y.data()[static_cast<size_t>(i * plane + j)];
        mean /= plane;
        double var = 0;
        for (int j = 0; j < plane; ++j) {
            const double d = y.data()[static_cast<size_t>(i * plane + j)] - mean;
            var += d * d;
        }
        var /= plane;
        CHECK(std::abs(mean) <= 1e-5);
        CHECK(std::abs(var - 1.0) <= 1e-3);
    }
}
