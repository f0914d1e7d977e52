#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_util.hpp"
#include "xaigan/models.hpp"
#include "xaigan/tensor.hpp"

using namespace xaigan;
using namespace xaigan::testutil;

TEST_CASE("add forward") {
    Tensor a = Tensor::from_data({2}, {1, 2});
    Tensor b = Tensor::from_data({2}, {3, 4});
    Tensor c = apply_primitive(OpKind::add, {a, b});
    CHECK(c.data() == std::vector<Scalar>{4, 6});
}

TEST_CASE("conv2d identity 1x1 kernel") {
    Rng rng(7);
    Tensor x = random_tensor(rng, {1, 2, 4, 4}, -1, 1, false);
    // kernel [2,2,1,1] with w[c][c']=delta
    Tensor w = Tensor::from_data({2, 2, 1, 1}, {1, 0, 0, 1});
    Tensor y = conv2d(x, w, Tensor(), 1, 0);
    CHECK(y.data() == x.data());
}

TEST_CASE("conv2d 3x3 ones") {
    Tensor x = Tensor::full({1, 1, 3, 3}, 1.0);
    Tensor w = Tensor::full({1, 1, 3, 3}, 1.0);
    Tensor y = conv2d(x, w, Tensor(), 1, 0);
    CHECK(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y.item() == doctest::Approx(9.0));
}

TEST_CASE("backward through square") {
    Tensor x = Tensor::from_data({1}, {3.0}, true);
    Tensor y = mul(x, x);
    backward(y);
    CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("backward through mean") {
    Tensor x = Tensor::from_data({4}, {1, 2, 3, 4}, true);
    backward(mean(x));
    for (Scalar g : x.grad()) CHECK(g == doctest::Approx(0.25));
}

TEST_CASE("backward rejects non-scalar root") {
    Tensor x = Tensor::from_data({2}, {1, 2}, true);
    Tensor y = add(x, x);
    CHECK_THROWS_AS(backward(y), std::invalid_argument);
}

TEST_CASE("shape mismatch diagnostics name the op") {
    Tensor a = Tensor::zeros({2});
    Tensor b = Tensor::zeros({3});
    CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("add"), std::invalid_argument);
    Tensor x = Tensor::zeros({1, 2, 4, 4});
    Tensor w = Tensor::zeros({1, 3, 3, 3});
    CHECK_THROWS_WITH_AS(conv2d(x, w, Tensor(), 1, 1), doctest::Contains("conv2d"),
                         std::invalid_argument);
}

TEST_CASE("requires_grad=false never accumulates") {
    Tensor x = Tensor::from_data({2}, {1, 2}, false);
    Tensor y = Tensor::from_data({2}, {3, 4}, true);
    backward(sum(mul(x, y)));
    CHECK_FALSE(x.has_grad());
    CHECK(y.grad() == std::vector<Scalar>{1, 2});
}

TEST_CASE("annihilating hook zeroes upstream grads") {
    Tensor x = Tensor::from_data({3}, {1, 2, 3}, true);
    Tensor z = mul(x, x);
    Tensor y = sum(tanh(z));
    register_grad_hook(z, [](const std::vector<Scalar>& g) {
        return std::vector<Scalar>(g.size(), 0.0);
    });
    backward(y);
    for (Scalar g : x.grad()) CHECK(g == 0.0);
}

TEST_CASE("identity hook is bit-exact") {
    Rng rng(11);
    auto run = [&](bool with_hook) {
        Rng local(99);
        Tensor x = random_tensor(local, {2, 3});
        Tensor w = random_tensor(local, {3, 3});
        Tensor h = tanh(matmul(x, w));
        if (with_hook)
            register_grad_hook(h, [](const std::vector<Scalar>& g) { return g; });
        backward(mse(h, Tensor::zeros({2, 3})));
        return std::make_pair(x.grad(), w.grad());
    };
    auto [gx0, gw0] = run(false);
    auto [gx1, gw1] = run(true);
    CHECK(gx0 == gx1);
    CHECK(gw0 == gw1);
}

TEST_CASE("doubling hook doubles leaf grads") {
    Tensor x = Tensor::from_data({3}, {1, 2, 3}, true);
    Tensor y = sum(x);
    register_grad_hook(y, [](const std::vector<Scalar>& g) {
        std::vector<Scalar> out(g);
        for (Scalar& v : out) v *= 2.0;
        return out;
    });
    backward(y);
    for (Scalar g : x.grad()) CHECK(g == doctest::Approx(2.0));
}

TEST_CASE("additive masked hook scales grads by 1.1") {
    // hook g -> g + 0.1*(g .* M) with M = ones
    Tensor x = Tensor::from_data({4}, {1, 2, 3, 4}, true);
    Tensor y = sum(x);
    register_grad_hook(y, [](const std::vector<Scalar>& g) {
        std::vector<Scalar> out(g);
        for (size_t i = 0; i < out.size(); ++i) out[i] = g[i] + 0.1 * (g[i] * 1.0);
        return out;
    });
    backward(y);
    for (Scalar g : x.grad()) CHECK(g == doctest::Approx(1.1));
}

TEST_CASE("hook fires once after full accumulation") {
    // y = sum(z) + sum(z): z has two consumers; the hook must see the
    // combined gradient (2s), not each contribution separately.
    Tensor x = Tensor::from_data({2}, {1, 1}, true);
    Tensor z = mul(x, x);
    int fired = 0;
    std::vector<Scalar> seen;
    register_grad_hook(z, [&](const std::vector<Scalar>& g) {
        ++fired;
        seen = g;
        return g;
    });
    backward(add(sum(z), sum(z)));
    CHECK(fired == 1);
    CHECK(seen == std::vector<Scalar>{2, 2});
}

TEST_CASE("hook removal by handle") {
    Tensor x = Tensor::from_data({2}, {1, 2}, true);
    Tensor y = sum(x);
    HookHandle h = register_grad_hook(y, [](const std::vector<Scalar>& g) {
        std::vector<Scalar> out(g);
        for (Scalar& v : out) v *= 5.0;
        return out;
    });
    remove_grad_hook(h);
    backward(y);
    CHECK(x.grad() == std::vector<Scalar>{1, 1});
}

TEST_CASE("hook changing shape is rejected at application time") {
    Tensor x = Tensor::from_data({2}, {1, 2}, true);
    Tensor y = sum(x);
    register_grad_hook(y, [](const std::vector<Scalar>& g) {
        return std::vector<Scalar>(g.size() + 1, 0.0);
    });
    CHECK_THROWS_AS(backward(y), std::invalid_argument);
}

TEST_CASE("finite differences: sum of squares and mean") {
    Tensor x = Tensor::from_data({2}, {1, 2});
    Tensor fd = finite_difference_grad(
        [](const Tensor& t) {
            Scalar s = 0;
            for (Scalar v : t.data()) s += v * v;
            return s;
        },
        x, 1e-5);
    CHECK(fd.data()[0] == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(fd.data()[1] == doctest::Approx(4.0).epsilon(1e-6));

    Tensor z = Tensor::from_data({5}, {3, 1, 4, 1, 5});
    Tensor fdm = finite_difference_grad(
        [](const Tensor& t) {
            NoGradGuard ng;
            return mean(t).item();
        },
        z, 1e-5);
    for (Scalar g : fdm.data()) CHECK(g == doctest::Approx(0.2).epsilon(1e-6));
}

TEST_CASE("every primitive matches finite differences") {
    Rng rng(2024);
    for (int trial = 0; trial < 10; ++trial) {
        auto [name, err] = fd_sweep_once(rng);
        INFO("worst primitive: ", name);
        CHECK(err <= 1e-6);
    }
}

TEST_CASE("discriminator input gradients match finite differences") {
    // end-to-end check over a realistic op mix (conv stacks, leaky relu, norm)
    models::Discriminator d = models::build_discriminator(4, 17);
    Rng rng(23);
    Tensor x = random_tensor(rng, {1, 3, 8, 8});
    {
        ParamFreeze freeze(d.param_tensors());
        backward(mean(d.forward(x)));
    }
    Tensor fd = finite_difference_grad(
        [&](const Tensor& probe) {
            NoGradGuard ng;
            return mean(d.forward(probe)).item();
        },
        x, 1e-5);
    CHECK(rel_linf(x.grad(), fd.data()) <= 1e-6);
}

TEST_CASE("independently rebuilt graphs give identical grads") {
    auto run = [] {
        Rng rng(31337);
        Tensor x = random_tensor(rng, {1, 2, 6, 6});
        Tensor w1 = random_tensor(rng, {3, 2, 3, 3});
        Tensor b1 = random_tensor(rng, {3});
        Tensor w2 = random_tensor(rng, {3, 3, 3, 3});
        Tensor h = leaky_relu(instance_norm(conv2d(x, w1, b1, 2, 1)), 0.2);
        Tensor y = mean(conv2d(h, w2, Tensor(), 1, 1));
        backward(y);
        return std::vector<std::vector<Scalar>>{x.grad(), w1.grad(), b1.grad(), w2.grad()};
    };
    CHECK(run() == run());
}

TEST_CASE("conv_transpose2d is the adjoint of conv2d") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const int c = static_cast<int>(rng.uniform_int(1, 3));
        const int oc = static_cast<int>(rng.uniform_int(1, 3));
        const int hw = static_cast<int>(rng.uniform_int(3, 6));
        const int k = rng.uniform() < 0.5 ? 1 : 3;
        const int stride = static_cast<int>(rng.uniform_int(1, 2));
        const int padding = k == 3 ? 1 : 0;
        if (hw + 2 * padding < k) continue;

        Tensor x = random_tensor(rng, {1, c, hw, hw}, -1, 1, false);
        Tensor w = random_tensor(rng, {oc, c, k, k}, -1, 1, false);
        Tensor cx = conv2d(x, w, Tensor(), stride, padding);
        Tensor y = random_tensor(rng, cx.shape(), -1, 1, false);

        // the conv weight [OC,C,k,k] reads as [in=OC,out=C] for the transpose
        const int outpad = hw - ((cx.dim(2) - 1) * stride - 2 * padding + k);
        if (outpad < 0 || outpad >= stride) continue;
        Tensor ty = conv_transpose2d(y, w, Tensor(), stride, padding, outpad);
        REQUIRE(ty.shape() == x.shape());

        Scalar lhs = 0, rhs = 0;
        for (size_t i = 0; i < cx.data().size(); ++i) lhs += cx.data()[i] * y.data()[i];
        for (size_t i = 0; i < x.data().size(); ++i) rhs += x.data()[i] * ty.data()[i];
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
    }
}

TEST_CASE("pass through frozen params builds graph but skips their grads") {
    Tensor x = Tensor::from_data({2}, {1, 2}, true);
    Tensor w = Tensor::from_data({2}, {3, 4}, true);
    {
        ParamFreeze freeze({w});
        backward(sum(mul(x, w)));
        CHECK_FALSE(w.has_grad());
        CHECK(x.grad() == std::vector<Scalar>{3, 4});
    }
    CHECK(w.requires_grad());
}

TEST_CASE("no-grad guard suppresses graph construction") {
    Tensor x = Tensor::from_data({2}, {1, 2}, true);
    NoGradGuard ng;
    Tensor y = mul(x, x);
    CHECK(y.is_leaf());
    CHECK_FALSE(y.requires_grad());
}
