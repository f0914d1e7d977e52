#include "xaigan/nn.hpp"

#include <stdexcept>

#include "xaigan/rng.hpp"

namespace xaigan::nn {

Tensor Conv2dLayer::forward(const Tensor& x) const {
    if (x.rank() != 4 || x.dim(1) != spec.in_channels)
        throw std::invalid_argument("conv block: input " + shape_str(x.shape()) + " has " +
                                    std::to_string(x.rank() == 4 ? x.dim(1) : -1) +
                                    " channels, layer expects " + std::to_string(spec.in_channels));
    Tensor h = spec.transposed
                   ? conv_transpose2d(x, weight, bias, spec.stride, spec.padding, spec.output_padding)
                   : conv2d(x, weight, bias, spec.stride, spec.padding);
    if (spec.use_norm) h = instance_norm(h);
    switch (spec.activation) {
        case Activation::leaky_relu_02: return leaky_relu(h, 0.2);
        case Activation::relu: return relu(h);
        case Activation::tanh: return tanh(h);
        case Activation::none: return h;
    }
    return h;
}

std::vector<NamedParam> Conv2dLayer::parameters(const std::string& prefix) const {
    return {{prefix + ".weight", weight}, {prefix + ".bias", bias}};
}

void init_weights(Conv2dLayer& layer, uint64_t seed) {
    Rng rng(seed);
    for (Scalar& v : layer.weight.data()) v = rng.normal(0.0, 0.02);
    for (Scalar& v : layer.bias.data()) v = 0.0;
}

Conv2dLayer make_conv(const ConvSpec& spec, uint64_t seed) {
    Conv2dLayer layer;
    layer.spec = spec;
    const Shape wshape = spec.transposed
                             ? Shape{spec.in_channels, spec.out_channels, spec.kernel, spec.kernel}
                             : Shape{spec.out_channels, spec.in_channels, spec.kernel, spec.kernel};
    layer.weight = Tensor::zeros(wshape, true);
    layer.bias = Tensor::zeros({spec.out_channels}, true);
    init_weights(layer, seed);
    return layer;
}

Tensor ResidualBlock::forward(const Tensor& x) const {
    if (x.rank() != 4 || x.dim(1) != conv1.spec.in_channels)
        throw std::invalid_argument("residual block: input " + shape_str(x.shape()) +
                                    " does not match block channels " +
                                    std::to_string(conv1.spec.in_channels));
    return add(x, conv2.forward(conv1.forward(x)));
}

std::vector<NamedParam> ResidualBlock::parameters(const std::string& prefix) const {
    auto p = conv1.parameters(prefix + ".conv1");
    auto p2 = conv2.parameters(prefix + ".conv2");
    p.insert(p.end(), p2.begin(), p2.end());
    return p;
}

ResidualBlock make_residual_block(int channels, uint64_t seed) {
    ConvSpec c1{channels, channels, 3, 1, 1, 0, false, true, Activation::relu};
    ConvSpec c2{channels, channels, 3, 1, 1, 0, false, true, Activation::none};
    return ResidualBlock{make_conv(c1, derive_seed(seed, "conv1")),
                         make_conv(c2, derive_seed(seed, "conv2"))};
}

}  // namespace xaigan::nn
