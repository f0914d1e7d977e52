#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xaigan/tensor.hpp"

namespace xaigan::nn {

enum class Activation { leaky_relu_02, relu, tanh, none };

// Immutable description of one (transposed-)convolution block.
struct ConvSpec {
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 3;
    int stride = 1;
    int padding = 0;
    int output_padding = 0;  // transposed only
    bool transposed = false;
    bool use_norm = false;
    Activation activation = Activation::none;

    int out_size(int in_size) const {
        return transposed ? (in_size - 1) * stride - 2 * padding + kernel + output_padding
                          : (in_size + 2 * padding - kernel) / stride + 1;
    }
};

struct NamedParam {
    std::string name;
    Tensor tensor;
};

// ConvSpec plus its parameters. Weight layout [OC,C,k,k], or [C,OC,k,k] when
// transposed.
struct Conv2dLayer {
    ConvSpec spec;
    Tensor weight;
    Tensor bias;

    Tensor forward(const Tensor& x) const;
    std::vector<NamedParam> parameters(const std::string& prefix) const;
};

Conv2dLayer make_conv(const ConvSpec& spec, uint64_t seed);

// Draws weights from normal(0, 0.02) with a layer-local generator; zero bias.
void init_weights(Conv2dLayer& layer, uint64_t seed);

// Two channel-preserving k3 s1 p1 convolutions; forward is x + F(x).
struct ResidualBlock {
    Conv2dLayer conv1;  // instance norm + relu
    Conv2dLayer conv2;  // instance norm, no activation

    Tensor forward(const Tensor& x) const;
    std::vector<NamedParam> parameters(const std::string& prefix) const;
};

ResidualBlock make_residual_block(int channels, uint64_t seed);

}  // namespace xaigan::nn
