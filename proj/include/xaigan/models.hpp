#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "xaigan/nn.hpp"
#include "xaigan/tensor.hpp"

namespace xaigan::models {

// How the network output and the untouched input are combined through the mask.
//   blend:    out = raw .* m + image .* (1 - m)
//   additive: out = raw + (1 - m)
enum class MaskComposite { blend, additive };

struct GeneratorConfig {
    int ngf = 8;
    int num_resnet = 2;
    int image_channels = 3;
    int image_size = 16;
    MaskComposite composite = MaskComposite::blend;

    void validate() const;
};

struct GeneratorOutput {
    Tensor out;  // composited image, what discriminators see
    Tensor raw;  // pure network output (tanh), before compositing
};

// Mask-encoding encoder/decoder generator with additive skip connections.
struct Generator {
    GeneratorConfig cfg;
    nn::Conv2dLayer fuse_mask;      // 1x1, [image|mask] -> 3
    nn::Conv2dLayer fuse_inv_mask;  // 1x1, [h|1-mask] -> 3
    nn::Conv2dLayer feat;           // k7 s1 p3 -> ngf
    nn::Conv2dLayer down1, down2, down3;
    std::vector<nn::ResidualBlock> res;
    nn::Conv2dLayer up1, up2, up3;  // transposed, mirror the down shapes
    nn::Conv2dLayer final_conv;     // k7 s1 p3 -> 3, tanh

    // image [N,3,H,W], mask [N,1,H,W]; H, W divisible by 8
    GeneratorOutput forward(const Tensor& image, const Tensor& mask) const;
    std::vector<nn::NamedParam> parameters(const std::string& prefix) const;
    std::vector<Tensor> param_tensors() const;
};

Generator build_generator(const GeneratorConfig& cfg, uint64_t seed);

// Patch critic: alternating stride-2 halvings and k7 feature extraction,
// 1-channel score map at 1/8 spatial resolution, no output nonlinearity.
struct Discriminator {
    int ndf = 8;
    std::vector<nn::Conv2dLayer> blocks;
    nn::Conv2dLayer head;  // 1x1 -> 1

    Tensor forward(const Tensor& image) const;
    std::vector<nn::NamedParam> parameters(const std::string& prefix) const;
    std::vector<Tensor> param_tensors() const;
};

Discriminator build_discriminator(int ndf, uint64_t seed);

// The mask discriminator shares the topology; only its parameters differ.
using MaskDiscriminator = Discriminator;

// Minimal critic view consumed by the explanation code: a forward function
// plus the parameters that must stay frozen while explaining.
struct Critic {
    std::function<Tensor(const Tensor&)> forward;
    std::vector<Tensor> params;
};

Critic as_critic(const Discriminator& d);

}  // namespace xaigan::models
