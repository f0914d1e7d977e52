#include "xaigan/models.hpp"

#include <stdexcept>

#include "xaigan/rng.hpp"

namespace xaigan::models {

using nn::Activation;
using nn::ConvSpec;

void GeneratorConfig::validate() const {
    if (image_size < 16 || image_size % 8 != 0)
        throw std::invalid_argument("generator config: image_size must be >= 16 and divisible by 8, got " +
                                    std::to_string(image_size));
    if (ngf < 4)
        throw std::invalid_argument("generator config: ngf must be >= 4, got " + std::to_string(ngf));
    if (num_resnet < 0)
        throw std::invalid_argument("generator config: num_resnet must be >= 0");
    if (image_channels != 3)
        throw std::invalid_argument("generator config: image_channels must be 3");
}

Generator build_generator(const GeneratorConfig& cfg, uint64_t seed) {
    cfg.validate();
    const int ic = cfg.image_channels;
    const int ngf = cfg.ngf;

    Generator g;
    g.cfg = cfg;
    g.fuse_mask = nn::make_conv({ic + 1, ic, 1, 1, 0, 0, false, false, Activation::none},
                                derive_seed(seed, "fuse_mask"));
    g.fuse_inv_mask = nn::make_conv({ic + 1, ic, 1, 1, 0, 0, false, false, Activation::none},
                                    derive_seed(seed, "fuse_inv_mask"));
    g.feat = nn::make_conv({ic, ngf, 7, 1, 3, 0, false, true, Activation::leaky_relu_02},
                           derive_seed(seed, "feat"));
    g.down1 = nn::make_conv({ngf, 2 * ngf, 3, 2, 1, 0, false, true, Activation::leaky_relu_02},
                            derive_seed(seed, "down1"));
    g.down2 = nn::make_conv({2 * ngf, 4 * ngf, 3, 2, 1, 0, false, true, Activation::leaky_relu_02},
                            derive_seed(seed, "down2"));
    g.down3 = nn::make_conv({4 * ngf, 8 * ngf, 3, 2, 1, 0, false, true, Activation::leaky_relu_02},
                            derive_seed(seed, "down3"));
    for (int i = 0; i < cfg.num_resnet; ++i)
        g.res.push_back(nn::make_residual_block(8 * ngf, derive_seed(seed, "res", i)));
    g.up1 = nn::make_conv({8 * ngf, 4 * ngf, 3, 2, 1, 1, true, true, Activation::relu},
                          derive_seed(seed, "up1"));
    g.up2 = nn::make_conv({4 * ngf, 2 * ngf, 3, 2, 1, 1, true, true, Activation::relu},
                          derive_seed(seed, "up2"));
    g.up3 = nn::make_conv({2 * ngf, ngf, 3, 2, 1, 1, true, true, Activation::relu},
                          derive_seed(seed, "up3"));
    g.final_conv = nn::make_conv({ngf, ic, 7, 1, 3, 0, false, false, Activation::tanh},
                                 derive_seed(seed, "final"));
    return g;
}

GeneratorOutput Generator::forward(const Tensor& image, const Tensor& mask) const {
    if (image.rank() != 4 || image.dim(1) != cfg.image_channels)
        throw std::invalid_argument("generator: image must be [N,3,H,W], got " +
                                    shape_str(image.shape()));
    if (mask.rank() != 4 || mask.dim(1) != 1)
        throw std::invalid_argument("generator: mask must be [N,1,H,W], got " +
                                    shape_str(mask.shape()));
    if (mask.dim(0) != image.dim(0) || mask.dim(2) != image.dim(2) || mask.dim(3) != image.dim(3))
        throw std::invalid_argument("generator: image " + shape_str(image.shape()) +
                                    " and mask " + shape_str(mask.shape()) + " dims differ");
    if (image.dim(2) % 8 != 0 || image.dim(3) % 8 != 0)
        throw std::invalid_argument("generator: spatial dims must be divisible by 8, got " +
                                    shape_str(image.shape()));

    Tensor ones = Tensor::full(mask.shape(), 1.0);
    Tensor inv_mask = sub(ones, mask);

    Tensor h1 = fuse_mask.forward(concat({image, mask}, 1));
    Tensor h2 = fuse_inv_mask.forward(concat({h1, inv_mask}, 1));

    Tensor f0 = feat.forward(h2);
    Tensor d1 = down1.forward(f0);
    Tensor d2 = down2.forward(d1);
    Tensor d3 = down3.forward(d2);
    Tensor r = d3;
    for (const auto& block : res) r = block.forward(r);
    Tensor u1 = add(up1.forward(r), d2);
    Tensor u2 = add(up2.forward(u1), d1);
    Tensor u3 = add(up3.forward(u2), f0);
    Tensor raw = final_conv.forward(u3);

    GeneratorOutput out;
    out.raw = raw;
    if (cfg.composite == MaskComposite::blend) {
        Tensor m3 = expand_channels(mask, cfg.image_channels);
        Tensor inv3 = expand_channels(inv_mask, cfg.image_channels);
        out.out = add(mul(raw, m3), mul(image, inv3));
    } else {
        out.out = add(raw, expand_channels(inv_mask, cfg.image_channels));
    }
    return out;
}

std::vector<nn::NamedParam> Generator::parameters(const std::string& prefix) const {
    std::vector<nn::NamedParam> p;
    auto append = [&p](std::vector<nn::NamedParam> q) {
        p.insert(p.end(), q.begin(), q.end());
    };
    append(fuse_mask.parameters(prefix + ".fuse_mask"));
    append(fuse_inv_mask.parameters(prefix + ".fuse_inv_mask"));
    append(feat.parameters(prefix + ".feat"));
    append(down1.parameters(prefix + ".down1"));
    append(down2.parameters(prefix + ".down2"));
    append(down3.parameters(prefix + ".down3"));
    for (size_t i = 0; i < res.size(); ++i)
        append(res[i].parameters(prefix + ".res" + std::to_string(i)));
    append(up1.parameters(prefix + ".up1"));
    append(up2.parameters(prefix + ".up2"));
    append(up3.parameters(prefix + ".up3"));
    append(final_conv.parameters(prefix + ".final"));
    return p;
}

std::vector<Tensor> Generator::param_tensors() const {
    std::vector<Tensor> out;
    for (auto& np : parameters("g")) out.push_back(np.tensor);
    return out;
}

Discriminator build_discriminator(int ndf, uint64_t seed) {
    if (ndf < 1) throw std::invalid_argument("discriminator: ndf must be positive");
    Discriminator d;
    d.ndf = ndf;
    auto block = [&](ConvSpec spec, const char* tag) {
        d.blocks.push_back(nn::make_conv(spec, derive_seed(seed, tag)));
    };
    block({3, ndf, 4, 2, 1, 0, false, false, Activation::leaky_relu_02}, "b1");
    block({ndf, ndf, 7, 1, 3, 0, false, false, Activation::leaky_relu_02}, "b2");
    block({ndf, 2 * ndf, 4, 2, 1, 0, false, false, Activation::leaky_relu_02}, "b3");
    block({2 * ndf, 2 * ndf, 7, 1, 3, 0, false, true, Activation::leaky_relu_02}, "b4");
    block({2 * ndf, 4 * ndf, 4, 2, 1, 0, false, false, Activation::leaky_relu_02}, "b5");
    d.head = nn::make_conv({4 * ndf, 1, 1, 1, 0, 0, false, false, Activation::none},
                           derive_seed(seed, "head"));
    return d;
}

Tensor Discriminator::forward(const Tensor& image) const {
    if (image.rank() != 4 || image.dim(1) != 3)
        throw std::invalid_argument("discriminator: input must be [N,3,H,W], got " +
                                    shape_str(image.shape()));
    if (image.dim(2) % 8 != 0 || image.dim(3) % 8 != 0)
        throw std::invalid_argument("discriminator: spatial dims must be divisible by 8, got " +
                                    shape_str(image.shape()));
    Tensor h = image;
    for (const auto& b : blocks) h = b.forward(h);
    return head.forward(h);
}

std::vector<nn::NamedParam> Discriminator::parameters(const std::string& prefix) const {
    std::vector<nn::NamedParam> p;
    for (size_t i = 0; i < blocks.size(); ++i) {
        auto q = blocks[i].parameters(prefix + ".b" + std::to_string(i + 1));
        p.insert(p.end(), q.begin(), q.end());
    }
    auto q = head.parameters(prefix + ".head");
    p.insert(p.end(), q.begin(), q.end());
    return p;
}

std::vector<Tensor> Discriminator::param_tensors() const {
    std::vector<Tensor> out;
    for (auto& np : parameters("d")) out.push_back(np.tensor);
    return out;
}

Critic as_critic(const Discriminator& d) {
    return Critic{[&d](const Tensor& x) { return d.forward(x); }, d.param_tensors()};
}

}  // namespace xaigan::models
