#include "xaigan/explain.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace xaigan::explain {

void LambdaParams::validate() const {
    if (gamma <= 0 || gamma % 2 != 0)
        throw std::invalid_argument("lambda params: gamma must be a positive even integer, got " +
                                    std::to_string(gamma));
    if (alpha <= 0)
        throw std::invalid_argument("lambda params: alpha must be positive, got " +
                                    std::to_string(alpha));
}

double lambda_weight(double x, int gamma) {
    if (gamma <= 0 || gamma % 2 != 0)
        throw std::invalid_argument("lambda_weight: gamma must be a positive even integer, got " +
                                    std::to_string(gamma));
    const double base = std::min(0.5, x) - 0.5;
    return std::min(1.0, 4.0 * std::pow(base, static_cast<double>(gamma)));
}

ExplanationMap compute_saliency(const models::Critic& critic, const Tensor& image, double target,
                                ChannelReduce reduce, MapSource source) {
    const bool batched = image.rank() == 4;
    if (!batched && image.rank() != 3)
        throw std::invalid_argument("saliency: image must be [C,H,W] or [N,C,H,W], got " +
                                    shape_str(image.shape()));

    if (!grad_enabled())
        throw std::logic_error("saliency: cannot run under a no-grad guard");

    Tensor x = batched ? image.detach()
                       : reshape(image.detach(), {1, image.dim(0), image.dim(1), image.dim(2)});
    x.set_requires_grad(true);

    {
        ParamFreeze freeze(critic.params);
        Tensor loss = mse(mean(critic.forward(x)), Tensor::scalar(target));
        backward(loss);
    }

    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int64_t plane = static_cast<int64_t>(h) * w;
    const auto& g = x.grad();
    for (Scalar v : g)
        if (!std::isfinite(v))
            throw std::runtime_error("saliency: non-finite input gradient (training has diverged)");

    std::vector<Scalar> raw(static_cast<size_t>(n) * plane, 0.0);
    for (int ni = 0; ni < n; ++ni)
        for (int64_t j = 0; j < plane; ++j) {
            Scalar acc = 0.0;
            for (int ci = 0; ci < c; ++ci) {
                const Scalar a = std::abs(g[(static_cast<int64_t>(ni) * c + ci) * plane + j]);
                acc = reduce == ChannelReduce::max ? std::max(acc, a) : acc + a;
            }
            if (reduce == ChannelReduce::mean) acc /= c;
            raw[static_cast<size_t>(ni * plane + j)] = acc;
        }

    // normalize each sample so its peak is 1; all-zero maps stay all-zero
    for (int ni = 0; ni < n; ++ni) {
        Scalar peak = 0.0;
        for (int64_t j = 0; j < plane; ++j)
            peak = std::max(peak, raw[static_cast<size_t>(ni * plane + j)]);
        if (peak > 0.0)
            for (int64_t j = 0; j < plane; ++j) raw[static_cast<size_t>(ni * plane + j)] /= peak;
    }

    ExplanationMap map;
    map.source = source;
    map.values = batched ? Tensor::from_data({n, 1, h, w}, std::move(raw))
                         : Tensor::from_data({1, h, w}, std::move(raw));
    return map;
}

namespace {

// Resolves the broadcast between a gradient [.,C,H,W] (or [C,H,W]) and a map
// whose spatial dims must match; returns (samples, channels, plane).
struct BroadcastDims {
    int n, c;
    int64_t plane;
};

BroadcastDims grad_map_dims(const Shape& grad_shape, const Tensor& m) {
    const int grank = static_cast<int>(grad_shape.size());
    if (grank != 3 && grank != 4)
        throw std::invalid_argument("gradient mask: grad must be [C,H,W] or [N,C,H,W], got " +
                                    shape_str(grad_shape));
    const int n = grank == 4 ? grad_shape[0] : 1;
    const int c = grank == 4 ? grad_shape[1] : grad_shape[0];
    const int h = grank == 4 ? grad_shape[2] : grad_shape[1];
    const int w = grank == 4 ? grad_shape[3] : grad_shape[2];

    const int mrank = m.rank();
    const int mn = mrank == 4 ? m.dim(0) : 1;
    const int mh = mrank == 4 ? m.dim(2) : m.dim(1);
    const int mw = mrank == 4 ? m.dim(3) : m.dim(2);
    if (mn != n || mh != h || mw != w)
        throw std::invalid_argument("gradient mask: map " + shape_str(m.shape()) +
                                    " does not match grad " + shape_str(grad_shape));
    return {n, c, static_cast<int64_t>(h) * w};
}

std::vector<Scalar> masked_update(const std::vector<Scalar>& g, const Shape& grad_shape,
                                  const Tensor& m, double alpha, double lambda_a) {
    const BroadcastDims d = grad_map_dims(grad_shape, m);
    std::vector<Scalar> out(g.size());
    for (int ni = 0; ni < d.n; ++ni)
        for (int ci = 0; ci < d.c; ++ci) {
            const int64_t base = (static_cast<int64_t>(ni) * d.c + ci) * d.plane;
            const Scalar* mp = &m.data()[static_cast<size_t>(ni) * d.plane];
            for (int64_t j = 0; j < d.plane; ++j)
                out[static_cast<size_t>(base + j)] =
                    g[static_cast<size_t>(base + j)] +
                    alpha * (g[static_cast<size_t>(base + j)] * (lambda_a * mp[j]));
        }
    return out;
}

}  // namespace

Tensor apply_gradient_mask(const Tensor& grad, const ExplanationMap& M, double alpha,
                           double lambda_a) {
    return Tensor::from_data(grad.shape(),
                             masked_update(grad.data(), grad.shape(), M.values, alpha, lambda_a));
}

GradTransform make_gradient_mask_hook(const ExplanationMap& M, double alpha, double lambda_a,
                                      Shape grad_shape) {
    grad_map_dims(grad_shape, M.values);  // validate up front
    Tensor values = M.values;
    return [values, alpha, lambda_a, grad_shape](const std::vector<Scalar>& g) {
        return masked_update(g, grad_shape, values, alpha, lambda_a);
    };
}

Tensor compose_input_mask(const Tensor& noise, const ExplanationMap& M, double lambda_b,
                          MaskSign sign) {
    if (noise.shape() != M.values.shape())
        throw std::invalid_argument("compose_input_mask: noise " + shape_str(noise.shape()) +
                                    " vs map " + shape_str(M.values.shape()));
    if (lambda_b == 0.0) return noise.detach();
    const double s = static_cast<double>(static_cast<int>(sign));
    std::vector<Scalar> out(noise.data().size());
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = std::clamp(noise.data()[i] + s * lambda_b * M.values.data()[i], 0.0, 2.0);
    return Tensor::from_data(noise.shape(), std::move(out));
}

}  // namespace xaigan::explain
