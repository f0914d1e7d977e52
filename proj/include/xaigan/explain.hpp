#pragma once

#include "xaigan/models.hpp"
#include "xaigan/tensor.hpp"

namespace xaigan::explain {

enum class MapSource { primary, mask };
enum class ChannelReduce { max, mean };
enum class MaskSign : int { suppress = +1, exaggerate = -1 };

// Per-pixel attribution in [0,1]; [1,H,W] for a single image, [N,1,H,W] for a
// batch (each sample normalized to max 1 unless its raw attribution is
// identically zero).
struct ExplanationMap {
    Tensor values;
    MapSource source = MapSource::primary;
};

struct LambdaParams {
    int gamma = 2;
    double alpha = 0.1;

    void validate() const;
};

// min(1, 4*(min(0.5,x) - 0.5)^gamma): 1 at x=0, 0 at x>=0.5. gamma must be a
// positive even integer (odd exponents would make the value negative).
double lambda_weight(double x, int gamma);

// Backpropagates MSE(mean(critic(image)), target) to the image and reduces
// the absolute input gradient over channels. Critic parameters are frozen for
// the pass and keep whatever gradient state they had.
ExplanationMap compute_saliency(const models::Critic& critic, const Tensor& image,
                                double target = 1.0, ChannelReduce reduce = ChannelReduce::max,
                                MapSource source = MapSource::primary);

// grad + alpha * (grad .* (lambda_a * M)), M broadcast over grad channels.
// Plain data transform, no graph.
Tensor apply_gradient_mask(const Tensor& grad, const ExplanationMap& M, double alpha,
                           double lambda_a);

// GradTransform form of the same update, for installation on a graph node of
// the given shape.
GradTransform make_gradient_mask_hook(const ExplanationMap& M, double alpha, double lambda_a,
                                      Shape grad_shape);

// noise + sign*lambda_b*M, clamped to [0,2]. lambda_b == 0 returns the noise
// unchanged, bit-exactly.
Tensor compose_input_mask(const Tensor& noise, const ExplanationMap& M, double lambda_b,
                          MaskSign sign);

}  // namespace xaigan::explain
