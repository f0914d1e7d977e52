#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "xaigan/data.hpp"
#include "xaigan/explain.hpp"
#include "xaigan/models.hpp"
#include "xaigan/rng.hpp"
#include "xaigan/tensor.hpp"

namespace xaigan::train {

enum class Mode { baseline, xai };

Mode mode_from_string(const std::string& s);
const char* to_string(Mode m);

struct DatasetSpec {
    std::string kind = "stripes";  // synthetic kind; ignored when root is set
    std::string root;              // directory with trainA/ trainB/
    int n = 64;                    // samples per domain (synthetic)
    int size = 0;                  // 0 = follow image_size
};

struct TrainConfig {
    Mode mode = Mode::xai;
    int steps = 500;
    int batch_size = 4;
    double lr = 2e-4;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.999;
    double lambda_cycle = 10.0;
    double lambda_mask_adv = 1.0;
    double lambda_identity = 0.0;  // identity loss off by default
    double alpha = 0.1;
    int gamma = 2;
    explain::MaskSign sign = explain::MaskSign::suppress;
    int ngf = 8;
    int ndf = 8;
    int num_resnet = 2;
    int image_size = 16;
    uint64_t seed = 1;
    models::MaskComposite composite = models::MaskComposite::blend;
    explain::ChannelReduce saliency_reduce = explain::ChannelReduce::max;
    double saliency_target = 1.0;
    bool reuse_cycle_noise = false;
    bool force_lambda_zero = false;  // pins lambda_a = lambda_b = 0 in xai mode
    int checkpoint_every = 0;        // 0 = final checkpoint only
    std::string resume;              // checkpoint path, optional
    DatasetSpec dataset;

    void validate() const;  // throws std::invalid_argument naming the field
};

struct LossRecord {
    int step = 0;
    double loss_g = 0;
    double loss_d_a = 0;
    double loss_d_b = 0;
    double loss_cycle = 0;
    double loss_mask_adv = 0;
    double lambda_a = 0;
    double lambda_b = 0;
    double wall_ms = 0;

    bool finite() const;
};

// ---- optimizer -------------------------------------------------------------

// Standard Adam with bias correction. Parameters without an accumulated
// gradient are treated as having a zero gradient.
class Adam {
public:
    Adam() = default;
    Adam(std::vector<Tensor> params, double lr, double beta1, double beta2, double eps = 1e-8);

    void step();
    void zero_grad();

    int64_t steps_taken() const { return t_; }
    const std::vector<Tensor>& params() const { return params_; }
    const std::vector<std::vector<Scalar>>& first_moments() const { return m_; }
    const std::vector<std::vector<Scalar>>& second_moments() const { return v_; }
    void restore_state(int64_t t, std::vector<std::vector<Scalar>> m,
                       std::vector<std::vector<Scalar>> v);

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<Scalar>> m_, v_;
    double lr_ = 2e-4, beta1_ = 0.5, beta2_ = 0.999, eps_ = 1e-8;
    int64_t t_ = 0;
};

// ---- losses ----------------------------------------------------------------

struct AdvLosses {
    Tensor d_loss;          // 0.5*[MSE(D(real),1) + MSE(D(fake.detach),0)]
    Tensor g_loss;          // MSE(D(fake),1), graph through fake
    double x_for_lambda;    // mean |deviation of D outputs from targets|
};

AdvLosses adversarial_losses(const models::Discriminator& d, const Tensor& real,
                             const Tensor& fake);

// Forward-only x value: 0.5*(mean|D(real)-1| + mean|D(fake)-0|).
double discriminator_x_value(const models::Discriminator& d, const Tensor& real,
                             const Tensor& fake);

Tensor cycle_loss(const Tensor& original, const Tensor& cycled, double lambda_cycle);

// ---- trainer ---------------------------------------------------------------

struct ModelSet {
    models::Generator g_ab, g_ba;
    models::Discriminator d_a, d_b;
    models::MaskDiscriminator md_a, md_b;

    std::vector<nn::NamedParam> named_parameters() const;
};

ModelSet build_models(const TrainConfig& cfg);

struct PassOne {
    Tensor input_mask;  // pass-2 generator input; the raw noise in baseline mode
    double lambda_b = 0.0;
};

struct StepOutput {
    LossRecord record;
    Tensor fake_a2b;  // detached composited fakes for the discriminator step
    Tensor fake_b2a;
};

struct RunSinks {
    std::function<void(const LossRecord&)> on_record;
    std::function<void(int /*step*/)> on_checkpoint;  // periodic, per checkpoint_every
};

struct TrainResult {
    int steps_completed = 0;
    bool aborted = false;
    std::string abort_reason;
};

// Owns the models, optimizers and RNG streams of one run. Every run is a pure
// function of its TrainConfig (plus the dataset when loaded from disk).
class Trainer {
public:
    Trainer(const TrainConfig& cfg, data::DomainDataset domain_a, data::DomainDataset domain_b);

    const TrainConfig& config() const { return cfg_; }
    ModelSet& model_set() { return models_; }
    const ModelSet& model_set() const { return models_; }

    // Pass 1: generates without gradient retention, extracts the
    // mask-discriminator explanation and composes the pass-2 input mask.
    // Baseline mode returns the noise unchanged.
    PassOne prepare_input_mask(bool a_to_b, const Tensor& source_batch,
                               const Tensor& target_real_batch, const Tensor& noise);

    // Pass 2 + backward + Adam step on the generators only.
    StepOutput generator_step(const Tensor& batch_a, const Tensor& batch_b);

    // One Adam step per primary discriminator; mask discriminators too in xai
    // mode. Fakes must be detached.
    void discriminator_step(const Tensor& batch_a, const Tensor& batch_b, const Tensor& fake_a2b,
                            const Tensor& fake_b2a, LossRecord& record);

    LossRecord step();  // draws batches, runs generator + discriminator steps

    TrainResult run(const RunSinks& sinks);

    // checkpoint access
    const Adam& opt_g() const { return opt_g_; }
    const Adam& opt_d_a() const { return opt_d_a_; }
    const Adam& opt_d_b() const { return opt_d_b_; }
    const Adam& opt_md_a() const { return opt_md_a_; }
    const Adam& opt_md_b() const { return opt_md_b_; }
    Adam& opt_g() { return opt_g_; }
    Adam& opt_d_a() { return opt_d_a_; }
    Adam& opt_d_b() { return opt_d_b_; }
    Adam& opt_md_a() { return opt_md_a_; }
    Adam& opt_md_b() { return opt_md_b_; }

    int steps_done() const { return steps_done_; }

private:
    struct DirectionLosses {
        Tensor loss;
        Tensor fake;
        double g_adv, cyc, mask_adv, lam_a, lam_b;
    };
    DirectionLosses run_direction(bool a_to_b, const Tensor& source, const Tensor& target_real);

    std::vector<int> next_batch(bool domain_a);

    TrainConfig cfg_;
    data::DomainDataset data_a_, data_b_;
    ModelSet models_;
    Adam opt_g_, opt_d_a_, opt_d_b_, opt_md_a_, opt_md_b_;
    Rng noise_rng_;
    int steps_done_ = 0;
    int epoch_a_ = 0, epoch_b_ = 0;
    size_t pos_a_ = 0, pos_b_ = 0;
    std::vector<int> order_a_, order_b_;
};

}  // namespace xaigan::train
