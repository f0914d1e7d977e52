#include "xaigan/train.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace xaigan::train {

Mode mode_from_string(const std::string& s) {
    if (s == "baseline") return Mode::baseline;
    if (s == "xai") return Mode::xai;
    throw std::invalid_argument("mode: must be 'baseline' or 'xai', got '" + s + "'");
}

const char* to_string(Mode m) { return m == Mode::baseline ? "baseline" : "xai"; }

void TrainConfig::validate() const {
    auto require = [](bool ok, const std::string& field, const std::string& why) {
        if (!ok) throw std::invalid_argument("config error: " + field + ": " + why);
    };
    require(steps >= 0, "steps", "must be >= 0, got " + std::to_string(steps));
    require(batch_size > 0, "batch_size", "must be positive, got " + std::to_string(batch_size));
    require(lr > 0, "lr", "must be positive");
    require(adam_beta1 > 0 && adam_beta1 < 1, "adam_beta1", "must be in (0,1)");
    require(adam_beta2 > 0 && adam_beta2 < 1, "adam_beta2", "must be in (0,1)");
    require(lambda_cycle >= 0, "lambda_cycle", "must be >= 0");
    require(lambda_mask_adv >= 0, "lambda_mask_adv", "must be >= 0");
    require(lambda_identity >= 0, "lambda_identity", "must be >= 0");
    require(alpha > 0, "alpha", "must be positive, got " + std::to_string(alpha));
    require(gamma > 0 && gamma % 2 == 0, "gamma",
            "must be a positive even integer, got " + std::to_string(gamma));
    require(ngf >= 4, "ngf", "must be >= 4, got " + std::to_string(ngf));
    require(ndf >= 1, "ndf", "must be >= 1, got " + std::to_string(ndf));
    require(num_resnet >= 0, "num_resnet", "must be >= 0");
    require(image_size >= 16 && image_size % 8 == 0, "image_size",
            "must be >= 16 and divisible by 8, got " + std::to_string(image_size));
    require(checkpoint_every >= 0, "checkpoint_every", "must be >= 0");
    if (dataset.root.empty()) {
        data::synthetic_kind_from_string(dataset.kind);  // throws on bad kind
        require(dataset.n >= 2, "dataset.n", "must be >= 2, got " + std::to_string(dataset.n));
        const int sz = dataset.size == 0 ? image_size : dataset.size;
        require(sz == image_size, "dataset.size",
                "must match image_size (" + std::to_string(image_size) + "), got " +
                    std::to_string(sz));
    }
}

bool LossRecord::finite() const {
    for (double v : {loss_g, loss_d_a, loss_d_b, loss_cycle, loss_mask_adv, lambda_a, lambda_b})
        if (!std::isfinite(v)) return false;
    return true;
}

// ---- Adam -------------------------------------------------------------------

Adam::Adam(std::vector<Tensor> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const Tensor& p : params_) {
        m_.emplace_back(p.data().size(), 0.0);
        v_.emplace_back(p.data().size(), 0.0);
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t pi = 0; pi < params_.size(); ++pi) {
        Tensor& p = params_[pi];
        auto& m = m_[pi];
        auto& v = v_[pi];
        const bool has_grad = p.has_grad();
        const std::vector<Scalar>* g = has_grad ? &p.grad() : nullptr;
        for (size_t i = 0; i < p.data().size(); ++i) {
            const Scalar gi = has_grad ? (*g)[i] : 0.0;
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
            const Scalar mhat = m[i] / bc1;
            const Scalar vhat = v[i] / bc2;
            p.data()[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

void Adam::zero_grad() {
    for (Tensor& p : params_) p.zero_grad();
}

void Adam::restore_state(int64_t t, std::vector<std::vector<Scalar>> m,
                         std::vector<std::vector<Scalar>> v) {
    if (m.size() != params_.size() || v.size() != params_.size())
        throw std::invalid_argument("adam: state tensor count mismatch");
    for (size_t i = 0; i < params_.size(); ++i)
        if (m[i].size() != params_[i].data().size() || v[i].size() != params_[i].data().size())
            throw std::invalid_argument("adam: state size mismatch at parameter " +
                                        std::to_string(i));
    t_ = t;
    m_ = std::move(m);
    v_ = std::move(v);
}

// ---- losses ------------------------------------------------------------------

AdvLosses adversarial_losses(const models::Discriminator& d, const Tensor& real,
                             const Tensor& fake) {
    Tensor out_real = d.forward(real);
    Tensor out_fake_det = d.forward(fake.detach());
    Tensor ones_r = Tensor::full(out_real.shape(), 1.0);
    Tensor zeros_f = Tensor::zeros(out_fake_det.shape());

    AdvLosses al;
    al.d_loss = scale(add(mse(out_real, ones_r), mse(out_fake_det, zeros_f)), 0.5);
    Tensor out_fake = d.forward(fake);
    al.g_loss = mse(out_fake, Tensor::full(out_fake.shape(), 1.0));

    double dev = 0.0;
    for (Scalar v : out_real.data()) dev += std::abs(v - 1.0);
    dev /= static_cast<double>(out_real.numel());
    double dev_f = 0.0;
    for (Scalar v : out_fake_det.data()) dev_f += std::abs(v);
    dev_f /= static_cast<double>(out_fake_det.numel());
    al.x_for_lambda = 0.5 * (dev + dev_f);
    return al;
}

double discriminator_x_value(const models::Discriminator& d, const Tensor& real,
                             const Tensor& fake) {
    NoGradGuard ng;
    Tensor out_real = d.forward(real);
    Tensor out_fake = d.forward(fake.detach());
    double dev = 0.0;
    for (Scalar v : out_real.data()) dev += std::abs(v - 1.0);
    dev /= static_cast<double>(out_real.numel());
    double dev_f = 0.0;
    for (Scalar v : out_fake.data()) dev_f += std::abs(v);
    dev_f /= static_cast<double>(out_fake.numel());
    return 0.5 * (dev + dev_f);
}

Tensor cycle_loss(const Tensor& original, const Tensor& cycled, double lambda_cycle) {
    return scale(l1(cycled, original), lambda_cycle);
}

// ---- models ------------------------------------------------------------------

ModelSet build_models(const TrainConfig& cfg) {
    models::GeneratorConfig gc;
    gc.ngf = cfg.ngf;
    gc.num_resnet = cfg.num_resnet;
    gc.image_size = cfg.image_size;
    gc.composite = cfg.composite;

    ModelSet m;
    m.g_ab = models::build_generator(gc, derive_seed(cfg.seed, "gen_ab"));
    m.g_ba = models::build_generator(gc, derive_seed(cfg.seed, "gen_ba"));
    m.d_a = models::build_discriminator(cfg.ndf, derive_seed(cfg.seed, "disc_a"));
    m.d_b = models::build_discriminator(cfg.ndf, derive_seed(cfg.seed, "disc_b"));
    m.md_a = models::build_discriminator(cfg.ndf, derive_seed(cfg.seed, "mask_disc_a"));
    m.md_b = models::build_discriminator(cfg.ndf, derive_seed(cfg.seed, "mask_disc_b"));
    return m;
}

std::vector<nn::NamedParam> ModelSet::named_parameters() const {
    std::vector<nn::NamedParam> all;
    auto append = [&all](std::vector<nn::NamedParam> p) {
        all.insert(all.end(), p.begin(), p.end());
    };
    append(g_ab.parameters("g_ab"));
    append(g_ba.parameters("g_ba"));
    append(d_a.parameters("d_a"));
    append(d_b.parameters("d_b"));
    append(md_a.parameters("md_a"));
    append(md_b.parameters("md_b"));
    return all;
}

// ---- trainer -------------------------------------------------------------------

namespace {

std::vector<Tensor> concat_params(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
    std::vector<Tensor> out = a;
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

struct TrainingDiverged : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace

Trainer::Trainer(const TrainConfig& cfg, data::DomainDataset domain_a, data::DomainDataset domain_b)
    : cfg_(cfg),
      data_a_(std::move(domain_a)),
      data_b_(std::move(domain_b)),
      models_(build_models(cfg)),
      noise_rng_(derive_seed(cfg.seed, "noise")) {
    cfg_.validate();
    if (data_a_.size() == 0 || data_b_.size() == 0)
        throw std::invalid_argument("trainer: datasets must be non-empty");
    opt_g_ = Adam(concat_params(models_.g_ab.param_tensors(), models_.g_ba.param_tensors()),
                  cfg.lr, cfg.adam_beta1, cfg.adam_beta2);
    opt_d_a_ = Adam(models_.d_a.param_tensors(), cfg.lr, cfg.adam_beta1, cfg.adam_beta2);
    opt_d_b_ = Adam(models_.d_b.param_tensors(), cfg.lr, cfg.adam_beta1, cfg.adam_beta2);
    opt_md_a_ = Adam(models_.md_a.param_tensors(), cfg.lr, cfg.adam_beta1, cfg.adam_beta2);
    opt_md_b_ = Adam(models_.md_b.param_tensors(), cfg.lr, cfg.adam_beta1, cfg.adam_beta2);
    order_a_ = data_a_.epoch_order(0);
    order_b_ = data_b_.epoch_order(0);
}

std::vector<int> Trainer::next_batch(bool domain_a) {
    auto& order = domain_a ? order_a_ : order_b_;
    auto& pos = domain_a ? pos_a_ : pos_b_;
    auto& epoch = domain_a ? epoch_a_ : epoch_b_;
    const auto& ds = domain_a ? data_a_ : data_b_;
    std::vector<int> idx;
    idx.reserve(static_cast<size_t>(cfg_.batch_size));
    while (static_cast<int>(idx.size()) < cfg_.batch_size) {
        if (pos >= order.size()) {
            ++epoch;
            order = ds.epoch_order(epoch);
            pos = 0;
        }
        idx.push_back(order[pos++]);
    }
    return idx;
}

PassOne Trainer::prepare_input_mask(bool a_to_b, const Tensor& source_batch,
                                    const Tensor& target_real_batch, const Tensor& noise) {
    PassOne result;
    result.input_mask = noise;
    if (cfg_.mode != Mode::xai) return result;

    const models::Generator& g = a_to_b ? models_.g_ab : models_.g_ba;
    const models::MaskDiscriminator& md = a_to_b ? models_.md_b : models_.md_a;

    Tensor fake1;
    {
        NoGradGuard ng;
        fake1 = g.forward(source_batch, noise).out;
    }
    explain::ExplanationMap m_mask = explain::compute_saliency(
        models::as_critic(md), fake1, cfg_.saliency_target, cfg_.saliency_reduce,
        explain::MapSource::mask);
    const double x_md = discriminator_x_value(md, target_real_batch, fake1);
    result.lambda_b = cfg_.force_lambda_zero ? 0.0 : explain::lambda_weight(x_md, cfg_.gamma);
    result.input_mask = explain::compose_input_mask(noise, m_mask, result.lambda_b, cfg_.sign);
    return result;
}

Trainer::DirectionLosses Trainer::run_direction(bool a_to_b, const Tensor& source,
                                                const Tensor& target_real) {
    const models::Generator& g = a_to_b ? models_.g_ab : models_.g_ba;
    const models::Generator& g_other = a_to_b ? models_.g_ba : models_.g_ab;
    const models::Discriminator& d = a_to_b ? models_.d_b : models_.d_a;
    const models::MaskDiscriminator& md = a_to_b ? models_.md_b : models_.md_a;

    const int n = source.dim(0), h = source.dim(2), w = source.dim(3);
    Tensor noise1 = data::sample_noise_mask_batch(n, h, w, noise_rng_);
    PassOne pass1 = prepare_input_mask(a_to_b, source, target_real, noise1);

    // pass 2: the only pass that reaches the optimizer
    models::GeneratorOutput fake2 = g.forward(source, pass1.input_mask);

    double lam_a = 0.0;
    if (cfg_.mode == Mode::xai) {
        explain::ExplanationMap m_grad = explain::compute_saliency(
            models::as_critic(d), fake2.out.detach(), cfg_.saliency_target, cfg_.saliency_reduce,
            explain::MapSource::primary);
        const double x_d = discriminator_x_value(d, target_real, fake2.out);
        lam_a = cfg_.force_lambda_zero ? 0.0 : explain::lambda_weight(x_d, cfg_.gamma);
        register_grad_hook(fake2.out, explain::make_gradient_mask_hook(m_grad, cfg_.alpha, lam_a,
                                                                       fake2.out.shape()));
    }

    Tensor cycle_mask = cfg_.reuse_cycle_noise
                            ? pass1.input_mask
                            : data::sample_noise_mask_batch(n, h, w, noise_rng_);
    Tensor cycled = g_other.forward(fake2.out, cycle_mask).out;

    Tensor d_fake = d.forward(fake2.out);
    Tensor g_adv = mse(d_fake, Tensor::full(d_fake.shape(), 1.0));
    Tensor cyc = cycle_loss(source, cycled, cfg_.lambda_cycle);
    Tensor loss = add(g_adv, cyc);

    double mask_adv_val = 0.0;
    if (cfg_.mode == Mode::xai) {
        Tensor md_fake = md.forward(fake2.out);
        Tensor g_adv_mask = mse(md_fake, Tensor::full(md_fake.shape(), 1.0));
        loss = add(loss, scale(g_adv_mask, cfg_.lambda_mask_adv));
        mask_adv_val = g_adv_mask.item();
    }

    if (cfg_.lambda_identity > 0.0) {
        Tensor id_mask = data::sample_noise_mask_batch(n, h, w, noise_rng_);
        Tensor ident = g.forward(target_real, id_mask).out;
        loss = add(loss, scale(l1(ident, target_real), cfg_.lambda_identity));
    }

    DirectionLosses out{loss, fake2.out, g_adv.item(), cyc.item(), mask_adv_val, lam_a,
                        pass1.lambda_b};
    return out;
}

StepOutput Trainer::generator_step(const Tensor& batch_a, const Tensor& batch_b) {
    // discriminators are graphed through but never receive gradients here
    std::vector<Tensor> frozen = concat_params(
        concat_params(models_.d_a.param_tensors(), models_.d_b.param_tensors()),
        concat_params(models_.md_a.param_tensors(), models_.md_b.param_tensors()));
    ParamFreeze freeze(frozen);

    DirectionLosses ab = run_direction(true, batch_a, batch_b);
    DirectionLosses ba = run_direction(false, batch_b, batch_a);

    Tensor total = add(ab.loss, ba.loss);
    backward(total);
    opt_g_.step();
    opt_g_.zero_grad();

    StepOutput out;
    out.record.loss_g = total.item();
    out.record.loss_cycle = ab.cyc + ba.cyc;
    out.record.loss_mask_adv = ab.mask_adv + ba.mask_adv;
    out.record.lambda_a = 0.5 * (ab.lam_a + ba.lam_a);
    out.record.lambda_b = 0.5 * (ab.lam_b + ba.lam_b);
    out.fake_a2b = ab.fake.detach();
    out.fake_b2a = ba.fake.detach();
    return out;
}

void Trainer::discriminator_step(const Tensor& batch_a, const Tensor& batch_b,
                                 const Tensor& fake_a2b, const Tensor& fake_b2a,
                                 LossRecord& record) {
    auto train_one = [](const models::Discriminator& d, Adam& opt, const Tensor& real,
                        const Tensor& fake) {
        AdvLosses al = adversarial_losses(d, real, fake);
        backward(al.d_loss);
        opt.step();
        opt.zero_grad();
        return al.d_loss.item();
    };
    record.loss_d_a = train_one(models_.d_a, opt_d_a_, batch_a, fake_b2a);
    record.loss_d_b = train_one(models_.d_b, opt_d_b_, batch_b, fake_a2b);
    if (cfg_.mode == Mode::xai) {
        train_one(models_.md_a, opt_md_a_, batch_a, fake_b2a);
        train_one(models_.md_b, opt_md_b_, batch_b, fake_a2b);
    }
}

LossRecord Trainer::step() {
    Tensor batch_a = data::stack_batch(data_a_, next_batch(true));
    Tensor batch_b = data::stack_batch(data_b_, next_batch(false));

    StepOutput gen = generator_step(batch_a, batch_b);
    discriminator_step(batch_a, batch_b, gen.fake_a2b, gen.fake_b2a, gen.record);

    gen.record.step = ++steps_done_;
    if (!gen.record.finite())
        throw TrainingDiverged("non-finite loss at step " + std::to_string(gen.record.step));
    return gen.record;
}

TrainResult Trainer::run(const RunSinks& sinks) {
    TrainResult result;
    for (int s = 0; s < cfg_.steps; ++s) {
        const auto t0 = std::chrono::steady_clock::now();
        LossRecord rec;
        try {
            rec = step();
        } catch (const std::runtime_error& e) {
            result.aborted = true;
            result.abort_reason = e.what();
            break;
        }
        const auto t1 = std::chrono::steady_clock::now();
        rec.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        if (sinks.on_record) sinks.on_record(rec);
        result.steps_completed = steps_done_;
        if (cfg_.checkpoint_every > 0 && steps_done_ % cfg_.checkpoint_every == 0 &&
            sinks.on_checkpoint)
            sinks.on_checkpoint(steps_done_);
    }
    return result;
}

}  // namespace xaigan::train
