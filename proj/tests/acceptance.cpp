// Acceptance suite: end-to-end gates over the whole laboratory, from the
// autodiff oracles to run reproducibility. Prints one pass/fail line per
// criterion; the exit code is the failure count.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <vector>

#include <json.hpp>

#include "test_util.hpp"
#include "xaigan/checkpoint.hpp"
#include "xaigan/explain.hpp"
#include "xaigan/harness.hpp"
#include "xaigan/metrics.hpp"
#include "xaigan/train.hpp"

using namespace xaigan;
namespace fs = std::filesystem;

namespace {

struct Gate {
    int failures = 0;

    void criterion(int number, const std::string& title, const std::function<bool(std::string&)>& body) {
        std::string detail;
        bool ok = false;
        try {
            ok = body(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        std::printf("[%s] criterion %2d: %s%s%s\n", ok ? "PASS" : "FAIL", number, title.c_str(),
                    detail.empty() ? "" : " -- ", detail.c_str());
        std::fflush(stdout);
        if (!ok) ++failures;
    }
};

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path);
    return std::string{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

train::TrainConfig default_cfg() {
    train::TrainConfig cfg;  // the shipped defaults: ngf 8, ndf 8, num_resnet 2, lr 2e-4
    cfg.image_size = 16;
    cfg.batch_size = 4;
    cfg.dataset.kind = "stripes";
    cfg.dataset.n = 64;
    return cfg;
}

train::Trainer make_trainer(const train::TrainConfig& cfg) {
    auto [a, b] = harness::build_datasets(cfg);
    return train::Trainer(cfg, std::move(a), std::move(b));
}

std::vector<std::vector<Scalar>> shared_params(train::Trainer& t) {
    std::vector<std::vector<Scalar>> out;
    for (const auto& group :
         {t.model_set().g_ab.param_tensors(), t.model_set().g_ba.param_tensors(),
          t.model_set().d_a.param_tensors(), t.model_set().d_b.param_tensors()})
        for (const Tensor& p : group) out.push_back(p.data());
    return out;
}

}  // namespace

int main() {
    Gate gate;
    const fs::path work = fs::temp_directory_path() / "xaigan_acceptance";
    fs::remove_all(work);
    fs::create_directories(work);

    gate.criterion(1, "lambda endpoints", [](std::string& detail) {
        if (std::abs(explain::lambda_weight(0.0, 2) - 1.0) > 1e-12) {
            detail = "lambda(0) != 1";
            return false;
        }
        for (int i = 0; i <= 1000; ++i) {
            const double x = 0.5 + 0.01 * i;
            if (std::abs(explain::lambda_weight(x, 2)) > 1e-12) {
                detail = "lambda(" + std::to_string(x) + ") != 0";
                return false;
            }
        }
        return true;
    });

    gate.criterion(2, "gradient-mask hook equals the written-out update", [](std::string& detail) {
        Rng rng(20240202);
        for (int trial = 0; trial < 200; ++trial) {
            const int h = static_cast<int>(rng.uniform_int(1, 16));
            const int w = static_cast<int>(rng.uniform_int(1, 16));
            const int n = static_cast<int>(rng.uniform_int(1, 3));
            Tensor g = testutil::random_tensor(rng, {n, 3, h, w}, -3, 3, false);
            Tensor m = testutil::random_tensor(rng, {n, 1, h, w}, 0, 1, false);
            const double alpha = 0.01 + rng.uniform();
            const double lam = rng.uniform();
            Tensor out = explain::apply_gradient_mask(g, {m, explain::MapSource::primary}, alpha, lam);
            for (int ni = 0; ni < n; ++ni)
                for (int c = 0; c < 3; ++c)
                    for (int j = 0; j < h * w; ++j) {
                        const size_t gi = static_cast<size_t>((ni * 3 + c) * h * w + j);
                        const size_t mi = static_cast<size_t>(ni * h * w + j);
                        const double hand = g.data()[gi] + alpha * lam * (g.data()[gi] * m.data()[mi]);
                        if (std::abs(out.data()[gi] - hand) > 1e-12) {
                            detail = "trial " + std::to_string(trial) + " deviates";
                            return false;
                        }
                    }
            Tensor id0 = explain::apply_gradient_mask(g, {m, explain::MapSource::primary}, alpha, 0.0);
            Tensor idz = explain::apply_gradient_mask(
                g, {Tensor::zeros({n, 1, h, w}), explain::MapSource::primary}, alpha, lam);
            if (id0.data() != g.data() || idz.data() != g.data()) {
                detail = "identity cases are not bit-exact";
                return false;
            }
        }
        return true;
    });

    gate.criterion(3, "all primitives match finite differences (100 trials)", [](std::string& detail) {
        Rng rng(424242);
        double worst = 0;
        std::string worst_name;
        for (int trial = 0; trial < 100; ++trial) {
            auto [name, err] = testutil::fd_sweep_once(rng);
            if (err > worst) {
                worst = err;
                worst_name = name;
            }
        }
        char buf[128];
        std::snprintf(buf, sizeof buf, "worst rel Linf %.3g (%s)", worst, worst_name.c_str());
        detail = buf;
        return worst <= 1e-6;
    });

    gate.criterion(4, "saliency matches the analytic and finite-difference oracles",
                   [](std::string& detail) {
        // linear critic: map == normalized channel-max |w|
        Rng rng(77);
        const int h = 8, w = 8;
        Tensor weights = testutil::random_tensor(rng, {3 * h * w, 1}, -1, 1, true);
        models::Critic lin;
        lin.params = {weights};
        lin.forward = [weights](const Tensor& x) {
            return matmul(reshape(x, {1, static_cast<int>(x.numel())}), weights);
        };
        Tensor img = testutil::random_tensor(rng, {3, h, w}, -1, 1, false);
        explain::ExplanationMap map = explain::compute_saliency(lin, img, 1.0);
        std::vector<double> expect(static_cast<size_t>(h) * w, 0.0);
        for (int c = 0; c < 3; ++c)
            for (int j = 0; j < h * w; ++j)
                expect[static_cast<size_t>(j)] =
                    std::max(expect[static_cast<size_t>(j)],
                             std::abs(weights.data()[static_cast<size_t>(c * h * w + j)]));
        double peak = 0;
        for (double v : expect) peak = std::max(peak, v);
        for (size_t i = 0; i < expect.size(); ++i)
            if (std::abs(map.values.data()[i] - expect[i] / peak) > 1e-10) {
                detail = "linear critic map deviates";
                return false;
            }

        // two-layer critic vs finite differences
        nn::Conv2dLayer l1 =
            nn::make_conv({3, 4, 3, 1, 1, 0, false, false, nn::Activation::tanh}, 19);
        nn::Conv2dLayer l2 =
            nn::make_conv({4, 1, 3, 1, 1, 0, false, false, nn::Activation::none}, 23);
        for (Scalar& v : l1.weight.data()) v *= 20.0;
        for (Scalar& v : l2.weight.data()) v *= 20.0;
        models::Critic two;
        two.params = {l1.weight, l1.bias, l2.weight, l2.bias};
        two.forward = [&](const Tensor& x) { return l2.forward(l1.forward(x)); };
        Tensor img2 = testutil::random_tensor(rng, {1, 3, 8, 8}, -1, 1, false);
        explain::ExplanationMap map2 = explain::compute_saliency(two, img2, 1.0);
        Tensor fd = finite_difference_grad(
            [&](const Tensor& probe) {
                NoGradGuard ng;
                const double out = mean(two.forward(probe)).item();
                return (out - 1.0) * (out - 1.0);
            },
            img2, 1e-5);
        std::vector<double> expect2(64, 0.0);
        for (int c = 0; c < 3; ++c)
            for (int j = 0; j < 64; ++j)
                expect2[static_cast<size_t>(j)] =
                    std::max(expect2[static_cast<size_t>(j)],
                             std::abs(fd.data()[static_cast<size_t>(c * 64 + j)]));
        double peak2 = 0;
        for (double v : expect2) peak2 = std::max(peak2, v);
        if (peak2 <= 0) {
            detail = "degenerate fd map";
            return false;
        }
        for (size_t i = 0; i < expect2.size(); ++i)
            if (std::abs(map2.values.data()[i] - expect2[i] / peak2) > 1e-6) {
                detail = "two-layer critic map deviates from finite differences";
                return false;
            }
        return true;
    });

    gate.criterion(5, "lambda-zero xai trajectories are bit-identical to baseline",
                   [](std::string& detail) {
        train::TrainConfig base = default_cfg();
        base.mode = train::Mode::baseline;
        base.steps = 10;
        base.seed = 42;
        base.dataset.n = 16;

        train::TrainConfig forced = base;
        forced.mode = train::Mode::xai;
        forced.force_lambda_zero = true;
        forced.lambda_mask_adv = 0.0;  // the mask critic term is not lambda-scaled

        train::Trainer tb = make_trainer(base);
        train::Trainer tx = make_trainer(forced);
        for (int s = 0; s < 10; ++s) {
            tb.step();
            tx.step();
            if (shared_params(tb) != shared_params(tx)) {
                detail = "trajectories diverge at step " + std::to_string(s + 1);
                return false;
            }
        }
        return true;
    });

    gate.criterion(6, "generator shape and composite contracts", [](std::string& detail) {
        models::GeneratorConfig gc;
        gc.ngf = 8;
        gc.num_resnet = 2;
        gc.image_size = 16;
        models::Generator g = models::build_generator(gc, 7);
        Rng rng(8);
        for (int size : {16, 32, 64}) {
            Tensor x = testutil::random_tensor(rng, {1, 3, size, size}, -0.9, 0.9, false);
            Rng noise(9);
            Tensor m = data::sample_noise_mask_batch(1, size, size, noise);
            if (g.forward(x, m).out.shape() != x.shape()) {
                detail = "shape mismatch at size " + std::to_string(size);
                return false;
            }
        }
        Tensor x = testutil::random_tensor(rng, {2, 3, 16, 16}, -0.9, 0.9, false);
        models::GeneratorOutput all = g.forward(x, Tensor::full({2, 1, 16, 16}, 1.0));
        if (all.out.data() != all.raw.data()) {
            detail = "mask of ones is not the pure network output";
            return false;
        }
        models::GeneratorOutput none = g.forward(x, Tensor::zeros({2, 1, 16, 16}));
        if (none.out.data() != x.data()) {
            detail = "mask of zeros is not the identity";
            return false;
        }
        return true;
    });

    gate.criterion(7, "500-step smoke converges in both modes", [&](std::string& detail) {
        char buf[160];
        for (const train::Mode mode : {train::Mode::baseline, train::Mode::xai}) {
            train::TrainConfig cfg = default_cfg();
            cfg.mode = mode;
            cfg.steps = 500;
            cfg.seed = 1;
            train::Trainer t = make_trainer(cfg);
            std::vector<train::LossRecord> records;
            train::RunSinks sinks;
            sinks.on_record = [&](const train::LossRecord& r) { records.push_back(r); };
            const auto t0 = std::chrono::steady_clock::now();
            train::TrainResult res = t.run(sinks);
            const double secs =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            if (res.aborted || res.steps_completed != 500) {
                detail = std::string(to_string(mode)) + " aborted: " + res.abort_reason;
                return false;
            }
            if (secs > 600.0) {
                std::snprintf(buf, sizeof buf, "%s took %.1fs (budget 600s)", to_string(mode), secs);
                detail = buf;
                return false;
            }
            std::vector<double> cycle;
            for (const auto& r : records) {
                if (!r.finite()) {
                    detail = "non-finite record";
                    return false;
                }
                cycle.push_back(r.loss_cycle);
            }
            const auto ma = harness::moving_average(cycle, 10);
            const double initial = ma[9];
            const double final_ma = ma.back();
            std::snprintf(buf, sizeof buf, "%s: %.1fs, windowed cycle %.3f -> %.3f", to_string(mode),
                          secs, initial, final_ma);
            detail += std::string(detail.empty() ? "" : "; ") + buf;
            if (final_ma > 0.5 * initial) return false;
        }
        return true;
    });

    gate.criterion(8, "compare over 3 seeds is reproducible byte-for-byte", [&](std::string& detail) {
        harness::ResolvedConfig rc;
        rc.train = default_cfg();
        rc.train.steps = 25;
        rc.train.dataset.n = 16;
        rc.name = "gate";
        rc.compare.seeds = {1, 2, 3};
        rc.compare.threshold = 2.0;
        rc.compare.window = 10;

        const fs::path d1 = work / "cmp1", d2 = work / "cmp2";
        if (harness::run_compare(rc, d1.string()) != 0 ||
            harness::run_compare(rc, d2.string()) != 0) {
            detail = "a child run failed";
            return false;
        }
        if (slurp((d1 / "report.json").string()) != slurp((d2 / "report.json").string())) {
            detail = "report.json differs between emissions";
            return false;
        }
        for (uint64_t seed : rc.compare.seeds)
            for (const char* mode : {"baseline", "xai"}) {
                const std::string rel =
                    "gate-" + std::string(mode) + "-s" + std::to_string(seed) + "/metrics.jsonl";
                if (slurp((d1 / rel).string()) != slurp((d2 / rel).string())) {
                    detail = rel + " differs between emissions";
                    return false;
                }
            }
        const auto j = nlohmann::json::parse(slurp((d1 / "report.json").string()));
        if (!j.contains("observation") || !j.at("summary").contains("baseline") ||
            !j.at("summary").at("xai").contains("median_steps_to_threshold")) {
            detail = "report lacks the steps-to-threshold summary";
            return false;
        }
        detail = j.at("observation").get<std::string>();
        return true;
    });

    gate.criterion(9, "persistence round trips", [&](std::string& detail) {
        // checkpoint: forward outputs reproduce bit-exactly at float32
        train::TrainConfig cfg = default_cfg();
        cfg.steps = 2;
        cfg.dataset.n = 8;
        train::Trainer t = make_trainer(cfg);
        t.step();
        const std::string p1 = (work / "gate_a.xaic").string();
        const std::string p2 = (work / "gate_b.xaic").string();
        harness::save_trainer_checkpoint(t, p1);
        harness::LoadedModels m1 = harness::load_models(p1);
        Rng rng(4);
        Tensor x = testutil::random_tensor(rng, {1, 3, 16, 16}, -1, 1, false);
        Tensor mask = Tensor::full({1, 1, 16, 16}, 1.0);
        Tensor f1, f2;
        harness::LoadedModels m2;
        {
            NoGradGuard ng;
            f1 = m1.models.g_ab.forward(x, mask).out;
            harness::save_models(m1.models, m1.topology, p2);
            m2 = harness::load_models(p2);
            f2 = m2.models.g_ab.forward(x, mask).out;
        }
        if (f1.data() != f2.data()) {
            detail = "forward outputs changed across the round trip";
            return false;
        }
        const std::string p3 = (work / "gate_c.xaic").string();
        harness::save_models(m2.models, m2.topology, p3);
        if (slurp(p2) != slurp(p3)) {
            detail = "checkpoint bytes not idempotent";
            return false;
        }

        // ppm round trip
        auto [da, db] = harness::build_datasets(cfg);
        const std::string i1 = (work / "rt1.ppm").string(), i2 = (work / "rt2.ppm").string();
        data::save_ppm(da.samples[0].pixels, i1);
        data::save_ppm(data::load_ppm(i1).pixels, i2);
        if (slurp(i1) != slurp(i2)) {
            detail = "ppm bytes changed across the round trip";
            return false;
        }

        // svg re-emission
        harness::ResolvedConfig rc;
        rc.train = cfg;
        rc.name = "persist";
        harness::TrainOutcome out = harness::run_train(rc, (work / "persist").string());
        const std::string metrics = out.run_dir + "/metrics.jsonl";
        const std::string svg1 =
            harness::render_loss_svg(harness::read_metrics_file(metrics), "persist-xai-s1");
        if (slurp(out.run_dir + "/loss.svg") != svg1) {
            detail = "svg re-emission differs";
            return false;
        }
        return true;
    });

    gate.criterion(10, "noise mask statistics over 5 seeds", [](std::string& detail) {
        for (uint64_t seed = 1; seed <= 5; ++seed) {
            Rng rng(seed);
            Tensor m = data::sample_noise_mask(64, 64, rng);
            double mean = 0;
            for (Scalar v : m.data()) mean += v;
            mean /= static_cast<double>(m.numel());
            double var = 0;
            for (Scalar v : m.data()) var += (v - mean) * (v - mean);
            var /= static_cast<double>(m.numel());
            const double sd = std::sqrt(var);
            if (std::abs(mean - 1.0) > 0.01 || std::abs(sd - 0.02) > 0.005) {
                char buf[96];
                std::snprintf(buf, sizeof buf, "seed %llu: mean %.4f sd %.4f",
                              static_cast<unsigned long long>(seed), mean, sd);
                detail = buf;
                return false;
            }
        }
        return true;
    });

    fs::remove_all(work);
    std::printf("%d of 10 criteria passed\n", 10 - gate.failures);
    return gate.failures;
}
