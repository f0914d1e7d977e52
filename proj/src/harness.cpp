#include "xaigan/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "xaigan/checkpoint.hpp"
#include "xaigan/metrics.hpp"

namespace xaigan::harness {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

// ---- config ---------------------------------------------------------------------

namespace {

const std::vector<std::string> kKnownTopLevel = {
    "mode", "steps", "batch_size", "lr", "adam_beta1", "adam_beta2", "lambda_cycle",
    "lambda_mask_adv", "lambda_identity", "alpha", "gamma", "sign", "ngf", "ndf",
    "num_resnet", "image_size", "seed", "mask_composite", "saliency_reduce",
    "saliency_target", "reuse_cycle_noise", "force_lambda_zero", "checkpoint_every",
    "resume", "dataset", "compare"};

explain::MaskSign sign_from_string(const std::string& s) {
    if (s == "suppress") return explain::MaskSign::suppress;
    if (s == "exaggerate") return explain::MaskSign::exaggerate;
    throw std::invalid_argument("config error: sign: must be 'suppress' or 'exaggerate', got '" +
                                s + "'");
}

models::MaskComposite composite_from_string(const std::string& s) {
    if (s == "blend") return models::MaskComposite::blend;
    if (s == "additive") return models::MaskComposite::additive;
    throw std::invalid_argument(
        "config error: mask_composite: must be 'blend' or 'additive', got '" + s + "'");
}

explain::ChannelReduce reduce_from_string(const std::string& s) {
    if (s == "max") return explain::ChannelReduce::max;
    if (s == "mean") return explain::ChannelReduce::mean;
    throw std::invalid_argument("config error: saliency_reduce: must be 'max' or 'mean', got '" +
                                s + "'");
}

template <typename T>
void fetch(const ordered_json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw std::invalid_argument(std::string("config error: ") + key + ": wrong type (" +
                                    j.at(key).dump() + ")");
    }
}

}  // namespace

ResolvedConfig config_from_json_text(const std::string& text, const std::string& origin) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(origin + ": not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw std::invalid_argument(origin + ": config must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (std::find(kKnownTopLevel.begin(), kKnownTopLevel.end(), key) == kKnownTopLevel.end())
            throw std::invalid_argument("config error: unknown key '" + key + "'");

    ResolvedConfig rc;
    train::TrainConfig& c = rc.train;
    std::string mode_s = to_string(c.mode), sign_s = "suppress", composite_s = "blend",
                reduce_s = "max";
    fetch(j, "mode", mode_s);
    fetch(j, "steps", c.steps);
    fetch(j, "batch_size", c.batch_size);
    fetch(j, "lr", c.lr);
    fetch(j, "adam_beta1", c.adam_beta1);
    fetch(j, "adam_beta2", c.adam_beta2);
    fetch(j, "lambda_cycle", c.lambda_cycle);
    fetch(j, "lambda_mask_adv", c.lambda_mask_adv);
    fetch(j, "lambda_identity", c.lambda_identity);
    fetch(j, "alpha", c.alpha);
    fetch(j, "gamma", c.gamma);
    fetch(j, "sign", sign_s);
    fetch(j, "ngf", c.ngf);
    fetch(j, "ndf", c.ndf);
    fetch(j, "num_resnet", c.num_resnet);
    fetch(j, "image_size", c.image_size);
    fetch(j, "seed", c.seed);
    fetch(j, "mask_composite", composite_s);
    fetch(j, "saliency_reduce", reduce_s);
    fetch(j, "saliency_target", c.saliency_target);
    fetch(j, "reuse_cycle_noise", c.reuse_cycle_noise);
    fetch(j, "force_lambda_zero", c.force_lambda_zero);
    fetch(j, "checkpoint_every", c.checkpoint_every);
    fetch(j, "resume", c.resume);
    c.mode = train::mode_from_string(mode_s);
    c.sign = sign_from_string(sign_s);
    c.composite = composite_from_string(composite_s);
    c.saliency_reduce = reduce_from_string(reduce_s);

    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        if (!d.is_object()) throw std::invalid_argument("config error: dataset: must be an object");
        for (const auto& [key, _] : d.items())
            if (key != "kind" && key != "root" && key != "n" && key != "size")
                throw std::invalid_argument("config error: unknown key 'dataset." + key + "'");
        fetch(d, "kind", c.dataset.kind);
        fetch(d, "root", c.dataset.root);
        fetch(d, "n", c.dataset.n);
        fetch(d, "size", c.dataset.size);
    }
    if (j.contains("compare")) {
        const auto& cm = j.at("compare");
        if (!cm.is_object()) throw std::invalid_argument("config error: compare: must be an object");
        for (const auto& [key, _] : cm.items())
            if (key != "seeds" && key != "threshold" && key != "window")
                throw std::invalid_argument("config error: unknown key 'compare." + key + "'");
        fetch(cm, "seeds", rc.compare.seeds);
        fetch(cm, "threshold", rc.compare.threshold);
        fetch(cm, "window", rc.compare.window);
        if (rc.compare.seeds.empty())
            throw std::invalid_argument("config error: compare.seeds: need at least one seed");
        if (rc.compare.window < 1)
            throw std::invalid_argument("config error: compare.window: must be >= 1");
    }
    c.validate();
    return rc;
}

ResolvedConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config file not found: " + path);
    const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    ResolvedConfig rc = config_from_json_text(text, path);
    rc.name = fs::path(path).stem().string();
    return rc;
}

std::string config_to_json(const ResolvedConfig& rc) {
    const train::TrainConfig& c = rc.train;
    ordered_json j;
    j["mode"] = to_string(c.mode);
    j["steps"] = c.steps;
    j["batch_size"] = c.batch_size;
    j["lr"] = c.lr;
    j["adam_beta1"] = c.adam_beta1;
    j["adam_beta2"] = c.adam_beta2;
    j["lambda_cycle"] = c.lambda_cycle;
    j["lambda_mask_adv"] = c.lambda_mask_adv;
    j["lambda_identity"] = c.lambda_identity;
    j["alpha"] = c.alpha;
    j["gamma"] = c.gamma;
    j["sign"] = c.sign == explain::MaskSign::suppress ? "suppress" : "exaggerate";
    j["ngf"] = c.ngf;
    j["ndf"] = c.ndf;
    j["num_resnet"] = c.num_resnet;
    j["image_size"] = c.image_size;
    j["seed"] = c.seed;
    j["mask_composite"] = c.composite == models::MaskComposite::blend ? "blend" : "additive";
    j["saliency_reduce"] = c.saliency_reduce == explain::ChannelReduce::max ? "max" : "mean";
    j["saliency_target"] = c.saliency_target;
    j["reuse_cycle_noise"] = c.reuse_cycle_noise;
    j["force_lambda_zero"] = c.force_lambda_zero;
    j["checkpoint_every"] = c.checkpoint_every;
    j["resume"] = c.resume;
    j["dataset"] = {{"kind", c.dataset.kind},
                    {"root", c.dataset.root},
                    {"n", c.dataset.n},
                    {"size", c.dataset.size}};
    j["compare"] = {{"seeds", rc.compare.seeds},
                    {"threshold", rc.compare.threshold},
                    {"window", rc.compare.window}};
    return j.dump(2);
}

void apply_override(ResolvedConfig& rc, const std::string& kv) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
        throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    const std::string value = kv.substr(eq + 1);

    ordered_json j = ordered_json::parse(config_to_json(rc));
    ordered_json* node = &j;
    size_t start = 0;
    std::vector<std::string> parts;
    while (true) {
        const size_t dot = key.find('.', start);
        parts.push_back(key.substr(start, dot == std::string::npos ? dot : dot - start));
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    for (size_t i = 0; i + 1 < parts.size(); ++i) {
        if (!node->contains(parts[i]))
            throw std::invalid_argument("--set: unknown config key '" + key + "'");
        node = &(*node)[parts[i]];
    }
    if (!node->contains(parts.back()))
        throw std::invalid_argument("--set: unknown config key '" + key + "'");

    ordered_json parsed;
    try {
        parsed = ordered_json::parse(value);
    } catch (const nlohmann::json::exception&) {
        parsed = value;  // plain string
    }
    (*node)[parts.back()] = parsed;
    const std::string name = rc.name;
    rc = config_from_json_text(j.dump(), "--set " + kv);
    rc.name = name;
}

uint64_t fnv1a_hash(const std::string& text) {
    uint64_t h = 1469598103934665603ULL;
    for (char c : text) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

std::string resolve_runs_root(const std::string& out_flag) {
    if (!out_flag.empty()) return out_flag;
    if (const char* env = std::getenv("XAIGAN_RUNS_DIR"); env && *env) return env;
    return "runs";
}

std::pair<data::DomainDataset, data::DomainDataset> build_datasets(const train::TrainConfig& cfg) {
    if (!cfg.dataset.root.empty()) {
        const fs::path root(cfg.dataset.root);
        auto a = data::load_domain_dir((root / "trainA").string(), 'A');
        auto b = data::load_domain_dir((root / "trainB").string(), 'B');
        a.shuffle_seed = derive_seed(cfg.seed, "shuffle_a");
        b.shuffle_seed = derive_seed(cfg.seed, "shuffle_b");
        for (const auto& ds : {a, b})
            for (const auto& s : ds.samples)
                if (s.pixels.dim(1) != cfg.image_size || s.pixels.dim(2) != cfg.image_size)
                    throw std::runtime_error("dataset image " + s.id + " is " +
                                             shape_str(s.pixels.shape()) + ", config expects " +
                                             std::to_string(cfg.image_size) + "x" +
                                             std::to_string(cfg.image_size));
        return {std::move(a), std::move(b)};
    }
    const int size = cfg.dataset.size == 0 ? cfg.image_size : cfg.dataset.size;
    return data::gen_synthetic_domains(data::synthetic_kind_from_string(cfg.dataset.kind),
                                       cfg.dataset.n, size, derive_seed(cfg.seed, "data"));
}

// ---- train command -----------------------------------------------------------

namespace {

std::string iso_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

std::string dataset_descriptor(const train::TrainConfig& cfg, const data::DomainDataset& a,
                               const data::DomainDataset& b) {
    ordered_json d;
    if (cfg.dataset.root.empty()) {
        d["kind"] = cfg.dataset.kind;
        d["n"] = cfg.dataset.n;
        d["size"] = cfg.dataset.size == 0 ? cfg.image_size : cfg.dataset.size;
    } else {
        d["root"] = cfg.dataset.root;
    }
    d["count_a"] = a.size();
    d["count_b"] = b.size();
    return d.dump();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << text;
}

}  // namespace

TrainOutcome run_train(const ResolvedConfig& rc, const std::string& runs_root) {
    TrainOutcome outcome;
    const train::TrainConfig& cfg = rc.train;
    cfg.validate();

    // Datasets are built before any directory is created so a bad dataset
    // path leaves no run residue behind.
    auto [ds_a, ds_b] = build_datasets(cfg);

    const std::string run_id =
        rc.name + "-" + to_string(cfg.mode) + "-s" + std::to_string(cfg.seed);
    const fs::path run_dir = fs::path(runs_root) / run_id;
    fs::create_directories(run_dir);
    outcome.run_dir = run_dir.string();

    const std::string cfg_json = config_to_json(rc);
    {
        char hash[32];
        std::snprintf(hash, sizeof hash, "%016llx",
                      static_cast<unsigned long long>(
                          fnv1a_hash(cfg_json + std::to_string(kCheckpointVersion))));
        ordered_json manifest;
        manifest["run_id"] = run_id;
        manifest["config"] = ordered_json::parse(cfg_json);
        manifest["dataset"] = ordered_json::parse(dataset_descriptor(cfg, ds_a, ds_b));
        manifest["config_hash"] = hash;
        manifest["start_time"] = iso_now();
        write_text_file((run_dir / "manifest.json").string(), manifest.dump(2) + "\n");
    }

    train::Trainer trainer(cfg, std::move(ds_a), std::move(ds_b));
    if (!cfg.resume.empty()) restore_trainer(trainer, cfg.resume);

    const std::string metrics_path = (run_dir / "metrics.jsonl").string();
    MetricsWriter writer(metrics_path, (run_dir / "timing.jsonl").string());
    train::RunSinks sinks;
    sinks.on_record = [&](const train::LossRecord& r) { writer.write(r); };
    sinks.on_checkpoint = [&](int step) {
        save_trainer_checkpoint(trainer,
                                (run_dir / ("checkpoint_" + std::to_string(step) + ".xaic")).string());
    };

    outcome.result = trainer.run(sinks);
    save_trainer_checkpoint(trainer, (run_dir / "checkpoint_final.xaic").string());

    // the plot is a pure function of the log file
    write_text_file((run_dir / "loss.svg").string(),
                    render_loss_svg(read_metrics_file(metrics_path), run_id));

    if (outcome.result.aborted) {
        ordered_json ab;
        ab["aborted_at_step"] = outcome.result.steps_completed + 1;
        ab["reason"] = outcome.result.abort_reason;
        write_text_file((run_dir / "aborted.json").string(), ab.dump(2) + "\n");
        std::cerr << "run aborted: " << outcome.result.abort_reason << "\n";
        outcome.exit_code = 3;
    }
    return outcome;
}

// ---- compare command -----------------------------------------------------------

int run_compare(ResolvedConfig rc, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const CompareOptions& opts = rc.compare;

    struct RunEntry {
        std::string mode;
        uint64_t seed;
        std::string status = "ok";
        std::string metrics_path;
        std::vector<train::LossRecord> records;
        std::optional<int> to_threshold;
        double final_cycle_ma = 0, final_adv_ma = 0;
    };
    std::vector<RunEntry> entries;
    bool any_failed = false;

    for (const uint64_t seed : opts.seeds) {
        for (const train::Mode mode : {train::Mode::baseline, train::Mode::xai}) {
            RunEntry e;
            e.mode = to_string(mode);
            e.seed = seed;
            ResolvedConfig child = rc;
            child.train.mode = mode;
            child.train.seed = seed;
            try {
                TrainOutcome out = run_train(child, out_dir);
                if (out.exit_code != 0) throw std::runtime_error(out.result.abort_reason);
                // relative path keeps the report byte-reproducible across out dirs
                e.metrics_path =
                    child.name + "-" + e.mode + "-s" + std::to_string(seed) + "/metrics.jsonl";
                e.records = read_metrics_file((fs::path(out_dir) / e.metrics_path).string());
                std::vector<double> cycle, adv;
                for (const auto& r : e.records) {
                    cycle.push_back(r.loss_cycle);
                    adv.push_back(0.5 * (r.loss_d_a + r.loss_d_b));
                }
                e.to_threshold = steps_to_threshold(cycle, opts.window, opts.threshold);
                if (!cycle.empty()) {
                    e.final_cycle_ma = moving_average(cycle, opts.window).back();
                    e.final_adv_ma = moving_average(adv, opts.window).back();
                }
            } catch (const std::exception& ex) {
                e.status = std::string("failed: ") + ex.what();
                any_failed = true;
            }
            entries.push_back(std::move(e));
        }
    }

    // median across the seeds that reached the threshold, per mode
    auto median_of = [](std::vector<double> v) -> std::optional<double> {
        if (v.empty()) return std::nullopt;
        std::sort(v.begin(), v.end());
        const size_t n = v.size();
        return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    };

    ordered_json report;
    report["seeds"] = opts.seeds;
    report["threshold"] = opts.threshold;
    report["window"] = opts.window;
    report["runs"] = ordered_json::array();

    CompareSeries series;
    for (const char* mode : {"baseline", "xai"}) {
        std::vector<double> to_thresh, final_cycle;
        size_t max_steps = 0;
        std::vector<const RunEntry*> mode_entries;
        for (const auto& e : entries)
            if (e.mode == mode && e.status == "ok") {
                mode_entries.push_back(&e);
                max_steps = std::max(max_steps, e.records.size());
                if (e.to_threshold) to_thresh.push_back(*e.to_threshold);
                final_cycle.push_back(e.final_cycle_ma);
            }
        // per-step mean across seeds
        std::vector<double>& adv = mode == std::string("baseline") ? series.baseline_adv
                                                                   : series.xai_adv;
        std::vector<double>& cyc = mode == std::string("baseline") ? series.baseline_cycle
                                                                   : series.xai_cycle;
        for (size_t s = 0; s < max_steps; ++s) {
            double adv_acc = 0, cyc_acc = 0;
            int n = 0;
            for (const RunEntry* e : mode_entries)
                if (s < e->records.size()) {
                    adv_acc += 0.5 * (e->records[s].loss_d_a + e->records[s].loss_d_b);
                    cyc_acc += e->records[s].loss_cycle;
                    ++n;
                }
            if (n > 0) {
                adv.push_back(adv_acc / n);
                cyc.push_back(cyc_acc / n);
            }
        }
        ordered_json summary;
        const auto med_steps = median_of(to_thresh);
        summary["runs_reaching_threshold"] = to_thresh.size();
        if (med_steps)
            summary["median_steps_to_threshold"] = *med_steps;
        else
            summary["median_steps_to_threshold"] = nullptr;
        const auto med_cycle = median_of(final_cycle);
        if (med_cycle)
            summary["median_final_cycle_ma"] = *med_cycle;
        else
            summary["median_final_cycle_ma"] = nullptr;
        report["summary"][mode] = summary;
    }

    for (const auto& e : entries) {
        ordered_json je;
        je["mode"] = e.mode;
        je["seed"] = e.seed;
        je["status"] = e.status;
        je["steps"] = e.records.size();
        if (e.to_threshold)
            je["steps_to_threshold"] = *e.to_threshold;
        else
            je["steps_to_threshold"] = nullptr;
        je["final_cycle_ma"] = e.final_cycle_ma;
        je["final_adv_ma"] = e.final_adv_ma;
        je["metrics"] = e.metrics_path;
        report["runs"].push_back(je);
    }

    // observation only; desk-scale dynamics are not gated
    {
        const auto& bs = report["summary"]["baseline"]["median_steps_to_threshold"];
        const auto& xs = report["summary"]["xai"]["median_steps_to_threshold"];
        std::string obs;
        if (bs.is_null() && xs.is_null())
            obs = "neither mode reached the cycle-loss threshold within the step budget";
        else if (bs.is_null())
            obs = "only xai reached the cycle-loss threshold";
        else if (xs.is_null())
            obs = "only baseline reached the cycle-loss threshold";
        else if (xs.get<double>() < bs.get<double>())
            obs = "xai reached the cycle-loss threshold earlier than baseline (median " +
                  std::to_string(xs.get<double>()) + " vs " + std::to_string(bs.get<double>()) +
                  " steps)";
        else
            obs = "baseline reached the cycle-loss threshold no later than xai (median " +
                  std::to_string(bs.get<double>()) + " vs " + std::to_string(xs.get<double>()) +
                  " steps)";
        report["observation"] = obs;
    }

    write_text_file((fs::path(out_dir) / "report.json").string(), report.dump(2) + "\n");
    write_text_file((fs::path(out_dir) / "compare.svg").string(), render_compare_svg(series));
    return any_failed ? 4 : 0;
}

// ---- dump-saliency / eval -------------------------------------------------------

int run_dump_saliency(const std::string& checkpoint_path, const std::string& image_path,
                      const std::string& out_dir, char domain) {
    LoadedModels lm = load_models(checkpoint_path);
    data::ImageSample img = data::load_ppm(image_path);
    if (img.pixels.dim(1) % 8 != 0 || img.pixels.dim(2) % 8 != 0)
        throw std::runtime_error(image_path + ": image dims must be divisible by 8, got " +
                                 shape_str(img.pixels.shape()));

    const models::Discriminator& d = domain == 'A' ? lm.models.d_a : lm.models.d_b;
    const models::MaskDiscriminator& md = domain == 'A' ? lm.models.md_a : lm.models.md_b;

    explain::ExplanationMap primary = explain::compute_saliency(
        models::as_critic(d), img.pixels, 1.0, explain::ChannelReduce::max,
        explain::MapSource::primary);
    explain::ExplanationMap mask = explain::compute_saliency(
        models::as_critic(md), img.pixels, 1.0, explain::ChannelReduce::max,
        explain::MapSource::mask);

    fs::create_directories(out_dir);
    data::save_pgm(primary.values, (fs::path(out_dir) / "saliency_primary.pgm").string());
    data::save_pgm(mask.values, (fs::path(out_dir) / "saliency_mask.pgm").string());
    return 0;
}

int run_eval(const std::string& checkpoint_path, const std::string& in_dir,
             const std::string& out_dir, bool a_to_b) {
    LoadedModels lm = load_models(checkpoint_path);
    const models::Generator& g = a_to_b ? lm.models.g_ab : lm.models.g_ba;

    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(in_dir))
        if (e.is_regular_file() && e.path().extension() == ".ppm")
            files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::runtime_error("no .ppm files in " + in_dir);

    fs::create_directories(out_dir);
    for (const auto& f : files) {
        data::ImageSample img = data::load_ppm(f);
        const int h = img.pixels.dim(1), w = img.pixels.dim(2);
        NoGradGuard ng;
        // inference runs mask-free: an all-ones mask selects the pure network output
        Tensor batch = reshape(img.pixels, {1, 3, h, w});
        Tensor mask = Tensor::full({1, 1, h, w}, 1.0);
        Tensor out = g.forward(batch, mask).out;
        data::save_ppm(reshape(out, {3, h, w}), (fs::path(out_dir) / fs::path(f).filename()).string());
    }
    return 0;
}

// ---- CLI ------------------------------------------------------------------------

namespace {

ResolvedConfig load_with_overrides(const std::string& config_path,
                                   const std::vector<std::string>& sets,
                                   const std::optional<uint64_t>& seed,
                                   const std::optional<std::string>& mode,
                                   const std::optional<int>& steps) {
    ResolvedConfig rc = load_config_file(config_path);
    for (const auto& kv : sets) apply_override(rc, kv);
    if (seed) rc.train.seed = *seed;
    if (mode) rc.train.mode = train::mode_from_string(*mode);
    if (steps) rc.train.steps = *steps;
    rc.train.validate();
    return rc;
}

}  // namespace

int cli_main(int argc, char** argv) {
    CLI::App app{"explainability-assisted CycleGAN training lab"};
    app.require_subcommand(1);

    std::string config_path, out_flag, checkpoint_path, image_path, in_dir;
    std::vector<std::string> sets;
    std::optional<uint64_t> seed;
    std::optional<std::string> mode;
    std::optional<int> steps;
    std::string seeds_csv, domain = "B", direction = "a2b";

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "config file (JSON)")->required();
        cmd->add_option("--set", sets, "override a config key, e.g. --set lr=1e-4")
            ->take_all();
        cmd->add_option("--seed", seed, "override the seed");
        cmd->add_option("--mode", mode, "override the mode (baseline|xai)");
        cmd->add_option("--steps", steps, "override the step count");
        cmd->add_option("--out", out_flag, "output root (default $XAIGAN_RUNS_DIR or ./runs)");
    };

    CLI::App* cmd_train = app.add_subcommand("train", "run one training run");
    add_common(cmd_train);

    CLI::App* cmd_compare =
        app.add_subcommand("compare", "run baseline and xai over several seeds and report");
    add_common(cmd_compare);
    cmd_compare->add_option("--seeds", seeds_csv, "comma-separated seed list");

    CLI::App* cmd_dump = app.add_subcommand("dump-saliency", "write saliency maps for an image");
    cmd_dump->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    cmd_dump->add_option("--image", image_path, "input image (P6 PPM)")->required();
    cmd_dump->add_option("--out", out_flag, "output directory")->required();
    cmd_dump->add_option("--domain", domain, "discriminator domain (A|B), default B");

    CLI::App* cmd_eval = app.add_subcommand("eval", "translate a directory of images");
    cmd_eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    cmd_eval->add_option("--in", in_dir, "input directory of .ppm images")->required();
    cmd_eval->add_option("--out", out_flag, "output directory")->required();
    cmd_eval->add_option("--direction", direction, "a2b or b2a, default a2b");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (cmd_train->parsed()) {
            ResolvedConfig rc = load_with_overrides(config_path, sets, seed, mode, steps);
            TrainOutcome out = run_train(rc, resolve_runs_root(out_flag));
            if (out.exit_code == 0) std::cout << out.run_dir << "\n";
            return out.exit_code;
        }
        if (cmd_compare->parsed()) {
            ResolvedConfig rc = load_with_overrides(config_path, sets, seed, mode, steps);
            if (!seeds_csv.empty()) {
                rc.compare.seeds.clear();
                std::string tok;
                std::istringstream ss(seeds_csv);
                while (std::getline(ss, tok, ','))
                    rc.compare.seeds.push_back(std::stoull(tok));
                if (rc.compare.seeds.empty())
                    throw std::invalid_argument("--seeds: need at least one seed");
            }
            const std::string out_dir =
                out_flag.empty()
                    ? (fs::path(resolve_runs_root("")) / ("compare-" + rc.name)).string()
                    : out_flag;
            const int code = run_compare(rc, out_dir);
            std::cout << out_dir << "/report.json\n";
            return code;
        }
        if (cmd_dump->parsed()) {
            if (domain != "A" && domain != "B")
                throw std::invalid_argument("--domain must be A or B, got '" + domain + "'");
            return run_dump_saliency(checkpoint_path, image_path, out_flag, domain[0]);
        }
        if (cmd_eval->parsed()) {
            if (direction != "a2b" && direction != "b2a")
                throw std::invalid_argument("--direction must be a2b or b2a, got '" + direction +
                                            "'");
            return run_eval(checkpoint_path, in_dir, out_flag, direction == "a2b");
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

}  // namespace xaigan::harness
