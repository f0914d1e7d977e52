#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "xaigan/train.hpp"

namespace xaigan::harness {

struct CompareOptions {
    std::vector<uint64_t> seeds{1, 2, 3};
    double threshold = 2.0;  // on the windowed cycle loss
    int window = 10;
};

struct ResolvedConfig {
    train::TrainConfig train;
    CompareOptions compare;
    std::string name = "run";  // config file stem, used in run ids
};

// JSON key/value config. Unknown keys are rejected so typos surface early.
ResolvedConfig config_from_json_text(const std::string& text, const std::string& origin);
ResolvedConfig load_config_file(const std::string& path);
std::string config_to_json(const ResolvedConfig& rc);  // canonical, stable key order

// Dotted-path override, e.g. "dataset.n=32" or "lr=1e-4".
void apply_override(ResolvedConfig& rc, const std::string& key_equals_value);

uint64_t fnv1a_hash(const std::string& text);

// --out flag wins, then $XAIGAN_RUNS_DIR, then "runs".
std::string resolve_runs_root(const std::string& out_flag);

struct TrainOutcome {
    int exit_code = 0;
    std::string run_dir;
    train::TrainResult result;
};

// Full train command: manifest, metrics + timing logs, checkpoints, loss SVG
// under <runs_root>/<name>-<mode>-s<seed>/.
TrainOutcome run_train(const ResolvedConfig& rc, const std::string& runs_root);

// Baseline-vs-xai comparison over the given seeds; writes per-run artifacts,
// report.json and compare.svg under <out_dir>.
int run_compare(ResolvedConfig rc, const std::string& out_dir);

int run_dump_saliency(const std::string& checkpoint_path, const std::string& image_path,
                      const std::string& out_dir, char domain);

int run_eval(const std::string& checkpoint_path, const std::string& in_dir,
             const std::string& out_dir, bool a_to_b);

// Builds the datasets a config describes (synthetic or from dataset.root).
std::pair<data::DomainDataset, data::DomainDataset> build_datasets(const train::TrainConfig& cfg);

int cli_main(int argc, char** argv);

}  // namespace xaigan::harness
