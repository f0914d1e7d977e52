#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "xaigan/train.hpp"

namespace xaigan::harness {

// One JSON object per line, keys in LossRecord order. Wall time is not part
// of the line so identical runs produce byte-identical logs; it goes to a
// separate timing file.
std::string loss_record_line(const train::LossRecord& r);
train::LossRecord parse_loss_record_line(const std::string& line);
std::vector<train::LossRecord> read_metrics_file(const std::string& path);

class MetricsWriter {
public:
    MetricsWriter(const std::string& metrics_path, const std::string& timing_path);
    void write(const train::LossRecord& r);  // flushes per line, abort-safe

private:
    std::ofstream metrics_, timing_;
};

std::vector<double> moving_average(const std::vector<double>& values, int window);
// First step (1-based) whose windowed value is <= threshold.
std::optional<int> steps_to_threshold(const std::vector<double>& values, int window,
                                      double threshold);

// Self-contained polyline SVG of the per-step losses. Pure function of the
// records: re-rendering the same records is byte-identical.
std::string render_loss_svg(const std::vector<train::LossRecord>& records,
                            const std::string& title);

struct CompareSeries {
    std::vector<double> baseline_adv, baseline_cycle, xai_adv, xai_cycle;
};

std::string render_compare_svg(const CompareSeries& series);

}  // namespace xaigan::harness
