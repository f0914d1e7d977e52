#include "xaigan/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include <json.hpp>

namespace xaigan::harness {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::string loss_record_line(const train::LossRecord& r) {
    std::string out = "{\"step\":" + std::to_string(r.step);
    out += ",\"loss_G\":" + fmt_double(r.loss_g);
    out += ",\"loss_D_A\":" + fmt_double(r.loss_d_a);
    out += ",\"loss_D_B\":" + fmt_double(r.loss_d_b);
    out += ",\"loss_cycle\":" + fmt_double(r.loss_cycle);
    out += ",\"loss_mask_adv\":" + fmt_double(r.loss_mask_adv);
    out += ",\"lambda_a\":" + fmt_double(r.lambda_a);
    out += ",\"lambda_b\":" + fmt_double(r.lambda_b);
    out += "}";
    return out;
}

train::LossRecord parse_loss_record_line(const std::string& line) {
    const auto j = nlohmann::json::parse(line);
    train::LossRecord r;
    r.step = j.at("step").get<int>();
    r.loss_g = j.at("loss_G").get<double>();
    r.loss_d_a = j.at("loss_D_A").get<double>();
    r.loss_d_b = j.at("loss_D_B").get<double>();
    r.loss_cycle = j.at("loss_cycle").get<double>();
    r.loss_mask_adv = j.at("loss_mask_adv").get<double>();
    r.lambda_a = j.at("lambda_a").get<double>();
    r.lambda_b = j.at("lambda_b").get<double>();
    return r;
}

std::vector<train::LossRecord> read_metrics_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path + ": cannot open metrics log");
    std::vector<train::LossRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(parse_loss_record_line(line));
    }
    return out;
}

MetricsWriter::MetricsWriter(const std::string& metrics_path, const std::string& timing_path)
    : metrics_(metrics_path, std::ios::trunc), timing_(timing_path, std::ios::trunc) {
    if (!metrics_) throw std::runtime_error(metrics_path + ": cannot open for writing");
    if (!timing_) throw std::runtime_error(timing_path + ": cannot open for writing");
}

void MetricsWriter::write(const train::LossRecord& r) {
    metrics_ << loss_record_line(r) << "\n";
    metrics_.flush();
    char buf[96];
    std::snprintf(buf, sizeof buf, "{\"step\":%d,\"wall_ms\":%.3f}\n", r.step, r.wall_ms);
    timing_ << buf;
    timing_.flush();
}

std::vector<double> moving_average(const std::vector<double>& values, int window) {
    if (window < 1) throw std::invalid_argument("moving_average: window must be >= 1");
    std::vector<double> out(values.size());
    double acc = 0.0;
    for (size_t i = 0; i < values.size(); ++i) {
        acc += values[i];
        if (i >= static_cast<size_t>(window)) acc -= values[i - static_cast<size_t>(window)];
        const size_t n = std::min(i + 1, static_cast<size_t>(window));
        out[i] = acc / static_cast<double>(n);
    }
    return out;
}

std::optional<int> steps_to_threshold(const std::vector<double>& values, int window,
                                      double threshold) {
    const std::vector<double> ma = moving_average(values, window);
    for (size_t i = 0; i < ma.size(); ++i)
        if (ma[i] <= threshold) return static_cast<int>(i) + 1;
    return std::nullopt;
}

// ---- SVG -----------------------------------------------------------------------

namespace {

constexpr int kW = 720, kH = 420;
constexpr int kLeft = 60, kRight = 20, kTop = 40, kBottom = 40;

std::string fmt_coord(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

struct Series {
    std::string label;
    std::string color;
    const std::vector<double>* values;
};

std::string render_chart(const std::string& title, const std::vector<Series>& series) {
    size_t max_n = 0;
    double lo = 0.0, hi = 1e-9;
    for (const auto& s : series) {
        max_n = std::max(max_n, s.values->size());
        for (double v : *s.values) {
            if (!std::isfinite(v)) continue;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    if (max_n < 2) max_n = 2;
    if (hi <= lo) hi = lo + 1.0;

    const double plot_w = kW - kLeft - kRight;
    const double plot_h = kH - kTop - kBottom;
    auto sx = [&](size_t i) {
        return kLeft + plot_w * static_cast<double>(i) / static_cast<double>(max_n - 1);
    };
    auto sy = [&](double v) { return kTop + plot_h * (1.0 - (v - lo) / (hi - lo)); };

    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(kW) +
                      "\" height=\"" + std::to_string(kH) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<text x=\"" + std::to_string(kW / 2) +
           "\" y=\"20\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"14\">" +
           title + "</text>\n";
    // axes
    svg += "<line x1=\"" + std::to_string(kLeft) + "\" y1=\"" + std::to_string(kTop) + "\" x2=\"" +
           std::to_string(kLeft) + "\" y2=\"" + std::to_string(kH - kBottom) +
           "\" stroke=\"black\"/>\n";
    svg += "<line x1=\"" + std::to_string(kLeft) + "\" y1=\"" + std::to_string(kH - kBottom) +
           "\" x2=\"" + std::to_string(kW - kRight) + "\" y2=\"" + std::to_string(kH - kBottom) +
           "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + std::to_string(kLeft - 5) + "\" y=\"" + std::to_string(kTop + 5) +
           "\" text-anchor=\"end\" font-family=\"monospace\" font-size=\"11\">" + fmt_coord(hi) +
           "</text>\n";
    svg += "<text x=\"" + std::to_string(kLeft - 5) + "\" y=\"" + std::to_string(kH - kBottom) +
           "\" text-anchor=\"end\" font-family=\"monospace\" font-size=\"11\">" + fmt_coord(lo) +
           "</text>\n";
    svg += "<text x=\"" + std::to_string(kW - kRight) + "\" y=\"" + std::to_string(kH - kBottom + 15) +
           "\" text-anchor=\"end\" font-family=\"monospace\" font-size=\"11\">step " +
           std::to_string(max_n) + "</text>\n";

    int legend_y = kTop + 12;
    for (const auto& s : series) {
        if (s.values->empty()) continue;
        std::string pts;
        for (size_t i = 0; i < s.values->size(); ++i) {
            const double v = (*s.values)[i];
            pts += fmt_coord(sx(i)) + "," + fmt_coord(sy(std::isfinite(v) ? v : lo)) + " ";
        }
        svg += "<polyline fill=\"none\" stroke=\"" + s.color + "\" stroke-width=\"1.5\" points=\"" +
               pts + "\"/>\n";
        svg += "<text x=\"" + std::to_string(kW - kRight - 8) + "\" y=\"" +
               std::to_string(legend_y) + "\" text-anchor=\"end\" font-family=\"monospace\" " +
               "font-size=\"11\" fill=\"" + s.color + "\">" + s.label + "</text>\n";
        legend_y += 14;
    }
    svg += "</svg>\n";
    return svg;
}

}  // namespace

std::string render_loss_svg(const std::vector<train::LossRecord>& records,
                            const std::string& title) {
    std::vector<double> g, da, db, cyc;
    for (const auto& r : records) {
        g.push_back(r.loss_g);
        da.push_back(r.loss_d_a);
        db.push_back(r.loss_d_b);
        cyc.push_back(r.loss_cycle);
    }
    return render_chart(title, {{"loss_G", "#1f77b4", &g},
                                {"loss_D_A", "#d62728", &da},
                                {"loss_D_B", "#ff7f0e", &db},
                                {"loss_cycle", "#2ca02c", &cyc}});
}

std::string render_compare_svg(const CompareSeries& s) {
    return render_chart("mean adversarial and cycle losses by mode",
                        {{"baseline adv", "#d62728", &s.baseline_adv},
                         {"baseline cycle", "#ff7f0e", &s.baseline_cycle},
                         {"xai adv", "#1f77b4", &s.xai_adv},
                         {"xai cycle", "#2ca02c", &s.xai_cycle}});
}

}  // namespace xaigan::harness
