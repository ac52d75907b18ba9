#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "astroloc/retrieval.hpp"
#include "astroloc/trainer.hpp"

namespace astroloc {

// Linear-interpolation percentile of a sample, q in [0, 1].
double percentile(std::vector<double> values, double q);

nlohmann::json recall_report_to_json(const RecallReport& report);
RecallReport recall_report_from_json(const nlohmann::json& j);

void write_text_file(const std::filesystem::path& path, const std::string& content);

// CSV with columns N,recall_pct
std::string recall_csv(const RecallReport& report);
// CSV with columns query_id,micros
std::string latency_csv(const RecallReport& report);
// CSV with columns iteration,pair_loss,mum_loss,total
std::string loss_csv(const std::vector<LossHistoryRow>& history);

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

// Minimal hand-emitted SVG line chart; no plotting dependency.
std::string svg_line_chart(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<Series>& series,
                           bool log_x = false);

std::string recall_svg(const RecallReport& report);
std::string loss_svg(const std::vector<LossHistoryRow>& history);

}  // namespace astroloc
