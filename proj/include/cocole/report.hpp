#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cocole/trainer.hpp"

namespace cocole {

// Final and best (minimum) value of every loss component over a metrics log.
struct LossSummary {
    std::size_t steps = 0;
    StepMetrics final;
    StepMetrics best;  // per-component minimum; `step` is the step of the best total

    nlohmann::json to_json() const;
};

LossSummary summarize_metrics(std::span<const StepMetrics> records);

struct AccuracyRow {
    double base = 0.0;
    double novel = 0.0;
    double hm = 0.0;  // as stored by eval
};

struct RunSummary {
    std::string label;
    LossWeights weights;
    LossSummary losses;
    std::optional<AccuracyRow> accuracy;
};

struct Report {
    std::vector<RunSummary> runs;

    nlohmann::json to_json() const;
    // Loss table, accuracy table with the recomputed HM, and an ablation
    // table relative to the first run when there is more than one.
    std::string to_markdown() const;
};

Report build_report(std::vector<RunSummary> runs);

// Metrics log: one StepMetrics JSON object per line.
std::vector<StepMetrics> read_metrics_log(const std::filesystem::path& path);
void write_metrics_log(const std::filesystem::path& path, std::span<const StepMetrics> records);

}  // namespace cocole
