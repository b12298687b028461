#include "cocole/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cocole/json_util.hpp"

namespace cocole {

using nlohmann::json;

LossSummary summarize_metrics(std::span<const StepMetrics> records) {
    require(!records.empty(), ErrorKind::kDegenerateInput, "metrics log is empty");
    LossSummary s;
    s.steps = records.size();
    s.final = records.back();
    s.best = records.front();
    for (const auto& r : records) {
        s.best.ce = std::min(s.best.ce, r.ce);
        s.best.ma = std::min(s.best.ma, r.ma);
        s.best.orth = std::min(s.best.orth, r.orth);
        s.best.cc = std::min(s.best.cc, r.cc);
        if (r.total < s.best.total) {
            s.best.total = r.total;
            s.best.step = r.step;
            s.best.lr = r.lr;
        }
    }
    return s;
}

json LossSummary::to_json() const {
    auto losses = [](const StepMetrics& m) {
        return json{{"ce", m.ce}, {"ma", m.ma}, {"or", m.orth}, {"cc", m.cc}, {"total", m.total}};
    };
    return {{"steps", steps}, {"final", losses(final)}, {"best", losses(best)}, {"best_total_step", best.step}};
}

Report build_report(std::vector<RunSummary> runs) {
    require(!runs.empty(), ErrorKind::kDegenerateInput, "report needs at least one run");
    return Report{std::move(runs)};
}

json Report::to_json() const {
    json out = json::array();
    for (const auto& r : runs) {
        json row = {{"label", r.label},
                    {"loss_weights", {{"ce", r.weights.ce}, {"ma", r.weights.ma}, {"or", r.weights.orth},
                                      {"cc", r.weights.cc}}},
                    {"losses", r.losses.to_json()}};
        if (r.accuracy) {
            row["accuracy"] = {{"base_acc", r.accuracy->base},
                               {"novel_acc", r.accuracy->novel},
                               {"hm", r.accuracy->hm},
                               {"hm_recomputed", harmonic_mean(r.accuracy->base, r.accuracy->novel)}};
        }
        out.push_back(std::move(row));
    }
    return {{"runs", out}};
}

namespace {

std::string fmt(double v, int precision = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    return buf;
}

std::string mark(double w) { return w != 0.0 ? "yes" : "no"; }

}  // namespace

std::string Report::to_markdown() const {
    std::ostringstream out;
    out << "## Losses\n\n| run | steps | final ce | final ma | final or | final cc | final total | best total |\n"
        << "|---|---|---|---|---|---|---|---|\n";
    for (const auto& r : runs) {
        const auto& f = r.losses.final;
        out << "| " << r.label << " | " << r.losses.steps << " | " << fmt(f.ce) << " | " << fmt(f.ma) << " | "
            << fmt(f.orth) << " | " << fmt(f.cc) << " | " << fmt(f.total) << " | " << fmt(r.losses.best.total)
            << " |\n";
    }
    const bool any_acc = std::any_of(runs.begin(), runs.end(), [](const auto& r) { return r.accuracy.has_value(); });
    if (any_acc) {
        out << "\n## Accuracy\n\n| run | base | novel | HM | HM (recomputed) |\n|---|---|---|---|---|\n";
        for (const auto& r : runs) {
            if (!r.accuracy) continue;
            const auto& a = *r.accuracy;
            out << "| " << r.label << " | " << fmt(a.base, 2) << " | " << fmt(a.novel, 2) << " | " << fmt(a.hm, 2)
                << " | " << fmt(harmonic_mean(a.base, a.novel), 2) << " |\n";
        }
    }
    if (runs.size() > 1) {
        const auto& ref = runs.front();
        out << "\n## Ablation\n\n| run | L_ma | L_or | L_cc | HM | delta HM |\n|---|---|---|---|---|---|\n";
        for (const auto& r : runs) {
            out << "| " << r.label << " | " << mark(r.weights.ma) << " | " << mark(r.weights.orth) << " | "
                << mark(r.weights.cc) << " | ";
            if (r.accuracy && ref.accuracy)
                out << fmt(r.accuracy->hm, 2) << " | " << fmt(r.accuracy->hm - ref.accuracy->hm, 2) << " |\n";
            else
                out << "- | - |\n";
        }
    }
    return out.str();
}

std::vector<StepMetrics> read_metrics_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorKind::kMissingArtifact, "cannot open metrics log " + path.string());
    std::vector<StepMetrics> out;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.empty()) continue;
        json doc;
        try {
            doc = json::parse(line);
        } catch (const json::exception& e) {
            fail(ErrorKind::kCorruptFile,
                 path.string() + " line " + std::to_string(number) + ": " + e.what());
        }
        out.push_back(StepMetrics::from_json(doc));
    }
    return out;
}

void write_metrics_log(const std::filesystem::path& path, std::span<const StepMetrics> records) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + path.string());
    for (const auto& r : records) out << r.to_json().dump() << '\n';
    require(static_cast<bool>(out), ErrorKind::kIo, "write failed for " + path.string());
}

}  // namespace cocole
