// cocole: command-line front end for the synthetic base-to-novel workflow.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cocole/error.hpp"
#include "cocole/json_util.hpp"
#include "cocole/pipeline.hpp"
#include "cocole/prompt_generator.hpp"
#include "cocole/report.hpp"
#include "cocole/selftest.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cocole;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out_dir = "run";
    bool no_lcc = false;
    bool no_lor = false;
    bool no_lma = false;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "Run config JSON (defaults to the desk-scale setup)");
    cmd->add_option("--seed", c.seed, "Override the training seed");
    cmd->add_option("--out-dir", c.out_dir, "Directory for artifacts")->capture_default_str();
    cmd->add_flag("--no-lcc", c.no_lcc, "Drop the handcrafted consistency loss");
    cmd->add_flag("--no-lor", c.no_lor, "Drop the prompt orthogonality loss");
    cmd->add_flag("--no-lma", c.no_lma, "Drop the key matching loss");
}

RunConfig resolve(const Common& c) {
    auto cfg = c.config.empty() ? RunConfig::desk() : RunConfig::load(c.config);
    if (c.seed) cfg.train.seed = *c.seed;
    if (c.no_lcc) cfg.train.weights.cc = 0.0;
    if (c.no_lor) cfg.train.weights.orth = 0.0;
    if (c.no_lma) cfg.train.weights.ma = 0.0;
    cfg.validate();
    return cfg;
}

void print(const json& doc) { std::cout << doc.dump() << std::endl; }

json losses_json(const StepMetrics& m) {
    return {{"ce", m.ce}, {"ma", m.ma}, {"or", m.orth}, {"cc", m.cc}, {"total", m.total}};
}

// "label=dir" or "dir" (label = directory name).
std::pair<std::string, fs::path> split_run(const std::string& entry) {
    const auto eq = entry.find('=');
    if (eq == std::string::npos) return {fs::path(entry).filename().string(), fs::path(entry)};
    return {entry.substr(0, eq), fs::path(entry.substr(eq + 1))};
}

RunSummary summarize_run(const std::string& label, const fs::path& dir) {
    RunSummary run;
    run.label = label;
    const auto metrics = read_metrics_log(dir / "metrics.jsonl");
    run.losses = summarize_metrics(metrics);
    if (fs::exists(dir / "checkpoint.json")) {
        const auto doc = read_json_file(dir / "checkpoint.json");
        if (doc.contains("config")) run.weights = RunConfig::from_json(doc.at("config")).train.weights;
    }
    if (fs::exists(dir / "eval.json")) {
        const auto doc = read_json_file(dir / "eval.json");
        run.accuracy = AccuracyRow{field(doc, "base_acc", "eval").get<double>(),
                                   field(doc, "novel_acc", "eval").get<double>(),
                                   field(doc, "hm", "eval").get<double>()};
    }
    return run;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Conceptual codebook learning on synthetic few-shot data"};
    app.require_subcommand(1);

    Common common;
    auto* synth = app.add_subcommand("synth", "Generate the synthetic dataset");
    auto* cache = app.add_subcommand("build-cache", "Build the handcrafted concept cache from training images");
    auto* prompts = app.add_subcommand("gen-prompts", "Retrieve concepts per class and encode handcrafted prompts");
    auto* train = app.add_subcommand("train", "Train the conceptual codebook");
    auto* eval = app.add_subcommand("eval", "Base and novel accuracy with the harmonic mean");
    auto* infer = app.add_subcommand("infer", "Classify one image");
    auto* run = app.add_subcommand("run", "synth, build-cache, gen-prompts, train and eval in sequence");
    auto* gradcheck = app.add_subcommand("gradcheck", "Compare autodiff gradients with finite differences");
    auto* selftest = app.add_subcommand("selftest", "Finite-difference, retrieval-oracle and frozenness suites");
    auto* report = app.add_subcommand("report", "Summarize metrics logs of one or more runs");
    auto* weights = app.add_subcommand("export-weights", "Write the frozen encoder weights as JSON");
    for (auto* cmd : {synth, cache, prompts, train, eval, infer, run, weights}) add_common(cmd, common);

    bool untrained = false;
    eval->add_flag("--untrained", untrained, "Evaluate a freshly initialized codebook");

    std::string image_path;
    std::string which = "all";
    infer->add_option("--image", image_path, "JSON file with D_in numbers")->required();
    infer->add_option("--classes", which, "Candidate classes: base, novel or all")
        ->check(CLI::IsMember({"base", "novel", "all"}))
        ->capture_default_str();

    GradcheckOptions gc;
    gradcheck->add_option("--seeds", gc.seeds, "Number of random seeds")->capture_default_str();
    gradcheck->add_option("--step", gc.h, "Finite-difference step")->capture_default_str();
    gradcheck->add_option("--tolerance", gc.tolerance, "Maximum relative error")->capture_default_str();

    std::vector<std::string> runs;
    std::string format = "markdown";
    report->add_option("--run", runs, "label=dir of a finished run (repeatable)")->required();
    report->add_option("--format", format, "markdown or json")
        ->check(CLI::IsMember({"markdown", "json"}))
        ->capture_default_str();

    std::string weights_out;
    weights->add_option("--output", weights_out, "Output file (default <out-dir>/encoder_weights.json)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (gradcheck->parsed()) {
            const auto r = run_gradcheck(gc);
            print(r.to_json());
            return r.passed ? 0 : 1;
        }
        if (selftest->parsed()) {
            bool ok = true;
            json suites = json::array();
            for (const auto& s : run_selftest()) {
                ok = ok && s.passed;
                suites.push_back(s.to_json());
            }
            print({{"suites", suites}, {"passed", ok}});
            return ok ? 0 : 1;
        }
        if (report->parsed()) {
            std::vector<RunSummary> summaries;
            for (const auto& entry : runs) {
                const auto [label, dir] = split_run(entry);
                summaries.push_back(summarize_run(label, dir));
            }
            const auto r = build_report(std::move(summaries));
            if (format == "json")
                print(r.to_json());
            else
                std::cout << r.to_markdown();
            return 0;
        }

        const Pipeline pipeline(resolve(common), common.out_dir);
        if (synth->parsed()) {
            const auto ds = pipeline.synth();
            print({{"dataset", pipeline.path_of(pipeline.config().paths.dataset).string()},
                   {"base_classes", ds.base_classes()},
                   {"novel_classes", ds.novel_classes()},
                   {"train_images", ds.train.size()},
                   {"base_test_images", ds.base_test.size()},
                   {"novel_test_images", ds.novel_test.size()}});
        } else if (cache->parsed()) {
            const auto c = pipeline.build_cache();
            print({{"cache", pipeline.path_of(pipeline.config().paths.cache).string()},
                   {"pairs", c.size()},
                   {"K1", c.k1}});
        } else if (prompts->parsed()) {
            auto generator = generator_from_environment();
            const auto set = pipeline.gen_prompts(*generator);
            json classes = json::object();
            for (const auto& e : set.entries) classes[e.class_name] = e.words;
            print({{"prompts", pipeline.path_of(pipeline.config().paths.prompts).string()},
                   {"classes", classes},
                   {"warnings", generator->warnings()}});
        } else if (train->parsed()) {
            const auto r = pipeline.train();
            print({{"checkpoint", pipeline.path_of(pipeline.config().paths.checkpoint).string()},
                   {"metrics", pipeline.path_of(pipeline.config().paths.metrics).string()},
                   {"steps", r.steps},
                   {"final", losses_json(r.metrics.back())},
                   {"train_acc", r.train_accuracy}});
        } else if (eval->parsed()) {
            const auto r = pipeline.eval(untrained);
            print({{"base_acc", r.base.accuracy}, {"novel_acc", r.novel.accuracy}, {"hm", r.hm}});
        } else if (infer->parsed()) {
            const auto ds = pipeline.load_dataset();
            const auto cb = pipeline.load_checkpoint().codebook;
            std::vector<std::string> names;
            if (which != "novel") names = ds.base_classes();
            if (which != "base")
                for (const auto& n : ds.novel_classes()) names.push_back(n);
            std::vector<Tensor> embeddings;
            for (const auto& n : names) embeddings.push_back(pipeline.encoders().embed_word(n));
            const auto image = load_image(image_path, pipeline.config().train.d_in);
            const auto& t = pipeline.config().train;
            const auto p = predict(pipeline.encoders(), cb, image, embeddings, t.k3, t.tau);
            json probs = json::object();
            for (std::size_t i = 0; i < names.size(); ++i) probs[names[i]] = p.probabilities[i];
            print({{"predicted", names[p.predicted]},
                   {"probabilities", probs},
                   {"selected", p.retrieval.indices},
                   {"similarities", p.retrieval.similarities}});
        } else if (run->parsed()) {
            pipeline.synth();
            pipeline.build_cache();
            auto generator = generator_from_environment();
            pipeline.gen_prompts(*generator);
            const auto t = pipeline.train();
            const auto r = pipeline.eval();
            print({{"steps", t.steps},
                   {"final", losses_json(t.metrics.back())},
                   {"base_acc", r.base.accuracy},
                   {"novel_acc", r.novel.accuracy},
                   {"hm", r.hm}});
        } else if (weights->parsed()) {
            const auto out = weights_out.empty() ? pipeline.path_of("encoder_weights.json") : fs::path(weights_out);
            write_json_file(out, pipeline.encoders().weights().to_json());
            print({{"weights", out.string()}, {"fingerprint", pipeline.encoders().weights().fingerprint()}});
        }
        return 0;
    } catch (const Error& e) {
        print({{"error", {{"kind", std::string(to_string(e.kind()))}, {"message", e.what()}}}});
        return 1;
    } catch (const std::exception& e) {
        print({{"error", {{"kind", "internal"}, {"message", e.what()}}}});
        return 1;
    }
}
