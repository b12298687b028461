#include "cocole/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "cocole/json_util.hpp"
#include "cocole/report.hpp"
#include "cocole/rng.hpp"

namespace cocole {

using nlohmann::json;

// ---- RunPaths ----

json RunPaths::to_json() const {
    return {{"lexicon", lexicon}, {"dataset", dataset}, {"cache", cache},  {"prompts", prompts},
            {"checkpoint", checkpoint}, {"metrics", metrics}, {"eval", eval}};
}

void RunPaths::read_json(const json& doc) {
    require(doc.is_object(), ErrorKind::kConfig, "paths must be an object");
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        require(it.value().is_string(), ErrorKind::kConfig, "paths." + it.key() + " must be a string");
        const auto v = it.value().get<std::string>();
        const auto& k = it.key();
        if (k == "lexicon") lexicon = v;
        else if (k == "dataset") dataset = v;
        else if (k == "cache") cache = v;
        else if (k == "prompts") prompts = v;
        else if (k == "checkpoint") checkpoint = v;
        else if (k == "metrics") metrics = v;
        else if (k == "eval") eval = v;
        else fail(ErrorKind::kConfig, "unknown path key '" + k + "'");
    }
}

// ---- RunConfig ----

void RunConfig::validate() const {
    train.validate();
    dataset.validate();
    require(dataset.k1 == train.k1 && dataset.k2 == train.k2, ErrorKind::kConfig,
            "dataset and training disagree on K1/K2");
}

json RunConfig::to_json() const {
    json doc = train.to_json();
    const json data = dataset.to_json();
    for (auto it = data.begin(); it != data.end(); ++it) doc[it.key()] = it.value();
    doc["encoder_seed"] = encoder_seed;
    doc["data_seed"] = data_seed;
    doc["paths"] = paths.to_json();
    return doc;
}

RunConfig RunConfig::from_json(const json& doc) {
    require(doc.is_object(), ErrorKind::kConfig, "config must be a JSON object");
    std::set<std::string> known(TrainConfig::field_names().begin(), TrainConfig::field_names().end());
    const json data = DatasetParams{}.to_json();
    for (auto it = data.begin(); it != data.end(); ++it) known.insert(it.key());
    known.insert({"encoder_seed", "data_seed", "paths"});
    for (auto it = doc.begin(); it != doc.end(); ++it)
        require(known.count(it.key()) > 0, ErrorKind::kConfig, "unknown config key '" + it.key() + "'");

    RunConfig c;
    c.train.read_json(doc);
    c.dataset.read_json(doc);
    c.dataset.k1 = c.train.k1;
    c.dataset.k2 = c.train.k2;
    try {
        read_config_field(doc, "encoder_seed", c.encoder_seed);
        read_config_field(doc, "data_seed", c.data_seed);
    } catch (const json::exception& e) {
        fail(ErrorKind::kConfig, std::string("config: ") + e.what());
    }
    if (doc.contains("paths")) c.paths.read_json(doc.at("paths"));
    c.validate();
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    require(std::filesystem::exists(path), ErrorKind::kMissingArtifact, "config file " + path.string() + " not found");
    json doc;
    try {
        doc = read_json_file(path);
    } catch (const Error& e) {
        fail(ErrorKind::kConfig, e.what());
    }
    return from_json(doc);
}

std::string RunConfig::hash() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(dump_canonical(to_json()))));
    return buf;
}

EncoderDims RunConfig::encoder_dims() const {
    EncoderDims dims;
    dims.d_in = train.d_in;
    dims.d_hidden = train.d_hidden;
    dims.d = train.d;
    return dims;
}

RunConfig RunConfig::desk() {
    RunConfig c;
    c.train.epochs = 150;
    c.train.n = 16;
    c.train.m = 4;
    c.train.k3 = 2;
    c.train.d = 64;
    c.train.d_in = 32;
    c.dataset.num_classes = 8;
    c.dataset.shots = 16;
    return c;
}

// ---- persistence helpers ----

void save_cache(const HandcraftedCache& cache, const std::filesystem::path& path) {
    write_json_file(path, cache.to_json());
}

HandcraftedCache load_cache(const std::filesystem::path& path) {
    return HandcraftedCache::from_json(read_json_file(path));
}

void save_prompts(const HandcraftedPromptSet& set, const std::filesystem::path& path) {
    write_json_file(path, set.to_json());
}

HandcraftedPromptSet load_prompts(const std::filesystem::path& path, const std::vector<std::string>& class_order) {
    return HandcraftedPromptSet::from_json(read_json_file(path), class_order);
}

Tensor load_image(const std::filesystem::path& path, std::size_t d_in) {
    require(std::filesystem::exists(path), ErrorKind::kMissingArtifact, "image file " + path.string() + " not found");
    const auto doc = read_json_file(path);
    const auto& values = doc.is_object() ? field(doc, "image", "image file") : doc;
    return tensor_from_json(values, {d_in}, "image file " + path.string());
}

CodebookFile make_checkpoint(const TrainResult& result, const RunConfig& config) {
    CodebookFile file;
    file.codebook = result.codebook;
    file.encoder_seed = config.encoder_seed;
    file.config_hash = config.hash();
    file.extra = {{"optimizer", result.optimizer.to_json()}, {"config", config.to_json()}, {"step", result.steps}};
    return file;
}

// ---- Pipeline ----

Pipeline::Pipeline(RunConfig config, std::filesystem::path out_dir)
    : config_(std::move(config)), out_dir_(std::move(out_dir)), encoders_(config_.encoder_seed, config_.encoder_dims()) {
    config_.validate();
}

std::filesystem::path Pipeline::path_of(const std::string& name) const {
    const std::filesystem::path p(name);
    return p.is_absolute() ? p : out_dir_ / p;
}

void Pipeline::require_artifact(const std::string& name, const char* stage) const {
    const auto p = path_of(name);
    require(std::filesystem::exists(p), ErrorKind::kMissingArtifact,
            p.string() + " not found; run " + stage + " first");
}

ConceptLexicon Pipeline::lexicon() const {
    if (config_.paths.lexicon.empty()) return default_lexicon();
    const std::filesystem::path p(config_.paths.lexicon);
    require(std::filesystem::exists(p), ErrorKind::kMissingArtifact, "lexicon file " + p.string() + " not found");
    auto lex = ConceptLexicon::from_json(read_json_file(p));
    lex.validate(config_.train.k2);
    return lex;
}

FewShotDataset Pipeline::synth() const {
    auto ds = synth_dataset(encoders_, lexicon(), config_.dataset, config_.data_seed);
    save_dataset(ds, path_of(config_.paths.dataset));
    return ds;
}

FewShotDataset Pipeline::load_dataset() const {
    require_artifact(config_.paths.dataset, "synth");
    auto ds = cocole::load_dataset(path_of(config_.paths.dataset));
    require(ds.encoder_seed == config_.encoder_seed, ErrorKind::kConfig,
            "dataset was generated with encoder seed " + std::to_string(ds.encoder_seed) + "; run synth again");
    return ds;
}

HandcraftedCache Pipeline::build_cache() const {
    const auto ds = load_dataset();
    auto cache = cocole::build_cache(encoders_, lexicon(), ds.train.images, config_.train.cache_options());
    save_cache(cache, path_of(config_.paths.cache));
    return cache;
}

HandcraftedCache Pipeline::load_cache() const {
    require_artifact(config_.paths.cache, "build-cache");
    auto cache = cocole::load_cache(path_of(config_.paths.cache));
    require(cache.encoder_seed == config_.encoder_seed && cache.k1 == config_.train.k1, ErrorKind::kConfig,
            "cache does not match the config; run build-cache again");
    return cache;
}

HandcraftedPromptSet Pipeline::gen_prompts(PromptGenerator& generator) const {
    const auto ds = load_dataset();
    const auto cache = load_cache();
    const auto groups = group_by_class(ds.train);
    auto set = build_prompt_set(encoders_, cache, groups, config_.train.k2, generator);
    save_prompts(set, path_of(config_.paths.prompts));
    return set;
}

HandcraftedPromptSet Pipeline::load_prompts() const {
    require_artifact(config_.paths.prompts, "gen-prompts");
    const auto ds = load_dataset();
    return cocole::load_prompts(path_of(config_.paths.prompts), ds.train.class_names);
}

TrainResult Pipeline::train(const StepCallback& on_step) const {
    const auto ds = load_dataset();
    const auto prompts = load_prompts();
    auto result = train_with_prompts(encoders_, ds.train, prompts, config_.train, on_step);
    save_codebook(make_checkpoint(result, config_), path_of(config_.paths.checkpoint));
    write_metrics_log(path_of(config_.paths.metrics), result.metrics);
    return result;
}

CodebookFile Pipeline::load_checkpoint() const {
    require_artifact(config_.paths.checkpoint, "train");
    auto file = load_codebook(path_of(config_.paths.checkpoint));
    require(file.encoder_seed == config_.encoder_seed, ErrorKind::kConfig,
            "checkpoint was trained with encoder seed " + std::to_string(file.encoder_seed));
    require(file.codebook.d == config_.train.d && file.codebook.m == config_.train.m, ErrorKind::kConfig,
            "checkpoint dimensions do not match the config");
    return file;
}

ConceptualCodebook Pipeline::initial_codebook() const {
    return ConceptualCodebook::init(config_.train.n, config_.train.m, config_.train.d,
                                    derive_seed(config_.train.seed, "codebook"));
}

BaseNovelReport Pipeline::eval(bool untrained) const {
    const auto ds = load_dataset();
    const auto cb = untrained ? initial_codebook() : load_checkpoint().codebook;
    auto report = evaluate(encoders_, cb, ds.base_test, ds.novel_test, config_.train.k3, config_.train.tau);
    auto out = path_of(config_.paths.eval);
    if (untrained) out.replace_filename(out.stem().string() + "_untrained" + out.extension().string());
    write_json_file(out, report.to_json());
    return report;
}

}  // namespace cocole
