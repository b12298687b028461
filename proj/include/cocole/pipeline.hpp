#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cocole/codebook.hpp"
#include "cocole/concept_cache.hpp"
#include "cocole/dataset.hpp"
#include "cocole/encoders.hpp"
#include "cocole/trainer.hpp"

namespace cocole {

// Artifact file names, relative to the output directory unless absolute.
struct RunPaths {
    std::string lexicon;  // empty: the built-in lexicon
    std::string dataset = "dataset.json";
    std::string cache = "cache.json";
    std::string prompts = "prompts.json";
    std::string checkpoint = "checkpoint.json";
    std::string metrics = "metrics.jsonl";
    std::string eval = "eval.json";

    nlohmann::json to_json() const;
    void read_json(const nlohmann::json& doc);
};

// Everything one pipeline run depends on. The file is flat: training fields,
// dataset fields, the two seeds and a "paths" object. K1 and K2 are shared by
// training and dataset generation.
struct RunConfig {
    TrainConfig train;
    DatasetParams dataset;
    std::uint64_t encoder_seed = 42;
    std::uint64_t data_seed = 7;
    RunPaths paths;

    void validate() const;
    nlohmann::json to_json() const;
    // Unknown keys are rejected; absent keys keep their defaults.
    static RunConfig from_json(const nlohmann::json& doc);
    static RunConfig load(const std::filesystem::path& path);

    // FNV-1a of the canonical JSON, hex.
    std::string hash() const;
    EncoderDims encoder_dims() const;

    // 8 classes, 16 shots, D=64, D_in=32, N=16, M=4, K3=2, 150 epochs.
    static RunConfig desk();
};

// A run config bound to an output directory. Each stage reads the artifacts
// of the previous one and fails with "run <stage> first" when they are absent.
class Pipeline {
public:
    Pipeline(RunConfig config, std::filesystem::path out_dir);

    const RunConfig& config() const { return config_; }
    const FrozenEncoders& encoders() const { return encoders_; }
    std::filesystem::path path_of(const std::string& name) const;

    ConceptLexicon lexicon() const;

    FewShotDataset synth() const;
    HandcraftedCache build_cache() const;
    HandcraftedPromptSet gen_prompts(PromptGenerator& generator) const;
    TrainResult train(const StepCallback& on_step = {}) const;
    // Trained checkpoint, or a freshly initialized codebook (seeded like
    // training) when `untrained` is set; that result goes to <eval>_untrained.
    BaseNovelReport eval(bool untrained = false) const;

    FewShotDataset load_dataset() const;
    HandcraftedCache load_cache() const;
    HandcraftedPromptSet load_prompts() const;
    CodebookFile load_checkpoint() const;

    // Fresh codebook with the training initialization.
    ConceptualCodebook initial_codebook() const;

private:
    void require_artifact(const std::string& name, const char* stage) const;

    RunConfig config_;
    std::filesystem::path out_dir_;
    FrozenEncoders encoders_;
};

// Checkpoint = codebook file plus {optimizer, config, step}.
CodebookFile make_checkpoint(const TrainResult& result, const RunConfig& config);

// Cache and prompt-set persistence.
void save_cache(const HandcraftedCache& cache, const std::filesystem::path& path);
HandcraftedCache load_cache(const std::filesystem::path& path);
void save_prompts(const HandcraftedPromptSet& set, const std::filesystem::path& path);
HandcraftedPromptSet load_prompts(const std::filesystem::path& path, const std::vector<std::string>& class_order);

// An image file is a JSON array of D_in numbers or {"image": [...]}.
Tensor load_image(const std::filesystem::path& path, std::size_t d_in);

}  // namespace cocole
