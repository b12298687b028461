#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "cocole/codebook.hpp"
#include "cocole/concept_cache.hpp"
#include "cocole/encoders.hpp"
#include "cocole/kernels.hpp"
#include "cocole/objectives.hpp"
#include "cocole/optim.hpp"

namespace cocole {

struct TrainConfig {
    std::size_t epochs = 20;
    std::size_t batch_size = 8;
    double lr = 1e-3;
    double weight_decay = 1e-2;
    std::size_t k1 = 3;
    std::size_t k2 = 10;
    std::size_t k3 = 4;
    std::size_t m = 8;
    std::size_t n = 100;
    double tau = 0.07;
    std::uint64_t seed = 0;  // codebook init and batch shuffling
    std::size_t d = 64;
    std::size_t d_in = 32;
    std::size_t d_hidden = 128;
    bool decay_keys = false;
    bool renormalize_cache_keys = true;
    bool normalized_orthogonality = false;
    LossWeights weights;

    void validate() const;
    ObjectiveConfig objective() const;
    CacheOptions cache_options() const;

    nlohmann::json to_json() const;
    // Reads the known fields of `doc`, leaving defaults for absent ones.
    void read_json(const nlohmann::json& doc);
    static const std::vector<std::string>& field_names();
};

// Labeled images over a class list; labels index into class_names.
struct LabeledSplit {
    std::vector<std::string> class_names;
    std::vector<Tensor> images;  // raw [d_in] inputs
    std::vector<std::size_t> labels;

    std::size_t size() const { return images.size(); }
    void validate() const;
};

struct StepMetrics {
    std::size_t step = 0;
    double lr = 0.0;
    double ce = 0.0, ma = 0.0, orth = 0.0, cc = 0.0, total = 0.0;

    nlohmann::json to_json() const;
    static StepMetrics from_json(const nlohmann::json& doc);
};

// Gradient of the batch objective w.r.t. the flattened codebook, plus the
// loss values. Each example runs forward/backward on its own tape; the
// per-example gradients are summed in example-index order, so the result is
// identical under either policy.
struct BatchGradient {
    std::vector<double> grad;
    StepMetrics losses;
};

BatchGradient batch_gradient(const FrozenEncoders& encoders, const ConceptualCodebook& cb,
                             std::span<const TrainingExample> batch, std::span<const Tensor> class_embeddings,
                             std::span<const Tensor> handcrafted, const ObjectiveConfig& config,
                             kernels::Policy policy);

struct TrainResult {
    ConceptualCodebook initial;
    ConceptualCodebook codebook;
    OptimizerState optimizer;
    std::vector<StepMetrics> metrics;
    std::size_t steps = 0;
    double train_accuracy = 0.0;
};

using StepCallback = std::function<void(const StepMetrics&)>;

// Training loop over the seen-class split with a precomputed handcrafted
// prompt set. Only the codebook is updated.
TrainResult train_with_prompts(const FrozenEncoders& encoders, const LabeledSplit& train_split,
                               const HandcraftedPromptSet& prompt_set, const TrainConfig& config,
                               const StepCallback& on_step = {});

struct TrainArtifacts {
    HandcraftedCache cache;
    HandcraftedPromptSet prompt_set;
    TrainResult result;
};

// Builds the concept cache and handcrafted prompt set from the training
// images, then trains.
TrainArtifacts train(const FrozenEncoders& encoders, const LabeledSplit& train_split,
                     const ConceptLexicon& lexicon, const TrainConfig& config, PromptGenerator& generator,
                     const StepCallback& on_step = {});

// Class-grouped view of a split, for cache/prompt-set construction.
std::vector<ClassImages> group_by_class(const LabeledSplit& split);

// ---- evaluation ----

struct ClassAccuracy {
    std::string class_name;
    std::size_t correct = 0;
    std::size_t total = 0;
    double accuracy() const { return total ? 100.0 * static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

struct SplitReport {
    double accuracy = 0.0;  // percent
    std::size_t correct = 0;
    std::size_t total = 0;
    std::vector<ClassAccuracy> per_class;

    nlohmann::json to_json() const;
};

struct Prediction {
    std::size_t predicted = 0;
    std::vector<double> probabilities;
    RetrievalResult retrieval;
};

// Zero-shot prediction over `class_names` (embedded by name, so unseen classes
// work): retrieve, build per-class prompts, argmax of the softmax.
Prediction predict(const FrozenEncoders& encoders, const ConceptualCodebook& cb, const Tensor& image,
                   std::span<const Tensor> class_embeddings, std::size_t k3, double tau);

SplitReport evaluate_split(const FrozenEncoders& encoders, const ConceptualCodebook& cb, const LabeledSplit& split,
                           std::size_t k3, double tau, kernels::Policy policy = kernels::policy());

// 2bn / (b + n); 0 when both are 0.
double harmonic_mean(double base, double novel);

struct BaseNovelReport {
    SplitReport base;
    SplitReport novel;
    double hm = 0.0;

    nlohmann::json to_json() const;
};

BaseNovelReport evaluate(const FrozenEncoders& encoders, const ConceptualCodebook& cb, const LabeledSplit& base_test,
                         const LabeledSplit& novel_test, std::size_t k3, double tau);

}  // namespace cocole
