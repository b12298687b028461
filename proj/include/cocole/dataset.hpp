#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "cocole/concept_cache.hpp"
#include "cocole/encoders.hpp"
#include "cocole/trainer.hpp"

namespace cocole {

struct DatasetParams {
    std::size_t num_classes = 8;         // C_cls, even
    std::size_t shots = 16;              // H, per base class
    std::size_t test_per_class = 25;
    std::size_t num_concepts = 8;
    std::size_t concepts_per_class = 2;
    double noise = 0.12;                 // sigma of the additive Gaussian
    double concept_strength = 1.0;       // norm of each concept offset
    double prototype_radius = 2.0;
    double concept_keep = 0.75;          // chance an image shows each class concept
    std::size_t align_steps = 300;
    std::size_t reference_steps = 300;
    std::size_t describe_passes = 1;     // refits of the reference to retrieved descriptions
    std::size_t k1 = 3;                  // cache settings those descriptions are built with
    std::size_t k2 = 10;
    double align_tau = 0.07;
    std::size_t align_samples = 16;
    double neutral_weight = 5.0;
    std::size_t neutral_contexts = 8;    // the blank context plus random ones
    double neutral_scale = 0.02;

    void validate() const;
    nlohmann::json to_json() const;
    void read_json(const nlohmann::json& doc);
};

struct SynthConcept {
    std::string word;
    Tensor offset;  // [d_in]
};

struct SynthClass {
    std::string name;
    Tensor prototype;                  // [d_in]
    std::vector<std::size_t> concepts;  // indices into FewShotDataset::concepts
    bool base = true;
};

// Raw-vector few-shot corpus. Training images exist for base classes only.
struct FewShotDataset {
    std::uint64_t seed = 0;
    std::uint64_t encoder_seed = 0;
    DatasetParams params;
    std::vector<SynthClass> classes;
    std::vector<SynthConcept> concepts;
    LabeledSplit train;       // base classes
    LabeledSplit base_test;   // base classes
    LabeledSplit novel_test;  // novel classes

    std::vector<std::string> base_classes() const { return train.class_names; }
    std::vector<std::string> novel_classes() const { return novel_test.class_names; }

    nlohmann::json to_json() const;
    static FewShotDataset from_json(const nlohmann::json& doc);
};

// Pool of class names the generator draws from.
const std::vector<std::string>& synth_class_names();

// Concepts are lexicon words. Each concept offset is shaped so that its image
// feature points toward the text feature of "the photo is <word>", and each
// class prototype so that the class's mean image feature points toward the
// text feature of "a photo of <class> which is <concept words>". Every concept
// is assigned to at least one base and one novel class.
FewShotDataset synth_dataset(const FrozenEncoders& encoders, const ConceptLexicon& lexicon,
                             const DatasetParams& params, std::uint64_t seed);

// x of norm `radius`, found by projected gradient ascent from a seeded start,
// maximizing the mean over shifts of a score of encode_image(x + shift).
// With one target the score is the cosine to it; with
// several, the log-softmax of the dot-product logits / tau at `correct`.
// Each neutral group adds neutral_weight / groups times the mean log-softmax
// over its targets, which pushes that group's logits toward a tie.
Tensor align_input(const FrozenEncoders& encoders, std::span<const Tensor> targets, std::size_t correct,
                   std::span<const Tensor> shifts, double radius, std::size_t steps, std::uint64_t seed,
                   double tau = 0.07,
                   std::span<const std::vector<Tensor>> neutral = {}, double neutral_weight = 1.0);

// Context tokens R ([length] rows of width d) minimizing
// sum_c |encode_text([R, class_tokens[c]]) - targets[c]|^2 by AdamW.
std::vector<Tensor> fit_reference_context(const FrozenEncoders& encoders, std::span<const Tensor> class_tokens,
                                          std::span<const Tensor> targets, std::size_t length, std::size_t steps,
                                          std::uint64_t seed);

void save_dataset(const FewShotDataset& ds, const std::filesystem::path& path);
FewShotDataset load_dataset(const std::filesystem::path& path);

}  // namespace cocole
