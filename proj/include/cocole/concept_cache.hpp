#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "cocole/encoders.hpp"
#include "cocole/prompt_generator.hpp"
#include "cocole/tensor.hpp"

namespace cocole {

struct LexiconEntry {
    std::string word;
    std::string category;  // stored as metadata only
};

struct ConceptLexicon {
    std::vector<LexiconEntry> entries;

    std::size_t size() const { return entries.size(); }
    // Words unique and nonempty, categories nonempty, at least min_size entries.
    void validate(std::size_t min_size = 1) const;

    nlohmann::json to_json() const;
    static ConceptLexicon from_json(const nlohmann::json& doc);
};

// The 200-word lexicon shipped with the library (also in data/lexicon.json).
ConceptLexicon default_lexicon();

struct CacheOptions {
    std::size_t k1 = 3;
    // Re-normalize averaged keys to unit length. When false the raw average
    // is stored.
    bool renormalize_keys = true;
    std::vector<std::string> prefix = {"the", "photo", "is"};
};

struct CachePair {
    Tensor key;  // [d]
    std::string value;
};

// Frozen (image-feature key -> concept word) store, one pair per lexicon
// entry in lexicon order.
struct HandcraftedCache {
    std::uint64_t encoder_seed = 0;
    std::size_t k1 = 0;
    bool renormalized = true;
    std::vector<CachePair> pairs;

    std::size_t size() const { return pairs.size(); }

    nlohmann::json to_json() const;
    static HandcraftedCache from_json(const nlohmann::json& doc);
};

// For every concept word: encode prefix + word, score every image feature by
// dot product, average the top-k1 features and store as the word's key.
HandcraftedCache build_cache(const FrozenEncoders& encoders, const ConceptLexicon& lexicon,
                             std::span<const Tensor> train_images, const CacheOptions& options);

// Same, from already-encoded unit image features.
HandcraftedCache build_cache_from_features(const FrozenEncoders& encoders, const ConceptLexicon& lexicon,
                                           std::span<const Tensor> image_features, const CacheOptions& options);

// Indices of the image features selected for one concept feature.
std::vector<std::size_t> select_images_for_concept(const Tensor& concept_feature,
                                                   std::span<const Tensor> image_features, std::size_t k1);

struct ConceptMatch {
    std::size_t index;
    std::string word;
    double similarity;
};

// The k2 keys most cosine-similar to the query, descending; ties go to the
// lower lexicon index.
std::vector<ConceptMatch> match_concepts(const HandcraftedCache& cache, const Tensor& query, std::size_t k2);
std::vector<std::string> retrieve_concepts(const HandcraftedCache& cache, const Tensor& query, std::size_t k2);

struct PromptEntry {
    std::string class_name;
    std::vector<std::string> words;
    Tensor feature;  // frozen text feature of `words`
};

struct HandcraftedPromptSet {
    std::vector<PromptEntry> entries;  // one per seen class, in class order

    std::size_t size() const { return entries.size(); }
    const PromptEntry& find(const std::string& class_name) const;
    // Features in the order of the given class names.
    std::vector<Tensor> features_for(std::span<const std::string> class_names) const;

    nlohmann::json to_json() const;
    // class_order fixes entry order, since the file is keyed by class name.
    static HandcraftedPromptSet from_json(const nlohmann::json& doc, std::span<const std::string> class_order);
};

struct ClassImages {
    std::string class_name;
    std::vector<Tensor> images;  // raw [d_in] inputs
};

// Per class: mean image feature as the query, top-k2 concepts, generated
// prompt words, frozen text feature.
HandcraftedPromptSet build_prompt_set(const FrozenEncoders& encoders, const HandcraftedCache& cache,
                                      std::span<const ClassImages> classes, std::size_t k2,
                                      PromptGenerator& generator);

}  // namespace cocole
