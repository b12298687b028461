#include "cocole/concept_cache.hpp"

#include <cmath>
#include <exception>
#include <set>

#include "cocole/json_util.hpp"
#include "cocole/kernels.hpp"
#include "cocole/topk.hpp"

namespace cocole {

using nlohmann::json;

// ---- lexicon ----

void ConceptLexicon::validate(std::size_t min_size) const {
    require(!entries.empty(), ErrorKind::kConfig, "concept lexicon is empty");
    require(entries.size() >= min_size, ErrorKind::kConfig,
            "concept lexicon has " + std::to_string(entries.size()) + " words, need at least " +
                std::to_string(min_size));
    std::set<std::string> seen;
    for (const auto& e : entries) {
        require(!e.word.empty(), ErrorKind::kConfig, "concept lexicon contains an empty word");
        require(!e.category.empty(), ErrorKind::kConfig, "concept '" + e.word + "' has an empty category");
        require(seen.insert(e.word).second, ErrorKind::kConfig, "duplicate concept word '" + e.word + "'");
    }
}

json ConceptLexicon::to_json() const {
    json arr = json::array();
    for (const auto& e : entries) arr.push_back({{"word", e.word}, {"category", e.category}});
    return arr;
}

ConceptLexicon ConceptLexicon::from_json(const json& doc) {
    require(doc.is_array(), ErrorKind::kCorruptFile, "lexicon: expected a JSON list");
    ConceptLexicon lex;
    try {
        for (const auto& e : doc)
            lex.entries.push_back({e.at("word").get<std::string>(), e.at("category").get<std::string>()});
    } catch (const json::exception& e) {
        fail(ErrorKind::kCorruptFile, std::string("lexicon: ") + e.what());
    }
    lex.validate();
    return lex;
}

// ---- cache ----

std::vector<std::size_t> select_images_for_concept(const Tensor& concept_feature,
                                                   std::span<const Tensor> image_features, std::size_t k1) {
    std::vector<double> scores(image_features.size());
    for (std::size_t j = 0; j < image_features.size(); ++j)
        scores[j] = dot(concept_feature, image_features[j]).item();
    return top_k(scores, k1);
}

HandcraftedCache build_cache_from_features(const FrozenEncoders& encoders, const ConceptLexicon& lexicon,
                                           std::span<const Tensor> image_features, const CacheOptions& options) {
    require(!lexicon.entries.empty(), ErrorKind::kConfig, "build_cache: empty lexicon");
    require(options.k1 >= 1, ErrorKind::kConfig, "build_cache: K1 must be at least 1");
    require(options.k1 <= image_features.size(), ErrorKind::kConfig,
            "build_cache: K1=" + std::to_string(options.k1) + " exceeds " +
                std::to_string(image_features.size()) + " training images");

    HandcraftedCache cache;
    cache.encoder_seed = encoders.seed();
    cache.k1 = options.k1;
    cache.renormalized = options.renormalize_keys;
    cache.pairs.resize(lexicon.size());

    const auto d = encoders.dims().d;
    const auto count = static_cast<std::ptrdiff_t>(lexicon.size());
    std::exception_ptr error;
    // Concepts are independent; each iteration writes only its own slot.
#pragma omp parallel for schedule(dynamic) if (kernels::policy() == kernels::Policy::kParallel)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        try {
            const auto& entry = lexicon.entries[static_cast<std::size_t>(i)];
            auto words = options.prefix;
            words.push_back(entry.word);
            const auto concept_feature = encoders.encode_prompt_text(words);
            const auto chosen = select_images_for_concept(concept_feature, image_features, options.k1);
            std::vector<double> avg(d, 0.0);
            for (auto j : chosen) {
                auto f = image_features[j].data();
                for (std::size_t c = 0; c < d; ++c) avg[c] += f[c];
            }
            for (double& x : avg) x /= static_cast<double>(chosen.size());
            Tensor key = Tensor::vector(std::move(avg));
            if (options.renormalize_keys) key = l2_normalize(key);
            cache.pairs[static_cast<std::size_t>(i)] = {key, entry.word};
        } catch (...) {
#pragma omp critical
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
    return cache;
}

HandcraftedCache build_cache(const FrozenEncoders& encoders, const ConceptLexicon& lexicon,
                             std::span<const Tensor> train_images, const CacheOptions& options) {
    std::vector<Tensor> features;
    features.reserve(train_images.size());
    for (const auto& x : train_images) features.push_back(encoders.encode_image(x));
    return build_cache_from_features(encoders, lexicon, features, options);
}

json HandcraftedCache::to_json() const {
    json arr = json::array();
    for (const auto& p : pairs) arr.push_back({{"key", tensor_to_json(p.key)}, {"value", p.value}});
    return {{"encoder_seed", encoder_seed}, {"K1", k1}, {"renormalized", renormalized}, {"pairs", arr}};
}

HandcraftedCache HandcraftedCache::from_json(const json& doc) {
    const std::string what = "cache";
    try {
        HandcraftedCache cache;
        cache.encoder_seed = field(doc, "encoder_seed", what).get<std::uint64_t>();
        cache.k1 = field(doc, "K1", what).get<std::size_t>();
        if (doc.contains("renormalized")) cache.renormalized = doc.at("renormalized").get<bool>();
        const auto& pairs = field(doc, "pairs", what);
        require(pairs.is_array() && !pairs.empty(), ErrorKind::kCorruptFile, "cache: no pairs");
        for (const auto& p : pairs)
            cache.pairs.push_back({vector_from_json(field(p, "key", what), what),
                                   field(p, "value", what).get<std::string>()});
        const auto d = cache.pairs.front().key.size();
        for (const auto& p : cache.pairs)
            require(p.key.size() == d, ErrorKind::kCorruptFile, "cache: keys of different lengths");
        return cache;
    } catch (const json::exception& e) {
        fail(ErrorKind::kCorruptFile, what + ": " + e.what());
    }
}

std::vector<ConceptMatch> match_concepts(const HandcraftedCache& cache, const Tensor& query, std::size_t k2) {
    require(k2 <= cache.size(), ErrorKind::kConfig,
            "retrieve_concepts: K2=" + std::to_string(k2) + " exceeds cache size " + std::to_string(cache.size()));
    std::vector<double> scores(cache.size());
    for (std::size_t i = 0; i < cache.size(); ++i) scores[i] = cosine_sim(query, cache.pairs[i].key).item();
    std::vector<ConceptMatch> out;
    for (auto i : top_k(scores, k2)) out.push_back({i, cache.pairs[i].value, scores[i]});
    return out;
}

std::vector<std::string> retrieve_concepts(const HandcraftedCache& cache, const Tensor& query, std::size_t k2) {
    std::vector<std::string> words;
    for (auto& m : match_concepts(cache, query, k2)) words.push_back(std::move(m.word));
    return words;
}

// ---- prompt set ----

const PromptEntry& HandcraftedPromptSet::find(const std::string& class_name) const {
    for (const auto& e : entries)
        if (e.class_name == class_name) return e;
    fail(ErrorKind::kContract, "prompt set has no entry for class '" + class_name + "'");
}

std::vector<Tensor> HandcraftedPromptSet::features_for(std::span<const std::string> class_names) const {
    std::vector<Tensor> out;
    out.reserve(class_names.size());
    for (const auto& n : class_names) out.push_back(find(n).feature);
    return out;
}

json HandcraftedPromptSet::to_json() const {
    json doc = json::object();
    for (const auto& e : entries) doc[e.class_name] = {{"words", e.words}, {"feature", tensor_to_json(e.feature)}};
    return doc;
}

HandcraftedPromptSet HandcraftedPromptSet::from_json(const json& doc, std::span<const std::string> class_order) {
    const std::string what = "prompt set";
    require(doc.is_object(), ErrorKind::kCorruptFile, what + ": expected an object keyed by class");
    HandcraftedPromptSet set;
    try {
        for (const auto& name : class_order) {
            const auto& e = field(doc, name.c_str(), what);
            set.entries.push_back({name, field(e, "words", what).get<std::vector<std::string>>(),
                                   vector_from_json(field(e, "feature", what), what)});
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::kCorruptFile, what + ": " + e.what());
    }
    require(set.entries.size() == doc.size(), ErrorKind::kCorruptFile,
            what + ": file has classes outside the expected set");
    return set;
}

HandcraftedPromptSet build_prompt_set(const FrozenEncoders& encoders, const HandcraftedCache& cache,
                                      std::span<const ClassImages> classes, std::size_t k2,
                                      PromptGenerator& generator) {
    const auto d = encoders.dims().d;
    HandcraftedPromptSet set;
    for (const auto& cls : classes) {
        require(!cls.images.empty(), ErrorKind::kContract,
                "build_prompt_set: class '" + cls.class_name + "' has no images");
        std::vector<double> mean_feature(d, 0.0);
        for (const auto& x : cls.images) {
            auto f = encoders.encode_image(x);
            for (std::size_t c = 0; c < d; ++c) mean_feature[c] += f[c];
        }
        for (double& x : mean_feature) x /= static_cast<double>(cls.images.size());
        auto concepts = retrieve_concepts(cache, Tensor::vector(std::move(mean_feature)), k2);
        auto words = generate_prompt(cls.class_name, concepts, generator);
        auto feature = encoders.encode_prompt_text(words);
        set.entries.push_back({cls.class_name, std::move(words), feature});
    }
    return set;
}

}  // namespace cocole
