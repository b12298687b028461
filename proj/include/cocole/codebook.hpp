#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "cocole/encoders.hpp"
#include "cocole/tensor.hpp"

namespace cocole {

// N learnable (key, prompt) pairs. Key i is a [d] vector, prompt i an [m x d]
// block of m token vectors; index i pairs them permanently. These are the
// only trainable parameters in the system.
struct ConceptualCodebook {
    std::size_t n = 0;
    std::size_t m = 0;
    std::size_t d = 0;
    std::vector<Tensor> keys;
    std::vector<Tensor> prompts;

    // Keys: unit-norm Gaussian directions. Prompts: i.i.d. N(0, 0.02^2).
    static ConceptualCodebook init(std::size_t n, std::size_t m, std::size_t d, std::uint64_t seed);

    std::size_t parameter_count() const { return n * d + n * m * d; }
    // Keys then prompts, flattened, in index order.
    std::vector<double> flatten() const;
    void unflatten(std::span<const double> values);

    bool operator==(const ConceptualCodebook& other) const;
};

inline constexpr double kPromptInitStd = 0.02;

// Handles used by one forward pass: either tape leaves (training) or the
// codebook's constant tensors (inference).
struct CodebookParams {
    std::vector<Tensor> keys;
    std::vector<Tensor> prompts;

    static CodebookParams constants(const ConceptualCodebook& cb);
    static CodebookParams bind(Tape& tape, const ConceptualCodebook& cb);

    // Gradients of a bound set after backward, flattened like
    // ConceptualCodebook::flatten().
    std::vector<double> flat_grad() const;
};

struct RetrievalResult {
    std::vector<std::size_t> indices;  // distinct, descending similarity
    std::vector<double> similarities;
};

// Top-k3 keys by cosine similarity to the image feature; ties by lower index.
// The selection is a discrete choice and carries no gradient.
RetrievalResult retrieve(std::span<const Tensor> keys, const Tensor& image_feature, std::size_t k3);
inline RetrievalResult retrieve(const ConceptualCodebook& cb, const Tensor& image_feature, std::size_t k3) {
    return retrieve(cb.keys, image_feature, k3);
}

// [k3*m + 1, d]: the selected prompts in retrieval order, then the class
// token.
Tensor assemble_prompt(const CodebookParams& params, const RetrievalResult& result, const Tensor& class_embedding);

// Text feature of the assembled prompt for every class.
std::vector<Tensor> class_text_features(const FrozenEncoders& encoders, const CodebookParams& params,
                                        const RetrievalResult& result, std::span<const Tensor> class_embeddings);

// ---- persistence ----

inline constexpr int kCodebookFormatVersion = 1;

struct CodebookFile {
    ConceptualCodebook codebook;
    std::uint64_t encoder_seed = 0;
    std::string config_hash;
    nlohmann::json extra = nlohmann::json::object();  // trainer state, when present
};

nlohmann::json codebook_to_json(const CodebookFile& file);
CodebookFile codebook_from_json(const nlohmann::json& doc);

void save_codebook(const CodebookFile& file, const std::filesystem::path& path);
CodebookFile load_codebook(const std::filesystem::path& path);

}  // namespace cocole
