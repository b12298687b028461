#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "cocole/tensor.hpp"

namespace cocole {

struct EncoderDims {
    std::size_t d_in = 32;      // raw image input length
    std::size_t d_hidden = 128;  // image MLP hidden width
    std::size_t d = 64;          // shared feature / token dimension
    std::size_t max_len = 64;    // longest accepted token sequence
    std::size_t blocks = 2;      // text encoder attention blocks

    bool operator==(const EncoderDims&) const = default;
};

struct TextBlockWeights {
    Tensor query, key, value, out, mix;  // each [d x d]
};

// Frozen parameters of both encoders. Never attached to a tape.
struct EncoderWeights {
    std::uint64_t seed = 0;
    EncoderDims dims;
    Tensor image_hidden;  // [d_in x d_hidden]
    Tensor image_out;     // [d_hidden x d]
    std::vector<TextBlockWeights> text_blocks;
    Tensor text_out;  // [d x d]

    // Entries drawn from uniform(-s, s), s = 1/sqrt(fan_in), one seeded
    // stream per matrix.
    static EncoderWeights generate(std::uint64_t seed, const EncoderDims& dims);

    // FNV-1a over the raw bytes of every matrix in a fixed order.
    std::uint64_t fingerprint() const;

    nlohmann::json to_json() const;
    static EncoderWeights from_json(const nlohmann::json& doc);
};

// Lowercases and splits on whitespace.
std::vector<std::string> tokenize(std::string_view text);

// Deterministic stand-ins for a pretrained image encoder and text encoder.
// Both are differentiable with respect to their inputs only.
class FrozenEncoders {
public:
    FrozenEncoders(std::uint64_t seed, const EncoderDims& dims);
    explicit FrozenEncoders(EncoderWeights weights);

    const EncoderWeights& weights() const { return weights_; }
    const EncoderDims& dims() const { return weights_.dims; }
    std::uint64_t seed() const { return weights_.seed; }

    // l2_normalize(W2^T tanh(W1^T x)).
    Tensor encode_image(const Tensor& x) const;

    // Tokens are [d] vectors or [r x d] blocks, concatenated in order.
    // Causal single-head attention blocks with residual and tanh mix, then
    // mean-pool, output projection and l2-normalize.
    Tensor encode_text(std::span<const Tensor> tokens) const;

    // Hash of the lowercased word seeds a Gaussian vector, l2-normalized.
    Tensor embed_word(std::string_view word) const;

    Tensor encode_prompt_text(std::span<const std::string> words) const;

private:
    EncoderWeights weights_;
};

}  // namespace cocole
