#include "cocole/encoders.hpp"

#include <cctype>
#include <cmath>
#include <cstring>
#include <sstream>

#include "cocole/json_util.hpp"
#include "cocole/rng.hpp"

namespace cocole {

using nlohmann::json;

namespace {

Tensor uniform_matrix(std::uint64_t seed, std::string_view stream, std::size_t rows, std::size_t cols) {
    Rng rng(derive_seed(seed, stream));
    const double s = 1.0 / std::sqrt(static_cast<double>(rows));
    std::vector<double> v(rows * cols);
    for (double& x : v) x = rng.uniform(-s, s);
    return Tensor::matrix(rows, cols, std::move(v));
}

void hash_tensor(std::uint64_t& h, const Tensor& t) {
    for (double x : t.data()) {
        char bytes[sizeof(double)];
        std::memcpy(bytes, &x, sizeof(double));
        h = fnv1a(std::string_view(bytes, sizeof(double)), h);
    }
}

void validate_dims(const EncoderDims& d) {
    require(d.d_in > 0 && d.d_hidden > 0 && d.d > 0 && d.max_len > 0 && d.blocks > 0, ErrorKind::kConfig,
            "encoder dimensions must be positive");
}

}  // namespace

EncoderWeights EncoderWeights::generate(std::uint64_t seed, const EncoderDims& dims) {
    validate_dims(dims);
    EncoderWeights w;
    w.seed = seed;
    w.dims = dims;
    w.image_hidden = uniform_matrix(seed, "image.hidden", dims.d_in, dims.d_hidden);
    w.image_out = uniform_matrix(seed, "image.out", dims.d_hidden, dims.d);
    for (std::size_t b = 0; b < dims.blocks; ++b) {
        const auto p = "text.block" + std::to_string(b) + ".";
        w.text_blocks.push_back({uniform_matrix(seed, p + "query", dims.d, dims.d),
                                 uniform_matrix(seed, p + "key", dims.d, dims.d),
                                 uniform_matrix(seed, p + "value", dims.d, dims.d),
                                 uniform_matrix(seed, p + "out", dims.d, dims.d),
                                 uniform_matrix(seed, p + "mix", dims.d, dims.d)});
    }
    w.text_out = uniform_matrix(seed, "text.out", dims.d, dims.d);
    return w;
}

std::uint64_t EncoderWeights::fingerprint() const {
    std::uint64_t h = fnv1a("cocole-encoders");
    hash_tensor(h, image_hidden);
    hash_tensor(h, image_out);
    for (const auto& b : text_blocks) {
        hash_tensor(h, b.query);
        hash_tensor(h, b.key);
        hash_tensor(h, b.value);
        hash_tensor(h, b.out);
        hash_tensor(h, b.mix);
    }
    hash_tensor(h, text_out);
    return h;
}

json EncoderWeights::to_json() const {
    json blocks = json::array();
    for (const auto& b : text_blocks)
        blocks.push_back({{"query", tensor_to_json(b.query)},
                          {"key", tensor_to_json(b.key)},
                          {"value", tensor_to_json(b.value)},
                          {"out", tensor_to_json(b.out)},
                          {"mix", tensor_to_json(b.mix)}});
    return {
        {"seed", seed},
        {"dims",
         {{"d_in", dims.d_in}, {"d_hidden", dims.d_hidden}, {"d", dims.d}, {"max_len", dims.max_len},
          {"blocks", dims.blocks}}},
        {"matrices",
         {{"image_hidden", tensor_to_json(image_hidden)},
          {"image_out", tensor_to_json(image_out)},
          {"text_blocks", blocks},
          {"text_out", tensor_to_json(text_out)}}},
    };
}

EncoderWeights EncoderWeights::from_json(const json& doc) {
    const std::string what = "encoder weights";
    try {
        EncoderWeights w;
        w.seed = field(doc, "seed", what).get<std::uint64_t>();
        const auto& d = field(doc, "dims", what);
        w.dims.d_in = field(d, "d_in", what).get<std::size_t>();
        w.dims.d_hidden = field(d, "d_hidden", what).get<std::size_t>();
        w.dims.d = field(d, "d", what).get<std::size_t>();
        w.dims.max_len = field(d, "max_len", what).get<std::size_t>();
        w.dims.blocks = field(d, "blocks", what).get<std::size_t>();
        validate_dims(w.dims);
        const auto& m = field(doc, "matrices", what);
        const auto D = w.dims.d;
        w.image_hidden = tensor_from_json(field(m, "image_hidden", what), {w.dims.d_in, w.dims.d_hidden}, what);
        w.image_out = tensor_from_json(field(m, "image_out", what), {w.dims.d_hidden, D}, what);
        const auto& blocks = field(m, "text_blocks", what);
        require(blocks.is_array() && blocks.size() == w.dims.blocks, ErrorKind::kCorruptFile,
                what + ": block count mismatch");
        for (const auto& b : blocks)
            w.text_blocks.push_back({tensor_from_json(field(b, "query", what), {D, D}, what),
                                     tensor_from_json(field(b, "key", what), {D, D}, what),
                                     tensor_from_json(field(b, "value", what), {D, D}, what),
                                     tensor_from_json(field(b, "out", what), {D, D}, what),
                                     tensor_from_json(field(b, "mix", what), {D, D}, what)});
        w.text_out = tensor_from_json(field(m, "text_out", what), {D, D}, what);
        return w;
    } catch (const json::exception& e) {
        fail(ErrorKind::kCorruptFile, what + ": " + e.what());
    }
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> words;
    std::string current;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!current.empty()) words.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    if (!current.empty()) words.push_back(std::move(current));
    return words;
}

FrozenEncoders::FrozenEncoders(std::uint64_t seed, const EncoderDims& dims)
    : weights_(EncoderWeights::generate(seed, dims)) {}

FrozenEncoders::FrozenEncoders(EncoderWeights weights) : weights_(std::move(weights)) {}

Tensor FrozenEncoders::encode_image(const Tensor& x) const {
    const auto& d = dims();
    require(x.size() == d.d_in, ErrorKind::kDimension,
            "encode_image: expected " + std::to_string(d.d_in) + " inputs, got " + std::to_string(x.size()));
    auto h = tanh(matmul(reshape(x, {1, d.d_in}), weights_.image_hidden));
    auto f = matmul(h, weights_.image_out);
    return l2_normalize(reshape(f, {d.d}));
}

Tensor FrozenEncoders::encode_text(std::span<const Tensor> tokens) const {
    const auto& d = dims();
    require(!tokens.empty(), ErrorKind::kDimension, "encode_text: empty token sequence");
    for (const auto& t : tokens)
        require(t.cols() == d.d && t.rank() <= 2, ErrorKind::kDimension,
                "encode_text: token of shape " + shape_str(t.shape()) + " is not " + std::to_string(d.d) + "-wide");
    Tensor x = concat_rows(tokens);
    const auto len = x.rows();
    require(len <= d.max_len, ErrorKind::kDimension,
            "encode_text: sequence length " + std::to_string(len) + " exceeds " + std::to_string(d.max_len));
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d.d));
    for (const auto& b : weights_.text_blocks) {
        auto q = matmul(x, b.query);
        auto k = matmul(x, b.key);
        auto v = matmul(x, b.value);
        auto attn = causal_softmax_rows(scale(matmul(q, transpose(k)), inv_sqrt_d));
        auto mixed = matmul(matmul(attn, v), b.out);
        x = tanh(matmul(add(x, mixed), b.mix));
    }
    auto pooled = reshape(mean_rows(x), {1, d.d});
    return l2_normalize(reshape(matmul(pooled, weights_.text_out), {d.d}));
}

Tensor FrozenEncoders::embed_word(std::string_view word) const {
    std::string lower;
    for (char c : word) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    require(!lower.empty(), ErrorKind::kContract, "embed_word: empty word");
    Rng rng(mix64(weights_.seed ^ fnv1a(lower, fnv1a("cocole-word:"))));
    std::vector<double> v(dims().d);
    for (double& x : v) x = rng.normal();
    return l2_normalize(Tensor::vector(std::move(v)));
}

Tensor FrozenEncoders::encode_prompt_text(std::span<const std::string> words) const {
    require(!words.empty(), ErrorKind::kContract, "encode_prompt_text: empty word sequence");
    std::vector<Tensor> tokens;
    tokens.reserve(words.size());
    for (const auto& w : words) tokens.push_back(embed_word(w));
    return encode_text(tokens);
}

}  // namespace cocole
