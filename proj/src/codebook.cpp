#include "cocole/codebook.hpp"

#include <cmath>
#include <set>

#include "cocole/json_util.hpp"
#include "cocole/rng.hpp"
#include "cocole/topk.hpp"

namespace cocole {

using nlohmann::json;

ConceptualCodebook ConceptualCodebook::init(std::size_t n, std::size_t m, std::size_t d, std::uint64_t seed) {
    require(n >= 1 && m >= 1 && d >= 1, ErrorKind::kConfig, "codebook dimensions must be at least 1");
    ConceptualCodebook cb;
    cb.n = n;
    cb.m = m;
    cb.d = d;
    Rng key_rng(derive_seed(seed, "codebook.keys"));
    Rng prompt_rng(derive_seed(seed, "codebook.prompts"));
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> k(d);
        for (double& x : k) x = key_rng.normal();
        cb.keys.push_back(l2_normalize(Tensor::vector(std::move(k))));
        std::vector<double> p(m * d);
        for (double& x : p) x = kPromptInitStd * prompt_rng.normal();
        cb.prompts.push_back(Tensor::matrix(m, d, std::move(p)));
    }
    return cb;
}

std::vector<double> ConceptualCodebook::flatten() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (const auto& k : keys) out.insert(out.end(), k.data().begin(), k.data().end());
    for (const auto& p : prompts) out.insert(out.end(), p.data().begin(), p.data().end());
    return out;
}

void ConceptualCodebook::unflatten(std::span<const double> values) {
    require(values.size() == parameter_count(), ErrorKind::kDimension, "codebook: parameter count mismatch");
    std::size_t off = 0;
    for (auto& k : keys) {
        k = Tensor({d}, std::vector<double>(values.begin() + static_cast<std::ptrdiff_t>(off),
                                            values.begin() + static_cast<std::ptrdiff_t>(off + d)));
        off += d;
    }
    for (auto& p : prompts) {
        p = Tensor({m, d}, std::vector<double>(values.begin() + static_cast<std::ptrdiff_t>(off),
                                               values.begin() + static_cast<std::ptrdiff_t>(off + m * d)));
        off += m * d;
    }
}

bool ConceptualCodebook::operator==(const ConceptualCodebook& o) const {
    return n == o.n && m == o.m && d == o.d && flatten() == o.flatten();
}

CodebookParams CodebookParams::constants(const ConceptualCodebook& cb) { return {cb.keys, cb.prompts}; }

CodebookParams CodebookParams::bind(Tape& tape, const ConceptualCodebook& cb) {
    CodebookParams p;
    p.keys.reserve(cb.n);
    p.prompts.reserve(cb.n);
    for (const auto& k : cb.keys) p.keys.push_back(tape.leaf(k));
    for (const auto& q : cb.prompts) p.prompts.push_back(tape.leaf(q));
    return p;
}

std::vector<double> CodebookParams::flat_grad() const {
    std::vector<double> out;
    auto append = [&](const Tensor& t) {
        if (t.has_grad())
            out.insert(out.end(), t.grad().begin(), t.grad().end());
        else
            out.insert(out.end(), t.size(), 0.0);
    };
    for (const auto& k : keys) append(k);
    for (const auto& p : prompts) append(p);
    return out;
}

RetrievalResult retrieve(std::span<const Tensor> keys, const Tensor& image_feature, std::size_t k3) {
    require(k3 >= 1 && k3 <= keys.size(), ErrorKind::kConfig,
            "retrieve: K3=" + std::to_string(k3) + " must be in [1, " + std::to_string(keys.size()) + "]");
    auto q = image_feature.data();
    double qn = 0.0;
    for (double x : q) qn += x * x;
    require(qn > 0.0, ErrorKind::kDegenerateInput, "retrieve: zero-norm image feature");
    qn = std::sqrt(qn);
    std::vector<double> scores(keys.size());
    for (std::size_t i = 0; i < keys.size(); ++i) {
        auto k = keys[i].data();
        require(k.size() == q.size(), ErrorKind::kDimension, "retrieve: key and feature lengths differ");
        double kn = 0.0, dp = 0.0;
        for (std::size_t c = 0; c < k.size(); ++c) {
            kn += k[c] * k[c];
            dp += k[c] * q[c];
        }
        require(kn > 0.0, ErrorKind::kDegenerateInput, "retrieve: codebook key " + std::to_string(i) + " has zero norm");
        scores[i] = dp / (std::sqrt(kn) * qn);
    }
    RetrievalResult r;
    r.indices = top_k(scores, k3);
    for (auto i : r.indices) r.similarities.push_back(scores[i]);
    return r;
}

Tensor assemble_prompt(const CodebookParams& params, const RetrievalResult& result, const Tensor& class_embedding) {
    std::vector<Tensor> pieces;
    pieces.reserve(result.indices.size() + 1);
    for (auto i : result.indices) {
        require(i < params.prompts.size(), ErrorKind::kContract, "assemble_prompt: index out of range");
        pieces.push_back(params.prompts[i]);
    }
    pieces.push_back(class_embedding);
    return concat_rows(pieces);
}

std::vector<Tensor> class_text_features(const FrozenEncoders& encoders, const CodebookParams& params,
                                        const RetrievalResult& result, std::span<const Tensor> class_embeddings) {
    require(!class_embeddings.empty(), ErrorKind::kContract, "class_text_features: no classes");
    std::vector<Tensor> feats;
    feats.reserve(class_embeddings.size());
    for (const auto& cls : class_embeddings) {
        Tensor seq = assemble_prompt(params, result, cls);
        feats.push_back(encoders.encode_text(std::span<const Tensor>(&seq, 1)));
    }
    return feats;
}

// ---- persistence ----

json codebook_to_json(const CodebookFile& file) {
    const auto& cb = file.codebook;
    json keys = json::array();
    for (const auto& k : cb.keys) keys.push_back(tensor_to_json(k));
    json prompts = json::array();
    for (const auto& p : cb.prompts) prompts.push_back(tensor_to_json(p));
    json doc = file.extra.is_object() ? file.extra : json::object();
    doc["version"] = kCodebookFormatVersion;
    doc["N"] = cb.n;
    doc["M"] = cb.m;
    doc["D"] = cb.d;
    doc["keys"] = keys;
    doc["prompts"] = prompts;
    doc["encoder_seed"] = file.encoder_seed;
    doc["config_hash"] = file.config_hash;
    return doc;
}

CodebookFile codebook_from_json(const json& doc) {
    const std::string what = "codebook";
    try {
        const auto version = field(doc, "version", what).get<int>();
        require(version == kCodebookFormatVersion, ErrorKind::kVersionMismatch,
                what + ": unsupported format version " + std::to_string(version));
        CodebookFile file;
        auto& cb = file.codebook;
        cb.n = field(doc, "N", what).get<std::size_t>();
        cb.m = field(doc, "M", what).get<std::size_t>();
        cb.d = field(doc, "D", what).get<std::size_t>();
        require(cb.n >= 1 && cb.m >= 1 && cb.d >= 1, ErrorKind::kCorruptFile, what + ": invalid dimensions");
        const auto& keys = field(doc, "keys", what);
        const auto& prompts = field(doc, "prompts", what);
        require(keys.is_array() && keys.size() == cb.n && prompts.is_array() && prompts.size() == cb.n,
                ErrorKind::kCorruptFile, what + ": expected " + std::to_string(cb.n) + " keys and prompts");
        for (const auto& k : keys) cb.keys.push_back(tensor_from_json(k, {cb.d}, what + " key"));
        for (const auto& p : prompts) cb.prompts.push_back(tensor_from_json(p, {cb.m, cb.d}, what + " prompt"));
        file.encoder_seed = field(doc, "encoder_seed", what).get<std::uint64_t>();
        file.config_hash = field(doc, "config_hash", what).get<std::string>();
        file.extra = json::object();
        for (auto it = doc.begin(); it != doc.end(); ++it) {
            static const std::set<std::string> own = {"version", "N",      "M",           "D",
                                                      "keys",    "prompts", "encoder_seed", "config_hash"};
            if (!own.contains(it.key())) file.extra[it.key()] = it.value();
        }
        return file;
    } catch (const json::exception& e) {
        fail(ErrorKind::kCorruptFile, what + ": " + e.what());
    }
}

void save_codebook(const CodebookFile& file, const std::filesystem::path& path) {
    write_json_file(path, codebook_to_json(file));
}

CodebookFile load_codebook(const std::filesystem::path& path) { return codebook_from_json(read_json_file(path)); }

}  // namespace cocole
