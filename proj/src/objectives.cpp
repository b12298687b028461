#include "cocole/objectives.hpp"

#include <cmath>

namespace cocole {

Tensor class_logits(const Tensor& image_feature, std::span<const Tensor> class_features, double tau) {
    require(tau > 0.0, ErrorKind::kConfig, "temperature must be positive");
    require(!class_features.empty(), ErrorKind::kContract, "class_logits: no classes");
    std::vector<Tensor> logits;
    logits.reserve(class_features.size());
    for (const auto& f : class_features) logits.push_back(dot(image_feature, f));
    return scale(stack(logits), 1.0 / tau);
}

std::vector<double> class_probabilities(const Tensor& image_feature, std::span<const Tensor> class_features,
                                        double tau) {
    return softmax_rows(class_logits(image_feature, class_features, tau).detach()).to_vector();
}

Tensor loss_ce(const Tensor& image_feature, std::span<const Tensor> class_features, std::size_t label, double tau) {
    require(label < class_features.size(), ErrorKind::kContract,
            "loss_ce: label " + std::to_string(label) + " out of range for " +
                std::to_string(class_features.size()) + " classes");
    auto logp = log_softmax_rows(class_logits(image_feature, class_features, tau));
    return neg(element(logp, label));
}

Tensor loss_ma(const Tensor& image_feature, std::span<const Tensor> selected_keys) {
    require(!selected_keys.empty(), ErrorKind::kContract, "loss_ma: no selected keys");
    std::vector<Tensor> sims;
    sims.reserve(selected_keys.size());
    for (const auto& k : selected_keys) sims.push_back(cosine_sim(image_feature, k));
    const double k3 = static_cast<double>(selected_keys.size());
    return add_scalar(neg(sum(stack(sims))), k3);
}

Tensor loss_or(const FrozenEncoders& encoders, std::span<const Tensor> prompts, bool normalized) {
    const auto n = prompts.size();
    require(n >= 2, ErrorKind::kContract, "loss_or: needs at least 2 prompts");
    std::vector<Tensor> enc;
    enc.reserve(n);
    for (const auto& p : prompts) enc.push_back(encoders.encode_text(std::span<const Tensor>(&p, 1)));
    std::vector<Tensor> terms;
    terms.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) terms.push_back(abs(cosine_sim(enc[i], enc[j])));
    const double nn = static_cast<double>(n);
    const double denom = normalized ? nn * (nn - 1.0) / 2.0 : nn * (nn - 1.0);
    return scale(sum(stack(terms)), 1.0 / denom);
}

Tensor loss_cc(std::span<const Tensor> learned, std::span<const Tensor> handcrafted) {
    require(learned.size() == handcrafted.size(), ErrorKind::kContract,
            "loss_cc: " + std::to_string(learned.size()) + " learned vs " + std::to_string(handcrafted.size()) +
                " handcrafted features");
    require(!learned.empty(), ErrorKind::kContract, "loss_cc: no classes");
    std::vector<Tensor> terms;
    terms.reserve(learned.size());
    for (std::size_t d = 0; d < learned.size(); ++d) terms.push_back(sq_distance(learned[d], handcrafted[d]));
    return scale(sum(stack(terms)), 1.0 / static_cast<double>(learned.size()));
}

ExampleLosses example_losses(const FrozenEncoders& encoders, const CodebookParams& params,
                             const TrainingExample& example, std::span<const Tensor> class_embeddings,
                             std::span<const Tensor> handcrafted, const ObjectiveConfig& config) {
    const auto& w = config.weights;
    ExampleLosses out;
    out.retrieval = retrieve(params.keys, example.image_feature, config.k3);
    const Tensor zero = Tensor::scalar(0.0);
    out.ce = zero;
    out.cc = zero;
    out.ma = zero;
    if (w.ce != 0.0 || w.cc != 0.0) {
        auto feats = class_text_features(encoders, params, out.retrieval, class_embeddings);
        if (w.ce != 0.0) out.ce = loss_ce(example.image_feature, feats, example.label, config.tau);
        if (w.cc != 0.0) out.cc = loss_cc(feats, handcrafted);
    }
    if (w.ma != 0.0) {
        std::vector<Tensor> keys;
        for (auto i : out.retrieval.indices) keys.push_back(params.keys[i]);
        out.ma = loss_ma(example.image_feature, keys);
    }
    return out;
}

namespace {

Tensor batch_mean(const std::vector<Tensor>& terms) {
    return scale(sum(stack(terms)), 1.0 / static_cast<double>(terms.size()));
}

}  // namespace

LossBreakdown total_loss(const FrozenEncoders& encoders, const CodebookParams& params,
                         std::span<const TrainingExample> batch, std::span<const Tensor> class_embeddings,
                         std::span<const Tensor> handcrafted, const ObjectiveConfig& config) {
    require(!batch.empty(), ErrorKind::kContract, "total_loss: empty batch");
    require(handcrafted.size() == class_embeddings.size(), ErrorKind::kContract,
            "total_loss: prompt set does not cover every seen class");
    std::vector<Tensor> ce, ma, cc;
    for (const auto& ex : batch) {
        auto l = example_losses(encoders, params, ex, class_embeddings, handcrafted, config);
        ce.push_back(l.ce);
        ma.push_back(l.ma);
        cc.push_back(l.cc);
    }
    const auto& w = config.weights;
    LossBreakdown out;
    out.ce = batch_mean(ce);
    out.ma = batch_mean(ma);
    out.cc = batch_mean(cc);
    out.orth = w.orth != 0.0 ? loss_or(encoders, params.prompts, config.normalized_orthogonality)
                             : Tensor::scalar(0.0);
    auto term = [](const Tensor& t, double weight) { return weight == 1.0 ? t : scale(t, weight); };
    Tensor parts[] = {term(out.ce, w.ce), term(out.ma, w.ma), term(out.orth, w.orth), term(out.cc, w.cc)};
    out.total = add_n(parts);
    return out;
}

}  // namespace cocole
