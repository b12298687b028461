#include "cocole/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>

#include "cocole/json_util.hpp"
#include "cocole/rng.hpp"

namespace cocole {

using nlohmann::json;

// ---- config ----

void TrainConfig::validate() const {
    auto positive = [](std::size_t v, const char* name) {
        require(v >= 1, ErrorKind::kConfig, std::string(name) + " must be at least 1");
    };
    positive(epochs, "epochs");
    positive(batch_size, "batch_size");
    positive(k1, "K1");
    positive(k2, "K2");
    positive(k3, "K3");
    positive(m, "M");
    positive(n, "N");
    positive(d, "D");
    positive(d_in, "D_in");
    positive(d_hidden, "D_hidden");
    // lr = 0 is accepted: it is the no-learning control run.
    require(lr >= 0.0 && std::isfinite(lr), ErrorKind::kConfig, "lr must be non-negative");
    require(weight_decay >= 0.0, ErrorKind::kConfig, "weight_decay must be non-negative");
    require(tau > 0.0, ErrorKind::kConfig, "tau must be positive");
    require(k3 <= n, ErrorKind::kConfig, "K3 must not exceed N");
    require(weights.orth == 0.0 || n >= 2, ErrorKind::kConfig, "orthogonality loss needs N >= 2");
    for (double w : {weights.ce, weights.ma, weights.orth, weights.cc})
        require(w >= 0.0 && std::isfinite(w), ErrorKind::kConfig, "loss weights must be non-negative");
}

ObjectiveConfig TrainConfig::objective() const { return {tau, k3, weights, normalized_orthogonality}; }

CacheOptions TrainConfig::cache_options() const {
    CacheOptions o;
    o.k1 = k1;
    o.renormalize_keys = renormalize_cache_keys;
    return o;
}

const std::vector<std::string>& TrainConfig::field_names() {
    static const std::vector<std::string> names = {
        "epochs", "batch_size", "lr",   "weight_decay", "K1",        "K2",        "K3",         "M",
        "N",      "tau",        "seed", "D",            "D_in",      "D_hidden",  "decay_keys", "renormalize_cache_keys",
        "normalized_orthogonality",     "loss_weights"};
    return names;
}

json TrainConfig::to_json() const {
    return {{"epochs", epochs},
            {"batch_size", batch_size},
            {"lr", lr},
            {"weight_decay", weight_decay},
            {"K1", k1},
            {"K2", k2},
            {"K3", k3},
            {"M", m},
            {"N", n},
            {"tau", tau},
            {"seed", seed},
            {"D", d},
            {"D_in", d_in},
            {"D_hidden", d_hidden},
            {"decay_keys", decay_keys},
            {"renormalize_cache_keys", renormalize_cache_keys},
            {"normalized_orthogonality", normalized_orthogonality},
            {"loss_weights", {{"ce", weights.ce}, {"ma", weights.ma}, {"or", weights.orth}, {"cc", weights.cc}}}};
}

void TrainConfig::read_json(const json& doc) {
    try {
        auto get = [&](const char* key, auto& out) { read_config_field(doc, key, out); };
        get("epochs", epochs);
        get("batch_size", batch_size);
        get("lr", lr);
        get("weight_decay", weight_decay);
        get("K1", k1);
        get("K2", k2);
        get("K3", k3);
        get("M", m);
        get("N", n);
        get("tau", tau);
        get("seed", seed);
        get("D", d);
        get("D_in", d_in);
        get("D_hidden", d_hidden);
        get("decay_keys", decay_keys);
        get("renormalize_cache_keys", renormalize_cache_keys);
        get("normalized_orthogonality", normalized_orthogonality);
        if (doc.contains("loss_weights")) {
            const auto& w = doc.at("loss_weights");
            require(w.is_object(), ErrorKind::kConfig, "loss_weights must be an object");
            for (auto it = w.begin(); it != w.end(); ++it) {
                const auto& k = it.key();
                const double v = it.value().get<double>();
                if (k == "ce") weights.ce = v;
                else if (k == "ma") weights.ma = v;
                else if (k == "or") weights.orth = v;
                else if (k == "cc") weights.cc = v;
                else fail(ErrorKind::kConfig, "unknown loss weight '" + k + "'");
            }
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::kConfig, std::string("train config: ") + e.what());
    }
}

void LabeledSplit::validate() const {
    require(!images.empty(), ErrorKind::kContract, "split has no images");
    require(images.size() == labels.size(), ErrorKind::kContract, "split images and labels differ in count");
    for (auto l : labels) require(l < class_names.size(), ErrorKind::kContract, "split label out of range");
}

json StepMetrics::to_json() const {
    return {{"step", step}, {"lr", lr}, {"ce", ce}, {"ma", ma}, {"or", orth}, {"cc", cc}, {"total", total}};
}

StepMetrics StepMetrics::from_json(const json& doc) {
    const std::string what = "metrics record";
    try {
        StepMetrics s;
        s.step = field(doc, "step", what).get<std::size_t>();
        if (doc.contains("lr")) s.lr = doc.at("lr").get<double>();
        s.ce = field(doc, "ce", what).get<double>();
        s.ma = field(doc, "ma", what).get<double>();
        s.orth = field(doc, "or", what).get<double>();
        s.cc = field(doc, "cc", what).get<double>();
        s.total = field(doc, "total", what).get<double>();
        return s;
    } catch (const json::exception& e) {
        fail(ErrorKind::kCorruptFile, what + ": " + e.what());
    }
}

// ---- gradients ----

namespace {

struct ExampleResult {
    std::vector<double> grad;
    double ce = 0, ma = 0, cc = 0;
};

ExampleResult run_example(const FrozenEncoders& encoders, const ConceptualCodebook& cb, const TrainingExample& ex,
                          std::span<const Tensor> class_embeddings, std::span<const Tensor> handcrafted,
                          const ObjectiveConfig& config) {
    Tape tape;
    auto params = CodebookParams::bind(tape, cb);
    auto l = example_losses(encoders, params, ex, class_embeddings, handcrafted, config);
    const auto& w = config.weights;
    auto term = [](const Tensor& t, double weight) { return weight == 1.0 ? t : scale(t, weight); };
    Tensor parts[] = {term(l.ce, w.ce), term(l.ma, w.ma), term(l.cc, w.cc)};
    tape.backward(add_n(parts));
    return {params.flat_grad(), l.ce.item(), l.ma.item(), l.cc.item()};
}

}  // namespace

BatchGradient batch_gradient(const FrozenEncoders& encoders, const ConceptualCodebook& cb,
                             std::span<const TrainingExample> batch, std::span<const Tensor> class_embeddings,
                             std::span<const Tensor> handcrafted, const ObjectiveConfig& config,
                             kernels::Policy policy) {
    require(!batch.empty(), ErrorKind::kContract, "batch_gradient: empty batch");
    require(handcrafted.size() == class_embeddings.size(), ErrorKind::kContract,
            "batch_gradient: prompt set does not cover every seen class");
    const auto count = static_cast<std::ptrdiff_t>(batch.size());
    std::vector<ExampleResult> results(batch.size());
    std::exception_ptr error;
#pragma omp parallel for schedule(dynamic) if (policy == kernels::Policy::kParallel)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        try {
            results[static_cast<std::size_t>(i)] =
                run_example(encoders, cb, batch[static_cast<std::size_t>(i)], class_embeddings, handcrafted, config);
        } catch (...) {
#pragma omp critical
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);

    BatchGradient out;
    out.grad.assign(cb.parameter_count(), 0.0);
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double ce = 0, ma = 0, cc = 0;
    for (const auto& r : results) {
        for (std::size_t j = 0; j < out.grad.size(); ++j) out.grad[j] += r.grad[j];
        ce += r.ce;
        ma += r.ma;
        cc += r.cc;
    }
    for (double& g : out.grad) g *= inv_b;

    double orth = 0.0;
    if (config.weights.orth != 0.0) {
        Tape tape;
        auto params = CodebookParams::bind(tape, cb);
        auto l = loss_or(encoders, params.prompts, config.normalized_orthogonality);
        tape.backward(config.weights.orth == 1.0 ? l : scale(l, config.weights.orth));
        auto g = params.flat_grad();
        for (std::size_t j = 0; j < out.grad.size(); ++j) out.grad[j] += g[j];
        orth = l.item();
    }
    const auto& w = config.weights;
    out.losses.ce = ce * inv_b;
    out.losses.ma = ma * inv_b;
    out.losses.cc = cc * inv_b;
    out.losses.orth = orth;
    out.losses.total =
        w.ce * out.losses.ce + w.ma * out.losses.ma + w.orth * out.losses.orth + w.cc * out.losses.cc;
    return out;
}

// ---- training ----

std::vector<ClassImages> group_by_class(const LabeledSplit& split) {
    std::vector<ClassImages> groups;
    for (const auto& name : split.class_names) groups.push_back({name, {}});
    for (std::size_t i = 0; i < split.size(); ++i) groups[split.labels[i]].images.push_back(split.images[i]);
    return groups;
}

namespace {

std::vector<Tensor> embed_classes(const FrozenEncoders& encoders, std::span<const std::string> names) {
    std::vector<Tensor> out;
    out.reserve(names.size());
    for (const auto& n : names) out.push_back(encoders.embed_word(n));
    return out;
}

}  // namespace

TrainResult train_with_prompts(const FrozenEncoders& encoders, const LabeledSplit& train_split,
                               const HandcraftedPromptSet& prompt_set, const TrainConfig& config,
                               const StepCallback& on_step) {
    config.validate();
    train_split.validate();
    require(encoders.dims().d == config.d, ErrorKind::kConfig, "encoder D differs from config D");

    std::vector<TrainingExample> examples;
    examples.reserve(train_split.size());
    for (std::size_t i = 0; i < train_split.size(); ++i)
        examples.push_back({encoders.encode_image(train_split.images[i]), train_split.labels[i]});
    const auto class_embeddings = embed_classes(encoders, train_split.class_names);
    const auto handcrafted = prompt_set.features_for(train_split.class_names);
    const auto objective = config.objective();

    TrainResult result;
    result.initial = ConceptualCodebook::init(config.n, config.m, config.d, derive_seed(config.seed, "codebook"));
    result.codebook = result.initial;
    auto& cb = result.codebook;
    result.optimizer = OptimizerState::zeros(cb.parameter_count());

    // Prompts decay; keys only when asked.
    std::vector<double> decay(cb.parameter_count(), config.weight_decay);
    if (!config.decay_keys) std::fill(decay.begin(), decay.begin() + static_cast<std::ptrdiff_t>(cb.n * cb.d), 0.0);

    const std::size_t steps_per_epoch = (examples.size() + config.batch_size - 1) / config.batch_size;
    const std::size_t total_steps = config.epochs * steps_per_epoch;
    std::vector<std::size_t> order(examples.size());
    std::vector<TrainingExample> batch;
    auto params = cb.flatten();

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle_rng(derive_seed(config.seed, "shuffle." + std::to_string(epoch)));
        shuffle_rng.shuffle(order.begin(), order.end());
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            batch.clear();
            for (std::size_t j = start; j < std::min(order.size(), start + config.batch_size); ++j)
                batch.push_back(examples[order[j]]);
            const double lr = cosine_lr(result.steps, total_steps, config.lr);
            auto bg = batch_gradient(encoders, cb, batch, class_embeddings, handcrafted, objective, kernels::policy());
            for (double g : bg.grad)
                require(std::isfinite(g), ErrorKind::kNonFinite,
                        "non-finite gradient at step " + std::to_string(result.steps));
            adamw_step(params, bg.grad, decay, result.optimizer, lr);
            for (double p : params)
                require(std::isfinite(p), ErrorKind::kNonFinite,
                        "non-finite parameter after step " + std::to_string(result.steps));
            cb.unflatten(params);
            bg.losses.step = result.steps;
            bg.losses.lr = lr;
            result.metrics.push_back(bg.losses);
            if (on_step) on_step(bg.losses);
            ++result.steps;
        }
    }
    result.train_accuracy = evaluate_split(encoders, cb, train_split, config.k3, config.tau).accuracy;
    return result;
}

TrainArtifacts train(const FrozenEncoders& encoders, const LabeledSplit& train_split, const ConceptLexicon& lexicon,
                     const TrainConfig& config, PromptGenerator& generator, const StepCallback& on_step) {
    config.validate();
    lexicon.validate(config.k2);
    TrainArtifacts out;
    out.cache = build_cache(encoders, lexicon, train_split.images, config.cache_options());
    const auto groups = group_by_class(train_split);
    out.prompt_set = build_prompt_set(encoders, out.cache, groups, config.k2, generator);
    out.result = train_with_prompts(encoders, train_split, out.prompt_set, config, on_step);
    return out;
}

// ---- evaluation ----

Prediction predict(const FrozenEncoders& encoders, const ConceptualCodebook& cb, const Tensor& image,
                   std::span<const Tensor> class_embeddings, std::size_t k3, double tau) {
    const auto feature = encoders.encode_image(image);
    Prediction p;
    const auto params = CodebookParams::constants(cb);
    p.retrieval = retrieve(cb, feature, k3);
    const auto feats = class_text_features(encoders, params, p.retrieval, class_embeddings);
    p.probabilities = class_probabilities(feature, feats, tau);
    // First maximum wins, matching the lower-index tie rule used elsewhere.
    p.predicted = static_cast<std::size_t>(
        std::max_element(p.probabilities.begin(), p.probabilities.end()) - p.probabilities.begin());
    return p;
}

SplitReport evaluate_split(const FrozenEncoders& encoders, const ConceptualCodebook& cb, const LabeledSplit& split,
                           std::size_t k3, double tau, kernels::Policy policy) {
    split.validate();
    const auto class_embeddings = embed_classes(encoders, split.class_names);
    std::vector<std::size_t> predicted(split.size());
    std::exception_ptr error;
    const auto count = static_cast<std::ptrdiff_t>(split.size());
#pragma omp parallel for schedule(dynamic) if (policy == kernels::Policy::kParallel)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        try {
            predicted[static_cast<std::size_t>(i)] =
                predict(encoders, cb, split.images[static_cast<std::size_t>(i)], class_embeddings, k3, tau).predicted;
        } catch (...) {
#pragma omp critical
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);

    SplitReport r;
    for (const auto& n : split.class_names) r.per_class.push_back({n, 0, 0});
    for (std::size_t i = 0; i < split.size(); ++i) {
        auto& c = r.per_class[split.labels[i]];
        ++c.total;
        ++r.total;
        if (predicted[i] == split.labels[i]) {
            ++c.correct;
            ++r.correct;
        }
    }
    r.accuracy = 100.0 * static_cast<double>(r.correct) / static_cast<double>(r.total);
    return r;
}

double harmonic_mean(double base, double novel) {
    if (base + novel == 0.0) return 0.0;
    return 2.0 * base * novel / (base + novel);
}

json SplitReport::to_json() const {
    json per = json::array();
    for (const auto& c : per_class)
        per.push_back({{"class", c.class_name}, {"correct", c.correct}, {"total", c.total}, {"accuracy", c.accuracy()}});
    return {{"accuracy", accuracy}, {"correct", correct}, {"total", total}, {"per_class", per}};
}

json BaseNovelReport::to_json() const {
    return {{"base_acc", base.accuracy}, {"novel_acc", novel.accuracy}, {"hm", hm},
            {"base", base.to_json()},    {"novel", novel.to_json()}};
}

BaseNovelReport evaluate(const FrozenEncoders& encoders, const ConceptualCodebook& cb, const LabeledSplit& base_test,
                         const LabeledSplit& novel_test, std::size_t k3, double tau) {
    BaseNovelReport r;
    r.base = evaluate_split(encoders, cb, base_test, k3, tau);
    r.novel = evaluate_split(encoders, cb, novel_test, k3, tau);
    r.hm = harmonic_mean(r.base.accuracy, r.novel.accuracy);
    return r;
}

}  // namespace cocole
