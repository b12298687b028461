#include "cocole/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cocole/codebook.hpp"
#include "cocole/json_util.hpp"
#include "cocole/optim.hpp"
#include "cocole/rng.hpp"

namespace cocole {

using nlohmann::json;

void DatasetParams::validate() const {
    require(num_classes >= 2 && num_classes % 2 == 0, ErrorKind::kConfig, "C_cls must be even and at least 2");
    require(num_classes <= synth_class_names().size(), ErrorKind::kConfig,
            "C_cls exceeds the " + std::to_string(synth_class_names().size()) + " available class names");
    require(shots >= 1, ErrorKind::kConfig, "H must be at least 1");
    require(test_per_class >= 1, ErrorKind::kConfig, "test_per_class must be at least 1");
    require(num_concepts >= 2, ErrorKind::kConfig, "at least 2 concepts are required");
    require(concepts_per_class >= 1 && concepts_per_class <= num_concepts, ErrorKind::kConfig,
            "concepts_per_class must lie in [1, num_concepts]");
    // Each concept needs a base and a novel owner.
    require(concepts_per_class * (num_classes / 2) >= num_concepts, ErrorKind::kConfig,
            "too few class slots to give every concept a base and a novel class");
    require(noise >= 0.0 && std::isfinite(noise), ErrorKind::kConfig, "sigma_noise must be non-negative");
    require(concept_strength >= 0.0, ErrorKind::kConfig, "concept_strength must be non-negative");
    require(prototype_radius > 0.0, ErrorKind::kConfig, "prototype_radius must be positive");
    require(align_tau > 0.0, ErrorKind::kConfig, "align_tau must be positive");
    require(reference_steps >= 1, ErrorKind::kConfig, "reference_steps must be at least 1");
    require(k1 >= 1 && k2 >= 1, ErrorKind::kConfig, "K1 and K2 must be at least 1");
    require(neutral_weight >= 0.0, ErrorKind::kConfig, "neutral_weight must be non-negative");
    require(neutral_scale >= 0.0, ErrorKind::kConfig, "neutral_scale must be non-negative");
    require(align_samples >= 1, ErrorKind::kConfig, "align_samples must be at least 1");
    require(align_steps >= 1, ErrorKind::kConfig, "align_steps must be at least 1");
    require(concept_keep > 0.0 && concept_keep <= 1.0, ErrorKind::kConfig, "concept_keep must lie in (0, 1]");
}

json DatasetParams::to_json() const {
    return {{"C_cls", num_classes},
            {"H", shots},
            {"test_per_class", test_per_class},
            {"num_concepts", num_concepts},
            {"concepts_per_class", concepts_per_class},
            {"sigma_noise", noise},
            {"concept_strength", concept_strength},
            {"prototype_radius", prototype_radius},
            {"concept_keep", concept_keep},
            {"align_steps", align_steps},
            {"reference_steps", reference_steps},
            {"describe_passes", describe_passes},
            {"K1", k1},
            {"K2", k2},
            {"align_tau", align_tau},
            {"align_samples", align_samples},
            {"neutral_weight", neutral_weight},
            {"neutral_contexts", neutral_contexts},
            {"neutral_scale", neutral_scale}};
}

void DatasetParams::read_json(const json& doc) {
    try {
        auto get = [&](const char* key, auto& out) { read_config_field(doc, key, out); };
        get("C_cls", num_classes);
        get("H", shots);
        get("test_per_class", test_per_class);
        get("num_concepts", num_concepts);
        get("concepts_per_class", concepts_per_class);
        get("sigma_noise", noise);
        get("concept_strength", concept_strength);
        get("prototype_radius", prototype_radius);
        get("concept_keep", concept_keep);
        get("align_steps", align_steps);
        get("reference_steps", reference_steps);
        get("describe_passes", describe_passes);
        get("K1", k1);
        get("K2", k2);
        get("align_tau", align_tau);
        get("align_samples", align_samples);
        get("neutral_weight", neutral_weight);
        get("neutral_contexts", neutral_contexts);
        get("neutral_scale", neutral_scale);
    } catch (const json::exception& e) {
        fail(ErrorKind::kConfig, std::string("dataset params: ") + e.what());
    }
}

const std::vector<std::string>& synth_class_names() {
    static const std::vector<std::string> names = {
        "sparrow",  "lantern", "tortoise", "kettle",  "falcon",   "violin",  "cactus",   "anchor",
        "otter",    "bicycle", "tulip",    "compass", "walrus",   "teapot",  "maple",    "harp",
        "beetle",   "canoe",   "orchid",   "hammer",  "penguin",  "clock",   "fern",     "trumpet",
        "lobster",  "ladder",  "daisy",    "saddle",  "heron",    "kite",    "mushroom", "lighthouse",
        "squirrel", "barrel",  "lily",     "scooter", "jellyfish", "bridge", "pinecone", "umbrella"};
    return names;
}

Tensor align_input(const FrozenEncoders& encoders, std::span<const Tensor> targets, std::size_t correct,
                   std::span<const Tensor> shifts, double radius, std::size_t steps, std::uint64_t seed, double tau,
                   std::span<const std::vector<Tensor>> neutral, double neutral_weight) {
    const auto n = encoders.dims().d_in;
    require(!shifts.empty(), ErrorKind::kContract, "align_input: no shifts");
    for (const auto& sh : shifts)
        require(sh.size() == n, ErrorKind::kDimension, "align_input: shift is not d_in long");
    require(correct < targets.size(), ErrorKind::kContract, "align_input: correct index out of range");
    Rng rng(seed);
    std::vector<double> x(n);
    for (double& v : x) v = rng.normal();
    auto project = [&] {
        double norm = 0.0;
        for (double v : x) norm += v * v;
        norm = std::sqrt(norm);
        require(norm > 0.0, ErrorKind::kDegenerateInput, "align_input: collapsed to zero");
        for (double& v : x) v *= radius / norm;
    };
    project();
    // Normalized gradient steps with a decaying step length.
    for (std::size_t s = 0; s < steps; ++s) {
        Tape tape;
        auto leaf = tape.leaf({n}, x);
        std::vector<Tensor> scores;
        for (const auto& shift : shifts) {
            const auto feature = encoders.encode_image(add(leaf, shift));
            Tensor score;
            if (targets.size() == 1) {
                score = cosine_sim(feature, targets[0]);
            } else {
                std::vector<Tensor> logits;
                for (const auto& t : targets) logits.push_back(dot(feature, t));
                score = element(log_softmax_rows(scale(stack(logits), 1.0 / tau)), correct);
            }
            for (const auto& group : neutral) {
                // Cross-entropy against the uniform distribution; maximal when
                // the group's logits carry no preference.
                std::vector<Tensor> logits;
                for (const auto& t : group) logits.push_back(dot(feature, t));
                const double w = neutral_weight / static_cast<double>(neutral.size());
                score = add(score, scale(mean(log_softmax_rows(scale(stack(logits), 1.0 / tau))), w));
            }
            scores.push_back(score);
        }
        const auto score = mean(stack(scores));
        tape.backward(score);
        const auto g = leaf.grad();
        double gn = 0.0;
        for (double v : g) gn += v * v;
        gn = std::sqrt(gn);
        if (gn == 0.0) break;
        const double eta = 0.25 * radius * (1.0 - static_cast<double>(s) / static_cast<double>(steps));
        for (std::size_t i = 0; i < n; ++i) x[i] += eta * g[i] / gn;
        project();
    }
    return Tensor::vector(std::move(x));
}

std::vector<Tensor> fit_reference_context(const FrozenEncoders& encoders, std::span<const Tensor> class_tokens,
                                          std::span<const Tensor> targets, std::size_t length, std::size_t steps,
                                          std::uint64_t seed) {
    require(!class_tokens.empty() && class_tokens.size() == targets.size(), ErrorKind::kContract,
            "fit_reference_context: need one target per class token");
    require(length >= 1, ErrorKind::kContract, "fit_reference_context: empty context");
    const auto d = encoders.dims().d;
    Rng rng(seed);
    std::vector<double> flat(length * d);
    for (double& v : flat) v = kPromptInitStd * rng.normal();
    auto state = OptimizerState::zeros(flat.size());
    const std::vector<double> no_decay(flat.size(), 0.0);
    for (std::size_t s = 0; s < steps; ++s) {
        Tape tape;
        auto context = tape.leaf({length, d}, flat);
        std::vector<Tensor> losses;
        for (std::size_t c = 0; c < class_tokens.size(); ++c) {
            const Tensor seq[] = {context, class_tokens[c]};
            losses.push_back(sq_distance(encoders.encode_text(seq), targets[c]));
        }
        tape.backward(sum(stack(losses)));
        adamw_step(flat, context.grad(), no_decay, state, cosine_lr(s, steps, 1e-2));
    }
    std::vector<Tensor> out;
    for (std::size_t t = 0; t < length; ++t)
        out.push_back(Tensor::vector(std::vector<double>(flat.begin() + static_cast<std::ptrdiff_t>(t * d),
                                                         flat.begin() + static_cast<std::ptrdiff_t>((t + 1) * d))));
    return out;
}


FewShotDataset synth_dataset(const FrozenEncoders& encoders, const ConceptLexicon& lexicon,
                             const DatasetParams& params, std::uint64_t seed) {
    params.validate();
    lexicon.validate(std::max(params.num_concepts, params.k2));
    const auto d_in = encoders.dims().d_in;

    FewShotDataset ds;
    ds.seed = seed;
    ds.encoder_seed = encoders.seed();
    ds.params = params;

    // Concept words: a seeded sample of the lexicon.
    std::vector<std::size_t> pick(lexicon.size());
    std::iota(pick.begin(), pick.end(), std::size_t{0});
    Rng word_rng(derive_seed(seed, "dataset.words"));
    word_rng.shuffle(pick.begin(), pick.end());
    const std::vector<Tensor> zero_shift = {Tensor::zeros({d_in})};
    for (std::size_t k = 0; k < params.num_concepts; ++k) {
        const auto& word = lexicon.entries[pick[k]].word;
        const std::vector<std::string> text = {"the", "photo", "is", word};
        const auto target = encoders.encode_prompt_text(text);
        auto offset = params.concept_strength > 0.0
                          ? align_input(encoders, std::span<const Tensor>(&target, 1), 0, zero_shift,
                                        params.concept_strength,
                                        params.align_steps, derive_seed(seed, "dataset.concept." + word))
                          : Tensor::zeros({d_in});
        ds.concepts.push_back({word, std::move(offset)});
    }

    // Classes: seeded choice of names, first half base.
    std::vector<std::string> names = synth_class_names();
    Rng name_rng(derive_seed(seed, "dataset.classes"));
    name_rng.shuffle(names.begin(), names.end());
    const std::size_t half = params.num_classes / 2;
    for (std::size_t c = 0; c < params.num_classes; ++c) ds.classes.push_back({names[c], {}, {}, c < half});

    // Base class b takes concepts b*m .. b*m+m-1 (mod count); novel classes
    // take the same run shifted by one, so every concept has a base and a
    // novel owner and novel classes see new combinations.
    const auto m = params.concepts_per_class;
    const auto count = params.num_concepts;
    for (std::size_t c = 0; c < params.num_classes; ++c) {
        auto& cls = ds.classes[c];
        const std::size_t slot = cls.base ? c : c - half;
        for (std::size_t j = 0; j < m; ++j) {
            const auto k = (slot * m + j + (cls.base ? 0 : 1)) % count;
            if (std::find(cls.concepts.begin(), cls.concepts.end(), k) == cls.concepts.end())
                cls.concepts.push_back(k);
        }
    }

    // Everything an image adds to its class prototype: a random subset of the
    // class concepts (never empty) and Gaussian noise.
    auto perturbation = [&](const SynthClass& cls, Rng& rng) {
        std::vector<double> x(d_in, 0.0);
        bool any = false;
        for (std::size_t j = 0; j < cls.concepts.size(); ++j) {
            const bool keep = rng.uniform() < params.concept_keep || (!any && j + 1 == cls.concepts.size());
            if (!keep) continue;
            any = true;
            const auto& off = ds.concepts[cls.concepts[j]].offset.data();
            for (std::size_t i = 0; i < d_in; ++i) x[i] += off[i];
        }
        for (double& v : x) v += params.noise * rng.normal();
        return Tensor::vector(std::move(x));
    };

    // Reference context: the [context, class] prompt that best reproduces every
    // class's template description "a photo of <class> which is <concepts>".
    const auto context_length = 4 * m;
    std::vector<Tensor> class_tokens, descriptions;
    TemplatePromptGenerator describe;
    for (const auto& cls : ds.classes) {
        std::vector<std::string> words;
        for (auto k : cls.concepts) words.push_back(ds.concepts[k].word);
        class_tokens.push_back(encoders.embed_word(cls.name));
        descriptions.push_back(encoders.encode_prompt_text(generate_prompt(cls.name, words, describe)));
    }
    auto align_prototypes = [&](const std::vector<Tensor>& reference) {
    for (std::size_t ci = 0; ci < ds.classes.size(); ++ci) {
        auto& cls = ds.classes[ci];
        // Under the reference context the class's own name must win among its
        // split, while behind uninformative contexts those names should tie.
        std::vector<Tensor> targets;
        std::vector<std::vector<Tensor>> neutral(params.neutral_contexts);
        std::size_t correct = 0;
        for (std::size_t oi = 0; oi < ds.classes.size(); ++oi) {
            if (ds.classes[oi].base != cls.base) continue;
            if (oi == ci) correct = targets.size();
            auto seq = reference;
            seq.push_back(class_tokens[oi]);
            targets.push_back(encoders.encode_text(seq));
        }
        // All-zero tokens, then small Gaussian ones.
        Rng context_rng(derive_seed(seed, "dataset.neutral." + cls.name));
        const auto d = encoders.dims().d;
        for (std::size_t j = 0; j < params.neutral_contexts; ++j) {
            std::vector<Tensor> tokens;
            for (std::size_t t = 0; t < context_length; ++t) {
                std::vector<double> v(d, 0.0);
                if (j > 0)
                    for (double& x : v) x = params.neutral_scale * context_rng.normal();
                tokens.push_back(Tensor::vector(std::move(v)));
            }
            for (std::size_t oi = 0; oi < ds.classes.size(); ++oi) {
                if (ds.classes[oi].base != cls.base) continue;
                auto seq = tokens;
                seq.push_back(class_tokens[oi]);
                neutral[j].push_back(encoders.encode_text(seq));
            }
        }
        // Averaged over sampled perturbations so it holds for actual images.
        Rng shift_rng(derive_seed(seed, "dataset.align." + cls.name));
        std::vector<Tensor> shifts;
        for (std::size_t i = 0; i < params.align_samples; ++i) shifts.push_back(perturbation(cls, shift_rng));
        cls.prototype = align_input(encoders, targets, correct, shifts, params.prototype_radius, params.align_steps,
                                    derive_seed(seed, "dataset.prototype." + cls.name), params.align_tau,
                                    neutral, params.neutral_weight);
    }
    };

    auto reference = fit_reference_context(encoders, class_tokens, descriptions, context_length,
                                           params.reference_steps, derive_seed(seed, "dataset.reference"));
    align_prototypes(reference);

    // Later passes describe each class the way training will: draw a
    // provisional sample, build the concept cache from the base part and
    // retrieve K2 words per class from its mean feature.
    for (std::size_t pass = 0; pass < params.describe_passes; ++pass) {
        Rng draft_rng(derive_seed(seed, "dataset.draft." + std::to_string(pass)));
        std::vector<Tensor> base_images;
        std::vector<ClassImages> groups;
        for (const auto& cls : ds.classes) {
            ClassImages g{cls.name, {}};
            for (std::size_t h = 0; h < params.shots; ++h) {
                auto x = cls.prototype.to_vector();
                const auto p = perturbation(cls, draft_rng);
                for (std::size_t i = 0; i < d_in; ++i) x[i] += p.data()[i];
                g.images.push_back(Tensor::vector(std::move(x)));
                if (cls.base) base_images.push_back(g.images.back());
            }
            groups.push_back(std::move(g));
        }
        CacheOptions options;
        options.k1 = params.k1;
        const auto cache = build_cache(encoders, lexicon, base_images, options);
        const auto set = build_prompt_set(encoders, cache, groups, params.k2, describe);
        for (std::size_t c = 0; c < ds.classes.size(); ++c) descriptions[c] = set.entries[c].feature;
        reference = fit_reference_context(encoders, class_tokens, descriptions, context_length, params.reference_steps,
                                          derive_seed(seed, "dataset.reference." + std::to_string(pass + 1)));
        align_prototypes(reference);
    }

    Rng image_rng(derive_seed(seed, "dataset.images"));
    auto sample = [&](const SynthClass& cls) {
        auto x = cls.prototype.to_vector();
        const auto p = perturbation(cls, image_rng);
        for (std::size_t i = 0; i < d_in; ++i) x[i] += p.data()[i];
        return Tensor::vector(std::move(x));
    };

    for (const auto& cls : ds.classes) {
        if (cls.base) {
            ds.train.class_names.push_back(cls.name);
            ds.base_test.class_names.push_back(cls.name);
        } else {
            ds.novel_test.class_names.push_back(cls.name);
        }
    }
    for (std::size_t c = 0; c < half; ++c)
        for (std::size_t h = 0; h < params.shots; ++h) {
            ds.train.images.push_back(sample(ds.classes[c]));
            ds.train.labels.push_back(c);
        }
    for (std::size_t c = 0; c < params.num_classes; ++c) {
        auto& split = ds.classes[c].base ? ds.base_test : ds.novel_test;
        const auto label = ds.classes[c].base ? c : c - half;
        for (std::size_t t = 0; t < params.test_per_class; ++t) {
            split.images.push_back(sample(ds.classes[c]));
            split.labels.push_back(label);
        }
    }
    return ds;
}

// ---- persistence ----

namespace {

json split_to_json(const LabeledSplit& s) {
    json images = json::array();
    for (const auto& x : s.images) images.push_back(tensor_to_json(x));
    return {{"classes", s.class_names}, {"images", images}, {"labels", s.labels}};
}

LabeledSplit split_from_json(const json& doc, std::size_t d_in, const std::string& what) {
    LabeledSplit s;
    s.class_names = field(doc, "classes", what).get<std::vector<std::string>>();
    for (const auto& x : field(doc, "images", what)) s.images.push_back(tensor_from_json(x, {d_in}, what));
    s.labels = field(doc, "labels", what).get<std::vector<std::size_t>>();
    require(s.images.size() == s.labels.size(), ErrorKind::kCorruptFile, what + ": images and labels differ");
    for (auto l : s.labels) require(l < s.class_names.size(), ErrorKind::kCorruptFile, what + ": label out of range");
    return s;
}

}  // namespace

json FewShotDataset::to_json() const {
    json cls = json::array();
    for (const auto& c : classes)
        cls.push_back({{"name", c.name},
                       {"split", c.base ? "base" : "novel"},
                       {"prototype", tensor_to_json(c.prototype)},
                       {"concepts", c.concepts}});
    json con = json::array();
    for (const auto& c : concepts) con.push_back({{"word", c.word}, {"offset", tensor_to_json(c.offset)}});
    return {{"seed", seed},
            {"encoder_seed", encoder_seed},
            {"params", params.to_json()},
            {"classes", cls},
            {"concepts", con},
            {"train", split_to_json(train)},
            {"base_test", split_to_json(base_test)},
            {"novel_test", split_to_json(novel_test)}};
}

FewShotDataset FewShotDataset::from_json(const json& doc) {
    const std::string what = "dataset";
    try {
        FewShotDataset ds;
        ds.seed = field(doc, "seed", what).get<std::uint64_t>();
        ds.encoder_seed = field(doc, "encoder_seed", what).get<std::uint64_t>();
        ds.params.read_json(field(doc, "params", what));
        const auto& cls0 = field(doc, "classes", what);
        require(cls0.is_array() && !cls0.empty(), ErrorKind::kCorruptFile, what + ": no classes");
        const auto d_in = field(cls0[0], "prototype", what).size();
        for (const auto& c : field(doc, "concepts", what))
            ds.concepts.push_back({field(c, "word", what).get<std::string>(),
                                   tensor_from_json(field(c, "offset", what), {d_in}, what)});
        for (const auto& c : cls0) {
            SynthClass sc;
            sc.name = field(c, "name", what).get<std::string>();
            const auto split = field(c, "split", what).get<std::string>();
            require(split == "base" || split == "novel", ErrorKind::kCorruptFile, what + ": bad split '" + split + "'");
            sc.base = split == "base";
            sc.prototype = tensor_from_json(field(c, "prototype", what), {d_in}, what);
            sc.concepts = field(c, "concepts", what).get<std::vector<std::size_t>>();
            for (auto k : sc.concepts)
                require(k < ds.concepts.size(), ErrorKind::kCorruptFile, what + ": concept index out of range");
            ds.classes.push_back(std::move(sc));
        }
        ds.train = split_from_json(field(doc, "train", what), d_in, what + " train split");
        ds.base_test = split_from_json(field(doc, "base_test", what), d_in, what + " base_test split");
        ds.novel_test = split_from_json(field(doc, "novel_test", what), d_in, what + " novel_test split");
        for (const auto& n : ds.novel_test.class_names)
            require(std::find(ds.train.class_names.begin(), ds.train.class_names.end(), n) ==
                        ds.train.class_names.end(),
                    ErrorKind::kCorruptFile, what + ": class '" + n + "' is both base and novel");
        return ds;
    } catch (const json::exception& e) {
        fail(ErrorKind::kCorruptFile, what + ": " + e.what());
    }
}

void save_dataset(const FewShotDataset& ds, const std::filesystem::path& path) {
    write_json_file(path, ds.to_json());
}

FewShotDataset load_dataset(const std::filesystem::path& path) {
    return FewShotDataset::from_json(read_json_file(path));
}

}  // namespace cocole
