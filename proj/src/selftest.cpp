#include "cocole/selftest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "cocole/codebook.hpp"
#include "cocole/concept_cache.hpp"
#include "cocole/encoders.hpp"
#include "cocole/error.hpp"
#include "cocole/gradcheck.hpp"
#include "cocole/objectives.hpp"
#include "cocole/rng.hpp"
#include "cocole/trainer.hpp"

namespace cocole {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double elapsed(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Tensor random_unit(Rng& rng, std::size_t d) {
    std::vector<double> v(d);
    for (double& x : v) x = rng.normal();
    return l2_normalize(Tensor::vector(std::move(v)));
}

// Scores sorted descending with ties to the lower index, by a full sort.
std::vector<std::size_t> sorted_top(const std::vector<double>& scores, std::size_t k) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
    });
    idx.resize(k);
    return idx;
}

double cosine(std::span<const double> a, std::span<const double> b) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    return ab / (std::sqrt(aa) * std::sqrt(bb));
}

double dot_values(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Keys where roughly a third are copies of earlier ones, so ties occur.
std::vector<Tensor> keys_with_duplicates(Rng& rng, std::size_t count, std::size_t d) {
    std::vector<Tensor> keys;
    for (std::size_t i = 0; i < count; ++i) {
        if (i > 0 && rng.uniform() < 0.35)
            keys.push_back(keys[rng.below(i)]);
        else
            keys.push_back(random_unit(rng, d));
    }
    return keys;
}

}  // namespace

json GradcheckReport::to_json() const {
    json errs = json::object();
    for (const auto& [k, v] : max_relative_error) errs[k] = v;
    return {{"seeds", options.seeds}, {"h", options.h},       {"tolerance", options.tolerance},
            {"max_relative_error", errs}, {"passed", passed}, {"seconds", seconds}};
}

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
    const auto t0 = Clock::now();
    GradcheckReport report;
    report.options = options;
    const std::vector<std::string> names = {"ce", "ma", "or", "cc", "total"};
    for (const auto& n : names) report.max_relative_error[n] = 0.0;

    EncoderDims dims;
    dims.d = 8;
    dims.d_in = 6;
    dims.d_hidden = 12;
    ObjectiveConfig config;
    config.k3 = 2;

    for (std::size_t s = 0; s < options.seeds; ++s) {
        const auto seed = options.first_seed + s;
        const FrozenEncoders enc(derive_seed(seed, "gradcheck.encoders"), dims);
        auto cb = ConceptualCodebook::init(4, 2, dims.d, derive_seed(seed, "gradcheck.codebook"));
        // Prompts at init are tiny; widen them so every term has curvature.
        Rng rng(derive_seed(seed, "gradcheck.data"));
        for (auto& p : cb.prompts) {
            std::vector<double> v(p.size());
            for (double& x : v) x = 0.5 * rng.normal();
            p = Tensor(p.shape(), std::move(v));
        }
        std::vector<Tensor> classes, handcrafted;
        for (std::size_t c = 0; c < 3; ++c) {
            classes.push_back(enc.embed_word("class" + std::to_string(c)));
            handcrafted.push_back(random_unit(rng, dims.d));
        }
        std::vector<TrainingExample> batch;
        for (std::size_t b = 0; b < 2; ++b) {
            std::vector<double> x(dims.d_in);
            for (double& v : x) v = rng.normal();
            batch.push_back({enc.encode_image(Tensor::vector(std::move(x))), b % 3});
        }
        auto pick = [](const LossBreakdown& l, const std::string& name) {
            if (name == "ce") return l.ce;
            if (name == "ma") return l.ma;
            if (name == "or") return l.orth;
            if (name == "cc") return l.cc;
            return l.total;
        };
        const auto flat = cb.flatten();
        const auto x0 = Tensor::vector(flat);
        for (const auto& name : names) {
            Tape tape;
            const auto params = CodebookParams::bind(tape, cb);
            tape.backward(pick(total_loss(enc, params, batch, classes, handcrafted, config), name));
            const auto analytic = params.flat_grad();
            auto probe = cb;
            const ScalarFn f = [&](const Tensor& x) {
                probe.unflatten(x.data());
                const auto constants = CodebookParams::constants(probe);
                return pick(total_loss(enc, constants, batch, classes, handcrafted, config), name).item();
            };
            const auto numeric = finite_diff_grad(f, x0, options.h);
            const double err = relative_error(analytic, numeric.data());
            report.max_relative_error[name] = std::max(report.max_relative_error[name], err);
        }
    }
    report.passed = std::all_of(report.max_relative_error.begin(), report.max_relative_error.end(),
                                [&](const auto& kv) { return kv.second < options.tolerance; });
    report.seconds = elapsed(t0);
    return report;
}

json SuiteResult::to_json() const {
    return {{"suite", name}, {"passed", passed}, {"detail", detail}, {"seconds", seconds}};
}

SuiteResult finite_difference_suite() {
    const auto t0 = Clock::now();
    const auto r = run_gradcheck();
    std::ostringstream detail;
    detail << "max relative error";
    for (const auto& [k, v] : r.max_relative_error) detail << ' ' << k << '=' << v;
    return {"finite-difference", r.passed, detail.str(), elapsed(t0)};
}

SuiteResult retrieval_oracle_suite(std::size_t cases) {
    const auto t0 = Clock::now();
    Rng rng(derive_seed(0, "selftest.retrieval"));
    std::size_t failures = 0;
    const std::size_t d = 8;
    for (std::size_t c = 0; c < cases; ++c) {
        const auto count = 2 + rng.below(30);
        const auto keys = keys_with_duplicates(rng, count, d);
        // Half the queries are a key itself, which puts the tie on top.
        const auto query = rng.uniform() < 0.5 ? keys[rng.below(count)] : random_unit(rng, d);
        const auto k = 1 + rng.below(count);

        std::vector<double> cos(count), dots(count);
        for (std::size_t i = 0; i < count; ++i) {
            cos[i] = cosine(keys[i].data(), query.data());
            dots[i] = dot_values(keys[i].data(), query.data());
        }
        if (retrieve(keys, query, k).indices != sorted_top(cos, k)) ++failures;
        if (select_images_for_concept(query, keys, k) != sorted_top(dots, k)) ++failures;

        HandcraftedCache cache;
        for (std::size_t i = 0; i < count; ++i) cache.pairs.push_back({keys[i], "w" + std::to_string(i)});
        std::vector<std::size_t> got;
        for (const auto& m : match_concepts(cache, query, k)) got.push_back(m.index);
        if (got != sorted_top(cos, k)) ++failures;
    }
    return {"retrieval-oracle", failures == 0,
            std::to_string(3 * cases) + " selections, " + std::to_string(failures) + " mismatches", elapsed(t0)};
}

SuiteResult frozenness_suite() {
    const auto t0 = Clock::now();
    EncoderDims dims;
    dims.d = 16;
    dims.d_in = 8;
    dims.d_hidden = 16;
    const FrozenEncoders enc(7, dims);
    const auto before = enc.weights().fingerprint();

    Rng rng(derive_seed(0, "selftest.frozen"));
    LabeledSplit split;
    split.class_names = {"alpha", "beta"};
    for (std::size_t i = 0; i < 8; ++i) {
        std::vector<double> x(dims.d_in);
        for (double& v : x) v = rng.normal() + (i % 2 ? 1.0 : -1.0);
        split.images.push_back(Tensor::vector(std::move(x)));
        split.labels.push_back(i % 2);
    }
    TrainConfig config;
    config.epochs = 3;
    config.batch_size = 4;
    config.n = 4;
    config.m = 2;
    config.k3 = 2;
    config.k2 = 3;
    config.d = dims.d;
    config.d_in = dims.d_in;
    config.d_hidden = dims.d_hidden;
    TemplatePromptGenerator generator;
    const auto out = train(enc, split, default_lexicon(), config, generator);

    bool no_grad = true;
    for (const auto& e : out.prompt_set.entries) no_grad = no_grad && !e.feature.requires_grad();
    const bool same = enc.weights().fingerprint() == before;
    std::string detail = same ? "encoder fingerprint unchanged" : "encoder fingerprint changed";
    detail += no_grad ? "; handcrafted features are constants" : "; handcrafted features require grad";
    return {"frozenness", same && no_grad, detail, elapsed(t0)};
}

std::vector<SuiteResult> run_selftest() {
    return {finite_difference_suite(), retrieval_oracle_suite(), frozenness_suite()};
}

}  // namespace cocole
