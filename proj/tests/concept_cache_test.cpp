#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <thread>

#include "httplib.h"

#include "cocole/concept_cache.hpp"
#include "cocole/json_util.hpp"
#include "cocole/pipeline.hpp"
#include "cocole/prompt_generator.hpp"
#include "test_util.hpp"

using namespace cocole;
using cocole::testing::expect_error;
using cocole::testing::random_tensor;
using cocole::testing::source_path;

namespace {

EncoderDims small_dims() {
    EncoderDims d;
    d.d = 8;
    d.d_in = 5;
    d.d_hidden = 8;
    return d;
}

ConceptLexicon lexicon_of(std::initializer_list<const char*> words) {
    ConceptLexicon lex;
    for (const char* w : words) lex.entries.push_back({w, "misc"});
    return lex;
}

// Indices by descending score, ties to the lower index, via stable_sort.
std::vector<std::size_t> oracle_top(const std::vector<double>& scores, std::size_t k) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    idx.resize(k);
    return idx;
}

double dotv(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Local stand-in for a language-model service.
class FakeService {
public:
    explicit FakeService(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
        server_.Post("/generate", std::move(handler));
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeService() {
        server_.stop();
        thread_.join();
    }
    std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/generate"; }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

}  // namespace

TEST(Lexicon, ShippedFileMatchesBuiltIn) {
    const auto file = ConceptLexicon::from_json(read_json_file(source_path("data/lexicon.json")));
    const auto builtin = default_lexicon();
    ASSERT_EQ(file.size(), builtin.size());
    EXPECT_EQ(builtin.size(), 200u);
    for (std::size_t i = 0; i < file.size(); ++i) {
        EXPECT_EQ(file.entries[i].word, builtin.entries[i].word);
        EXPECT_EQ(file.entries[i].category, builtin.entries[i].category);
    }
}

TEST(Lexicon, ValidationRejectsDuplicatesAndEmpties) {
    expect_error(ErrorKind::kConfig, [] { lexicon_of({"red", "red"}).validate(); });
    expect_error(ErrorKind::kConfig, [] { lexicon_of({"red", ""}).validate(); });
    expect_error(ErrorKind::kConfig, [] { ConceptLexicon{}.validate(); });
    expect_error(ErrorKind::kConfig, [] { lexicon_of({"red"}).validate(2); });
    expect_error(ErrorKind::kCorruptFile, [] { ConceptLexicon::from_json(nlohmann::json::object()); });
}

TEST(Cache, KeysAreMeansOfTopK1ImagesByOracle) {
    const FrozenEncoders enc(3, small_dims());
    const auto lex = lexicon_of({"red", "green", "blue", "striped", "round"});
    Rng rng(8);
    std::vector<Tensor> images;
    for (int i = 0; i < 12; ++i) images.push_back(random_tensor(rng, {5}));
    std::vector<Tensor> feats;
    for (const auto& x : images) feats.push_back(enc.encode_image(x));

    for (bool renorm : {true, false}) {
        CacheOptions opt;
        opt.k1 = 3;
        opt.renormalize_keys = renorm;
        const auto cache = build_cache(enc, lex, images, opt);
        ASSERT_EQ(cache.size(), lex.size());
        for (std::size_t w = 0; w < lex.size(); ++w) {
            EXPECT_EQ(cache.pairs[w].value, lex.entries[w].word);
            const auto text = enc.encode_prompt_text(std::vector<std::string>{"the", "photo", "is", lex.entries[w].word});
            std::vector<double> scores;
            for (const auto& f : feats) scores.push_back(dotv(text.data(), f.data()));
            std::vector<double> mean(8, 0.0);
            for (auto j : oracle_top(scores, 3))
                for (std::size_t c = 0; c < 8; ++c) mean[c] += feats[j][c] / 3.0;
            if (renorm) {
                const double n = std::sqrt(dotv(mean, mean));
                for (double& v : mean) v /= n;
            }
            for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(cache.pairs[w].key[c], mean[c], 1e-14);
        }
    }
}

TEST(Cache, SelectionsMatchFullSortWithTies) {
    Rng rng(21);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t count = 2 + rng.below(20);
        std::vector<Tensor> feats;
        for (std::size_t i = 0; i < count; ++i) {
            if (i > 0 && rng.uniform() < 0.4)
                feats.push_back(feats[rng.below(i)]);
            else
                feats.push_back(l2_normalize(random_tensor(rng, {6})));
        }
        const auto q = rng.uniform() < 0.5 ? feats[rng.below(count)] : l2_normalize(random_tensor(rng, {6}));
        const std::size_t k = 1 + rng.below(count);

        std::vector<double> dots, coss;
        for (const auto& f : feats) {
            dots.push_back(dotv(q.data(), f.data()));
            coss.push_back(dotv(q.data(), f.data()) / std::sqrt(dotv(f.data(), f.data()) * dotv(q.data(), q.data())));
        }
        EXPECT_EQ(select_images_for_concept(q, feats, k), oracle_top(dots, k));

        HandcraftedCache cache;
        for (std::size_t i = 0; i < count; ++i) cache.pairs.push_back({feats[i], "w" + std::to_string(i)});
        const auto got = match_concepts(cache, q, k);
        const auto want = oracle_top(coss, k);
        ASSERT_EQ(got.size(), want.size());
        for (std::size_t i = 0; i < k; ++i) {
            EXPECT_EQ(got[i].index, want[i]);
            EXPECT_EQ(got[i].word, "w" + std::to_string(want[i]));
        }
    }
}

TEST(Cache, RejectsBadK) {
    const FrozenEncoders enc(3, small_dims());
    Rng rng(2);
    std::vector<Tensor> images = {random_tensor(rng, {5}), random_tensor(rng, {5})};
    CacheOptions opt;
    opt.k1 = 3;
    expect_error(ErrorKind::kConfig, [&] { build_cache(enc, lexicon_of({"a", "b"}), images, opt); });
    opt.k1 = 1;
    const auto cache = build_cache(enc, lexicon_of({"a", "b"}), images, opt);
    expect_error(ErrorKind::kConfig, [&] { match_concepts(cache, enc.encode_image(images[0]), 3); });
}

TEST(Cache, JsonRoundTripIsByteIdentical) {
    const FrozenEncoders enc(3, small_dims());
    Rng rng(5);
    std::vector<Tensor> images;
    for (int i = 0; i < 6; ++i) images.push_back(random_tensor(rng, {5}));
    const auto cache = build_cache(enc, lexicon_of({"a", "b", "c"}), images, {});
    const auto doc = cache.to_json();
    EXPECT_EQ(doc["K1"], 3);
    EXPECT_EQ(doc["encoder_seed"], 3);
    EXPECT_EQ(dump_canonical(HandcraftedCache::from_json(doc).to_json()), dump_canonical(doc));
}

TEST(PromptSet, TemplateWordsAndFrozenFeatures) {
    const FrozenEncoders enc(3, small_dims());
    Rng rng(6);
    std::vector<Tensor> images;
    for (int i = 0; i < 6; ++i) images.push_back(random_tensor(rng, {5}));
    const auto cache = build_cache(enc, lexicon_of({"red", "green", "blue", "tall"}), images, {});
    const std::vector<ClassImages> classes = {{"cat", {images[0], images[1], images[2]}},
                                              {"dog", {images[3], images[4], images[5]}}};
    TemplatePromptGenerator gen;
    const auto set = build_prompt_set(enc, cache, classes, 2, gen);
    ASSERT_EQ(set.size(), 2u);
    const auto& cat = set.find("cat");
    ASSERT_EQ(cat.words.size(), 8u);
    EXPECT_EQ(std::vector<std::string>(cat.words.begin(), cat.words.begin() + 6),
              (std::vector<std::string>{"a", "photo", "of", "cat", "which", "is"}));
    EXPECT_FALSE(cat.feature.requires_grad());
    EXPECT_EQ(cat.feature.to_vector(), enc.encode_prompt_text(cat.words).to_vector());

    const std::vector<std::string> order = {"cat", "dog"};
    const auto doc = set.to_json();
    EXPECT_EQ(dump_canonical(HandcraftedPromptSet::from_json(doc, order).to_json()), dump_canonical(doc));
    const std::vector<std::string> partial = {"cat"};
    expect_error(ErrorKind::kCorruptFile, [&] { HandcraftedPromptSet::from_json(doc, partial); });
    expect_error(ErrorKind::kContract, [&] { set.find("cow"); });
}

TEST(PromptGeneratorHttp, UsesServiceResponse) {
    nlohmann::json seen;
    FakeService service([&](const httplib::Request& req, httplib::Response& res) {
        seen = nlohmann::json::parse(req.body);
        res.set_content(R"({"words": ["a fluffy", "Cat"]})", "application/json");
    });
    HttpPromptGenerator gen(service.endpoint());
    const auto words = generate_prompt("cat", {"soft", "small"}, gen);
    EXPECT_EQ(words, (std::vector<std::string>{"a", "fluffy", "cat"}));
    EXPECT_EQ(seen["class_name"], "cat");
    EXPECT_EQ(seen["concepts"], (nlohmann::json{"soft", "small"}));
    EXPECT_TRUE(gen.warnings().empty());
}

TEST(PromptGeneratorHttp, FallsBackOnBadResponse) {
    FakeService service([](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"nope": 1})", "application/json");
    });
    HttpPromptGenerator gen(service.endpoint());
    const auto words = generate_prompt("cat", {"soft"}, gen);
    EXPECT_EQ(words, (std::vector<std::string>{"a", "photo", "of", "cat", "which", "is", "soft"}));
    EXPECT_EQ(gen.warnings().size(), 1u);
}

TEST(PromptGeneratorHttp, FallsBackOnTimeout) {
    FakeService service([](const httplib::Request&, httplib::Response& res) {
        std::this_thread::sleep_for(std::chrono::milliseconds(400));
        res.set_content(R"({"words": ["late"]})", "application/json");
    });
    HttpPromptGenerator gen(service.endpoint(), std::chrono::milliseconds(100));
    const auto words = generate_prompt("cat", {"soft"}, gen);
    EXPECT_EQ(words.back(), "soft");
    EXPECT_EQ(gen.warnings().size(), 1u);
}

TEST(PromptGeneratorHttp, FallsBackWhenUnreachable) {
    HttpPromptGenerator gen("http://127.0.0.1:1/generate", std::chrono::milliseconds(200));
    EXPECT_EQ(generate_prompt("cat", {"soft"}, gen).size(), 7u);
    EXPECT_EQ(gen.warnings().size(), 1u);
}

TEST(PromptGenerator, EnvironmentSelectsImplementation) {
    ::unsetenv("COCOLE_LLM_ENDPOINT");
    EXPECT_NE(dynamic_cast<TemplatePromptGenerator*>(generator_from_environment().get()), nullptr);
    ::setenv("COCOLE_LLM_ENDPOINT", "http://127.0.0.1:9/x", 1);
    auto gen = generator_from_environment();
    auto* http = dynamic_cast<HttpPromptGenerator*>(gen.get());
    ASSERT_NE(http, nullptr);
    EXPECT_EQ(http->endpoint(), "http://127.0.0.1:9/x");
    ::unsetenv("COCOLE_LLM_ENDPOINT");
}

TEST(PromptGenerator, RejectsEmptyRequest) {
    TemplatePromptGenerator gen;
    expect_error(ErrorKind::kContract, [&] { generate_prompt("", {"a"}, gen); });
    expect_error(ErrorKind::kContract, [&] { generate_prompt("cat", {}, gen); });
}
