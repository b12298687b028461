#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "cocole/codebook.hpp"
#include "cocole/json_util.hpp"
#include "test_util.hpp"

using namespace cocole;
using cocole::testing::expect_error;
using cocole::testing::random_tensor;

namespace {

std::vector<std::size_t> sort_oracle(const std::vector<double>& scores, std::size_t k) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    idx.resize(k);
    return idx;
}

double cosine(const Tensor& a, const Tensor& b) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    return ab / (std::sqrt(aa) * std::sqrt(bb));
}

}  // namespace

TEST(Codebook, InitShapesAndStatistics) {
    const auto cb = ConceptualCodebook::init(100, 8, 64, 1);
    ASSERT_EQ(cb.keys.size(), 100u);
    ASSERT_EQ(cb.prompts.size(), 100u);
    EXPECT_EQ(cb.parameter_count(), 100u * 64 + 100u * 8 * 64);
    double sum = 0, sq = 0;
    for (const auto& p : cb.prompts) {
        EXPECT_EQ(p.shape(), (Shape{8, 64}));
        for (double v : p.data()) {
            sum += v;
            sq += v * v;
        }
    }
    const double n = 100.0 * 8 * 64;
    EXPECT_NEAR(sum / n, 0.0, 0.002);
    EXPECT_NEAR(std::sqrt(sq / n), kPromptInitStd, 0.001);
    for (const auto& k : cb.keys) EXPECT_NEAR(cosine(k, k), 1.0, 1e-12);
    double kn = 0;
    for (double v : cb.keys[0].data()) kn += v * v;
    EXPECT_NEAR(kn, 1.0, 1e-12);
}

TEST(Codebook, InitIsSeeded) {
    EXPECT_TRUE(ConceptualCodebook::init(4, 2, 8, 3) == ConceptualCodebook::init(4, 2, 8, 3));
    EXPECT_FALSE(ConceptualCodebook::init(4, 2, 8, 3) == ConceptualCodebook::init(4, 2, 8, 4));
    expect_error(ErrorKind::kConfig, [] { ConceptualCodebook::init(0, 2, 8, 3); });
}

TEST(Codebook, FlattenRoundTrip) {
    auto cb = ConceptualCodebook::init(3, 2, 4, 1);
    auto flat = cb.flatten();
    for (double& v : flat) v += 1.0;
    cb.unflatten(flat);
    EXPECT_EQ(cb.flatten(), flat);
    EXPECT_EQ(cb.keys[1][0], flat[4]);
    EXPECT_EQ(cb.prompts[0].at(1, 0), flat[3 * 4 + 4]);
    expect_error(ErrorKind::kDimension, [&] { cb.unflatten(std::vector<double>(3)); });
}

TEST(Codebook, RetrievalMatchesSortOracleWithTies) {
    Rng rng(12);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + rng.below(25);
        std::vector<Tensor> keys;
        for (std::size_t i = 0; i < n; ++i)
            keys.push_back(i > 0 && rng.uniform() < 0.35 ? keys[rng.below(i)] : random_tensor(rng, {6}));
        const auto q = rng.uniform() < 0.5 ? keys[rng.below(n)] : random_tensor(rng, {6});
        const std::size_t k = 1 + rng.below(n);
        std::vector<double> scores;
        for (const auto& key : keys) scores.push_back(cosine(key, q));
        const auto r = retrieve(keys, q, k);
        EXPECT_EQ(r.indices, sort_oracle(scores, k));
        for (std::size_t i = 0; i < k; ++i) EXPECT_NEAR(r.similarities[i], scores[r.indices[i]], 1e-14);
    }
}

TEST(Codebook, RetrievalRejectsBadInput) {
    const auto cb = ConceptualCodebook::init(3, 2, 4, 1);
    expect_error(ErrorKind::kConfig, [&] { retrieve(cb, Tensor::vector({1, 0, 0, 0}), 4); });
    expect_error(ErrorKind::kConfig, [&] { retrieve(cb, Tensor::vector({1, 0, 0, 0}), 0); });
    expect_error(ErrorKind::kDegenerateInput, [&] { retrieve(cb, Tensor::zeros({4}), 1); });
}

TEST(Codebook, AssembledPromptLayout) {
    const auto cb = ConceptualCodebook::init(4, 2, 3, 5);
    const auto params = CodebookParams::constants(cb);
    RetrievalResult r;
    r.indices = {2, 0};
    const auto cls = Tensor::vector({7, 8, 9});
    const auto seq = assemble_prompt(params, r, cls);
    ASSERT_EQ(seq.shape(), (Shape{5, 3}));
    for (std::size_t c = 0; c < 3; ++c) {
        EXPECT_EQ(seq.at(0, c), cb.prompts[2].at(0, c));
        EXPECT_EQ(seq.at(1, c), cb.prompts[2].at(1, c));
        EXPECT_EQ(seq.at(2, c), cb.prompts[0].at(0, c));
        EXPECT_EQ(seq.at(4, c), cls[c]);
    }
}

TEST(Codebook, FileRoundTripIsByteIdentical) {
    CodebookFile file;
    file.codebook = ConceptualCodebook::init(3, 2, 4, 9);
    file.encoder_seed = 42;
    file.config_hash = "abc";
    file.extra = {{"step", 7}};
    const auto doc = codebook_to_json(file);
    EXPECT_EQ(doc["version"], kCodebookFormatVersion);
    EXPECT_EQ(doc["N"], 3);
    EXPECT_EQ(doc["M"], 2);
    EXPECT_EQ(doc["D"], 4);
    EXPECT_EQ(doc["prompts"][0].size(), 2u);
    const auto back = codebook_from_json(doc);
    EXPECT_TRUE(back.codebook == file.codebook);
    EXPECT_EQ(back.extra["step"], 7);
    EXPECT_EQ(dump_canonical(codebook_to_json(back)), dump_canonical(doc));

    const auto path = std::filesystem::temp_directory_path() / "cocole_codebook_test.json";
    save_codebook(file, path);
    EXPECT_TRUE(load_codebook(path).codebook == file.codebook);
    std::filesystem::remove(path);
}

TEST(Codebook, FileErrors) {
    CodebookFile file;
    file.codebook = ConceptualCodebook::init(2, 1, 2, 1);
    auto doc = codebook_to_json(file);
    doc["version"] = 99;
    expect_error(ErrorKind::kVersionMismatch, [&] { codebook_from_json(doc); });
    doc = codebook_to_json(file);
    doc["keys"][0] = {1.0};
    expect_error(ErrorKind::kCorruptFile, [&] { codebook_from_json(doc); });
    doc = codebook_to_json(file);
    doc.erase("prompts");
    expect_error(ErrorKind::kCorruptFile, [&] { codebook_from_json(doc); });
}
