#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <numbers>

#include "cocole/codebook.hpp"
#include "cocole/json_util.hpp"
#include "cocole/optim.hpp"
#include "test_util.hpp"

using namespace cocole;
using cocole::testing::expect_error;

TEST(AdamW, FirstStepIsSignedLrPlusDecay) {
    std::vector<double> p = {1.0, -2.0, 0.5};
    const std::vector<double> g = {0.3, -4.0, 0.0};
    const std::vector<double> decay = {0.1, 0.0, 0.1};
    auto s = OptimizerState::zeros(3);
    adamw_step(p, g, decay, s, 0.01);
    // m_hat = g, v_hat = g^2 on the first step.
    EXPECT_NEAR(p[0], 1.0 - 0.01 * (0.3 / (0.3 + 1e-8) + 0.1 * 1.0), 1e-15);
    EXPECT_NEAR(p[1], -2.0 - 0.01 * (-4.0 / (4.0 + 1e-8)), 1e-15);
    EXPECT_NEAR(p[2], 0.5 - 0.01 * (0.1 * 0.5), 1e-15);
    EXPECT_EQ(s.step, 1u);
}

TEST(AdamW, MatchesReferenceOverSeveralSteps) {
    std::vector<double> p = {0.7, -0.2};
    std::vector<double> ref = p;
    double m[2] = {0, 0}, v[2] = {0, 0};
    auto s = OptimizerState::zeros(2);
    const std::vector<double> decay = {0.01, 0.01};
    for (int t = 1; t <= 5; ++t) {
        const std::vector<double> g = {std::sin(t * 1.0), std::cos(t * 0.5)};
        adamw_step(p, g, decay, s, 0.05);
        for (int i = 0; i < 2; ++i) {
            m[i] = 0.9 * m[i] + 0.1 * g[i];
            v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
            const double mh = m[i] / (1 - std::pow(0.9, t));
            const double vh = v[i] / (1 - std::pow(0.999, t));
            ref[i] -= 0.05 * (mh / (std::sqrt(vh) + 1e-8) + 0.01 * ref[i]);
        }
    }
    EXPECT_NEAR(p[0], ref[0], 1e-14);
    EXPECT_NEAR(p[1], ref[1], 1e-14);
}

TEST(AdamW, ZeroLearningRateLeavesParametersByteIdentical) {
    auto cb = ConceptualCodebook::init(4, 2, 8, 1);
    auto flat = cb.flatten();
    const auto before = flat;
    std::vector<double> g(flat.size(), 0.3), decay(flat.size(), 0.01);
    auto s = OptimizerState::zeros(flat.size());
    for (int i = 0; i < 3; ++i) adamw_step(flat, g, decay, s, 0.0);
    EXPECT_EQ(std::memcmp(flat.data(), before.data(), flat.size() * sizeof(double)), 0);
}

TEST(AdamW, RejectsMismatchedSizesAndNegativeLr) {
    std::vector<double> p(2), g(3), d(2);
    auto s = OptimizerState::zeros(2);
    expect_error(ErrorKind::kDimension, [&] { adamw_step(p, g, d, s, 0.1); });
    std::vector<double> g2(2);
    expect_error(ErrorKind::kContract, [&] { adamw_step(p, g2, d, s, -0.1); });
}

TEST(CosineSchedule, EndpointsAndMidpoint) {
    EXPECT_EQ(cosine_lr(0, 100, 0.002), 0.002);
    EXPECT_EQ(cosine_lr(50, 100, 0.002), 0.001);
    EXPECT_EQ(cosine_lr(100, 100, 0.002), 0.0);
    EXPECT_NEAR(cosine_lr(25, 100, 1.0), 0.5 * (1.0 + std::cos(std::numbers::pi / 4)), 1e-15);
    for (std::size_t s = 1; s <= 100; ++s) EXPECT_LE(cosine_lr(s, 100, 1.0), cosine_lr(s - 1, 100, 1.0));
    expect_error(ErrorKind::kConfig, [] { cosine_lr(0, 0, 1.0); });
    expect_error(ErrorKind::kContract, [] { cosine_lr(101, 100, 1.0); });
}

TEST(OptimizerState, JsonRoundTrip) {
    auto s = OptimizerState::zeros(3);
    std::vector<double> p = {1, 2, 3}, g = {0.1, -0.2, 0.3}, d(3, 0.0);
    adamw_step(p, g, d, s, 0.1);
    const auto doc = s.to_json();
    EXPECT_EQ(dump_canonical(OptimizerState::from_json(doc).to_json()), dump_canonical(doc));
    auto bad = doc;
    bad["v"] = {1.0};
    expect_error(ErrorKind::kCorruptFile, [&] { OptimizerState::from_json(bad); });
}
