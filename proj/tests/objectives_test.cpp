#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "cocole/objectives.hpp"
#include "test_util.hpp"

using namespace cocole;
using cocole::testing::expect_error;
using cocole::testing::random_tensor;

namespace {

EncoderDims tiny() {
    EncoderDims d;
    d.d = 8;
    d.d_in = 5;
    d.d_hidden = 8;
    return d;
}

struct Fixture {
    FrozenEncoders enc{17, tiny()};
    ConceptualCodebook cb = ConceptualCodebook::init(5, 2, 8, 3);
    std::vector<Tensor> classes;
    std::vector<Tensor> handcrafted;
    std::vector<TrainingExample> batch;

    Fixture() {
        Rng rng(4);
        for (auto& p : cb.prompts) p = random_tensor(rng, {2, 8}, 0.5);
        for (int c = 0; c < 3; ++c) {
            classes.push_back(enc.embed_word("c" + std::to_string(c)));
            handcrafted.push_back(l2_normalize(random_tensor(rng, {8})));
        }
        for (int b = 0; b < 2; ++b) batch.push_back({enc.encode_image(random_tensor(rng, {5})), std::size_t(b)});
    }
};

bool all_zero(const Tensor& t) {
    if (!t.has_grad()) return true;
    for (double g : t.grad())
        if (g != 0.0) return false;
    return true;
}

}  // namespace

TEST(Objectives, ProbabilitiesSumToOneAndShiftInvariant) {
    Rng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        const auto f = l2_normalize(random_tensor(rng, {8}));
        std::vector<Tensor> feats;
        for (int c = 0; c < 5; ++c) feats.push_back(l2_normalize(random_tensor(rng, {8})));
        const auto p = class_probabilities(f, feats, 0.07);
        EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-9);

        const auto logits = class_logits(f, feats, 0.07).to_vector();
        std::vector<double> shifted;
        for (double l : logits) shifted.push_back(l + 123.0);
        const auto ps = softmax_rows(Tensor::vector(shifted)).to_vector();
        EXPECT_EQ(std::max_element(p.begin(), p.end()) - p.begin(), std::max_element(ps.begin(), ps.end()) - ps.begin());
    }
    const std::vector<Tensor> one = {Tensor::vector({0.6, 0.8})};
    EXPECT_EQ(class_probabilities(Tensor::vector({1.0, 0.0}), one, 0.07)[0], 1.0);
}

TEST(Objectives, AnalyticValues) {
    const std::vector<Tensor> same = {Tensor::vector({0.6, 0.8, 0.0}), Tensor::vector({0.6, 0.8, 0.0})};
    EXPECT_NEAR(loss_ce(Tensor::vector({1.0, 0.0, 0.0}), same, 1, 0.07).item(), std::log(2.0), 1e-12);

    const std::vector<Tensor> feats = {Tensor::vector({1.0, 2.0}), Tensor::vector({-3.0, 0.5})};
    EXPECT_NEAR(loss_cc(feats, feats).item(), 0.0, 1e-12);
    const std::vector<Tensor> other = {Tensor::vector({1.0, 0.0}), Tensor::vector({-3.0, 0.5})};
    // (0 + 4) / 2
    EXPECT_NEAR(loss_cc(feats, other).item(), 2.0, 1e-12);

    const std::vector<Tensor> orth_keys = {Tensor::vector({0.0, 1.0, 0.0, 0.0}), Tensor::vector({0.0, 0.0, 2.0, 0.0}),
                                           Tensor::vector({0.0, 0.0, 0.0, -1.0})};
    EXPECT_NEAR(loss_ma(Tensor::vector({1.0, 0.0, 0.0, 0.0}), orth_keys).item(), 3.0, 1e-12);
    const std::vector<Tensor> aligned = {Tensor::vector({5.0, 0.0, 0.0, 0.0})};
    EXPECT_NEAR(loss_ma(Tensor::vector({1.0, 0.0, 0.0, 0.0}), aligned).item(), 0.0, 1e-12);

    const FrozenEncoders enc(1, tiny());
    Rng rng(3);
    const auto p = random_tensor(rng, {2, 8});
    const std::vector<Tensor> dup = {p, p};
    EXPECT_NEAR(loss_or(enc, dup).item(), 0.5, 1e-12);
    EXPECT_NEAR(loss_or(enc, dup, true).item(), 1.0, 1e-12);
}

TEST(Objectives, GradientRouting) {
    Fixture fx;
    ObjectiveConfig cfg;
    cfg.k3 = 2;
    const auto& ex = fx.batch[0];
    const auto selected = retrieve(fx.cb, ex.image_feature, cfg.k3).indices;

    auto run = [&](const char* which) {
        auto tape = std::make_unique<Tape>();
        auto params = CodebookParams::bind(*tape, fx.cb);
        const auto l = example_losses(fx.enc, params, ex, fx.classes, fx.handcrafted, cfg);
        const std::string w = which;
        Tensor loss = w == "ce" ? l.ce : w == "ma" ? l.ma : l.cc;
        if (w == "or") loss = loss_or(fx.enc, params.prompts);
        tape->backward(loss);
        return std::make_pair(std::move(tape), params);
    };

    for (const char* name : {"ce", "cc", "or"}) {
        const auto [tape, params] = run(name);
        for (const auto& k : params.keys) EXPECT_TRUE(all_zero(k)) << name;
        bool any = false;
        for (const auto& p : params.prompts) any = any || !all_zero(p);
        EXPECT_TRUE(any) << name;
    }
    {
        const auto [tape, params] = run("ma");
        for (const auto& p : params.prompts) EXPECT_TRUE(all_zero(p));
        for (std::size_t i = 0; i < params.keys.size(); ++i) {
            const bool sel = std::find(selected.begin(), selected.end(), i) != selected.end();
            EXPECT_EQ(all_zero(params.keys[i]), !sel) << i;
        }
    }
    for (const char* name : {"ce", "cc"}) {
        const auto [tape, params] = run(name);
        for (std::size_t i = 0; i < params.prompts.size(); ++i) {
            const bool sel = std::find(selected.begin(), selected.end(), i) != selected.end();
            if (!sel) EXPECT_TRUE(all_zero(params.prompts[i])) << name << " row " << i;
        }
    }
}

TEST(Objectives, TotalIsWeightedSum) {
    Fixture fx;
    ObjectiveConfig cfg;
    cfg.k3 = 2;
    cfg.weights = {0.5, 2.0, 3.0, 0.25};
    const auto params = CodebookParams::constants(fx.cb);
    const auto l = total_loss(fx.enc, params, fx.batch, fx.classes, fx.handcrafted, cfg);
    EXPECT_NEAR(l.total.item(), 0.5 * l.ce.item() + 2.0 * l.ma.item() + 3.0 * l.orth.item() + 0.25 * l.cc.item(),
                1e-12);

    cfg.weights = {1.0, 0.0, 0.0, 0.0};
    const auto ablated = total_loss(fx.enc, params, fx.batch, fx.classes, fx.handcrafted, cfg);
    EXPECT_EQ(ablated.ma.item(), 0.0);
    EXPECT_EQ(ablated.cc.item(), 0.0);
    EXPECT_EQ(ablated.orth.item(), 0.0);
    EXPECT_NEAR(ablated.total.item(), ablated.ce.item(), 1e-15);
}

TEST(Objectives, GradientsMatchFiniteDifferences) {
    Fixture fx;
    ObjectiveConfig cfg;
    cfg.k3 = 2;
    const auto x0 = Tensor::vector(fx.cb.flatten());
    Tape tape;
    const auto params = CodebookParams::bind(tape, fx.cb);
    tape.backward(total_loss(fx.enc, params, fx.batch, fx.classes, fx.handcrafted, cfg).total);
    auto probe = fx.cb;
    const auto numeric = finite_diff_grad(
        [&](const Tensor& x) {
            probe.unflatten(x.data());
            return total_loss(fx.enc, CodebookParams::constants(probe), fx.batch, fx.classes, fx.handcrafted, cfg)
                .total.item();
        },
        x0, 1e-5);
    EXPECT_LT(relative_error(params.flat_grad(), numeric.data()), 1e-6);
}

TEST(Objectives, ContractErrors) {
    const std::vector<Tensor> feats = {Tensor::vector({1.0, 0.0})};
    expect_error(ErrorKind::kContract, [&] { loss_ce(Tensor::vector({1.0, 0.0}), feats, 1, 0.07); });
    expect_error(ErrorKind::kConfig, [&] { loss_ce(Tensor::vector({1.0, 0.0}), feats, 0, 0.0); });
    expect_error(ErrorKind::kContract, [&] { loss_ma(Tensor::vector({1.0, 0.0}), {}); });
    const std::vector<Tensor> two = {Tensor::vector({1.0, 0.0}), Tensor::vector({1.0, 0.0})};
    expect_error(ErrorKind::kContract, [&] { loss_cc(feats, two); });
    const FrozenEncoders enc(1, tiny());
    expect_error(ErrorKind::kContract, [&] { loss_or(enc, std::vector<Tensor>{Tensor::zeros({1, 8})}); });
}
