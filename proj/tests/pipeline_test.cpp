#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cocole/json_util.hpp"
#include "cocole/pipeline.hpp"
#include "cocole/report.hpp"
#include "test_util.hpp"

using namespace cocole;
using cocole::testing::expect_error;
using cocole::testing::expect_error_containing;
namespace fs = std::filesystem;

namespace {

RunConfig small_config() {
    auto c = RunConfig::desk();
    c.train.epochs = 2;
    c.dataset.test_per_class = 3;
    c.dataset.align_steps = 6;
    c.dataset.reference_steps = 6;
    c.dataset.align_samples = 2;
    c.dataset.neutral_contexts = 2;
    return c;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void run_all(const Pipeline& p) {
    p.synth();
    p.build_cache();
    TemplatePromptGenerator gen;
    p.gen_prompts(gen);
    p.train();
    p.eval();
}

}  // namespace

TEST(RunConfig, JsonRoundTripAndHash) {
    auto c = small_config();
    c.train.weights.cc = 0.0;
    c.data_seed = 11;
    c.paths.eval = "other.json";
    const auto back = RunConfig::from_json(c.to_json());
    EXPECT_EQ(dump_canonical(back.to_json()), dump_canonical(c.to_json()));
    EXPECT_EQ(back.hash(), c.hash());
    EXPECT_NE(small_config().hash(), c.hash());
}

TEST(RunConfig, RejectsUnknownKeysAndBadValues) {
    auto doc = small_config().to_json();
    doc["learning_rate"] = 0.1;
    expect_error_containing(ErrorKind::kConfig, "learning_rate", [&] { RunConfig::from_json(doc); });
    doc = small_config().to_json();
    doc["paths"]["weights"] = "w.json";
    expect_error(ErrorKind::kConfig, [&] { RunConfig::from_json(doc); });
    doc = small_config().to_json();
    doc["epochs"] = -3;
    expect_error(ErrorKind::kConfig, [&] { RunConfig::from_json(doc); });
}

TEST(RunConfig, LoadErrors) {
    TempDir dir("cocole_config_test");
    expect_error(ErrorKind::kMissingArtifact, [&] { RunConfig::load(dir.path / "absent.json"); });
    std::ofstream(dir.path / "broken.json") << "{ \"epochs\": ";
    expect_error(ErrorKind::kConfig, [&] { RunConfig::load(dir.path / "broken.json"); });
    std::ofstream(dir.path / "partial.json") << "{ \"epochs\": 3 }";
    const auto c = RunConfig::load(dir.path / "partial.json");
    EXPECT_EQ(c.train.epochs, 3u);
    EXPECT_EQ(c.encoder_seed, 42u);
}

TEST(Pipeline, MissingArtifactsNameTheStage) {
    TempDir dir("cocole_pipeline_missing");
    const Pipeline p(small_config(), dir.path);
    expect_error_containing(ErrorKind::kMissingArtifact, "run synth first", [&] { p.build_cache(); });
    expect_error_containing(ErrorKind::kMissingArtifact, "run synth first", [&] { p.eval(); });
    p.synth();
    TemplatePromptGenerator gen;
    expect_error_containing(ErrorKind::kMissingArtifact, "run build-cache first", [&] { p.gen_prompts(gen); });
    p.build_cache();
    expect_error_containing(ErrorKind::kMissingArtifact, "run gen-prompts first", [&] { p.train(); });
    p.gen_prompts(gen);
    expect_error_containing(ErrorKind::kMissingArtifact, "run train first", [&] { p.eval(); });
    // The untrained baseline needs no checkpoint.
    const auto base = p.eval(true);
    EXPECT_TRUE(fs::exists(dir.path / "eval_untrained.json"));
    EXPECT_FALSE(fs::exists(dir.path / "eval.json"));
    EXPECT_LE(base.hm, 100.0);
}

TEST(Pipeline, ArtifactsRoundTripAndRunsRepeat) {
    TempDir a("cocole_pipeline_a"), b("cocole_pipeline_b");
    const Pipeline pa(small_config(), a.path), pb(small_config(), b.path);
    run_all(pa);
    run_all(pb);
    for (const char* name : {"dataset.json", "cache.json", "prompts.json", "checkpoint.json", "metrics.jsonl",
                             "eval.json"})
        EXPECT_EQ(slurp(a.path / name), slurp(b.path / name)) << name;

    // Load then save reproduces every file byte for byte.
    const auto out = b.path / "copy";
    fs::create_directories(out);
    save_dataset(pa.load_dataset(), out / "dataset.json");
    save_cache(pa.load_cache(), out / "cache.json");
    save_prompts(pa.load_prompts(), out / "prompts.json");
    save_codebook(pa.load_checkpoint(), out / "checkpoint.json");
    write_metrics_log(out / "metrics.jsonl", read_metrics_log(a.path / "metrics.jsonl"));
    for (const char* name : {"dataset.json", "cache.json", "prompts.json", "checkpoint.json", "metrics.jsonl"})
        EXPECT_EQ(slurp(out / name), slurp(a.path / name)) << name;

    const auto ck = read_json_file(a.path / "checkpoint.json");
    EXPECT_TRUE(ck.contains("optimizer"));
    EXPECT_TRUE(ck.contains("config"));
    EXPECT_EQ(ck["step"].get<std::size_t>(), read_metrics_log(a.path / "metrics.jsonl").size());

    const auto eval = read_json_file(a.path / "eval.json");
    const double bacc = eval["base_acc"], nacc = eval["novel_acc"];
    EXPECT_NEAR(eval["hm"].get<double>(), bacc + nacc > 0 ? 2 * bacc * nacc / (bacc + nacc) : 0.0, 0.01);
}

TEST(Pipeline, EncoderSeedMismatchIsRejected) {
    TempDir dir("cocole_pipeline_seed");
    auto c = small_config();
    Pipeline(c, dir.path).synth();
    c.encoder_seed = 43;
    const Pipeline other(c, dir.path);
    expect_error(ErrorKind::kConfig, [&] { other.build_cache(); });
}

TEST(LoadImage, AcceptsArrayOrObject) {
    TempDir dir("cocole_image_test");
    std::ofstream(dir.path / "a.json") << "[1, 2, 3]";
    std::ofstream(dir.path / "b.json") << "{\"image\": [1, 2, 3]}";
    std::ofstream(dir.path / "c.json") << "[1, 2]";
    EXPECT_EQ(load_image(dir.path / "a.json", 3).to_vector(), (std::vector<double>{1, 2, 3}));
    EXPECT_EQ(load_image(dir.path / "b.json", 3).to_vector(), (std::vector<double>{1, 2, 3}));
    expect_error(ErrorKind::kCorruptFile, [&] { load_image(dir.path / "c.json", 3); });
}

TEST(RunConfig, ShippedDeskConfigMatchesBuiltIn) {
    const auto c = RunConfig::load(cocole::testing::source_path("configs/desk.json"));
    EXPECT_EQ(dump_canonical(c.to_json()), dump_canonical(RunConfig::desk().to_json()));
}
