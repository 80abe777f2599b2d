#include <gtest/gtest.h>

#include <map>
#include <sstream>

#include <json.hpp>

#include "dialogkit/cli.hpp"
#include "dialogkit/filters.hpp"
#include "synthetic.hpp"

using namespace dialogkit;

namespace {

DialogueSession make(const std::string& id, const std::string& source, const std::string& context,
                     const std::string& response) {
    return DialogueSession(id, source, {Utterance(context), Utterance(response)});
}

struct PlantedFixture {
    std::vector<DialogueSession> sessions;
    std::map<std::string, FilterStage> planted;  // id -> expected rejection stage
};

// 90 clean sessions with distinct contexts, plus 10 planted violations spread through the stream.
PlantedFixture planted_fixture() {
    PlantedFixture f;
    std::size_t clean = 0;
    auto context = [](std::size_t i) { return "话题" + std::to_string(i) + "甲乙"; };
    for (std::size_t i = 0; i < 100; ++i) {
        const std::string id = "s" + std::to_string(i);
        switch (i) {
            case 7:
            case 51:
                f.sessions.push_back(make(id, "jddc", context(1000 + i), "甲好"));
                f.planted[id] = FilterStage::kDataset;
                break;
            case 13:
            case 42:
            case 77:
                f.sessions.push_back(make(id, "weibo", context(1000 + i), "甲是广告"));
                f.planted[id] = FilterStage::kRule;
                break;
            case 20:
            case 64:
            case 88:
                f.sessions.push_back(make(id, "douban", context(1000 + i), "丙丁"));
                f.planted[id] = FilterStage::kClassifier;
                break;
            case 30:
            case 95:
                // Same context as an earlier clean session, with a lower score.
                f.sessions.push_back(make(id, "weibo", context(i - 25), "乙戊"));
                f.planted[id] = FilterStage::kContext;
                break;
            default:
                f.sessions.push_back(make(id, i % 2 ? "weibo" : "douban", context(i), "甲乙好"));
                ++clean;
        }
    }
    return f;
}

FilterConfig planted_config() {
    FilterConfig cfg;
    cfg.excluded_sources = {"jddc"};
    cfg.blacklist = {"广告"};
    cfg.default_threshold = 0.5;
    cfg.max_responses_per_context = 1;
    return cfg;
}

}  // namespace

TEST(PipelineIntegration, PlantedFaultsRejectedAtTheirStages) {
    const auto f = planted_fixture();
    ASSERT_EQ(f.sessions.size(), 100u);
    ASSERT_EQ(f.planted.size(), 10u);
    const QualityScorer scorer({}, nullptr, nullptr, StarList());
    const FilterPipeline pipeline(planted_config(), scorer);
    for (std::size_t workers : {1u, 3u, 8u}) {
        const auto result = run_pipeline(f.sessions, pipeline, workers);
        ASSERT_EQ(result.rejected.size(), 10u);
        EXPECT_EQ(result.kept.size(), 90u);
        for (const auto& r : result.rejected) {
            ASSERT_TRUE(f.planted.count(r.id)) << r.id;
            EXPECT_EQ(r.stage, f.planted.at(r.id)) << r.id;
            EXPECT_FALSE(r.detail.empty());
        }
        for (const auto& s : result.kept) EXPECT_FALSE(f.planted.count(s.id()));
    }
}

TEST(PipelineIntegration, PlantedFaultsThroughCli) {
    testkit::TempDir dir;
    const auto f = planted_fixture();
    testkit::write_corpus(dir / "in.jsonl", f.sessions);
    testkit::write_text(dir / "cfg.json", R"({"filter": {"excluded_sources": ["jddc"], "blacklist": ["广告"],
        "default_threshold": 0.5, "max_responses_per_context": 1}})");
    std::ostringstream out, err;
    const int code = run_cli({"--config", (dir / "cfg.json").string(), "filter", "--input", (dir / "in.jsonl").string(),
                              "--kept", (dir / "kept.jsonl").string(), "--rejected", (dir / "rej.jsonl").string()},
                             out, err);
    ASSERT_EQ(code, kExitOk) << err.str();
    EXPECT_EQ(read_all_sessions(dir / "kept.jsonl", true).size(), 90u);
    std::istringstream rej(testkit::read_text(dir / "rej.jsonl"));
    std::size_t n = 0;
    for (std::string line; std::getline(rej, line); ++n) {
        const auto j = nlohmann::json::parse(line);
        EXPECT_EQ(j["stage"], std::string(to_string(f.planted.at(j["id"].get<std::string>()))));
    }
    EXPECT_EQ(n, 10u);
}

TEST(PipelineIntegration, DefaultConfigIsIdentityOnCleanCorpus) {
    testkit::TempDir dir;
    std::vector<DialogueSession> sessions;
    for (std::size_t i = 0; i < 50; ++i) {
        sessions.push_back(make("c" + std::to_string(i), "weibo", "话题" + std::to_string(i), "回复"));
    }
    testkit::write_corpus(dir / "in.jsonl", sessions);
    std::ostringstream out, err;
    ASSERT_EQ(run_cli({"filter", "--input", (dir / "in.jsonl").string()}, out, err), kExitOk) << err.str();
    EXPECT_EQ(out.str(), testkit::read_text(dir / "in.jsonl"));
}
