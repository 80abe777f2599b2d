#include <gtest/gtest.h>

#include <map>
#include <random>

#include "dialogkit/filters.hpp"
#include "pipeline_checks.hpp"
#include "synthetic.hpp"

using namespace dialogkit;

TEST(FilterProperty, PipelineAlgebraOnRandomFixtures) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const std::string failure = testkit::check_pipeline_algebra(seed);
        EXPECT_TRUE(failure.empty()) << failure;
    }
}

TEST(FilterProperty, CharMapIsIdempotent) {
    const CharMap map = CharMap::load(std::string(DIALOGKIT_SHARE_DATA) + "/t2s.txt");
    std::mt19937_64 rng(3);
    for (int i = 0; i < 50; ++i) {
        for (const auto& s : testkit::random_fixture_corpus(rng, 5)) {
            for (const auto& u : s.utterances()) {
                const std::string once = map.apply(u.text());
                EXPECT_EQ(map.apply(once), once);
            }
        }
    }
}

TEST(FilterProperty, PunctCollapseIsIdempotentAndBounded) {
    std::mt19937_64 rng(4);
    for (int i = 0; i < 50; ++i) {
        for (const auto& s : testkit::random_fixture_corpus(rng, 5)) {
            for (const auto& u : s.utterances()) {
                for (std::size_t m : {1u, 2u, 3u}) {
                    const std::string once = collapse_punct_runs(u.text(), m);
                    EXPECT_EQ(collapse_punct_runs(once, m), once);
                    std::string run;
                    for (std::size_t r = 0; r <= m; ++r) run += "！";
                    EXPECT_EQ(once.find(run), std::string::npos);
                }
            }
        }
    }
}

TEST(FilterProperty, ContextFilterKeepsAtMostKPerGroup) {
    std::mt19937_64 rng(5);
    const TokenizerConfig tok;
    for (int trial = 0; trial < 100; ++trial) {
        const auto corpus = testkit::random_fixture_corpus(rng, 40);
        FilterConfig cfg;
        cfg.max_responses_per_context = 1 + rng() % 3;
        std::vector<ScoredSession> scored;
        for (const auto& s : corpus) scored.push_back({s, static_cast<double>(rng() % 5)});
        const auto kept = context_filter(scored, cfg);
        std::map<std::string, std::size_t> per_group;
        for (std::size_t i = 0; i < kept.size(); ++i) {
            const auto key = context_key(corpus[i], tok);
            if (kept[i] && key) ++per_group[*key];
        }
        for (const auto& [key, n] : per_group) EXPECT_LE(n, cfg.max_responses_per_context);
    }
}
