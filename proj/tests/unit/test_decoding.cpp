#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "dialogkit/decoding.hpp"
#include "dialogkit/error.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

using namespace dialogkit;

namespace {

const std::string eod(kEod);

double total(const Distribution& d) { return std::accumulate(d.begin(), d.end(), 0.0); }

// "x y <EOD>" has the largest product probability (0.6 * 0.9 * 0.9).
TableScorer xy_scorer() {
    return TableScorer({{{}, {{"x", 0.6}, {"y", 0.1}, {eod, 0.3}}},
                        {{"x"}, {{"x", 0.05}, {"y", 0.9}, {eod, 0.05}}},
                        {{"x", "y"}, {{"x", 0.05}, {"y", 0.05}, {eod, 0.9}}}},
                       std::map<std::string, double>{{"x", 0.25}, {"y", 0.25}, {eod, 0.5}});
}

DecodeConfig plain(Strategy s) {
    DecodeConfig c;
    c.strategy = s;
    c.no_repeat_n = 0;
    c.max_len = 8;
    return c;
}

}  // namespace

TEST(Temperature, HandValues) {
    const Distribution d = {0.5, 0.3, 0.2};
    const auto t = apply_temperature(d, 0.5);
    EXPECT_NEAR(t[0], 0.25 / 0.38, 1e-12);
    EXPECT_NEAR(t[1], 0.09 / 0.38, 1e-12);
    EXPECT_NEAR(t[2], 0.04 / 0.38, 1e-12);
    EXPECT_NEAR(t[0], 0.658, 5e-4);
    EXPECT_NEAR(t[1], 0.237, 5e-4);
    EXPECT_NEAR(t[2], 0.105, 5e-4);
}

TEST(Temperature, IdentityAndLimit) {
    const Distribution d = {0.5, 0.3, 0.2};
    EXPECT_EQ(apply_temperature(d, 1.0), d);
    EXPECT_GT(apply_temperature(d, 0.01)[0], 1.0 - 1e-12);
    EXPECT_THROW(apply_temperature(d, 0.0), ConfigError);
    EXPECT_THROW(apply_temperature(d, -1.0), ConfigError);
}

TEST(Temperature, SoftmaxOfLogitsMatchesPowerForm) {
    const std::vector<double> logits = {std::log(0.5), std::log(0.3), std::log(0.2)};
    const auto a = softmax_with_temperature(logits, 0.5);
    const auto b = apply_temperature({0.5, 0.3, 0.2}, 0.5);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(a[i], b[i], 1e-15);
}

TEST(TopP, HandValues) {
    const auto f = top_p_filter({0.5, 0.3, 0.2}, 0.7);
    EXPECT_NEAR(f[0], 0.625, 1e-15);
    EXPECT_NEAR(f[1], 0.375, 1e-15);
    EXPECT_EQ(f[2], 0.0);
}

TEST(TopP, IdentityAndDegenerate) {
    const Distribution d = {0.2, 0.5, 0.3};
    EXPECT_EQ(top_p_filter(d, 1.0), d);
    EXPECT_EQ(top_p_filter(d, 0.4), (Distribution{0.0, 1.0, 0.0}));
}

TEST(TopP, ExactBoundaryKeepsPrefix) {
    // Cumulative mass reaches p exactly at the second token.
    const auto f = top_p_filter({0.5, 0.25, 0.25}, 0.75);
    EXPECT_NEAR(f[0], 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(f[1], 1.0 / 3.0, 1e-15);
    EXPECT_EQ(f[2], 0.0);
}

TEST(NoRepeat, BansCompletingToken) {
    // ids: a=0, b=1, c=2. history [a b], prefix [a]: "a b" would repeat.
    const std::vector<TokenId> history = {0, 1};
    const std::vector<TokenId> prefix = {0};
    const auto r = no_repeat_mask(history, prefix, 2, {0.2, 0.5, 0.3});
    EXPECT_FALSE(r.all_masked);
    EXPECT_EQ(r.dist[1], 0.0);
    EXPECT_NEAR(r.dist[0], 0.4, 1e-15);
    EXPECT_NEAR(r.dist[2], 0.6, 1e-15);
}

TEST(NoRepeat, IdentityCases) {
    const Distribution d = {0.2, 0.5, 0.3};
    const std::vector<TokenId> history = {0, 1};
    EXPECT_EQ(no_repeat_mask(history, {}, 2, d).dist, (Distribution{0.2, 0.5, 0.3}));
    const std::vector<TokenId> prefix = {0};
    EXPECT_EQ(no_repeat_mask(history, prefix, 0, d).dist, d);
    EXPECT_EQ(no_repeat_mask({}, {}, 2, d).dist, d);
}

TEST(NoRepeat, UnigramBansEverySeenToken) {
    const std::vector<TokenId> history = {0};
    const std::vector<TokenId> prefix = {2};
    const auto r = no_repeat_mask(history, prefix, 1, {0.2, 0.5, 0.3});
    EXPECT_EQ(r.dist, (Distribution{0.0, 1.0, 0.0}));
}

TEST(NoRepeat, AllMaskedFallback) {
    const std::vector<TokenId> history = {0, 1};
    const std::vector<TokenId> prefix = {};
    const Distribution d = {0.5, 0.5};
    const auto r = no_repeat_mask(history, prefix, 1, d);
    EXPECT_TRUE(r.all_masked);
    EXPECT_EQ(r.dist, d);
}

TEST(MinLen, ZeroesEndToken) {
    const auto d = min_len_mask({0.3, 0.3, 0.4}, 0, 5, 2);
    EXPECT_EQ(d[2], 0.0);
    EXPECT_NEAR(d[0], 0.3 / 0.6, 1e-15);
    EXPECT_NEAR(d[1], 0.3 / 0.6, 1e-15);
    EXPECT_EQ(min_len_mask({0.3, 0.3, 0.4}, 5, 5, 2), (Distribution{0.3, 0.3, 0.4}));
    EXPECT_EQ(min_len_mask({0.3, 0.3, 0.4}, 0, 0, 2), (Distribution{0.3, 0.3, 0.4}));
}

TEST(MinLen, OnlyEndTokenLeftIsReturned) {
    EXPECT_EQ(min_len_mask({0.0, 1.0}, 0, 3, 1), (Distribution{0.0, 1.0}));
}

TEST(LengthPenalty, HandValues) {
    EXPECT_DOUBLE_EQ(length_penalized_score(-4.0, 4, 0.0), -4.0);
    EXPECT_DOUBLE_EQ(length_penalized_score(-4.0, 4, 1.0), -1.0);
    EXPECT_NEAR(length_penalized_score(-4.0, 4, 1.6), -0.43527528164806206, 1e-15);
    EXPECT_NEAR(length_penalized_score(-4.0, 4, 1.6), -0.4353, 1e-4);
    EXPECT_THROW(length_penalized_score(-1.0, 0, 1.0), DataError);
}

TEST(Sampling, InverseCdfIsSeeded) {
    std::mt19937_64 a(42), b(42);
    const Distribution d = {0.2, 0.3, 0.5};
    for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_token(d, a), sample_token(d, b));
    std::mt19937_64 r(1);
    for (int i = 0; i < 1000; ++i) EXPECT_NE(sample_token({0.0, 1.0, 0.0}, r), 0u);
}

TEST(Strategy, Names) {
    for (auto s : {Strategy::kGreedy, Strategy::kSampling, Strategy::kBeam, Strategy::kBeamSampling}) {
        EXPECT_EQ(parse_strategy(to_string(s)), s);
    }
    EXPECT_FALSE(parse_strategy("nucleus"));
}

TEST(DecodeConfigValidation, Ranges) {
    DecodeConfig c;
    EXPECT_NO_THROW(validate(c));
    c.temperature = 0.0;
    EXPECT_THROW(validate(c), ConfigError);
    c = {};
    c.top_p = 0.0;
    EXPECT_THROW(validate(c), ConfigError);
    c = {};
    c.top_p = 1.5;
    EXPECT_THROW(validate(c), ConfigError);
    c = {};
    c.beam_size = 0;
    EXPECT_THROW(validate(c), ConfigError);
    c = {};
    c.length_penalty = -1.0;
    EXPECT_THROW(validate(c), ConfigError);
    c = {};
    c.max_len = 0;
    EXPECT_THROW(validate(c), ConfigError);
    c = {};
    c.min_len = 200;
    EXPECT_THROW(validate(c), ConfigError);
}

TEST(TableScorerType, VocabAndRenormalization) {
    TableScorer s({{{}, {{"b", 2.0}, {"a", 2.0}}}}, std::map<std::string, double>{{eod, 1.0}});
    const std::vector<std::string> vocab = {"<EOD>", "a", "b"};
    EXPECT_EQ(s.vocab(), vocab);
    EXPECT_EQ(s.eod(), 0u);
    const auto d = s.next_dist({}, {});
    EXPECT_EQ(d, (Distribution{0.0, 0.5, 0.5}));
    const std::vector<TokenId> prefix = {1};
    EXPECT_EQ(s.next_dist({}, prefix), (Distribution{1.0, 0.0, 0.0}));
    EXPECT_EQ(s.lookup("zzz"), kUnknownToken);
}

TEST(TableScorerType, LoadFromJsonl) {
    testkit::TempDir dir;
    testkit::write_text(dir / "t.jsonl", "{\"prefix\": [], \"dist\": {\"x\": 0.7, \"<EOD>\": 0.3}}\n"
                                         "{\"default\": true, \"dist\": {\"<EOD>\": 1.0}}\n");
    const auto s = TableScorer::load(dir / "t.jsonl");
    const std::vector<TokenId> prefix = {s.lookup("x")};
    EXPECT_NEAR(s.next_dist({}, {})[s.lookup("x")], 0.7, 1e-15);
    EXPECT_EQ(s.next_dist({}, prefix)[s.eod()], 1.0);
    testkit::write_text(dir / "bad.jsonl", "{\"prefix\": [], \"dist\": {\"x\": 0.0}}\n");
    EXPECT_THROW(TableScorer::load(dir / "bad.jsonl"), Error);
}

TEST(TableScorerType, MissingRowWithoutDefault) {
    TableScorer s({{{}, {{"x", 1.0}}}}, std::nullopt);
    const std::vector<TokenId> prefix = {s.lookup("x")};
    EXPECT_THROW(s.next_dist({}, prefix), DataError);
}

TEST(Decode, GreedyAndBeamFindUniqueBest) {
    const auto s = xy_scorer();
    const auto g = decode(s, {}, plain(Strategy::kGreedy));
    EXPECT_EQ(g.tokens, (TokenSeq{"x", "y"}));
    EXPECT_TRUE(g.ended_with_eod);
    const auto b = decode(s, {}, plain(Strategy::kBeam));
    EXPECT_EQ(b.tokens, (TokenSeq{"x", "y"}));
    EXPECT_NEAR(b.cumulative_logprob, std::log(0.6 * 0.9 * 0.9), 1e-12);
}

TEST(Decode, CumulativeEqualsStepSum) {
    const auto s = xy_scorer();
    for (auto st : {Strategy::kGreedy, Strategy::kSampling, Strategy::kBeam, Strategy::kBeamSampling}) {
        auto cfg = plain(st);
        cfg.seed = 9;
        const auto r = decode(s, {}, cfg);
        EXPECT_NEAR(r.cumulative_logprob, std::accumulate(r.step_logprobs.begin(), r.step_logprobs.end(), 0.0), 1e-9);
        EXPECT_EQ(r.step_logprobs.size(), r.tokens.size() + (r.ended_with_eod ? 1 : 0));
    }
}

TEST(Decode, BeamWidthOneIsGreedy) {
    std::mt19937_64 rng(17);
    for (int i = 0; i < 30; ++i) {
        const auto s = testkit::random_table_scorer(rng, 3, 4);
        auto beam = plain(Strategy::kBeam);
        beam.beam_size = 1;
        beam.max_len = 4;
        auto greedy = plain(Strategy::kGreedy);
        greedy.max_len = 4;
        EXPECT_EQ(decode(s, {}, beam).ids, decode(s, {}, greedy).ids);
    }
}

TEST(Decode, FullWidthBeamMatchesExhaustiveSearch) {
    std::mt19937_64 rng(23);
    for (int i = 0; i < 20; ++i) {
        const auto s = testkit::random_table_scorer(rng, 3, 3);
        auto cfg = plain(Strategy::kBeam);
        cfg.beam_size = 27;
        cfg.max_len = 3;
        cfg.length_penalty = 0.0;
        const auto best = testkit::brute_force_best(s, 3, 0.0);
        const auto r = decode(s, {}, cfg);
        EXPECT_EQ(r.ids, best.ids);
        EXPECT_EQ(r.ended_with_eod, best.ended);
        EXPECT_NEAR(r.cumulative_logprob, best.cumulative, 1e-12);
    }
}

TEST(Decode, MaxLenAndMinLen) {
    // Default row favours continuing; max_len truncates.
    TableScorer s({}, std::map<std::string, double>{{"a", 0.9}, {eod, 0.1}});
    auto cfg = plain(Strategy::kGreedy);
    cfg.max_len = 5;
    const auto r = decode(s, {}, cfg);
    EXPECT_EQ(r.tokens.size(), 5u);
    EXPECT_FALSE(r.ended_with_eod);

    TableScorer early({}, std::map<std::string, double>{{"a", 0.1}, {eod, 0.9}});
    cfg.min_len = 3;
    const auto m = decode(early, {}, cfg);
    EXPECT_EQ(m.tokens.size(), 3u);
    EXPECT_TRUE(m.ended_with_eod);
}

TEST(Decode, ContextTruncatedToMostRecent) {
    // With no_repeat over the context, only the kept tail of the context bans tokens.
    TableScorer s({}, std::map<std::string, double>{{"a", 0.5}, {"b", 0.3}, {eod, 0.2}});
    auto cfg = plain(Strategy::kGreedy);
    cfg.no_repeat_n = 1;
    cfg.max_len = 1;
    cfg.max_context_len = 1;
    EXPECT_EQ(decode(s, TokenSeq{"a", "b"}, cfg).tokens, (TokenSeq{"a"}));
    cfg.max_context_len = 2;
    const auto r = decode(s, TokenSeq{"a", "b"}, cfg);
    EXPECT_TRUE(r.tokens.empty());
    EXPECT_TRUE(r.ended_with_eod);
}

TEST(Decode, SamplingDeterministicPerSeed) {
    std::mt19937_64 rng(5);
    const auto s = testkit::random_table_scorer(rng, 4, 4);
    for (auto st : {Strategy::kSampling, Strategy::kBeamSampling}) {
        auto cfg = plain(st);
        cfg.max_len = 4;
        cfg.seed = 1234;
        const auto a = decode(s, {}, cfg);
        const auto b = decode(s, {}, cfg);
        EXPECT_EQ(a.ids, b.ids);
        EXPECT_EQ(a.cumulative_logprob, b.cumulative_logprob);
        EXPECT_EQ(a.seed, 1234u);
    }
}

TEST(Decode, ResultJson) {
    DecodeResult r;
    r.tokens = TokenSeq{"x"};
    r.ids = {1};
    r.cumulative_logprob = -0.5;
    r.step_logprobs = {-0.25, -0.25};
    r.ended_with_eod = true;
    EXPECT_EQ(result_to_json(r, "x"),
              R"({"text":"x","tokens":["x"],"cumulative_logprob":-0.5,"step_logprobs":[-0.25,-0.25],)"
              R"("ended_with_eod":true,"all_masked_fallback":false,"seed":0})");
}

TEST(NGramScorerType, VocabularyMapping) {
    TokenizerConfig tok;
    tok.mode = TokenizerMode::kWhitespace;
    auto lm = std::make_shared<const NGramLM>(
        train_lm({DialogueSession("a", "w", {Utterance("x y"), Utterance("y x")})}, LMTrainConfig{}, tok));
    NGramScorer s(lm);
    const std::vector<std::string> vocab = {"<EOD>", "x", "y"};
    EXPECT_EQ(s.vocab(), vocab);
    EXPECT_NEAR(total(s.next_dist({}, {})), 1.0, 1e-12);
    const std::vector<TokenId> prefix = {1, 2};
    EXPECT_NEAR(total(s.next_dist({}, prefix)), 1.0, 1e-12);
}

TEST(SelfChat, TwoUtterances) {
    const auto s = xy_scorer();
    auto cfg = plain(Strategy::kGreedy);
    const auto session = self_chat(s, s, Utterance("开场"), 2, cfg, TokenizerConfig{});
    ASSERT_EQ(session.size(), 2u);
    EXPECT_EQ(session.utterances()[0].text(), "开场");
    EXPECT_EQ(session.utterances()[1].text(), "xy");
}

TEST(SelfChat, DeterministicAndBounded) {
    std::mt19937_64 rng(8);
    const auto a = testkit::random_table_scorer(rng, 4, 3);
    DecodeConfig cfg;
    cfg.max_len = 3;
    const auto s1 = self_chat(a, a, Utterance("t0"), 10, cfg, TokenizerConfig{});
    const auto s2 = self_chat(a, a, Utterance("t0"), 10, cfg, TokenizerConfig{});
    EXPECT_EQ(s1, s2);
    ASSERT_EQ(s1.size(), 10u);
    for (std::size_t i = 1; i < s1.size(); ++i) {
        // Tokens are "t0".."t3"; each takes two characters.
        EXPECT_LE(s1.utterances()[i].text().size(), 2 * cfg.max_len);
        EXPECT_GE(s1.utterances()[i].text().size(), 2u);
    }
}
