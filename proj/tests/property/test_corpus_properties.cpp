#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "dialogkit/corpus.hpp"
#include "synthetic.hpp"

using namespace dialogkit;

namespace {

std::string random_text(std::mt19937_64& rng) {
    static const std::vector<std::string> pieces = {"你", "好", "a", "B", " ", "\"", "\\", "\n", "\t", "é", "😀", "！", "/", "x"};
    std::string s = "起";
    const std::size_t n = rng() % 12;
    for (std::size_t i = 0; i < n; ++i) s += pieces[rng() % pieces.size()];
    return s;
}

std::vector<DialogueSession> random_sessions(std::mt19937_64& rng, std::size_t n) {
    std::vector<DialogueSession> out;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<Utterance> us;
        const std::size_t k = 1 + rng() % 5;
        for (std::size_t j = 0; j < k; ++j) us.emplace_back(random_text(rng));
        out.emplace_back("id" + std::to_string(rng() % 1000), rng() % 2 ? "weibo" : "源", std::move(us));
    }
    return out;
}

}  // namespace

TEST(CorpusProperty, WriteReadRoundTrip) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        std::mt19937_64 rng(seed);
        const auto sessions = random_sessions(rng, 20);
        std::stringstream buf;
        SessionWriter writer(buf);
        for (const auto& s : sessions) writer.write(s);
        SessionReader reader(buf, true);
        std::vector<DialogueSession> back;
        while (auto s = reader.next()) back.push_back(std::move(*s));
        EXPECT_EQ(back, sessions) << "seed " << seed;
    }
}

TEST(CorpusProperty, FormatParseIsIdentity) {
    std::mt19937_64 rng(99);
    for (const auto& s : random_sessions(rng, 300)) {
        EXPECT_EQ(parse_session(format_session(s)), s);
        EXPECT_EQ(format_session(parse_session(format_session(s))), format_session(s));
    }
}

TEST(CorpusProperty, StatsInvariantUnderSharding) {
    const TokenizerConfig tok;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        std::mt19937_64 rng(seed);
        const auto sessions = random_sessions(rng, 40);
        const CorpusStats whole = corpus_stats(sessions, tok);
        StatsAccumulator merged(tok);
        std::size_t i = 0;
        while (i < sessions.size()) {
            const std::size_t len = 1 + rng() % 10;
            StatsAccumulator shard(tok);
            for (std::size_t j = i; j < std::min(sessions.size(), i + len); ++j) {
                shard.add(sessions[j]);
                shard.add_bytes(format_session(sessions[j]).size() + 1);
            }
            merged.merge(shard);
            i += len;
        }
        EXPECT_EQ(stats_to_json(merged.finish()), stats_to_json(whole));
    }
}

TEST(CorpusProperty, TokenizeDetokenizeCharMode) {
    std::mt19937_64 rng(5);
    const TokenizerConfig tok;
    for (int i = 0; i < 500; ++i) {
        const std::string text = random_text(rng);
        const TokenSeq t = tokenize(text, tok);
        std::string no_space;
        for (char c : text) {
            if (c != ' ' && c != '\n' && c != '\t') no_space += c;
        }
        EXPECT_EQ(detokenize(t, TokenizerMode::kChar), no_space);
    }
}
