#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dialogkit/ngram_lm.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

using namespace dialogkit;

namespace {

TokenizerConfig ws() {
    TokenizerConfig c;
    c.mode = TokenizerMode::kWhitespace;
    return c;
}

std::vector<std::vector<std::string>> random_utterances(std::mt19937_64& rng, std::size_t n, std::size_t alphabet,
                                                        std::size_t max_len) {
    std::vector<std::vector<std::string>> out;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::string> u;
        const std::size_t len = 1 + rng() % max_len;
        for (std::size_t j = 0; j < len; ++j) u.push_back("w" + std::to_string(rng() % alphabet));
        out.push_back(u);
    }
    return out;
}

NGramLM train(const std::vector<std::vector<std::string>>& utts, int order, Smoothing sm, double k = 0.1) {
    LMTrainConfig cfg;
    cfg.order = order;
    cfg.smoothing = sm;
    cfg.k = k;
    NGramTrainer trainer(cfg, ws());
    for (const auto& u : utts) trainer.add_utterance(TokenSeq(u));
    return trainer.build();
}

}  // namespace

TEST(LMProperty, RandomHistoriesNormalize) {
    for (auto sm : {Smoothing::kKneserNey, Smoothing::kAddK}) {
        std::mt19937_64 rng(1);
        const NGramLM lm = train(random_utterances(rng, 200, 12, 8), 3, sm);
        for (int i = 0; i < 1000; ++i) {
            const std::vector<WordId> h = {static_cast<WordId>(rng() % lm.vocab_size()),
                                           static_cast<WordId>(rng() % lm.vocab_size())};
            double total = 0.0;
            for (double p : lm.distribution(h)) {
                EXPECT_GT(p, 0.0);
                total += p;
            }
            EXPECT_NEAR(total, 1.0, 1e-9);
        }
    }
}

TEST(LMProperty, TrainingSequencesBeatScrambledOnes) {
    std::mt19937_64 rng(2);
    std::vector<std::vector<std::string>> utts;
    for (int i = 0; i < 200; ++i) {
        const int start = static_cast<int>(rng() % 10);
        std::vector<std::string> u;
        for (int j = 0; j < 6; ++j) u.push_back("w" + std::to_string((start + j) % 10));
        utts.push_back(u);
    }
    const NGramLM lm = train(utts, 3, Smoothing::kKneserNey);
    for (int i = 0; i < 100; ++i) {
        const auto& u = utts[rng() % utts.size()];
        auto scrambled = u;
        std::reverse(scrambled.begin(), scrambled.end());
        EXPECT_GT(lm.logprob(TokenSeq(u)), lm.logprob(TokenSeq(scrambled)));
    }
}

TEST(LMProperty, BigramAddKMatchesOracle) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        std::mt19937_64 rng(seed);
        const auto utts = random_utterances(rng, 1 + rng() % 5, 6, 4);
        const double k = 0.01 + static_cast<double>(rng() % 100) / 50.0;
        const NGramLM lm = train(utts, 2, Smoothing::kAddK, k);
        const testkit::BigramAddKOracle oracle(utts, k);
        ASSERT_EQ(lm.vocab(), oracle.vocab());
        for (WordId h = 0; h < lm.vocab_size(); ++h) {
            for (WordId w = 0; w < lm.vocab_size(); ++w) {
                const std::vector<WordId> hist = {h};
                EXPECT_NEAR(lm.prob(hist, w), oracle.prob(lm.vocab()[h], lm.vocab()[w]), 1e-12);
            }
        }
    }
}

TEST(LMProperty, SaveLoadPreservesEveryQuery) {
    std::mt19937_64 rng(4);
    for (auto sm : {Smoothing::kKneserNey, Smoothing::kAddK}) {
        const NGramLM lm = train(random_utterances(rng, 50, 8, 6), 3, sm);
        std::stringstream buf;
        lm.save(buf);
        const NGramLM back = NGramLM::load(buf);
        for (const auto& h : lm.observed_histories()) EXPECT_EQ(lm.distribution(h), back.distribution(h));
    }
}
