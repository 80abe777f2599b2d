#include <gtest/gtest.h>

#include <cmath>

#include "dialogkit/error.hpp"
#include "dialogkit/metrics.hpp"

using namespace dialogkit;

TEST(UnigramF1, HandValues) {
    EXPECT_NEAR(unigram_f1({TokenSeq{"a", "b"}, TokenSeq{"a", "c", "d"}}), 0.4, 1e-12);
    EXPECT_DOUBLE_EQ(unigram_f1({TokenSeq{"a", "b"}, TokenSeq{"a", "b"}}), 1.0);
    EXPECT_DOUBLE_EQ(unigram_f1({TokenSeq{"x"}, TokenSeq{"a"}}), 0.0);
    EXPECT_DOUBLE_EQ(unigram_f1({TokenSeq{}, TokenSeq{"a"}}), 0.0);
}

TEST(UnigramF1, ClippedCounts) {
    // Overlap is min(3, 1) = 1: P = 1/3, R = 1/2.
    EXPECT_NEAR(unigram_f1({TokenSeq{"a", "a", "a"}, TokenSeq{"a", "b"}}), 0.4, 1e-12);
}

TEST(RougeL, HandValues) {
    EXPECT_NEAR(rouge_l({TokenSeq{"a", "b", "c", "d"}, TokenSeq{"a", "c", "d"}}), 6.0 / 7.0, 1e-12);
    EXPECT_DOUBLE_EQ(rouge_l({TokenSeq{"a", "b"}, TokenSeq{"a", "b"}}), 1.0);
    EXPECT_DOUBLE_EQ(rouge_l({TokenSeq{"x"}, TokenSeq{"a"}}), 0.0);
    EXPECT_EQ(lcs_length(TokenSeq{"a", "b", "c", "d"}, TokenSeq{"a", "c", "d"}), 3u);
}

TEST(Bleu4, BrevityPenaltyOnly) {
    const double b = bleu4({{TokenSeq{"a", "b", "c", "d"}, TokenSeq{"a", "b", "c", "d", "e"}}});
    EXPECT_NEAR(b, std::exp(1.0 - 5.0 / 4.0), 1e-12);
    EXPECT_NEAR(b, 0.7788, 1e-4);
}

TEST(Bleu4, PerfectAndSmoothed) {
    EXPECT_NEAR(bleu4({{TokenSeq{"a", "b", "c", "d"}, TokenSeq{"a", "b", "c", "d"}}}), 1.0, 1e-12);
    const double short_hyp = bleu4({{TokenSeq{"a", "b"}, TokenSeq{"a", "b", "c", "d"}}});
    EXPECT_GT(short_hyp, 0.0);
    // p1 = p2 = 1, p3 = p4 = 1/(0+1) with no 3- or 4-grams; BP = exp(1 - 4/2).
    EXPECT_NEAR(short_hyp, std::exp(1.0 - 2.0), 1e-12);
    EXPECT_DOUBLE_EQ(bleu4({{TokenSeq{"x"}, TokenSeq{"a"}}}), 0.0);
}

TEST(Distinct4, HandValues) {
    EXPECT_DOUBLE_EQ(distinct4({TokenSeq{"a", "a", "a", "a", "a"}}), 0.5);
    EXPECT_DOUBLE_EQ(distinct4({TokenSeq{"a", "b", "c", "d", "e"}}), 1.0);
    EXPECT_DOUBLE_EQ(distinct4({TokenSeq{"a", "b"}}), 0.0);
    EXPECT_DOUBLE_EQ(distinct_n({TokenSeq{"a", "b", "a", "b"}}, 2), 2.0 / 3.0);
}

TEST(Evaluate, MeansAndCorpusLevel) {
    const EvalPair p1{TokenSeq{"a", "b"}, TokenSeq{"a", "c", "d"}};
    const EvalPair p2{TokenSeq{"a", "b", "c", "d"}, TokenSeq{"a", "c", "d"}};
    const auto r = evaluate({p1, p2});
    EXPECT_NEAR(r.f1, (0.4 + unigram_f1(p2)) / 2.0, 1e-12);
    EXPECT_NEAR(r.rouge_l, (rouge_l(p1) + 6.0 / 7.0) / 2.0, 1e-12);
    EXPECT_NEAR(r.bleu4, bleu4({p1, p2}), 1e-15);
    EXPECT_NEAR(r.distinct4, distinct4({p1.hypothesis, p2.hypothesis}), 1e-15);
    EXPECT_EQ(r.pairs, 2u);
}

TEST(Evaluate, PerfectPair) {
    const TokenSeq s{"a", "b", "c", "d", "e"};
    const auto r = evaluate({{s, s}});
    EXPECT_DOUBLE_EQ(r.f1, 1.0);
    EXPECT_DOUBLE_EQ(r.rouge_l, 1.0);
    EXPECT_NEAR(r.bleu4, 1.0, 1e-12);
    EXPECT_DOUBLE_EQ(r.distinct4, 1.0);
}

TEST(Evaluate, Errors) {
    EXPECT_THROW(evaluate({}), DataError);
    EXPECT_THROW(evaluate({{TokenSeq{"a"}, TokenSeq{}}}), DataError);
}
