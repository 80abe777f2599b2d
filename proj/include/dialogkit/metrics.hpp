#pragma once

#include <string>
#include <vector>

#include "dialogkit/corpus.hpp"

namespace dialogkit {

struct EvalPair {
    TokenSeq hypothesis;
    TokenSeq reference;  // non-empty
};

struct EvalReport {
    double f1 = 0.0;
    double rouge_l = 0.0;
    double bleu4 = 0.0;
    double distinct4 = 0.0;
    std::size_t pairs = 0;
};

// Clipped unigram overlap F1. 0 when the hypothesis is empty or nothing overlaps.
double unigram_f1(const EvalPair& pair);

// LCS-based F-measure with beta = 1 (symmetric in hypothesis and reference).
double rouge_l(const EvalPair& pair);
std::size_t lcs_length(const TokenSeq& a, const TokenSeq& b);

// Corpus BLEU-4: uniform weights over clipped 1..4-gram precisions, brevity penalty
// exp(1 - r/c) when c <= r, and add-one smoothing for orders 2..4 with no matches.
double bleu4(const std::vector<EvalPair>& pairs);

// Unique 4-grams over total 4-grams, pooled across all hypotheses.
double distinct4(const std::vector<TokenSeq>& hyps);
double distinct_n(const std::vector<TokenSeq>& hyps, std::size_t n);

// F1 and ROUGE-L are macro-averaged; BLEU-4 and distinct-4 are corpus-level.
// Throws DataError for an empty list or an empty reference.
EvalReport evaluate(const std::vector<EvalPair>& pairs);

std::string report_to_json(const EvalReport& report);

}  // namespace dialogkit
