#pragma once

#include <map>
#include <string>
#include <vector>

#include "dialogkit/decoding.hpp"

namespace dialogkit::testkit {

struct BruteForceResult {
    std::vector<TokenId> ids;
    double cumulative = 0.0;
    double score = 0.0;
    bool ended = false;
};

// Enumerates every sequence the decoder can return with masks disabled: sequences closed by
// <EOD> at length l (scored over l steps) and sequences truncated at max_len.
BruteForceResult brute_force_best(const SequenceScorer& scorer, std::size_t max_len, double alpha);

// Add-k bigram probability computed directly from padded bigram counts.
class BigramAddKOracle {
public:
    BigramAddKOracle(const std::vector<std::vector<std::string>>& utterances, double k);
    double prob(const std::string& history, const std::string& word) const;
    const std::vector<std::string>& vocab() const { return vocab_; }

private:
    double k_;
    std::vector<std::string> vocab_;
    std::map<std::pair<std::string, std::string>, double> bigram_;
    std::map<std::string, double> history_;
};

// Pearson statistic over categories with positive expected probability. Any observation in a
// zero-probability category makes the statistic infinite.
double chi_square(const std::vector<std::size_t>& observed, const std::vector<double>& expected_prob);

// Whether the output stream (history followed by output) repeats an n-gram whose second
// occurrence ends inside the output.
bool has_generated_repeat(const std::vector<TokenId>& history, const std::vector<TokenId>& output, std::size_t n);

}  // namespace dialogkit::testkit
