#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "dialogkit/corpus.hpp"
#include "dialogkit/ngram_lm.hpp"

namespace dialogkit {

struct RelevanceParams {
    double tau = 1.0;
    // false: every (context token, response token) pair with equal surface form counts.
    // true: each token type counts once per context utterance.
    bool dedupe_pairs = false;
};

struct RelevanceScore {
    double value = 0.0;
    bool empty_response = false;
};

/// Untrained relevance: sum over equal (context token, response token) pairs of dist^tau,
/// where dist is the number of utterances between the context utterance and the response
/// (the last context utterance has dist 1).
RelevanceScore relevance_s1(const ContextResponsePair& pair, const RelevanceParams& params,
                            const TokenizerConfig& tok);

/// Probability that a response is appropriate for its context.
class RelevanceClassifier {
public:
    virtual ~RelevanceClassifier() = default;
    // Must return a value in [0, 1] and be deterministic.
    virtual double classify(const ContextResponsePair& pair) const = 0;
};

inline constexpr double kDefaultS2Floor = -20.0;

// Natural log of the classifier probability, clamped below at floor.
double relevance_s2(const ContextResponsePair& pair, const RelevanceClassifier& clf,
                    double floor = kDefaultS2Floor);

struct NaiveBayesOptions {
    std::uint64_t seed = 0;
    TokenizerConfig tokenizer;
    std::size_t min_pairs = 100;
};

/// Multinomial naive Bayes over context/response token co-occurrence features.
///
/// Positives are the training pairs; negatives pair every context with a response drawn
/// from a different training pair. The summed log-odds are mapped to a probability by a
/// logistic (Platt) fit on the training data.
class NaiveBayesRelevanceClassifier final : public RelevanceClassifier {
public:
    double classify(const ContextResponsePair& pair) const override;
    double log_odds(const ContextResponsePair& pair) const;

    double platt_scale() const noexcept { return platt_a_; }
    double platt_bias() const noexcept { return platt_b_; }

    friend std::unique_ptr<NaiveBayesRelevanceClassifier> reference_classifier(
        const std::vector<ContextResponsePair>& train, const NaiveBayesOptions& options);

private:
    std::vector<std::uint64_t> features(const ContextResponsePair& pair) const;

    TokenizerConfig tok_;
    std::unordered_map<std::uint64_t, std::pair<double, double>> counts_;  // (positive, negative)
    double total_pos_ = 0.0;
    double total_neg_ = 0.0;
    double prior_log_odds_ = 0.0;
    double platt_a_ = 1.0;
    double platt_b_ = 0.0;
};

// Throws DataError with fewer than options.min_pairs pairs.
std::unique_ptr<NaiveBayesRelevanceClassifier> reference_classifier(
    const std::vector<ContextResponsePair>& train, const NaiveBayesOptions& options = {});

// Every split of every session with at least two utterances, as training positives.
std::vector<ContextResponsePair> training_pairs(const std::vector<DialogueSession>& sessions);

/// Mean per-utterance log-probability (higher is more fluent).
double fluency_s3(const DialogueSession& session, const NGramLM& lm, const TokenizerConfig& tok);

/// Normalized name list for substring matching.
class StarList {
public:
    StarList() = default;
    explicit StarList(const std::vector<std::string>& names);
    static StarList load(const std::filesystem::path& path);

    bool empty() const noexcept { return names_.empty(); }
    const std::vector<std::string>& names() const noexcept { return names_; }

private:
    std::vector<std::string> names_;
};

// True iff any utterance contains a listed name after width and case folding.
// Throws ConfigError for an empty list.
bool entertainment_flag(const DialogueSession& session, const StarList& stars);

struct QualityWeights {
    double alpha = 1.0;
    double beta = 0.0;
    double gamma = 0.0;
};

// Throws ConfigError if every weight is zero.
void validate(const QualityWeights& w);

double combined_score(double s1, double s2, double s3, const QualityWeights& w);

struct QualityReport {
    std::string id;
    double s1 = 0.0;
    std::optional<double> s2;   // absent without a classifier
    std::optional<double> s3;   // absent without a language model
    std::optional<double> relevance_prob;
    bool entertainment = false;
    bool empty_response = false;
    double combined = 0.0;
};

std::string report_to_json(const QualityReport& report);

/// Bundles every scorer needed to produce a QualityReport for a session.
/// Single-utterance sessions have no context: s1 = 0 and s2 is left absent.
class QualityScorer {
public:
    struct Options {
        TokenizerConfig tokenizer;
        RelevanceParams relevance;
        QualityWeights weights;
        double s2_floor = kDefaultS2Floor;
    };

    // lm and clf may be null; they are then required to have zero weight.
    QualityScorer(Options options, std::shared_ptr<const NGramLM> lm,
                  std::shared_ptr<const RelevanceClassifier> clf, StarList stars);

    QualityReport score(const DialogueSession& session) const;
    const Options& options() const noexcept { return options_; }

private:
    Options options_;
    std::shared_ptr<const NGramLM> lm_;
    std::shared_ptr<const RelevanceClassifier> clf_;
    StarList stars_;
};

/// Corpus-level means, mergeable across shards.
class QualityAggregate {
public:
    void add(const QualityReport& r);
    void merge(const QualityAggregate& other);

    std::uint64_t sessions() const noexcept { return n_; }
    double mean_s1() const;
    double mean_s2() const;
    double mean_s3() const;
    double entertainment_ratio() const;
    // Fraction of scored pairs the classifier judges appropriate (probability > 0.5).
    double relevance_rate() const;

    std::string to_json() const;

private:
    std::uint64_t n_ = 0;
    std::uint64_t n_s2_ = 0;
    std::uint64_t n_s3_ = 0;
    std::uint64_t n_prob_ = 0;
    std::uint64_t n_relevant_ = 0;
    std::uint64_t n_ent_ = 0;
    double sum_s1_ = 0.0;
    double sum_s2_ = 0.0;
    double sum_s3_ = 0.0;
};

}  // namespace dialogkit
