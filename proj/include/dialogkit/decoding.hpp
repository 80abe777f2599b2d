#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dialogkit/corpus.hpp"
#include "dialogkit/ngram_lm.hpp"

namespace dialogkit {

using TokenId = std::uint32_t;
// Context tokens the scorer does not know. Never produced by decoding.
inline constexpr TokenId kUnknownToken = 0xFFFFFFFFu;
inline constexpr std::string_view kEod = "<EOD>";

using Distribution = std::vector<double>;

/// Next-token model consumed by the decoder. Distributions are post-softmax, indexed by
/// TokenId, include the end-of-response token, and sum to one.
class SequenceScorer {
public:
    virtual ~SequenceScorer() = default;
    virtual const std::vector<std::string>& vocab() const = 0;
    virtual TokenId eod() const = 0;
    virtual Distribution next_dist(std::span<const TokenId> context, std::span<const TokenId> prefix) const = 0;

    // kUnknownToken for strings outside the vocabulary.
    TokenId lookup(std::string_view token) const;
};

/// Table-driven scorer. Rows are looked up by the exact generated prefix; the context is
/// ignored. File format, one JSON object per line:
///   {"prefix": ["x", "y"], "dist": {"z": 0.7, "<EOD>": 0.3}}
///   {"default": true, "dist": {...}}
class TableScorer final : public SequenceScorer {
public:
    // dists are renormalized; each must have positive total mass.
    TableScorer(std::map<std::vector<std::string>, std::map<std::string, double>> rows,
                std::optional<std::map<std::string, double>> default_row);
    static TableScorer load(const std::filesystem::path& path);

    const std::vector<std::string>& vocab() const override { return vocab_; }
    TokenId eod() const override { return eod_; }
    Distribution next_dist(std::span<const TokenId> context, std::span<const TokenId> prefix) const override;

private:
    std::vector<std::string> vocab_;
    TokenId eod_ = 0;
    std::map<std::vector<TokenId>, Distribution> rows_;
    std::optional<Distribution> default_;
};

/// Adapts an NGramLM. The vocabulary is the LM vocabulary minus "<s>" and "<unk>", with "</s>"
/// renamed "<EOD>"; the LM distribution is renormalized over it. The LM history is the
/// generated prefix only, since the LM scores utterances independently.
class NGramScorer final : public SequenceScorer {
public:
    explicit NGramScorer(std::shared_ptr<const NGramLM> lm);

    const std::vector<std::string>& vocab() const override { return vocab_; }
    TokenId eod() const override { return eod_; }
    Distribution next_dist(std::span<const TokenId> context, std::span<const TokenId> prefix) const override;

private:
    std::shared_ptr<const NGramLM> lm_;
    std::vector<std::string> vocab_;
    std::vector<WordId> to_lm_;
    TokenId eod_ = 0;
};

enum class Strategy { kGreedy, kSampling, kBeam, kBeamSampling };

std::optional<Strategy> parse_strategy(std::string_view name);
std::string_view to_string(Strategy s);

struct DecodeConfig {
    Strategy strategy = Strategy::kBeamSampling;
    double temperature = 0.9;
    double top_p = 0.9;
    std::size_t beam_size = 4;
    double length_penalty = 1.6;
    std::size_t min_len = 0;
    std::size_t no_repeat_n = 4;  // 0 disables
    std::size_t max_len = 128;
    std::size_t max_context_len = 128;
    std::uint64_t seed = 0;
};

// Throws ConfigError when a field is out of range.
void validate(const DecodeConfig& cfg);

struct DecodeResult {
    TokenSeq tokens;  // without <EOD>
    std::vector<TokenId> ids;
    double cumulative_logprob = 0.0;
    std::vector<double> step_logprobs;
    bool ended_with_eod = false;
    bool all_masked_fallback = false;
    std::uint64_t seed = 0;
};

// `text`, when given, is emitted first as the detokenized response.
std::string result_to_json(const DecodeResult& r, std::optional<std::string> text = std::nullopt);

// ---------------------------------------------------------------------------
// Distribution transforms. Each returns a distribution summing to one.

// p_i^(1/T) renormalized. Throws ConfigError for T <= 0.
Distribution apply_temperature(const Distribution& dist, double temperature);
// softmax(logits / T). Throws ConfigError for T <= 0.
Distribution softmax_with_temperature(std::span<const double> logits, double temperature);

// Keeps the smallest descending-probability prefix with mass >= p (ties broken by lower id).
Distribution top_p_filter(const Distribution& dist, double p);

struct MaskResult {
    Distribution dist;
    bool all_masked = false;  // dist was returned unchanged because every token was banned
};

// Bans every token that would complete an n-gram already present in history ++ prefix.
// The (n-1)-token lead-in is the tail of history ++ prefix.
MaskResult no_repeat_mask(std::span<const TokenId> history, std::span<const TokenId> prefix, std::size_t n,
                          const Distribution& dist);

// Zeroes the end token while step_index < min_len. If that leaves no mass the input is returned.
Distribution min_len_mask(const Distribution& dist, std::size_t step_index, std::size_t min_len, TokenId eod);

// cum_logprob / length^alpha. Throws DataError for length < 1.
double length_penalized_score(double cum_logprob, std::size_t length, double alpha);

// Inverse-CDF draw with a 53-bit uniform taken from rng.
TokenId sample_token(const Distribution& dist, std::mt19937_64& rng);

// ---------------------------------------------------------------------------

/// Decodes one response. The context is truncated to its last max_context_len tokens.
/// Mask order per step: temperature -> min_len -> no_repeat -> top_p. Temperature and
/// top_p only apply to the sampling strategies.
DecodeResult decode(const SequenceScorer& scorer, const TokenSeq& context, const DecodeConfig& cfg);
DecodeResult decode_ids(const SequenceScorer& scorer, std::span<const TokenId> context, const DecodeConfig& cfg);

// Separator inserted between utterances when building a decoding context.
inline constexpr std::string_view kTurnSeparator = "<sep>";

/// Two scorers take turns replying, starting from the opening utterance, until the
/// session holds max_utterances utterances. Each turn decodes with min_len >= 1 and a seed
/// derived from cfg.seed and the turn index.
DialogueSession self_chat(const SequenceScorer& scorer_a, const SequenceScorer& scorer_b, const Utterance& opening,
                          std::size_t max_utterances, const DecodeConfig& cfg, const TokenizerConfig& tok,
                          std::string id = "selfchat", std::string source = "selfchat");

}  // namespace dialogkit
