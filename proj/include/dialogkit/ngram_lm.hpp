#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dialogkit/corpus.hpp"

namespace dialogkit {

enum class Smoothing : std::uint8_t { kAddK = 0, kKneserNey = 1 };

std::optional<Smoothing> parse_smoothing(std::string_view name);
std::string_view to_string(Smoothing s);

struct LMTrainConfig {
    int order = 3;
    Smoothing smoothing = Smoothing::kKneserNey;
    double k = 0.1;
    std::uint32_t min_count = 1;
};

using WordId = std::uint32_t;

/// Smoothed n-gram language model over utterances.
///
/// Every utterance is scored as a sentence: it is preceded by (order - 1) "<s>"
/// markers and followed by one "</s>". Conditional distributions range over the
/// full vocabulary, reserved tokens included, so P(. | h) sums to one for every
/// history h.
///
/// Add-k:            P(w|h) = (c(hw) + k) / (c(h) + k|V|) at the model order.
/// Kneser-Ney:       interpolated, one absolute discount per order; lower orders use
///                   continuation counts (raw counts for n-grams that start with "<s>"),
///                   and the unigram level interpolates with the uniform distribution.
///
/// Immutable once trained; safe for concurrent readers.
class NGramLM {
public:
    static constexpr std::string_view kBos = "<s>";
    static constexpr std::string_view kEos = "</s>";
    static constexpr std::string_view kUnk = "<unk>";
    static constexpr WordId kBosId = 0;
    static constexpr WordId kEosId = 1;
    static constexpr WordId kUnkId = 2;

    static constexpr std::uint8_t kFormatVersion = 1;

    int order() const noexcept { return order_; }
    Smoothing smoothing() const noexcept { return smoothing_; }
    std::size_t vocab_size() const noexcept { return vocab_.size(); }
    const std::vector<std::string>& vocab() const noexcept { return vocab_; }
    // Out-of-vocabulary strings map to kUnkId.
    WordId id(std::string_view token) const;
    const std::vector<double>& discounts() const noexcept { return discounts_; }

    // P(word | history). Only the last (order - 1) entries of history are used;
    // shorter histories are left-padded with <s>.
    double prob(std::span<const WordId> history, WordId word) const;
    // Full conditional distribution, indexed by WordId.
    std::vector<double> distribution(std::span<const WordId> history) const;

    // Natural-log probability of one utterance including the </s> event.
    double logprob(const TokenSeq& seq) const;

    void save(const std::filesystem::path& path) const;
    void save(std::ostream& out) const;
    static NGramLM load(const std::filesystem::path& path);
    static NGramLM load(std::istream& in);

    // ARPA text export (log10 probabilities and back-off weights). Kneser-Ney only.
    void write_arpa(std::ostream& out) const;

    // Histories observed during training at the model order, for diagnostics and tests.
    std::vector<std::vector<WordId>> observed_histories() const;

    friend class NGramTrainer;

private:
    struct Key {
        std::vector<WordId> ids;
        friend bool operator==(const Key&, const Key&) = default;
    };
    struct KeyHash {
        std::size_t operator()(const Key& k) const noexcept;
    };
    struct HistoryEntry {
        double total = 0.0;                               // sum of (adjusted) successor counts
        std::vector<std::pair<WordId, double>> successors;  // sorted by WordId
        double count_of(WordId w) const;
    };
    // tables_[m - 1]: histories of length m - 1 for the order-m level.
    using Table = std::unordered_map<Key, HistoryEntry, KeyHash>;

    NGramLM() = default;
    const HistoryEntry* find(int level, std::span<const WordId> history_tail) const;
    double prob_level(int level, std::span<const WordId> history, WordId word) const;
    void distribution_level(int level, std::span<const WordId> history, std::vector<double>& out) const;

    int order_ = 1;
    Smoothing smoothing_ = Smoothing::kKneserNey;
    double k_ = 0.1;
    std::uint32_t min_count_ = 1;
    std::vector<std::string> vocab_;
    std::unordered_map<std::string, WordId> index_;
    std::vector<double> discounts_;  // per level, Kneser-Ney only
    std::vector<Table> tables_;
};

/// Streaming trainer: feed sessions, then build().
class NGramTrainer {
public:
    // Throws ConfigError on order < 1, k <= 0, or min_count < 1.
    NGramTrainer(LMTrainConfig cfg, TokenizerConfig tok);

    void add(const DialogueSession& session);
    void add_utterance(const TokenSeq& tokens);

    // Throws DataError when nothing was added.
    NGramLM build() const;

private:
    LMTrainConfig cfg_;
    TokenizerConfig tok_;
    std::vector<std::vector<std::string>> sentences_;
};

NGramLM train_lm(const std::vector<DialogueSession>& sessions, const LMTrainConfig& cfg,
                 const TokenizerConfig& tok);
NGramLM train_lm(SessionReader& reader, const LMTrainConfig& cfg, const TokenizerConfig& tok);

double lm_logprob(const NGramLM& lm, const TokenSeq& seq);

}  // namespace dialogkit
