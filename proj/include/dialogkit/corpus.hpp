#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace dialogkit {

/// An ordered sequence of non-empty token strings.
class TokenSeq {
public:
    TokenSeq() = default;
    // Throws DataError if any token is empty.
    explicit TokenSeq(std::vector<std::string> tokens);
    TokenSeq(std::initializer_list<std::string> tokens);

    void push_back(std::string token);

    const std::vector<std::string>& tokens() const noexcept { return tokens_; }
    std::size_t size() const noexcept { return tokens_.size(); }
    bool empty() const noexcept { return tokens_.empty(); }
    const std::string& operator[](std::size_t i) const { return tokens_[i]; }
    auto begin() const noexcept { return tokens_.begin(); }
    auto end() const noexcept { return tokens_.end(); }

    friend bool operator==(const TokenSeq&, const TokenSeq&) = default;

private:
    std::vector<std::string> tokens_;
};

enum class TokenizerMode { kChar, kWhitespace, kExternalVocab };

struct ExternalVocab {
    std::unordered_set<std::string> tokens;
    std::size_t max_scalars = 1;  // length of the longest entry, in Unicode scalars
};

struct TokenizerConfig {
    TokenizerMode mode = TokenizerMode::kChar;
    bool lowercase = false;
    // Drops punctuation tokens. Intended for metric computation only.
    bool strip_punct_for_metrics = false;
    // Used by kExternalVocab: greedy longest match against this set, falling back to
    // single scalars for text the vocabulary does not cover.
    std::shared_ptr<const ExternalVocab> vocab;
};

std::optional<TokenizerMode> parse_tokenizer_mode(std::string_view name);
std::string_view to_string(TokenizerMode mode);

// Loads one token per line for kExternalVocab.
std::shared_ptr<const ExternalVocab> load_vocab(const std::filesystem::path& path);

TokenSeq tokenize(std::string_view text, const TokenizerConfig& cfg);

// Inverse of tokenize for display: char/external-vocab concatenate, whitespace joins with ' '.
std::string detokenize(const TokenSeq& tokens, TokenizerMode mode);

class Utterance {
public:
    // Throws DataError when the text is empty after trimming.
    explicit Utterance(std::string text);

    const std::string& text() const noexcept { return text_; }
    TokenSeq tokens(const TokenizerConfig& cfg) const { return tokenize(text_, cfg); }

    friend bool operator==(const Utterance&, const Utterance&) = default;

private:
    std::string text_;
};

class DialogueSession {
public:
    // Throws DataError if source is empty or there are no utterances.
    DialogueSession(std::string id, std::string source, std::vector<Utterance> utterances);

    const std::string& id() const noexcept { return id_; }
    const std::string& source() const noexcept { return source_; }
    const std::vector<Utterance>& utterances() const noexcept { return utterances_; }
    std::size_t size() const noexcept { return utterances_.size(); }

    friend bool operator==(const DialogueSession&, const DialogueSession&) = default;

private:
    std::string id_;
    std::string source_;
    std::vector<Utterance> utterances_;
};

struct ContextResponsePair {
    std::vector<Utterance> context;
    Utterance response;
};

// context = utterances[0..k), response = utterances[k]. Requires 1 <= k < session.size().
ContextResponsePair split_at(const DialogueSession& session, std::size_t k);

// Splits before the final utterance. Requires session.size() >= 2.
ContextResponsePair last_pair(const DialogueSession& session);

// ---------------------------------------------------------------------------
// JSONL corpus I/O. One session per line: {"id": str, "source": str, "dialog": [str, ...]}

enum class CorpusFormat { kJsonl };

struct RecordError {
    std::size_t line = 0;
    std::string message;
};

// Parses a single JSONL record. Throws DataError (without line information) when malformed.
DialogueSession parse_session(std::string_view line);

// Canonical single-line encoding with keys in id, source, dialog order. No trailing newline.
std::string format_session(const DialogueSession& session);

/// Pull-based reader over a JSONL corpus.
///
/// Lenient mode skips malformed records, reporting each through the error handler
/// (or collecting it when no handler is set) and continues with the next line.
/// Strict mode throws DataError on the first malformed record. Memory use is bounded
/// by the longest line.
class SessionReader {
public:
    using ErrorHandler = std::function<void(const RecordError&)>;

    SessionReader(std::istream& in, bool strict = false);
    SessionReader(const std::filesystem::path& path, bool strict = false,
                  CorpusFormat format = CorpusFormat::kJsonl);

    std::optional<DialogueSession> next();

    void on_error(ErrorHandler handler) { handler_ = std::move(handler); }
    const std::vector<RecordError>& errors() const noexcept { return errors_; }
    std::size_t line_number() const noexcept { return line_; }
    std::uint64_t bytes_read() const noexcept { return bytes_; }

private:
    std::unique_ptr<std::ifstream> owned_;
    std::istream* in_;
    bool strict_;
    std::size_t line_ = 0;
    std::uint64_t bytes_ = 0;
    std::string buffer_;
    std::vector<RecordError> errors_;
    ErrorHandler handler_;
};

std::vector<DialogueSession> read_all_sessions(const std::filesystem::path& path, bool strict = false);

class SessionWriter {
public:
    explicit SessionWriter(std::ostream& out) : out_(&out) {}
    void write(const DialogueSession& session);

private:
    std::ostream* out_;
};

// ---------------------------------------------------------------------------
// Corpus statistics

struct CorpusStats {
    std::uint64_t n_sessions = 0;
    std::uint64_t n_utterances = 0;
    std::uint64_t n_tokens = 0;
    double avg_uttr_per_session = 0.0;
    double avg_tokens_per_utterance = 0.0;
    std::uint64_t bytes_on_disk = 0;
};

/// Associative accumulator so shards can be counted independently and merged.
class StatsAccumulator {
public:
    explicit StatsAccumulator(TokenizerConfig cfg) : cfg_(std::move(cfg)) {}

    void add(const DialogueSession& session);
    void add_bytes(std::uint64_t bytes) { bytes_ += bytes; }
    void merge(const StatsAccumulator& other);

    std::uint64_t sessions() const noexcept { return sessions_; }

    // Throws DataError if no session was added.
    CorpusStats finish() const;

private:
    TokenizerConfig cfg_;
    std::uint64_t sessions_ = 0;
    std::uint64_t utterances_ = 0;
    std::uint64_t tokens_ = 0;
    std::uint64_t bytes_ = 0;
};

// Drains the reader. bytes_on_disk is the number of bytes the reader consumed.
CorpusStats corpus_stats(SessionReader& reader, const TokenizerConfig& cfg);
CorpusStats corpus_stats(const std::vector<DialogueSession>& sessions, const TokenizerConfig& cfg);

std::string stats_to_json(const CorpusStats& stats);

}  // namespace dialogkit
