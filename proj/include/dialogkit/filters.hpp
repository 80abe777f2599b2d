#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dialogkit/corpus.hpp"
#include "dialogkit/quality.hpp"

namespace dialogkit {

/// Scalar-to-scalar rewrite table (e.g. traditional to simplified characters).
/// Chains are resolved at construction so applying the map twice equals applying it once.
class CharMap {
public:
    using Table = std::unordered_map<char32_t, char32_t>;

    CharMap() = default;
    // Throws ConfigError on a mapping cycle.
    explicit CharMap(std::unordered_map<char32_t, char32_t> table);

    // One mapping per line: "<from><whitespace><to>". '#' starts a comment.
    // Throws ConfigError if the file is missing or malformed.
    static CharMap load(const std::filesystem::path& path);

    std::string apply(std::string_view text) const;
    std::size_t size() const noexcept { return table_.size(); }

private:
    std::unordered_map<char32_t, char32_t> table_;
};

inline constexpr std::size_t kUnlimitedResponses = std::numeric_limits<std::size_t>::max();

struct FilterConfig {
    std::set<std::string> excluded_sources;
    std::size_t max_responses_per_context = 10;  // kUnlimitedResponses disables the stage
    std::vector<std::string> blacklist;
    CharMap char_map;
    std::size_t punct_run_max = 3;
    std::map<std::string, double> source_thresholds;
    std::optional<double> default_threshold;
    QualityWeights weights;
    TokenizerConfig tokenizer;
};

// Throws ConfigError on K < 1, punct_run_max < 1, or invalid weights.
void validate(const FilterConfig& cfg);

enum class FilterStage { kNone, kDataset, kContext, kRule, kClassifier };

std::string_view to_string(FilterStage stage);

struct FilterOutcome {
    bool kept = true;
    FilterStage stage = FilterStage::kNone;
    std::string detail;

    static FilterOutcome keep() { return {}; }
    static FilterOutcome reject(FilterStage stage, std::string detail) { return {false, stage, std::move(detail)}; }
};

FilterOutcome dataset_filter(const DialogueSession& session, const FilterConfig& cfg);

// Collapses runs longer than max_run of one repeated punctuation scalar down to max_run.
std::string collapse_punct_runs(std::string_view text, std::size_t max_run);

struct RuleResult {
    FilterOutcome outcome;
    DialogueSession session;  // normalized, whether kept or not
};

// Character mapping, then punctuation-run collapse, then blacklist substring check.
RuleResult rule_filter(const DialogueSession& session, const FilterConfig& cfg);

// Throws ConfigError if neither a source threshold nor a default is configured.
double threshold_for(const std::string& source, const FilterConfig& cfg);

// Rejects iff combined < threshold (equality keeps).
FilterOutcome classifier_filter(const DialogueSession& session, const QualityReport& scores,
                                const FilterConfig& cfg);

// Grouping key: every utterance except the last, tokenized, joined with a reserved separator.
// Sessions with a single utterance have no context and return std::nullopt.
std::optional<std::string> context_key(const DialogueSession& session, const TokenizerConfig& tok);

struct ScoredSession {
    DialogueSession session;
    double score = 0.0;
};

/// Keeps at most K sessions per context: the K highest scores, ties to the earliest.
/// Returns one flag per input (true = kept); kept sessions stay in input order.
std::vector<bool> context_filter(const std::vector<ScoredSession>& sessions, const FilterConfig& cfg);

/// Incremental form of context_filter, for callers that hold only (key, score) per session.
class ContextDedup {
public:
    explicit ContextDedup(std::size_t max_per_context) : k_(max_per_context) {}
    void add(std::optional<std::string> key, double score);
    // Indices (in add() order) rejected by the per-context cap, ascending.
    std::vector<std::size_t> rejected() const;

private:
    std::size_t k_;
    std::size_t count_ = 0;
    std::unordered_map<std::string, std::vector<std::pair<double, std::size_t>>> groups_;
};

struct Rejection {
    std::string id;
    FilterStage stage = FilterStage::kNone;
    std::string detail;
};

std::string rejection_to_json(const Rejection& r);

/// Result of the per-session stages (dataset, rule, classifier) for one session.
struct SessionVerdict {
    std::optional<Rejection> rejection;
    std::optional<DialogueSession> normalized;   // set when the session survived
    std::optional<std::string> key;
    QualityReport report;
    bool scored = false;  // passed the dataset and rule stages
};

/// The refinement pipeline: dataset -> rule -> classifier scoring -> context dedup.
/// Context groups rank every session that reached the classifier; a session is kept when it
/// passes the classifier threshold and holds one of the top K slots of its context.
class FilterPipeline {
public:
    FilterPipeline(FilterConfig cfg, const QualityScorer& scorer);

    // Stateless per-session stages; safe to call concurrently.
    SessionVerdict evaluate(const DialogueSession& session) const;

    const FilterConfig& config() const noexcept { return cfg_; }

private:
    FilterConfig cfg_;
    const QualityScorer* scorer_;
};

struct PipelineResult {
    std::vector<DialogueSession> kept;
    std::vector<Rejection> rejected;  // input order
};

// Every input lands in exactly one of kept / rejected. workers > 1 parallelizes the
// per-session stages; the output does not depend on the worker count.
PipelineResult run_pipeline(const std::vector<DialogueSession>& sessions, const FilterPipeline& pipeline,
                            std::size_t workers = 1);

}  // namespace dialogkit
