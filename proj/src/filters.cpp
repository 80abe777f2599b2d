#include "dialogkit/filters.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dialogkit/error.hpp"
#include "dialogkit/parallel.hpp"
#include "dialogkit/unicode.hpp"

namespace dialogkit {

CharMap::CharMap(std::unordered_map<char32_t, char32_t> table) {
    for (const auto& [from, to] : table) {
        if (from == to) continue;
        char32_t cur = to;
        std::size_t hops = 0;
        for (auto it = table.find(cur); it != table.end() && it->second != cur; it = table.find(cur)) {
            cur = it->second;
            if (++hops > table.size()) {
                throw ConfigError("character map contains a cycle through U+" + std::to_string(from));
            }
        }
        if (cur == from) throw ConfigError("character map contains a cycle through U+" + std::to_string(from));
        table_.emplace(from, cur);
    }
}

CharMap CharMap::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open character map: " + path.string());
    std::unordered_map<char32_t, char32_t> table;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto body = unicode::trim(line);
        if (body.empty() || body.front() == '#') continue;
        std::vector<std::u32string> fields;
        std::u32string cur;
        for (char32_t c : unicode::decode(body)) {
            if (unicode::is_space(c)) {
                if (!cur.empty()) fields.push_back(std::move(cur));
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
        if (!cur.empty()) fields.push_back(std::move(cur));
        if (fields.size() != 2 || fields[0].size() != 1 || fields[1].size() != 1) {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                              ": expected two single characters per line");
        }
        table[fields[0][0]] = fields[1][0];
    }
    return CharMap(std::move(table));
}

std::string CharMap::apply(std::string_view text) const {
    if (table_.empty()) return std::string(text);
    std::string out;
    out.reserve(text.size());
    for (char32_t c : unicode::decode(text)) {
        auto it = table_.find(c);
        unicode::append(out, it == table_.end() ? c : it->second);
    }
    return out;
}

void validate(const FilterConfig& cfg) {
    if (cfg.max_responses_per_context < 1) throw ConfigError("max_responses_per_context must be >= 1");
    if (cfg.punct_run_max < 1) throw ConfigError("punct_run_max must be >= 1");
    validate(cfg.weights);
}

std::string_view to_string(FilterStage stage) {
    switch (stage) {
        case FilterStage::kNone: return "none";
        case FilterStage::kDataset: return "dataset";
        case FilterStage::kContext: return "context";
        case FilterStage::kRule: return "rule";
        case FilterStage::kClassifier: return "classifier";
    }
    return "none";
}

FilterOutcome dataset_filter(const DialogueSession& session, const FilterConfig& cfg) {
    if (cfg.excluded_sources.count(session.source())) {
        return FilterOutcome::reject(FilterStage::kDataset, "source \"" + session.source() + "\" is excluded");
    }
    return FilterOutcome::keep();
}

std::string collapse_punct_runs(std::string_view text, std::size_t max_run) {
    std::string out;
    out.reserve(text.size());
    char32_t prev = 0;
    std::size_t run = 0;
    for (char32_t c : unicode::decode(text)) {
        if (unicode::is_punct(c) && c == prev) {
            ++run;
        } else {
            run = 1;
        }
        prev = c;
        if (unicode::is_punct(c) && run > max_run) continue;
        unicode::append(out, c);
    }
    return out;
}

RuleResult rule_filter(const DialogueSession& session, const FilterConfig& cfg) {
    std::vector<Utterance> utterances;
    utterances.reserve(session.size());
    for (const auto& u : session.utterances()) {
        utterances.emplace_back(collapse_punct_runs(cfg.char_map.apply(u.text()), cfg.punct_run_max));
    }
    DialogueSession normalized(session.id(), session.source(), std::move(utterances));

    for (const auto& raw_term : cfg.blacklist) {
        const std::string term = cfg.char_map.apply(raw_term);
        if (term.empty()) continue;
        for (std::size_t i = 0; i < normalized.size(); ++i) {
            if (normalized.utterances()[i].text().find(term) != std::string::npos) {
                return {FilterOutcome::reject(FilterStage::kRule, "blacklisted term \"" + raw_term +
                                                                      "\" in utterance " + std::to_string(i)),
                        std::move(normalized)};
            }
        }
    }
    return {FilterOutcome::keep(), std::move(normalized)};
}

double threshold_for(const std::string& source, const FilterConfig& cfg) {
    if (auto it = cfg.source_thresholds.find(source); it != cfg.source_thresholds.end()) return it->second;
    if (cfg.default_threshold) return *cfg.default_threshold;
    throw ConfigError("no classifier threshold for source \"" + source + "\" and no default threshold");
}

FilterOutcome classifier_filter(const DialogueSession& session, const QualityReport& scores,
                                const FilterConfig& cfg) {
    const double threshold = threshold_for(session.source(), cfg);
    if (scores.combined < threshold) {
        std::ostringstream detail;
        detail << "combined score " << scores.combined << " below threshold " << threshold;
        return FilterOutcome::reject(FilterStage::kClassifier, detail.str());
    }
    return FilterOutcome::keep();
}

std::optional<std::string> context_key(const DialogueSession& session, const TokenizerConfig& tok) {
    if (session.size() < 2) return std::nullopt;
    // U+001E between tokens, U+001D between utterances; neither survives tokenization.
    std::string key;
    for (std::size_t i = 0; i + 1 < session.size(); ++i) {
        if (i > 0) key.push_back('\x1d');
        bool first = true;
        for (const auto& t : session.utterances()[i].tokens(tok)) {
            if (!first) key.push_back('\x1e');
            key += t;
            first = false;
        }
    }
    return key;
}

void ContextDedup::add(std::optional<std::string> key, double score) {
    const std::size_t index = count_++;
    if (!key || k_ == kUnlimitedResponses) return;
    groups_[std::move(*key)].emplace_back(score, index);
}

std::vector<std::size_t> ContextDedup::rejected() const {
    std::vector<std::size_t> out;
    for (const auto& [key, members] : groups_) {
        if (members.size() <= k_) continue;
        auto ranked = members;
        // Highest score first; equal scores keep the earlier session.
        std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
        for (std::size_t i = k_; i < ranked.size(); ++i) out.push_back(ranked[i].second);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<bool> context_filter(const std::vector<ScoredSession>& sessions, const FilterConfig& cfg) {
    ContextDedup dedup(cfg.max_responses_per_context);
    for (const auto& s : sessions) dedup.add(context_key(s.session, cfg.tokenizer), s.score);
    std::vector<bool> kept(sessions.size(), true);
    for (std::size_t i : dedup.rejected()) kept[i] = false;
    return kept;
}

std::string rejection_to_json(const Rejection& r) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["stage"] = std::string(to_string(r.stage));
    j["detail"] = r.detail;
    return j.dump(-1, ' ', false, nlohmann::ordered_json::error_handler_t::replace);
}

FilterPipeline::FilterPipeline(FilterConfig cfg, const QualityScorer& scorer) : cfg_(std::move(cfg)), scorer_(&scorer) {
    validate(cfg_);
}

SessionVerdict FilterPipeline::evaluate(const DialogueSession& session) const {
    SessionVerdict v;
    if (auto out = dataset_filter(session, cfg_); !out.kept) {
        v.rejection = Rejection{session.id(), out.stage, std::move(out.detail)};
        return v;
    }
    auto rule = rule_filter(session, cfg_);
    if (!rule.outcome.kept) {
        v.rejection = Rejection{session.id(), rule.outcome.stage, std::move(rule.outcome.detail)};
        return v;
    }
    v.report = scorer_->score(rule.session);
    v.scored = true;
    v.key = context_key(rule.session, cfg_.tokenizer);
    if (auto out = classifier_filter(rule.session, v.report, cfg_); !out.kept) {
        v.rejection = Rejection{session.id(), out.stage, std::move(out.detail)};
        return v;
    }
    v.normalized = std::move(rule.session);
    return v;
}

PipelineResult run_pipeline(const std::vector<DialogueSession>& sessions, const FilterPipeline& pipeline,
                            std::size_t workers) {
    std::vector<SessionVerdict> verdicts(sessions.size());
    parallel_for(sessions.size(), workers, [&](std::size_t i) { verdicts[i] = pipeline.evaluate(sessions[i]); });

    // Context slots are ranked among every scored session, including those the classifier
    // rejects, so a threshold change never hands a slot to a different session.
    ContextDedup dedup(pipeline.config().max_responses_per_context);
    std::vector<std::size_t> survivors;
    for (std::size_t i = 0; i < verdicts.size(); ++i) {
        if (!verdicts[i].scored) continue;
        survivors.push_back(i);
        dedup.add(verdicts[i].key, verdicts[i].report.combined);
    }
    std::vector<bool> capped(sessions.size(), false);
    for (std::size_t j : dedup.rejected()) capped[survivors[j]] = true;

    PipelineResult result;
    for (std::size_t i = 0; i < verdicts.size(); ++i) {
        auto& v = verdicts[i];
        if (v.rejection) {
            result.rejected.push_back(std::move(*v.rejection));
        } else if (capped[i]) {
            result.rejected.push_back(Rejection{sessions[i].id(), FilterStage::kContext,
                                                "context exceeds " +
                                                    std::to_string(pipeline.config().max_responses_per_context) +
                                                    " responses; score not in the top group"});
        } else {
            result.kept.push_back(std::move(*v.normalized));
        }
    }
    return result;
}

}  // namespace dialogkit
