#include "dialogkit/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include <json.hpp>

#include "dialogkit/error.hpp"

namespace dialogkit {

TokenId SequenceScorer::lookup(std::string_view token) const {
    const auto& v = vocab();
    for (TokenId i = 0; i < v.size(); ++i) {
        if (v[i] == token) return i;
    }
    return kUnknownToken;
}

namespace {

void normalize_in_place(Distribution& d) {
    const double total = std::accumulate(d.begin(), d.end(), 0.0);
    if (!(total > 0.0)) throw DataError("distribution has no probability mass");
    for (double& p : d) p /= total;
}

}  // namespace

// ---------------------------------------------------------------------------
// Scorers

TableScorer::TableScorer(std::map<std::vector<std::string>, std::map<std::string, double>> rows,
                         std::optional<std::map<std::string, double>> default_row) {
    std::set<std::string> words{std::string(kEod)};
    for (const auto& [prefix, dist] : rows) {
        for (const auto& [w, p] : dist) words.insert(w);
        for (const auto& w : prefix) words.insert(w);
    }
    if (default_row) {
        for (const auto& [w, p] : *default_row) words.insert(w);
    }
    vocab_.assign(words.begin(), words.end());
    eod_ = static_cast<TokenId>(std::distance(words.begin(), words.find(std::string(kEod))));

    auto to_dist = [&](const std::map<std::string, double>& row) {
        Distribution d(vocab_.size(), 0.0);
        for (const auto& [w, p] : row) {
            if (!(p >= 0.0) || !std::isfinite(p)) throw ConfigError("table scorer: negative or invalid probability");
            d[static_cast<std::size_t>(std::distance(words.begin(), words.find(w)))] = p;
        }
        normalize_in_place(d);
        return d;
    };
    for (const auto& [prefix, dist] : rows) {
        std::vector<TokenId> ids;
        for (const auto& w : prefix) ids.push_back(static_cast<TokenId>(std::distance(words.begin(), words.find(w))));
        rows_.emplace(std::move(ids), to_dist(dist));
    }
    if (default_row) default_ = to_dist(*default_row);
}

TableScorer TableScorer::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scorer table: " + path.string());
    std::map<std::vector<std::string>, std::map<std::string, double>> rows;
    std::optional<std::map<std::string, double>> default_row;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            auto j = nlohmann::json::parse(line);
            auto dist = j.at("dist").get<std::map<std::string, double>>();
            if (j.value("default", false)) {
                default_row = std::move(dist);
            } else {
                rows[j.at("prefix").get<std::vector<std::string>>()] = std::move(dist);
            }
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return TableScorer(std::move(rows), std::move(default_row));
}

Distribution TableScorer::next_dist(std::span<const TokenId> /*context*/, std::span<const TokenId> prefix) const {
    auto it = rows_.find(std::vector<TokenId>(prefix.begin(), prefix.end()));
    if (it != rows_.end()) return it->second;
    if (default_) return *default_;
    throw DataError("table scorer has no row for this prefix and no default row");
}

NGramScorer::NGramScorer(std::shared_ptr<const NGramLM> lm) : lm_(std::move(lm)) {
    const auto& v = lm_->vocab();
    for (WordId i = 0; i < v.size(); ++i) {
        if (i == NGramLM::kBosId || i == NGramLM::kUnkId) continue;
        if (i == NGramLM::kEosId) {
            eod_ = static_cast<TokenId>(vocab_.size());
            vocab_.emplace_back(kEod);
        } else {
            vocab_.push_back(v[i]);
        }
        to_lm_.push_back(i);
    }
}

Distribution NGramScorer::next_dist(std::span<const TokenId> /*context*/, std::span<const TokenId> prefix) const {
    std::vector<WordId> history;
    const std::size_t keep = static_cast<std::size_t>(lm_->order() - 1);
    const std::size_t start = prefix.size() > keep ? prefix.size() - keep : 0;
    for (std::size_t i = start; i < prefix.size(); ++i) {
        history.push_back(prefix[i] < to_lm_.size() ? to_lm_[prefix[i]] : NGramLM::kUnkId);
    }
    const auto full = lm_->distribution(history);
    Distribution d(vocab_.size());
    for (std::size_t i = 0; i < vocab_.size(); ++i) d[i] = full[to_lm_[i]];
    normalize_in_place(d);
    return d;
}

// ---------------------------------------------------------------------------

std::optional<Strategy> parse_strategy(std::string_view name) {
    if (name == "greedy") return Strategy::kGreedy;
    if (name == "sampling") return Strategy::kSampling;
    if (name == "beam") return Strategy::kBeam;
    if (name == "beam+sampling") return Strategy::kBeamSampling;
    return std::nullopt;
}

std::string_view to_string(Strategy s) {
    switch (s) {
        case Strategy::kGreedy: return "greedy";
        case Strategy::kSampling: return "sampling";
        case Strategy::kBeam: return "beam";
        case Strategy::kBeamSampling: return "beam+sampling";
    }
    return "greedy";
}

void validate(const DecodeConfig& cfg) {
    if (!(cfg.temperature > 0.0)) throw ConfigError("temperature must be > 0");
    if (!(cfg.top_p > 0.0 && cfg.top_p <= 1.0)) throw ConfigError("top_p must be in (0, 1]");
    if (cfg.beam_size < 1) throw ConfigError("beam_size must be >= 1");
    if (!(cfg.length_penalty >= 0.0)) throw ConfigError("length_penalty must be >= 0");
    if (cfg.max_len < 1) throw ConfigError("max_len must be >= 1");
    if (cfg.min_len > cfg.max_len) throw ConfigError("min_len must not exceed max_len");
}

std::string result_to_json(const DecodeResult& r, std::optional<std::string> text) {
    nlohmann::ordered_json j;
    if (text) j["text"] = std::move(*text);
    j["tokens"] = r.tokens.tokens();
    j["cumulative_logprob"] = r.cumulative_logprob;
    j["step_logprobs"] = r.step_logprobs;
    j["ended_with_eod"] = r.ended_with_eod;
    j["all_masked_fallback"] = r.all_masked_fallback;
    j["seed"] = r.seed;
    return j.dump(-1, ' ', false, nlohmann::ordered_json::error_handler_t::replace);
}

// ---------------------------------------------------------------------------
// Distribution transforms

Distribution apply_temperature(const Distribution& dist, double temperature) {
    if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
    if (temperature == 1.0) return dist;
    double max_p = 0.0;
    for (double p : dist) max_p = std::max(max_p, p);
    if (!(max_p > 0.0)) throw DataError("distribution has no probability mass");
    const double log_max = std::log(max_p);
    Distribution out(dist.size(), 0.0);
    for (std::size_t i = 0; i < dist.size(); ++i) {
        if (dist[i] > 0.0) out[i] = std::exp((std::log(dist[i]) - log_max) / temperature);
    }
    normalize_in_place(out);
    return out;
}

Distribution softmax_with_temperature(std::span<const double> logits, double temperature) {
    if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
    if (logits.empty()) return {};
    const double max_l = *std::max_element(logits.begin(), logits.end());
    Distribution out(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] = std::exp((logits[i] - max_l) / temperature);
    normalize_in_place(out);
    return out;
}

Distribution top_p_filter(const Distribution& dist, double p) {
    if (!(p > 0.0 && p <= 1.0)) throw ConfigError("top_p must be in (0, 1]");
    std::vector<TokenId> order(dist.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](TokenId a, TokenId b) { return dist[a] > dist[b]; });
    Distribution out(dist.size(), 0.0);
    double cum = 0.0;
    for (TokenId id : order) {
        if (dist[id] <= 0.0) break;
        out[id] = dist[id];
        cum += dist[id];
        if (cum + 1e-12 >= p) break;
    }
    normalize_in_place(out);
    return out;
}

MaskResult no_repeat_mask(std::span<const TokenId> history, std::span<const TokenId> prefix, std::size_t n,
                          const Distribution& dist) {
    if (n == 0) return {dist, false};
    std::vector<TokenId> stream(history.begin(), history.end());
    stream.insert(stream.end(), prefix.begin(), prefix.end());
    const std::size_t lead = n - 1;
    if (stream.size() < lead || stream.size() < n) return {dist, false};

    Distribution out = dist;
    bool banned_any = false;
    const std::size_t lead_start = stream.size() - lead;
    for (std::size_t i = 0; i + n <= stream.size(); ++i) {
        if (std::equal(stream.begin() + static_cast<std::ptrdiff_t>(i),
                       stream.begin() + static_cast<std::ptrdiff_t>(i + lead),
                       stream.begin() + static_cast<std::ptrdiff_t>(lead_start))) {
            const TokenId banned = stream[i + lead];
            if (banned < out.size() && out[banned] > 0.0) {
                out[banned] = 0.0;
                banned_any = true;
            }
        }
    }
    if (!banned_any) return {dist, false};
    const double total = std::accumulate(out.begin(), out.end(), 0.0);
    if (!(total > 0.0)) return {dist, true};
    for (double& q : out) q /= total;
    return {std::move(out), false};
}

Distribution min_len_mask(const Distribution& dist, std::size_t step_index, std::size_t min_len, TokenId eod) {
    if (step_index >= min_len || eod >= dist.size() || dist[eod] <= 0.0) return dist;
    Distribution out = dist;
    out[eod] = 0.0;
    const double total = std::accumulate(out.begin(), out.end(), 0.0);
    if (!(total > 0.0)) return dist;
    for (double& q : out) q /= total;
    return out;
}

double length_penalized_score(double cum_logprob, std::size_t length, double alpha) {
    if (length < 1) throw DataError("length penalty needs length >= 1");
    if (alpha == 0.0) return cum_logprob;
    return cum_logprob / std::pow(static_cast<double>(length), alpha);
}

TokenId sample_token(const Distribution& dist, std::mt19937_64& rng) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    const double total = std::accumulate(dist.begin(), dist.end(), 0.0);
    const double target = u * total;
    double cum = 0.0;
    TokenId last_nonzero = kUnknownToken;
    for (TokenId i = 0; i < dist.size(); ++i) {
        if (dist[i] <= 0.0) continue;
        cum += dist[i];
        last_nonzero = i;
        if (target < cum) return i;
    }
    if (last_nonzero == kUnknownToken) throw DataError("cannot sample from an empty distribution");
    return last_nonzero;
}

// ---------------------------------------------------------------------------
// Decoding

namespace {

struct Hypothesis {
    std::vector<TokenId> ids;
    double cum = 0.0;
    std::vector<double> steps;
    bool fallback = false;
};

bool is_sampling(Strategy s) { return s == Strategy::kSampling || s == Strategy::kBeamSampling; }

class Decoder {
public:
    Decoder(const SequenceScorer& scorer, std::span<const TokenId> context, const DecodeConfig& cfg)
        : scorer_(scorer), context_(context), cfg_(cfg), rng_(cfg.seed) {}

    DecodeResult run() {
        switch (cfg_.strategy) {
            case Strategy::kGreedy:
            case Strategy::kSampling: return single_path();
            case Strategy::kBeam:
            case Strategy::kBeamSampling: return beam();
        }
        return single_path();
    }

private:
    Distribution step_distribution(const Hypothesis& h, bool& fallback) {
        Distribution d = scorer_.next_dist(context_, h.ids);
        if (d.size() != scorer_.vocab().size()) throw DataError("scorer returned a distribution of the wrong size");
        const bool sampling = is_sampling(cfg_.strategy);
        if (sampling) d = apply_temperature(d, cfg_.temperature);
        d = min_len_mask(d, h.ids.size(), cfg_.min_len, scorer_.eod());
        if (cfg_.no_repeat_n > 0) {
            auto masked = no_repeat_mask(context_, h.ids, cfg_.no_repeat_n, d);
            fallback = fallback || masked.all_masked;
            d = std::move(masked.dist);
        }
        if (sampling) d = top_p_filter(d, cfg_.top_p);
        return d;
    }

    DecodeResult finish(const Hypothesis& h, bool ended) const {
        DecodeResult r;
        r.ids = h.ids;
        for (TokenId id : h.ids) r.tokens.push_back(scorer_.vocab()[id]);
        r.cumulative_logprob = h.cum;
        r.step_logprobs = h.steps;
        r.ended_with_eod = ended;
        r.all_masked_fallback = h.fallback;
        r.seed = cfg_.seed;
        return r;
    }

    DecodeResult single_path() {
        Hypothesis h;
        while (h.ids.size() < cfg_.max_len) {
            const Distribution d = step_distribution(h, h.fallback);
            TokenId next;
            if (cfg_.strategy == Strategy::kGreedy) {
                next = static_cast<TokenId>(std::distance(d.begin(), std::max_element(d.begin(), d.end())));
            } else {
                next = sample_token(d, rng_);
            }
            const double lp = std::log(d[next]);
            h.cum += lp;
            h.steps.push_back(lp);
            if (next == scorer_.eod()) return finish(h, true);
            h.ids.push_back(next);
        }
        return finish(h, false);
    }

    struct Candidate {
        std::size_t parent;
        TokenId token;
        double logp;
        double cum;
    };

    struct Finished {
        Hypothesis hyp;
        bool ended;
        double score;
    };

    double penalized(const Hypothesis& h, std::size_t length) const {
        return length_penalized_score(h.cum, length, cfg_.length_penalty);
    }

    // Adds to the pool, keeping the beam_size best (stable on ties).
    void add_finished(std::vector<Finished>& pool, Finished f) const {
        auto pos = std::upper_bound(pool.begin(), pool.end(), f.score,
                                    [](double s, const Finished& x) { return s > x.score; });
        pool.insert(pos, std::move(f));
        if (pool.size() > cfg_.beam_size) pool.pop_back();
    }

    // Per-hypothesis candidates: the beam_size most probable tokens (the end token included),
    // or beam_size draws without replacement for beam+sampling.
    std::vector<TokenId> expand(const Distribution& d) {
        std::vector<TokenId> picks;
        if (cfg_.strategy == Strategy::kBeamSampling) {
            Distribution remaining = d;
            for (std::size_t k = 0; k < cfg_.beam_size; ++k) {
                if (std::accumulate(remaining.begin(), remaining.end(), 0.0) <= 0.0) break;
                const TokenId t = sample_token(remaining, rng_);
                picks.push_back(t);
                remaining[t] = 0.0;
            }
            return picks;
        }
        for (TokenId i = 0; i < d.size(); ++i) {
            if (d[i] > 0.0) picks.push_back(i);
        }
        const std::size_t keep = std::min(picks.size(), cfg_.beam_size);
        std::partial_sort(picks.begin(), picks.begin() + static_cast<std::ptrdiff_t>(keep), picks.end(),
                          [&](TokenId a, TokenId b) { return d[a] > d[b] || (d[a] == d[b] && a < b); });
        picks.resize(keep);
        return picks;
    }

    DecodeResult beam() {
        std::vector<Hypothesis> live(1);
        std::vector<Finished> pool;
        const double max_len_penalty_base = static_cast<double>(cfg_.max_len);
        for (std::size_t step = 0; step < cfg_.max_len && !live.empty(); ++step) {
            std::vector<Candidate> cands;
            std::vector<bool> fallbacks(live.size(), false);
            for (std::size_t h = 0; h < live.size(); ++h) {
                bool fb = live[h].fallback;
                const Distribution d = step_distribution(live[h], fb);
                fallbacks[h] = fb;
                for (TokenId t : expand(d)) {
                    const double lp = std::log(d[t]);
                    cands.push_back({h, t, lp, live[h].cum + lp});
                }
            }
            std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) { return a.cum > b.cum; });
            // The beam_size best candidates survive; those ending in the end token are finished.
            if (cands.size() > cfg_.beam_size) cands.resize(cfg_.beam_size);
            std::vector<Hypothesis> next;
            for (const auto& c : cands) {
                const Hypothesis& parent = live[c.parent];
                if (c.token == scorer_.eod()) {
                    Hypothesis done = parent;
                    done.cum = c.cum;
                    done.steps.push_back(c.logp);
                    done.fallback = fallbacks[c.parent];
                    const double score = penalized(done, done.ids.size() + 1);
                    add_finished(pool, Finished{std::move(done), true, score});
                } else {
                    Hypothesis grown = parent;
                    grown.ids.push_back(c.token);
                    grown.cum = c.cum;
                    grown.steps.push_back(c.logp);
                    grown.fallback = fallbacks[c.parent];
                    next.push_back(std::move(grown));
                }
            }
            live = std::move(next);

            // Stop once no live hypothesis can beat the worst of a full finished pool.
            // Log-probabilities only decrease, so cum / max_len^alpha bounds any completion.
            if (pool.size() >= cfg_.beam_size && !live.empty()) {
                double best_bound = -std::numeric_limits<double>::infinity();
                for (const auto& h : live) {
                    const double bound = cfg_.length_penalty == 0.0
                                             ? h.cum
                                             : h.cum / std::pow(max_len_penalty_base, cfg_.length_penalty);
                    best_bound = std::max(best_bound, bound);
                }
                if (best_bound <= pool.back().score) live.clear();
            }
        }
        for (auto& h : live) {
            const double score = penalized(h, h.ids.size());
            add_finished(pool, Finished{std::move(h), false, score});
        }
        if (pool.empty()) throw DataError("beam search produced no hypothesis");
        return finish(pool.front().hyp, pool.front().ended);
    }

    const SequenceScorer& scorer_;
    std::span<const TokenId> context_;
    const DecodeConfig& cfg_;
    std::mt19937_64 rng_;
};

}  // namespace

DecodeResult decode_ids(const SequenceScorer& scorer, std::span<const TokenId> context, const DecodeConfig& cfg) {
    validate(cfg);
    if (context.size() > cfg.max_context_len) context = context.subspan(context.size() - cfg.max_context_len);
    return Decoder(scorer, context, cfg).run();
}

DecodeResult decode(const SequenceScorer& scorer, const TokenSeq& context, const DecodeConfig& cfg) {
    std::vector<TokenId> ids;
    ids.reserve(context.size());
    for (const auto& t : context) ids.push_back(scorer.lookup(t));
    return decode_ids(scorer, ids, cfg);
}

// ---------------------------------------------------------------------------

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace

DialogueSession self_chat(const SequenceScorer& scorer_a, const SequenceScorer& scorer_b, const Utterance& opening,
                          std::size_t max_utterances, const DecodeConfig& cfg, const TokenizerConfig& tok,
                          std::string id, std::string source) {
    if (max_utterances < 2) throw ConfigError("self-chat needs max_utterances >= 2");
    std::vector<Utterance> turns{opening};
    DecodeConfig turn_cfg = cfg;
    turn_cfg.min_len = std::max<std::size_t>(cfg.min_len, 1);
    turn_cfg.max_len = std::max(turn_cfg.max_len, turn_cfg.min_len);
    while (turns.size() < max_utterances) {
        const SequenceScorer& scorer = (turns.size() % 2 == 1) ? scorer_a : scorer_b;
        TokenSeq context;
        for (std::size_t i = 0; i < turns.size(); ++i) {
            if (i > 0) context.push_back(std::string(kTurnSeparator));
            for (const auto& t : turns[i].tokens(tok)) context.push_back(t);
        }
        turn_cfg.seed = splitmix64(cfg.seed ^ splitmix64(turns.size()));
        const DecodeResult r = decode(scorer, context, turn_cfg);
        std::string text = detokenize(r.tokens, tok.mode);
        try {
            turns.emplace_back(std::move(text));
        } catch (const DataError&) {
            throw DataError("self-chat turn " + std::to_string(turns.size()) + " decoded to an empty utterance");
        }
    }
    return DialogueSession(std::move(id), std::move(source), std::move(turns));
}

}  // namespace dialogkit
