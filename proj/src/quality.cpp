#include "dialogkit/quality.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <unordered_set>

#include <json.hpp>

#include "dialogkit/error.hpp"
#include "dialogkit/unicode.hpp"

namespace dialogkit {

RelevanceScore relevance_s1(const ContextResponsePair& pair, const RelevanceParams& params,
                            const TokenizerConfig& tok) {
    if (params.tau < 0.0) throw ConfigError("relevance tau must be >= 0");
    if (pair.context.empty()) throw DataError("relevance_s1 needs at least one context utterance");

    const TokenSeq response = pair.response.tokens(tok);
    if (response.empty()) return {0.0, true};

    std::unordered_map<std::string_view, double> response_count;
    for (const auto& t : response) response_count[t] += 1.0;

    const std::size_t n = pair.context.size();
    double total = 0.0;
    for (std::size_t idx = 0; idx < n; ++idx) {
        const double dist = static_cast<double>(n - idx);
        const double weight = std::pow(dist, params.tau);
        const TokenSeq utt = pair.context[idx].tokens(tok);
        double matches = 0.0;
        if (params.dedupe_pairs) {
            std::unordered_set<std::string_view> seen;
            for (const auto& t : utt) {
                if (seen.insert(t).second && response_count.count(t)) matches += 1.0;
            }
        } else {
            for (const auto& t : utt) {
                if (auto it = response_count.find(t); it != response_count.end()) matches += it->second;
            }
        }
        total += weight * matches;
    }
    return {total, false};
}

double relevance_s2(const ContextResponsePair& pair, const RelevanceClassifier& clf, double floor) {
    const double p = clf.classify(pair);
    if (!(p >= 0.0 && p <= 1.0)) throw DataError("relevance classifier returned a value outside [0, 1]");
    if (p <= 0.0) return floor;
    return std::max(std::log(p), floor);
}

// ---------------------------------------------------------------------------

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

// Platt scaling: fits p = sigmoid(a * z + b) to smoothed targets by Newton's method with a
// backtracking line search, which stays stable when the classes are nearly separable.
std::pair<double, double> fit_platt(const std::vector<double>& z, const std::vector<int>& label) {
    double n_pos = 0, n_neg = 0;
    for (int y : label) (y ? n_pos : n_neg) += 1.0;
    const double t_pos = (n_pos + 1.0) / (n_pos + 2.0);
    const double t_neg = 1.0 / (n_neg + 2.0);
    auto loss = [&](double a, double b) {
        double f = 0.0;
        for (std::size_t i = 0; i < z.size(); ++i) {
            const double x = a * z[i] + b;
            const double t = label[i] ? t_pos : t_neg;
            f += t * softplus(-x) + (1.0 - t) * softplus(x);
        }
        return f;
    };
    double a = 0.0, b = std::log((n_pos + 1.0) / (n_neg + 1.0));
    double f = loss(a, b);
    constexpr double kRidge = 1e-12;
    for (int iter = 0; iter < 100; ++iter) {
        double g_a = 0, g_b = 0, h_aa = kRidge, h_ab = 0, h_bb = kRidge;
        for (std::size_t i = 0; i < z.size(); ++i) {
            const double p = sigmoid(a * z[i] + b);
            const double t = label[i] ? t_pos : t_neg;
            const double d = p - t;
            const double w = p * (1.0 - p);
            g_a += d * z[i];
            g_b += d;
            h_aa += w * z[i] * z[i];
            h_ab += w * z[i];
            h_bb += w;
        }
        if (std::abs(g_a) < 1e-9 && std::abs(g_b) < 1e-9) break;
        const double det = h_aa * h_bb - h_ab * h_ab;
        if (!(det > 0.0)) break;
        const double da = -(h_bb * g_a - h_ab * g_b) / det;
        const double db = -(h_aa * g_b - h_ab * g_a) / det;
        const double slope = g_a * da + g_b * db;
        double step = 1.0;
        bool moved = false;
        while (step >= 1e-10) {
            const double fa = loss(a + step * da, b + step * db);
            if (fa <= f + 1e-4 * step * slope) {
                a += step * da;
                b += step * db;
                f = fa;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if (!moved) break;
    }
    return {a, b};
}

// Derangement-style pairing: index i gets a response from perm[i] != i.
std::vector<std::size_t> negative_partners(std::size_t n, std::mt19937_64& rng) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t i = 0; i < n; ++i) {
        if (perm[i] == i) std::swap(perm[i], perm[(i + 1) % n]);
    }
    return perm;
}

}  // namespace

std::vector<std::uint64_t> NaiveBayesRelevanceClassifier::features(const ContextResponsePair& pair) const {
    std::vector<std::string> ctx_types;
    for (const auto& u : pair.context) {
        for (const auto& t : u.tokens(tok_)) ctx_types.push_back(t);
    }
    std::sort(ctx_types.begin(), ctx_types.end());
    ctx_types.erase(std::unique(ctx_types.begin(), ctx_types.end()), ctx_types.end());
    auto resp = pair.response.tokens(tok_).tokens();
    std::sort(resp.begin(), resp.end());
    resp.erase(std::unique(resp.begin(), resp.end()), resp.end());

    std::vector<std::uint64_t> out;
    out.reserve(ctx_types.size() * resp.size());
    for (const auto& c : ctx_types) {
        const std::uint64_t hc = fnv1a(c);
        for (const auto& r : resp) out.push_back(fnv1a(r, fnv1a("\x1f", hc)));
    }
    return out;
}

double NaiveBayesRelevanceClassifier::log_odds(const ContextResponsePair& pair) const {
    const double n_features = static_cast<double>(counts_.size());
    double z = prior_log_odds_;
    for (std::uint64_t f : features(pair)) {
        auto it = counts_.find(f);
        if (it == counts_.end()) continue;
        z += std::log((it->second.first + 1.0) / (total_pos_ + n_features)) -
             std::log((it->second.second + 1.0) / (total_neg_ + n_features));
    }
    return z;
}

double NaiveBayesRelevanceClassifier::classify(const ContextResponsePair& pair) const {
    return std::clamp(sigmoid(platt_a_ * log_odds(pair) + platt_b_), 0.0, 1.0);
}

namespace {

template <typename Features>
void fit_counts(const std::vector<ContextResponsePair>& pairs, const std::vector<std::size_t>& rows,
                std::mt19937_64& rng, std::unordered_map<std::uint64_t, std::pair<double, double>>& counts,
                double& total_pos, double& total_neg, const Features& feats) {
    counts.clear();
    total_pos = total_neg = 0.0;
    auto partners = negative_partners(rows.size(), rng);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& pos = pairs[rows[i]];
        for (std::uint64_t f : feats(pos)) {
            counts[f].first += 1.0;
            total_pos += 1.0;
        }
        ContextResponsePair neg{pos.context, pairs[rows[partners[i]]].response};
        for (std::uint64_t f : feats(neg)) {
            counts[f].second += 1.0;
            total_neg += 1.0;
        }
    }
}

}  // namespace

std::unique_ptr<NaiveBayesRelevanceClassifier> reference_classifier(
    const std::vector<ContextResponsePair>& train, const NaiveBayesOptions& options) {
    if (train.size() < std::max<std::size_t>(options.min_pairs, 2)) {
        throw DataError("reference classifier needs at least " + std::to_string(options.min_pairs) +
                        " training pairs, got " + std::to_string(train.size()));
    }
    auto clf = std::unique_ptr<NaiveBayesRelevanceClassifier>(new NaiveBayesRelevanceClassifier());
    clf->tok_ = options.tokenizer;
    auto feats = [&](const ContextResponsePair& p) { return clf->features(p); };
    std::mt19937_64 rng(options.seed);

    // Hold out a fifth of the pairs to calibrate the log-odds, then refit on everything.
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t n_hold = std::max<std::size_t>(2, train.size() / 5);
    std::vector<std::size_t> fit_rows(order.begin() + static_cast<std::ptrdiff_t>(n_hold), order.end());
    std::vector<std::size_t> hold_rows(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_hold));

    fit_counts(train, fit_rows, rng, clf->counts_, clf->total_pos_, clf->total_neg_, feats);
    std::vector<double> z;
    std::vector<int> label;
    auto hold_partners = negative_partners(hold_rows.size(), rng);
    for (std::size_t i = 0; i < hold_rows.size(); ++i) {
        const auto& pos = train[hold_rows[i]];
        z.push_back(clf->log_odds(pos));
        label.push_back(1);
        z.push_back(clf->log_odds({pos.context, train[hold_rows[hold_partners[i]]].response}));
        label.push_back(0);
    }
    std::tie(clf->platt_a_, clf->platt_b_) = fit_platt(z, label);

    std::vector<std::size_t> all(train.size());
    std::iota(all.begin(), all.end(), 0);
    fit_counts(train, all, rng, clf->counts_, clf->total_pos_, clf->total_neg_, feats);
    return clf;
}

std::vector<ContextResponsePair> training_pairs(const std::vector<DialogueSession>& sessions) {
    std::vector<ContextResponsePair> out;
    for (const auto& s : sessions) {
        for (std::size_t k = 1; k < s.size(); ++k) out.push_back(split_at(s, k));
    }
    return out;
}

// ---------------------------------------------------------------------------

double fluency_s3(const DialogueSession& session, const NGramLM& lm, const TokenizerConfig& tok) {
    double sum = 0.0;
    for (const auto& u : session.utterances()) sum += lm.logprob(u.tokens(tok));
    return sum / static_cast<double>(session.size());
}

StarList::StarList(const std::vector<std::string>& names) {
    for (const auto& n : names) {
        auto trimmed = unicode::trim(n);
        if (!trimmed.empty()) names_.push_back(unicode::normalize_for_match(trimmed));
    }
}

StarList StarList::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open star list: " + path.string());
    std::vector<std::string> names;
    std::string line;
    while (std::getline(in, line)) names.push_back(line);
    return StarList(names);
}

bool entertainment_flag(const DialogueSession& session, const StarList& stars) {
    if (stars.empty()) throw ConfigError("entertainment_flag needs a non-empty star list");
    for (const auto& u : session.utterances()) {
        const std::string text = unicode::normalize_for_match(u.text());
        for (const auto& name : stars.names()) {
            if (text.find(name) != std::string::npos) return true;
        }
    }
    return false;
}

void validate(const QualityWeights& w) {
    if (w.alpha == 0.0 && w.beta == 0.0 && w.gamma == 0.0) {
        throw ConfigError("quality weights: at least one of alpha, beta, gamma must be nonzero");
    }
}

double combined_score(double s1, double s2, double s3, const QualityWeights& w) {
    return w.alpha * s1 + w.beta * s2 + w.gamma * s3;
}

std::string report_to_json(const QualityReport& r) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["s1"] = r.s1;
    j["s2"] = r.s2 ? nlohmann::ordered_json(*r.s2) : nlohmann::ordered_json(nullptr);
    j["s3"] = r.s3 ? nlohmann::ordered_json(*r.s3) : nlohmann::ordered_json(nullptr);
    if (r.relevance_prob) j["relevance_prob"] = *r.relevance_prob;
    j["entertainment"] = r.entertainment;
    if (r.empty_response) j["empty_response"] = true;
    j["combined"] = r.combined;
    return j.dump(-1, ' ', false, nlohmann::ordered_json::error_handler_t::replace);
}

QualityScorer::QualityScorer(Options options, std::shared_ptr<const NGramLM> lm,
                             std::shared_ptr<const RelevanceClassifier> clf, StarList stars)
    : options_(std::move(options)), lm_(std::move(lm)), clf_(std::move(clf)), stars_(std::move(stars)) {
    validate(options_.weights);
    if (options_.relevance.tau < 0.0) throw ConfigError("relevance tau must be >= 0");
    if (options_.weights.beta != 0.0 && !clf_) {
        throw ConfigError("weight beta is nonzero but no relevance classifier is configured");
    }
    if (options_.weights.gamma != 0.0 && !lm_) {
        throw ConfigError("weight gamma is nonzero but no language model is configured");
    }
}

QualityReport QualityScorer::score(const DialogueSession& session) const {
    QualityReport r;
    r.id = session.id();
    if (session.size() >= 2) {
        const auto pair = last_pair(session);
        const auto s1 = relevance_s1(pair, options_.relevance, options_.tokenizer);
        r.s1 = s1.value;
        r.empty_response = s1.empty_response;
        if (clf_) {
            const double p = clf_->classify(pair);
            r.relevance_prob = p;
            r.s2 = p <= 0.0 ? options_.s2_floor : std::max(std::log(p), options_.s2_floor);
        }
    }
    if (lm_) r.s3 = fluency_s3(session, *lm_, options_.tokenizer);
    if (!stars_.empty()) r.entertainment = entertainment_flag(session, stars_);
    r.combined = combined_score(r.s1, r.s2.value_or(0.0), r.s3.value_or(0.0), options_.weights);
    return r;
}

// ---------------------------------------------------------------------------

void QualityAggregate::add(const QualityReport& r) {
    ++n_;
    sum_s1_ += r.s1;
    if (r.s2) {
        ++n_s2_;
        sum_s2_ += *r.s2;
    }
    if (r.s3) {
        ++n_s3_;
        sum_s3_ += *r.s3;
    }
    if (r.relevance_prob) {
        ++n_prob_;
        if (*r.relevance_prob > 0.5) ++n_relevant_;
    }
    if (r.entertainment) ++n_ent_;
}

void QualityAggregate::merge(const QualityAggregate& o) {
    n_ += o.n_;
    n_s2_ += o.n_s2_;
    n_s3_ += o.n_s3_;
    n_prob_ += o.n_prob_;
    n_relevant_ += o.n_relevant_;
    n_ent_ += o.n_ent_;
    sum_s1_ += o.sum_s1_;
    sum_s2_ += o.sum_s2_;
    sum_s3_ += o.sum_s3_;
}

namespace {
double ratio(double num, std::uint64_t den) {
    return den == 0 ? std::numeric_limits<double>::quiet_NaN() : num / static_cast<double>(den);
}
}  // namespace

double QualityAggregate::mean_s1() const { return ratio(sum_s1_, n_); }
double QualityAggregate::mean_s2() const { return ratio(sum_s2_, n_s2_); }
double QualityAggregate::mean_s3() const { return ratio(sum_s3_, n_s3_); }
double QualityAggregate::entertainment_ratio() const { return ratio(static_cast<double>(n_ent_), n_); }
double QualityAggregate::relevance_rate() const { return ratio(static_cast<double>(n_relevant_), n_prob_); }

std::string QualityAggregate::to_json() const {
    auto num = [](double v) { return std::isnan(v) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(v); };
    nlohmann::ordered_json j;
    j["sessions"] = n_;
    j["mean_s1"] = num(mean_s1());
    j["mean_s2"] = num(mean_s2());
    j["mean_s3"] = num(mean_s3());
    j["relevance_rate"] = num(relevance_rate());
    j["entertainment_ratio"] = num(entertainment_ratio());
    return j.dump();
}

}  // namespace dialogkit
