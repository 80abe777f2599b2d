#include "dialogkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "dialogkit/error.hpp"

namespace dialogkit {

namespace {

using NGram = std::vector<std::string>;

std::map<NGram, std::size_t> ngram_counts(const TokenSeq& seq, std::size_t n) {
    std::map<NGram, std::size_t> counts;
    if (seq.size() < n) return counts;
    for (std::size_t i = 0; i + n <= seq.size(); ++i) {
        ++counts[NGram(seq.tokens().begin() + static_cast<std::ptrdiff_t>(i),
                       seq.tokens().begin() + static_cast<std::ptrdiff_t>(i + n))];
    }
    return counts;
}

double f_measure(double p, double r) { return (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace

double unigram_f1(const EvalPair& pair) {
    if (pair.hypothesis.empty() || pair.reference.empty()) return 0.0;
    std::unordered_map<std::string, std::size_t> ref;
    for (const auto& t : pair.reference) ++ref[t];
    std::size_t overlap = 0;
    for (const auto& t : pair.hypothesis) {
        auto it = ref.find(t);
        if (it != ref.end() && it->second > 0) {
            --it->second;
            ++overlap;
        }
    }
    if (overlap == 0) return 0.0;
    const double p = static_cast<double>(overlap) / static_cast<double>(pair.hypothesis.size());
    const double r = static_cast<double>(overlap) / static_cast<double>(pair.reference.size());
    return f_measure(p, r);
}

std::size_t lcs_length(const TokenSeq& a, const TokenSeq& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double rouge_l(const EvalPair& pair) {
    if (pair.hypothesis.empty() || pair.reference.empty()) return 0.0;
    const double lcs = static_cast<double>(lcs_length(pair.hypothesis, pair.reference));
    if (lcs == 0.0) return 0.0;
    return f_measure(lcs / static_cast<double>(pair.hypothesis.size()), lcs / static_cast<double>(pair.reference.size()));
}

double bleu4(const std::vector<EvalPair>& pairs) {
    constexpr std::size_t kMaxN = 4;
    std::size_t matches[kMaxN] = {};
    std::size_t totals[kMaxN] = {};
    std::size_t hyp_len = 0, ref_len = 0;
    for (const auto& p : pairs) {
        hyp_len += p.hypothesis.size();
        ref_len += p.reference.size();
        for (std::size_t n = 1; n <= kMaxN; ++n) {
            const auto hyp = ngram_counts(p.hypothesis, n);
            const auto ref = ngram_counts(p.reference, n);
            for (const auto& [g, c] : hyp) {
                totals[n - 1] += c;
                if (auto it = ref.find(g); it != ref.end()) matches[n - 1] += std::min(c, it->second);
            }
        }
    }
    if (hyp_len == 0 || matches[0] == 0) return 0.0;
    double log_sum = 0.0;
    for (std::size_t n = 0; n < kMaxN; ++n) {
        double precision;
        if (matches[n] == 0) {
            precision = 1.0 / static_cast<double>(totals[n] + 1);
        } else {
            precision = static_cast<double>(matches[n]) / static_cast<double>(totals[n]);
        }
        log_sum += std::log(precision);
    }
    const double c = static_cast<double>(hyp_len);
    const double r = static_cast<double>(ref_len);
    const double bp = c <= r ? std::exp(1.0 - r / c) : 1.0;
    return bp * std::exp(log_sum / static_cast<double>(kMaxN));
}

double distinct_n(const std::vector<TokenSeq>& hyps, std::size_t n) {
    std::set<NGram> unique;
    std::size_t total = 0;
    for (const auto& h : hyps) {
        for (const auto& [g, c] : ngram_counts(h, n)) {
            unique.insert(g);
            total += c;
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(unique.size()) / static_cast<double>(total);
}

double distinct4(const std::vector<TokenSeq>& hyps) { return distinct_n(hyps, 4); }

EvalReport evaluate(const std::vector<EvalPair>& pairs) {
    if (pairs.empty()) throw DataError("evaluation needs at least one pair");
    EvalReport r;
    std::vector<TokenSeq> hyps;
    hyps.reserve(pairs.size());
    for (const auto& p : pairs) {
        if (p.reference.empty()) throw DataError("evaluation pair has an empty reference");
        r.f1 += unigram_f1(p);
        r.rouge_l += rouge_l(p);
        hyps.push_back(p.hypothesis);
    }
    const double n = static_cast<double>(pairs.size());
    r.f1 /= n;
    r.rouge_l /= n;
    r.bleu4 = bleu4(pairs);
    r.distinct4 = distinct4(hyps);
    r.pairs = pairs.size();
    return r;
}

std::string report_to_json(const EvalReport& report) {
    nlohmann::ordered_json j;
    j["pairs"] = report.pairs;
    j["f1"] = report.f1;
    j["rouge_l"] = report.rouge_l;
    j["bleu4"] = report.bleu4;
    j["distinct4"] = report.distinct4;
    return j.dump();
}

}  // namespace dialogkit
