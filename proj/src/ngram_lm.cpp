#include "dialogkit/ngram_lm.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "dialogkit/error.hpp"

namespace dialogkit {

std::optional<Smoothing> parse_smoothing(std::string_view name) {
    if (name == "add-k") return Smoothing::kAddK;
    if (name == "kneser-ney" || name == "interpolated-kneser-ney") return Smoothing::kKneserNey;
    return std::nullopt;
}

std::string_view to_string(Smoothing s) {
    return s == Smoothing::kAddK ? "add-k" : "kneser-ney";
}

std::size_t NGramLM::KeyHash::operator()(const Key& k) const noexcept {
    std::uint64_t h = 1469598103934665603ULL;
    for (WordId id : k.ids) {
        h ^= id + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
        h *= 1099511628211ULL;
    }
    return static_cast<std::size_t>(h);
}

double NGramLM::HistoryEntry::count_of(WordId w) const {
    auto it = std::lower_bound(successors.begin(), successors.end(), w,
                               [](const auto& p, WordId id) { return p.first < id; });
    return (it != successors.end() && it->first == w) ? it->second : 0.0;
}

WordId NGramLM::id(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnkId : it->second;
}

const NGramLM::HistoryEntry* NGramLM::find(int level, std::span<const WordId> history_tail) const {
    const auto& table = tables_[static_cast<std::size_t>(level - 1)];
    Key key{std::vector<WordId>(history_tail.begin(), history_tail.end())};
    auto it = table.find(key);
    if (it == table.end() || it->second.total <= 0.0) return nullptr;
    return &it->second;
}

namespace {

// Left-pads with <s> (or truncates) to exactly n - 1 ids.
std::vector<WordId> context_window(std::span<const WordId> history, int order) {
    const std::size_t want = static_cast<std::size_t>(order - 1);
    std::vector<WordId> out(want, NGramLM::kBosId);
    const std::size_t take = std::min(want, history.size());
    std::copy(history.end() - static_cast<std::ptrdiff_t>(take), history.end(),
              out.end() - static_cast<std::ptrdiff_t>(take));
    return out;
}

}  // namespace

// history has exactly order_ - 1 entries; level m uses its last m - 1.
double NGramLM::prob_level(int level, std::span<const WordId> history, WordId word) const {
    const double uniform = 1.0 / static_cast<double>(vocab_.size());
    auto tail = history.subspan(history.size() - static_cast<std::size_t>(level - 1));
    if (smoothing_ == Smoothing::kAddK) {
        const HistoryEntry* e = find(level, tail);
        const double ch = e ? e->total : 0.0;
        const double chw = e ? e->count_of(word) : 0.0;
        return (chw + k_) / (ch + k_ * static_cast<double>(vocab_.size()));
    }
    const double lower = level == 1 ? uniform : prob_level(level - 1, history, word);
    const HistoryEntry* e = find(level, tail);
    if (!e) return lower;
    const double d = discounts_[static_cast<std::size_t>(level - 1)];
    const double c = e->count_of(word);
    return std::max(c - d, 0.0) / e->total +
           d * static_cast<double>(e->successors.size()) / e->total * lower;
}

double NGramLM::prob(std::span<const WordId> history, WordId word) const {
    auto window = context_window(history, order_);
    return prob_level(order_, window, word);
}

void NGramLM::distribution_level(int level, std::span<const WordId> history, std::vector<double>& out) const {
    auto tail = history.subspan(history.size() - static_cast<std::size_t>(level - 1));
    const HistoryEntry* e = find(level, tail);
    if (!e) return;
    const double d = discounts_[static_cast<std::size_t>(level - 1)];
    const double scale = d * static_cast<double>(e->successors.size()) / e->total;
    for (double& p : out) p *= scale;
    for (const auto& [w, c] : e->successors) out[w] += std::max(c - d, 0.0) / e->total;
}

std::vector<double> NGramLM::distribution(std::span<const WordId> history) const {
    const double v = static_cast<double>(vocab_.size());
    auto window = context_window(history, order_);
    if (smoothing_ == Smoothing::kAddK) {
        const HistoryEntry* e = find(order_, window);
        const double ch = e ? e->total : 0.0;
        std::vector<double> out(vocab_.size(), k_ / (ch + k_ * v));
        if (e) {
            for (const auto& [w, c] : e->successors) out[w] = (c + k_) / (ch + k_ * v);
        }
        return out;
    }
    std::vector<double> out(vocab_.size(), 1.0 / v);
    for (int level = 1; level <= order_; ++level) distribution_level(level, window, out);
    return out;
}

double NGramLM::logprob(const TokenSeq& seq) const {
    std::vector<WordId> padded(static_cast<std::size_t>(order_ - 1), kBosId);
    padded.reserve(padded.size() + seq.size() + 1);
    for (const auto& t : seq) padded.push_back(id(t));
    padded.push_back(kEosId);
    double total = 0.0;
    const std::size_t ctx = static_cast<std::size_t>(order_ - 1);
    std::span<const WordId> all(padded);
    for (std::size_t t = ctx; t < padded.size(); ++t) {
        total += std::log(prob_level(order_, all.subspan(t - ctx, ctx), padded[t]));
    }
    return total;
}

double lm_logprob(const NGramLM& lm, const TokenSeq& seq) { return lm.logprob(seq); }

std::vector<std::vector<WordId>> NGramLM::observed_histories() const {
    std::vector<std::vector<WordId>> out;
    for (const auto& [key, entry] : tables_.back()) {
        if (entry.total > 0.0) out.push_back(key.ids);
    }
    std::sort(out.begin(), out.end());
    return out;
}

// ---------------------------------------------------------------------------
// Training

NGramTrainer::NGramTrainer(LMTrainConfig cfg, TokenizerConfig tok) : cfg_(cfg), tok_(std::move(tok)) {
    if (cfg_.order < 1) throw ConfigError("n-gram order must be >= 1");
    if (cfg_.smoothing == Smoothing::kAddK && !(cfg_.k > 0.0)) throw ConfigError("add-k constant must be > 0");
    if (cfg_.min_count < 1) throw ConfigError("min_count must be >= 1");
}

void NGramTrainer::add_utterance(const TokenSeq& tokens) { sentences_.push_back(tokens.tokens()); }

void NGramTrainer::add(const DialogueSession& session) {
    for (const auto& u : session.utterances()) add_utterance(u.tokens(tok_));
}

NGramLM NGramTrainer::build() const {
    if (sentences_.empty()) throw DataError("cannot train a language model on an empty stream");
    const int n = cfg_.order;

    // Vocabulary: reserved ids first, then retained tokens in byte order.
    std::map<std::string, std::uint64_t> freq;
    for (const auto& s : sentences_) {
        for (const auto& t : s) ++freq[t];
    }
    NGramLM lm;
    lm.order_ = n;
    lm.smoothing_ = cfg_.smoothing;
    lm.k_ = cfg_.k;
    lm.min_count_ = cfg_.min_count;
    lm.vocab_ = {std::string(NGramLM::kBos), std::string(NGramLM::kEos), std::string(NGramLM::kUnk)};
    for (const auto& [tok, c] : freq) {
        if (c >= cfg_.min_count && tok != NGramLM::kBos && tok != NGramLM::kEos && tok != NGramLM::kUnk) {
            lm.vocab_.push_back(tok);
        }
    }
    for (WordId i = 0; i < lm.vocab_.size(); ++i) lm.index_.emplace(lm.vocab_[i], i);

    // Raw counts of m-grams ending at each predicted position, for m = 1..n.
    using Key = NGramLM::Key;
    std::vector<std::unordered_map<Key, double, NGramLM::KeyHash>> raw(static_cast<std::size_t>(n));
    const std::size_t ctx = static_cast<std::size_t>(n - 1);
    for (const auto& s : sentences_) {
        std::vector<WordId> padded(ctx, NGramLM::kBosId);
        for (const auto& t : s) padded.push_back(lm.id(t));
        padded.push_back(NGramLM::kEosId);
        for (std::size_t t = ctx; t < padded.size(); ++t) {
            for (std::size_t m = 1; m <= static_cast<std::size_t>(n); ++m) {
                Key key{std::vector<WordId>(padded.begin() + static_cast<std::ptrdiff_t>(t + 1 - m),
                                            padded.begin() + static_cast<std::ptrdiff_t>(t + 1))};
                raw[m - 1][std::move(key)] += 1.0;
            }
        }
    }

    // Counts used at each level: raw at the top (and everywhere for add-k);
    // continuation counts below the top for Kneser-Ney.
    std::vector<std::unordered_map<Key, double, NGramLM::KeyHash>> level_counts(static_cast<std::size_t>(n));
    level_counts[static_cast<std::size_t>(n - 1)] = raw[static_cast<std::size_t>(n - 1)];
    for (int m = n - 1; m >= 1; --m) {
        auto& counts = level_counts[static_cast<std::size_t>(m - 1)];
        if (cfg_.smoothing == Smoothing::kAddK) {
            counts = raw[static_cast<std::size_t>(m - 1)];
            continue;
        }
        for (const auto& [key, c] : raw[static_cast<std::size_t>(m - 1)]) {
            if (key.ids.front() == NGramLM::kBosId) counts[key] = c;
        }
        for (const auto& [key, c] : raw[static_cast<std::size_t>(m)]) {
            Key suffix{std::vector<WordId>(key.ids.begin() + 1, key.ids.end())};
            if (suffix.ids.front() != NGramLM::kBosId) counts[suffix] += 1.0;
        }
    }

    lm.tables_.resize(static_cast<std::size_t>(n));
    lm.discounts_.assign(static_cast<std::size_t>(n), 0.0);
    for (int m = 1; m <= n; ++m) {
        const auto& counts = level_counts[static_cast<std::size_t>(m - 1)];
        auto& table = lm.tables_[static_cast<std::size_t>(m - 1)];
        std::uint64_t n1 = 0, n2 = 0;
        for (const auto& [key, c] : counts) {
            Key hist{std::vector<WordId>(key.ids.begin(), key.ids.end() - 1)};
            auto& entry = table[std::move(hist)];
            entry.total += c;
            entry.successors.emplace_back(key.ids.back(), c);
            if (c == 1.0) ++n1;
            if (c == 2.0) ++n2;
        }
        for (auto& [key, entry] : table) std::sort(entry.successors.begin(), entry.successors.end());
        double d = 0.5;
        if (n1 > 0 && n2 > 0) d = static_cast<double>(n1) / static_cast<double>(n1 + 2 * n2);
        lm.discounts_[static_cast<std::size_t>(m - 1)] = std::clamp(d, 0.05, 0.95);
    }
    // Totals are re-summed in successor order so they do not depend on hash iteration order.
    for (auto& table : lm.tables_) {
        for (auto& [key, entry] : table) {
            entry.total = 0.0;
            for (const auto& [w, c] : entry.successors) entry.total += c;
        }
    }
    return lm;
}

NGramLM train_lm(const std::vector<DialogueSession>& sessions, const LMTrainConfig& cfg,
                 const TokenizerConfig& tok) {
    NGramTrainer trainer(cfg, tok);
    for (const auto& s : sessions) trainer.add(s);
    return trainer.build();
}

NGramLM train_lm(SessionReader& reader, const LMTrainConfig& cfg, const TokenizerConfig& tok) {
    NGramTrainer trainer(cfg, tok);
    while (auto s = reader.next()) trainer.add(*s);
    return trainer.build();
}

// ---------------------------------------------------------------------------
// Binary format (little-endian):
//   "DKLM" | u8 version | u8 smoothing | u32 order | f64 k | u32 min_count
//   | f64 discount[order] | u32 vocab_size | (u32 len, bytes)[vocab_size]
//   | per level m = 1..order: u64 n_hist | (u32 id[m-1], u32 n_succ, (u32 id, f64 count)[n_succ])[n_hist]
//   | "END\n"

namespace {

constexpr char kMagic[4] = {'D', 'K', 'L', 'M'};
constexpr char kTrailer[4] = {'E', 'N', 'D', '\n'};

static_assert(std::endian::native == std::endian::little, "model serialization assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.write(buf, sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    char buf[sizeof(T)];
    if (!in.read(buf, sizeof(T))) throw FormatError("corrupt language model file: unexpected end of data");
    T value;
    std::memcpy(&value, buf, sizeof(T));
    return value;
}

}  // namespace

void NGramLM::save(std::ostream& out) const {
    out.write(kMagic, 4);
    put<std::uint8_t>(out, kFormatVersion);
    put<std::uint8_t>(out, static_cast<std::uint8_t>(smoothing_));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(order_));
    put<double>(out, k_);
    put<std::uint32_t>(out, min_count_);
    for (double d : discounts_) put<double>(out, d);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(vocab_.size()));
    for (const auto& w : vocab_) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(w.size()));
        out.write(w.data(), static_cast<std::streamsize>(w.size()));
    }
    for (const auto& table : tables_) {
        std::vector<const std::pair<const Key, HistoryEntry>*> rows;
        rows.reserve(table.size());
        for (const auto& row : table) rows.push_back(&row);
        std::sort(rows.begin(), rows.end(), [](auto* a, auto* b) { return a->first.ids < b->first.ids; });
        put<std::uint64_t>(out, rows.size());
        for (const auto* row : rows) {
            for (WordId id : row->first.ids) put<std::uint32_t>(out, id);
            put<std::uint32_t>(out, static_cast<std::uint32_t>(row->second.successors.size()));
            for (const auto& [w, c] : row->second.successors) {
                put<std::uint32_t>(out, w);
                put<double>(out, c);
            }
        }
    }
    out.write(kTrailer, 4);
}

void NGramLM::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write language model: " + path.string());
    save(out);
    if (!out) throw Error("failed writing language model: " + path.string());
}

NGramLM NGramLM::load(std::istream& in) {
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError("corrupt language model file: bad magic");
    }
    const auto version = get<std::uint8_t>(in);
    if (version != kFormatVersion) {
        throw VersionError("unsupported language model format version " + std::to_string(version) +
                           " (this build reads version " + std::to_string(kFormatVersion) + ")");
    }
    NGramLM lm;
    const auto smoothing = get<std::uint8_t>(in);
    if (smoothing > 1) throw FormatError("corrupt language model file: unknown smoothing");
    lm.smoothing_ = static_cast<Smoothing>(smoothing);
    const auto order = get<std::uint32_t>(in);
    if (order < 1 || order > 64) throw FormatError("corrupt language model file: bad order");
    lm.order_ = static_cast<int>(order);
    lm.k_ = get<double>(in);
    lm.min_count_ = get<std::uint32_t>(in);
    lm.discounts_.resize(order);
    for (auto& d : lm.discounts_) d = get<double>(in);
    const auto vsize = get<std::uint32_t>(in);
    if (vsize < 3) throw FormatError("corrupt language model file: vocabulary too small");
    lm.vocab_.reserve(vsize);
    for (std::uint32_t i = 0; i < vsize; ++i) {
        const auto len = get<std::uint32_t>(in);
        if (len > (1u << 20)) throw FormatError("corrupt language model file: token too long");
        std::string w(len, '\0');
        if (!in.read(w.data(), len)) throw FormatError("corrupt language model file: unexpected end of data");
        lm.index_.emplace(w, i);
        lm.vocab_.push_back(std::move(w));
    }
    lm.tables_.resize(order);
    for (std::uint32_t m = 1; m <= order; ++m) {
        const auto rows = get<std::uint64_t>(in);
        auto& table = lm.tables_[m - 1];
        for (std::uint64_t r = 0; r < rows; ++r) {
            Key key;
            key.ids.resize(m - 1);
            for (auto& id : key.ids) {
                id = get<std::uint32_t>(in);
                if (id >= vsize) throw FormatError("corrupt language model file: word id out of range");
            }
            HistoryEntry entry;
            const auto n_succ = get<std::uint32_t>(in);
            if (n_succ > vsize) throw FormatError("corrupt language model file: bad successor count");
            entry.successors.reserve(n_succ);
            for (std::uint32_t s = 0; s < n_succ; ++s) {
                const auto w = get<std::uint32_t>(in);
                if (w >= vsize) throw FormatError("corrupt language model file: word id out of range");
                const auto c = get<double>(in);
                entry.successors.emplace_back(w, c);
                entry.total += c;
            }
            table.emplace(std::move(key), std::move(entry));
        }
    }
    char trailer[4];
    if (!in.read(trailer, 4) || std::memcmp(trailer, kTrailer, 4) != 0) {
        throw FormatError("corrupt language model file: missing trailer");
    }
    return lm;
}

NGramLM NGramLM::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open language model: " + path.string());
    return load(in);
}

// ---------------------------------------------------------------------------

void NGramLM::write_arpa(std::ostream& out) const {
    if (smoothing_ != Smoothing::kKneserNey) {
        throw ConfigError("ARPA export requires a Kneser-Ney model (add-k is not a back-off model)");
    }
    // Entries per order: every observed n-gram, plus every history used at the next
    // order so that it can carry a back-off weight.
    std::vector<std::vector<std::vector<WordId>>> entries(static_cast<std::size_t>(order_));
    for (WordId w = 0; w < vocab_.size(); ++w) entries[0].push_back({w});
    for (int m = 2; m <= order_; ++m) {
        std::vector<std::vector<WordId>> grams;
        for (const auto& [key, entry] : tables_[static_cast<std::size_t>(m - 1)]) {
            for (const auto& [w, c] : entry.successors) {
                auto g = key.ids;
                g.push_back(w);
                grams.push_back(std::move(g));
            }
        }
        if (m < order_) {
            for (const auto& [key, entry] : tables_[static_cast<std::size_t>(m)]) grams.push_back(key.ids);
        }
        std::sort(grams.begin(), grams.end());
        grams.erase(std::unique(grams.begin(), grams.end()), grams.end());
        entries[static_cast<std::size_t>(m - 1)] = std::move(grams);
    }

    auto log10p = [](double p) { return std::log10(p); };
    out << std::setprecision(12);
    out << "\n\\data\\\n";
    for (int m = 1; m <= order_; ++m) out << "ngram " << m << "=" << entries[static_cast<std::size_t>(m - 1)].size() << "\n";
    for (int m = 1; m <= order_; ++m) {
        out << "\n\\" << m << "-grams:\n";
        for (const auto& g : entries[static_cast<std::size_t>(m - 1)]) {
            std::vector<WordId> history(static_cast<std::size_t>(order_ - m), kBosId);
            history.insert(history.end(), g.begin(), g.end() - 1);
            out << log10p(prob_level(m, history, g.back()));
            for (std::size_t i = 0; i < g.size(); ++i) out << (i == 0 ? "\t" : " ") << vocab_[g[i]];
            if (m < order_) {
                const HistoryEntry* e = find(m + 1, g);
                if (e) {
                    const double d = discounts_[static_cast<std::size_t>(m)];
                    out << "\t" << log10p(d * static_cast<double>(e->successors.size()) / e->total);
                }
            }
            out << "\n";
        }
    }
    out << "\n\\end\\\n";
}

}  // namespace dialogkit
