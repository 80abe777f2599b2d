#include "dialogkit/corpus.hpp"

#include <algorithm>
#include <istream>
#include <sstream>

#include <json.hpp>

#include "dialogkit/error.hpp"
#include "dialogkit/unicode.hpp"

namespace dialogkit {

using nlohmann::json;

TokenSeq::TokenSeq(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    for (const auto& t : tokens_) {
        if (t.empty()) throw DataError("TokenSeq: empty token");
    }
}

TokenSeq::TokenSeq(std::initializer_list<std::string> tokens)
    : TokenSeq(std::vector<std::string>(tokens)) {}

void TokenSeq::push_back(std::string token) {
    if (token.empty()) throw DataError("TokenSeq: empty token");
    tokens_.push_back(std::move(token));
}

std::optional<TokenizerMode> parse_tokenizer_mode(std::string_view name) {
    if (name == "char") return TokenizerMode::kChar;
    if (name == "whitespace") return TokenizerMode::kWhitespace;
    if (name == "external-vocab") return TokenizerMode::kExternalVocab;
    return std::nullopt;
}

std::string_view to_string(TokenizerMode mode) {
    switch (mode) {
        case TokenizerMode::kChar: return "char";
        case TokenizerMode::kWhitespace: return "whitespace";
        case TokenizerMode::kExternalVocab: return "external-vocab";
    }
    return "char";
}

std::shared_ptr<const ExternalVocab> load_vocab(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open vocabulary file: " + path.string());
    auto vocab = std::make_shared<ExternalVocab>();
    std::string line;
    while (std::getline(in, line)) {
        auto tok = unicode::trim(line);
        if (tok.empty()) continue;
        vocab->max_scalars = std::max(vocab->max_scalars, unicode::decode(tok).size());
        vocab->tokens.emplace(tok);
    }
    return vocab;
}

namespace {

void emit_run(std::u32string_view run, const TokenizerConfig& cfg, std::vector<std::string>& out) {
    if (run.empty()) return;
    switch (cfg.mode) {
        case TokenizerMode::kChar:
            for (char32_t c : run) out.push_back(unicode::encode(std::u32string_view(&c, 1)));
            break;
        case TokenizerMode::kWhitespace:
            out.push_back(unicode::encode(run));
            break;
        case TokenizerMode::kExternalVocab: {
            const std::size_t max_len = cfg.vocab ? cfg.vocab->max_scalars : 1;
            std::size_t i = 0;
            while (i < run.size()) {
                std::size_t take = 1;
                if (cfg.vocab) {
                    for (std::size_t len = std::min(max_len, run.size() - i); len > 1; --len) {
                        if (cfg.vocab->tokens.count(unicode::encode(run.substr(i, len)))) {
                            take = len;
                            break;
                        }
                    }
                }
                out.push_back(unicode::encode(run.substr(i, take)));
                i += take;
            }
            break;
        }
    }
}

}  // namespace

TokenSeq tokenize(std::string_view text, const TokenizerConfig& cfg) {
    std::vector<std::string> out;
    std::u32string run;
    for (char32_t c : unicode::decode(text)) {
        if (cfg.lowercase) c = unicode::ascii_lower(c);
        if (unicode::is_space(c)) {
            emit_run(run, cfg, out);
            run.clear();
            continue;
        }
        if (cfg.strip_punct_for_metrics && unicode::is_punct(c)) {
            // Punctuation acts as a separator once stripped.
            emit_run(run, cfg, out);
            run.clear();
            continue;
        }
        run.push_back(c);
    }
    emit_run(run, cfg, out);
    return TokenSeq(std::move(out));
}

std::string detokenize(const TokenSeq& tokens, TokenizerMode mode) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (mode == TokenizerMode::kWhitespace && i > 0) out.push_back(' ');
        out += tokens[i];
    }
    return out;
}

Utterance::Utterance(std::string text) : text_(std::move(text)) {
    if (unicode::trim(text_).empty()) throw DataError("utterance text is empty");
}

DialogueSession::DialogueSession(std::string id, std::string source, std::vector<Utterance> utterances)
    : id_(std::move(id)), source_(std::move(source)), utterances_(std::move(utterances)) {
    if (source_.empty()) throw DataError("session source is empty");
    if (utterances_.empty()) throw DataError("session has no utterances");
}

ContextResponsePair split_at(const DialogueSession& session, std::size_t k) {
    if (k < 1 || k >= session.size()) {
        throw DataError("split position " + std::to_string(k) + " out of range for session of " +
                        std::to_string(session.size()) + " utterances");
    }
    const auto& u = session.utterances();
    return ContextResponsePair{std::vector<Utterance>(u.begin(), u.begin() + static_cast<std::ptrdiff_t>(k)),
                               u[k]};
}

ContextResponsePair last_pair(const DialogueSession& session) {
    return split_at(session, session.size() - 1);
}

// ---------------------------------------------------------------------------

DialogueSession parse_session(std::string_view line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        throw DataError(std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw DataError("record is not a JSON object");
    auto dialog = j.find("dialog");
    if (dialog == j.end() || !dialog->is_array()) throw DataError("missing \"dialog\" array");
    if (dialog->empty()) throw DataError("empty \"dialog\" array");

    std::string id;
    if (auto it = j.find("id"); it != j.end()) {
        if (!it->is_string()) throw DataError("\"id\" is not a string");
        id = it->get<std::string>();
    }
    auto src = j.find("source");
    if (src == j.end() || !src->is_string()) throw DataError("missing \"source\" string");

    std::vector<Utterance> utterances;
    utterances.reserve(dialog->size());
    for (const auto& u : *dialog) {
        if (!u.is_string()) throw DataError("dialog entry is not a string");
        utterances.emplace_back(u.get<std::string>());
    }
    return DialogueSession(std::move(id), src->get<std::string>(), std::move(utterances));
}

std::string format_session(const DialogueSession& session) {
    nlohmann::ordered_json j;
    j["id"] = session.id();
    j["source"] = session.source();
    auto& dialog = j["dialog"] = nlohmann::ordered_json::array();
    for (const auto& u : session.utterances()) dialog.push_back(u.text());
    return j.dump(-1, ' ', false, nlohmann::ordered_json::error_handler_t::replace);
}

SessionReader::SessionReader(std::istream& in, bool strict) : in_(&in), strict_(strict) {}

SessionReader::SessionReader(const std::filesystem::path& path, bool strict, CorpusFormat /*format*/)
    : owned_(std::make_unique<std::ifstream>(path, std::ios::binary)), in_(owned_.get()), strict_(strict) {
    if (!*owned_) throw DataError("cannot open corpus file: " + path.string());
}

std::optional<DialogueSession> SessionReader::next() {
    while (std::getline(*in_, buffer_)) {
        ++line_;
        bytes_ += buffer_.size();
        if (!in_->eof()) ++bytes_;  // the newline
        if (!buffer_.empty() && buffer_.back() == '\r') buffer_.pop_back();
        if (unicode::trim(buffer_).empty()) continue;
        try {
            auto session = parse_session(buffer_);
            if (session.id().empty()) {
                // Records without an id are named by their line number.
                return DialogueSession("line-" + std::to_string(line_), session.source(), session.utterances());
            }
            return session;
        } catch (const DataError& e) {
            RecordError err{line_, e.what()};
            if (strict_) throw DataError("line " + std::to_string(line_) + ": " + err.message);
            if (handler_) {
                handler_(err);
            } else {
                errors_.push_back(std::move(err));
            }
        }
    }
    return std::nullopt;
}

std::vector<DialogueSession> read_all_sessions(const std::filesystem::path& path, bool strict) {
    SessionReader reader(path, strict);
    std::vector<DialogueSession> out;
    while (auto s = reader.next()) out.push_back(std::move(*s));
    return out;
}

void SessionWriter::write(const DialogueSession& session) {
    *out_ << format_session(session) << '\n';
}

// ---------------------------------------------------------------------------

void StatsAccumulator::add(const DialogueSession& session) {
    ++sessions_;
    utterances_ += session.size();
    for (const auto& u : session.utterances()) tokens_ += u.tokens(cfg_).size();
}

void StatsAccumulator::merge(const StatsAccumulator& other) {
    sessions_ += other.sessions_;
    utterances_ += other.utterances_;
    tokens_ += other.tokens_;
    bytes_ += other.bytes_;
}

CorpusStats StatsAccumulator::finish() const {
    if (sessions_ == 0) throw DataError("corpus statistics over an empty stream");
    CorpusStats s;
    s.n_sessions = sessions_;
    s.n_utterances = utterances_;
    s.n_tokens = tokens_;
    s.avg_uttr_per_session = static_cast<double>(utterances_) / static_cast<double>(sessions_);
    s.avg_tokens_per_utterance = static_cast<double>(tokens_) / static_cast<double>(utterances_);
    s.bytes_on_disk = bytes_;
    return s;
}

CorpusStats corpus_stats(SessionReader& reader, const TokenizerConfig& cfg) {
    StatsAccumulator acc(cfg);
    while (auto s = reader.next()) acc.add(*s);
    acc.add_bytes(reader.bytes_read());
    return acc.finish();
}

CorpusStats corpus_stats(const std::vector<DialogueSession>& sessions, const TokenizerConfig& cfg) {
    StatsAccumulator acc(cfg);
    for (const auto& s : sessions) {
        acc.add(s);
        acc.add_bytes(format_session(s).size() + 1);
    }
    return acc.finish();
}

std::string stats_to_json(const CorpusStats& stats) {
    nlohmann::ordered_json j;
    j["n_sessions"] = stats.n_sessions;
    j["n_utterances"] = stats.n_utterances;
    j["n_tokens"] = stats.n_tokens;
    j["avg_uttr_per_session"] = stats.avg_uttr_per_session;
    j["avg_tokens_per_utterance"] = stats.avg_tokens_per_utterance;
    j["bytes_on_disk"] = stats.bytes_on_disk;
    return j.dump();
}

}  // namespace dialogkit
